//! SDQ viewed as a switched affine system on stacked Q-vectors.
//!
//! With D = diag(d), P the stacked transition matrix, R the expected reward
//! vector and Π_Q the greedy selector of Q (lowest-index ties), one SDQ step
//! on an i.i.d. sample reads
//!
//! ```text
//! Qᴬ' = Qᴬ + α(DR + γDPΠ_{Qᴮ}Qᴬ − DQᴬ + wᴬ)
//! ```
//!
//! and symmetrically for Qᴮ. Everything here works directly on `&[T]` in
//! stacked order; the products with D, P and Π are applied structurally and
//! the dense matrices are only built on request.

mod lockstep;

use rand::Rng;

pub use lockstep::{
    lockstep_simulate, subtraction_recursions, verify_sandwich, write_trace_csv, LockstepInit, LockstepState,
    LockstepTrace, Relation, SandwichReport, SubtractionReport, Violation, IDENTITY_TOL, SANDWICH_TOL,
    SUBTRACTION_TOL, TRACE_SCHEMA,
};

use crate::envs::Env;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mdp::{
    decay_rate, expected_reward_vector, greedy_policy, optimal_q, policy_matrix, stacked_transition, Layout, Policy,
    QTable, SamplingDistribution, TabularMdp,
};
use crate::Scalar;

/// One i.i.d. draw: `(s, a) ~ d`, `s' ~ P(·|s,a)`, sampled reward `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub r: T,
}

/// Immutable operator data for one (MDP, d, α) triple.
#[derive(Debug, Clone)]
pub struct DynamicsContext<T> {
    mdp: TabularMdp<T>,
    env: Option<Env<T>>,
    d: Vec<T>,
    /// Stacked P, row-major `n_sa × n_s`.
    p: Vec<T>,
    r: Vec<T>,
    alpha: T,
    gamma: T,
    rho: T,
    q_star: QTable<T>,
    pi_star: Policy,
    bellman_residual: T,
}

/// Deterministic-reward context: sampled rewards are `r(s, a, s')`.
pub fn assemble_dynamics<T: Scalar>(
    mdp: &TabularMdp<T>,
    d: &SamplingDistribution<T>,
    alpha: T,
) -> Result<DynamicsContext<T>> {
    DynamicsContext::build(mdp.clone(), None, d, alpha)
}

/// Context whose sampler draws rewards through `env`'s noise model.
pub fn assemble_dynamics_env<T: Scalar>(
    env: &Env<T>,
    d: &SamplingDistribution<T>,
    alpha: T,
) -> Result<DynamicsContext<T>> {
    DynamicsContext::build(env.mdp().clone(), Some(env.clone()), d, alpha)
}

impl<T: Scalar> DynamicsContext<T> {
    fn build(mdp: TabularMdp<T>, env: Option<Env<T>>, d: &SamplingDistribution<T>, alpha: T) -> Result<Self> {
        let n_sa = mdp.n_pairs();
        if d.len() != n_sa {
            return Err(Error::Length {
                what: "sampling distribution",
                expected: n_sa,
                got: d.len(),
            });
        }
        let gamma = mdp.gamma();
        let rho = decay_rate(alpha, d.d_min(), gamma)?;
        let q_star = optimal_q(&mdp)?;
        let pi_star = greedy_policy(&q_star);
        let p = stacked_transition(&mdp).as_slice().to_vec();
        let r = expected_reward_vector(&mdp);
        let mut ctx = Self {
            mdp,
            env,
            d: d.probs().to_vec(),
            p,
            r,
            alpha,
            gamma,
            rho,
            q_star,
            pi_star,
            bellman_residual: T::zero(),
        };
        // (γDPΠ_{Q*} − D)Q* + DR = 0
        let qs = ctx.q_star.values().to_vec();
        let res = ctx.drift(&qs, ctx.pi_star.actions());
        ctx.bellman_residual = crate::linalg::vec_inf_norm(&res);
        let scale = ctx.mdp.r_max().max(T::one()) / (T::one() - gamma);
        let tol = T::of(1e-8).max(T::epsilon() * T::of(1e4) * scale);
        if !(ctx.bellman_residual <= tol) {
            return Err(Error::NotConverged {
                sweeps: 0,
                residual: ctx.bellman_residual.as_f64(),
            });
        }
        Ok(ctx)
    }

    pub fn mdp(&self) -> &TabularMdp<T> {
        &self.mdp
    }

    pub fn layout(&self) -> &std::sync::Arc<Layout> {
        self.mdp.layout()
    }

    pub fn n_sa(&self) -> usize {
        self.d.len()
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn d(&self) -> &[T] {
        &self.d
    }

    pub fn d_min(&self) -> T {
        self.d.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn d_max(&self) -> T {
        self.d.iter().copied().fold(T::zero(), T::max)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn q_star(&self) -> &QTable<T> {
        &self.q_star
    }

    pub fn pi_star(&self) -> &Policy {
        &self.pi_star
    }

    /// ‖(γDPΠ_{Q*} − D)Q* + DR‖_∞.
    pub fn bellman_residual(&self) -> T {
        self.bellman_residual
    }

    /// R_max of the expected-reward MDP.
    pub fn r_max(&self) -> T {
        self.mdp.r_max()
    }

    /// Greedy action per state of an arbitrary stacked vector.
    pub fn greedy(&self, x: &[T]) -> Vec<usize> {
        let layout = self.layout();
        let ns = self.n_states();
        (0..ns)
            .map(|s| {
                let mut best = 0;
                let mut best_v = x[s];
                for a in layout.actions(s).skip(1) {
                    let v = x[a * ns + s];
                    if v > best_v {
                        best = a;
                        best_v = v;
                    }
                }
                best
            })
            .collect()
    }

    /// Π_σ x: one entry per state, `x(s, σ(s))`.
    pub fn select(&self, x: &[T], sigma: &[usize]) -> Vec<T> {
        let ns = self.n_states();
        sigma.iter().enumerate().map(|(s, &a)| x[a * ns + s]).collect()
    }

    /// DP v for a state vector `v`.
    pub fn dp(&self, v: &[T]) -> Vec<T> {
        let ns = self.n_states();
        self.d
            .iter()
            .zip(self.p.chunks_exact(ns))
            .map(|(&di, row)| di * row.iter().zip(v).map(|(&p, &x)| p * x).sum::<T>())
            .collect()
    }

    /// A_σ x = x + α(γDPΠ_σ x − Dx).
    pub fn apply_system(&self, x: &[T], sigma: &[usize]) -> Vec<T> {
        let dpx = self.dp(&self.select(x, sigma));
        let (a, g) = (self.alpha, self.gamma);
        x.iter()
            .zip(&self.d)
            .zip(&dpx)
            .map(|((&xi, &di), &pi)| xi + a * (g * pi - di * xi))
            .collect()
    }

    /// (I − αD) x.
    pub fn apply_diag_decay(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.d).map(|(&xi, &di)| xi - self.alpha * di * xi).collect()
    }

    /// Mean drift DR + γDPΠ_σ q − Dq.
    pub fn drift(&self, q: &[T], sigma: &[usize]) -> Vec<T> {
        let dpq = self.dp(&self.select(q, sigma));
        (0..q.len())
            .map(|i| self.d[i] * self.r[i] + self.gamma * dpq[i] - self.d[i] * q[i])
            .collect()
    }

    /// Dense A_Q = I + α(γDPΠ_Q − D).
    pub fn system_matrix(&self, q: &[T]) -> DenseMatrix<T> {
        let policy = Policy::new(self.greedy(q), self.mdp.n_actions()).expect("greedy actions are in range");
        self.system_matrix_for(&policy)
    }

    pub fn system_matrix_for(&self, policy: &Policy) -> DenseMatrix<T> {
        let n = self.n_sa();
        let pi = policy_matrix::<T>(policy, self.n_states(), self.mdp.n_actions());
        let p = DenseMatrix::from_row_major(n, self.n_states(), self.p.clone());
        let mut m = p.matmul(&pi);
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { T::one() } else { T::zero() };
                m[(i, j)] = delta + self.alpha * (self.gamma * self.d[i] * m[(i, j)] - delta * self.d[i]);
            }
        }
        m
    }

    /// Draws `(s, a) ~ d`, then `s'`, then the reward.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample<T> {
        let u = T::of(rng.random::<f64>());
        let mut acc = T::zero();
        let mut i = self.d.len() - 1;
        for (j, &dj) in self.d.iter().enumerate() {
            acc = acc + dj;
            if u < acc {
                i = j;
                break;
            }
        }
        let (s, a) = self.layout().pair(i);
        match &self.env {
            Some(env) => {
                let s_next = env.sample_next(s, a, rng);
                let r = env.sample_reward(s, a, s_next, rng);
                Sample { s, a, s_next, r }
            }
            None => {
                let ns = self.n_states();
                let row = &self.p[i * ns..(i + 1) * ns];
                let v = T::of(rng.random::<f64>());
                let mut acc = T::zero();
                let mut s_next = s;
                for (s2, &p) in row.iter().enumerate() {
                    if p > T::zero() {
                        acc = acc + p;
                        s_next = s2;
                        if v < acc {
                            break;
                        }
                    }
                }
                Sample {
                    s,
                    a,
                    s_next,
                    r: self.mdp.r(s, a, s_next),
                }
            }
        }
    }

    /// wᴬ for estimator `q_self` selecting through `q_sel`:
    /// e_i(r + γ q_self(s', σ_sel(s')) − q_self,i) − (DR + γDPΠ_sel q_self − D q_self).
    pub fn noise(&self, q_self: &[T], q_sel: &[T], sample: &Sample<T>) -> Vec<T> {
        let sigma = self.greedy(q_sel);
        let mut w: Vec<T> = self.drift(q_self, &sigma).into_iter().map(|x| -x).collect();
        let ns = self.n_states();
        let i = sample.a * ns + sample.s;
        let boot = q_self[sigma[sample.s_next] * ns + sample.s_next];
        w[i] = w[i] + sample.r + self.gamma * boot - q_self[i];
        w
    }
}

/// Result of one vectorised SDQ step.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStep<T> {
    pub qa: Vec<T>,
    pub qb: Vec<T>,
    pub w_a: Vec<T>,
    pub w_b: Vec<T>,
    /// max |tabular − (q + α(drift + w))| over both estimators.
    pub identity_gap: T,
}

/// One SDQ step at a sample, computed tabularly (the returned tables) and
/// checked against the drift-plus-noise form.
pub fn sdq_vector_step<T: Scalar>(ctx: &DynamicsContext<T>, qa: &[T], qb: &[T], sample: &Sample<T>) -> VectorStep<T> {
    let ns = ctx.n_states();
    let i = sample.a * ns + sample.s;
    let (sa, sb) = (ctx.greedy(qa), ctx.greedy(qb));
    let alpha = ctx.alpha;
    let s2 = sample.s_next;
    let target_a = sample.r + ctx.gamma * qa[sb[s2] * ns + s2];
    let target_b = sample.r + ctx.gamma * qb[sa[s2] * ns + s2];
    let mut new_a = qa.to_vec();
    let mut new_b = qb.to_vec();
    new_a[i] = qa[i] + alpha * (target_a - qa[i]);
    new_b[i] = qb[i] + alpha * (target_b - qb[i]);

    let w_a = ctx.noise(qa, qb, sample);
    let w_b = ctx.noise(qb, qa, sample);
    let drift_a = ctx.drift(qa, &sb);
    let drift_b = ctx.drift(qb, &sa);
    let mut gap = T::zero();
    for j in 0..qa.len() {
        let va = qa[j] + alpha * (drift_a[j] + w_a[j]);
        let vb = qb[j] + alpha * (drift_b[j] + w_b[j]);
        gap = gap.max((va - new_a[j]).abs()).max((vb - new_b[j]).abs());
    }
    VectorStep {
        qa: new_a,
        qb: new_b,
        w_a,
        w_b,
        identity_gap: gap,
    }
}
