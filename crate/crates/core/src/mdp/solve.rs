use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mdp::{Policy, QTable, TabularMdp};
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct ViOptions<T> {
    pub tol: T,
    pub max_sweeps: usize,
}

impl<T: Scalar> Default for ViOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-10),
            max_sweeps: 1_000_000,
        }
    }
}

/// One application of the Bellman optimality operator:
/// `T(Q)(s, a) = Σ_{s'} P(s'|s,a) (r(s,a,s') + γ max_{a'} Q(s', a'))`.
pub fn bellman_optimality<T: Scalar>(mdp: &TabularMdp<T>, q: &QTable<T>) -> QTable<T> {
    let gamma = mdp.gamma();
    let next_max: Vec<T> = (0..mdp.n_states()).map(|s| q.max_at(s)).collect();
    QTable::from_fn(mdp.layout().clone(), |s, a| {
        mdp.row(s, a)
            .iter()
            .zip(mdp.reward_row(s, a))
            .zip(&next_max)
            .map(|((&p, &r), &v)| p * (r + gamma * v))
            .sum()
    })
}

/// ‖T(Q) − Q‖_∞.
pub fn bellman_residual<T: Scalar>(mdp: &TabularMdp<T>, q: &QTable<T>) -> T {
    bellman_optimality(mdp, q).inf_dist(q)
}

/// Value iteration from Q = 0. The returned table satisfies
/// `‖T(Q) − Q‖_∞ <= tol`.
pub fn value_iteration<T: Scalar>(mdp: &TabularMdp<T>, opts: ViOptions<T>) -> Result<QTable<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::Precondition(format!("tol = {} must be positive", opts.tol)));
    }
    let mut q = QTable::zeros(mdp.layout().clone());
    let mut residual = T::infinity();
    for _ in 0..opts.max_sweeps {
        let next = bellman_optimality(mdp, &q);
        residual = next.inf_dist(&q);
        q = next;
        // residual of the new iterate is at most γ times the step just taken
        if residual <= opts.tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged {
        sweeps: opts.max_sweeps,
        residual: residual.as_f64(),
    })
}

/// Q* to (near) machine precision: value iteration followed by exact policy
/// evaluation of the resulting greedy policy. The polished table is used only
/// when its Bellman residual is no worse.
pub fn optimal_q<T: Scalar>(mdp: &TabularMdp<T>) -> Result<QTable<T>> {
    let scale = mdp.r_max().max(T::one()) / (T::one() - mdp.gamma());
    let tol = (T::epsilon() * T::of(1e3) * scale).max(T::min_positive_value());
    let vi = match value_iteration(mdp, ViOptions { tol, max_sweeps: 200_000 }) {
        Ok(q) => q,
        // rounding can stall the last few digits; accept a converged-enough iterate
        Err(Error::NotConverged { .. }) => value_iteration(
            mdp,
            ViOptions {
                tol: tol * T::of(1e3),
                max_sweeps: 1_000_000,
            },
        )?,
        Err(e) => return Err(e),
    };
    let policy = greedy_policy(&vi);
    let n = mdp.n_pairs();
    let p_pi = sa_transition_matrix(mdp, &policy);
    let a = DenseMatrix::identity(n).add(&p_pi.scale(-mdp.gamma()));
    let rhs = expected_reward_vector(mdp);
    let polished = a
        .solve(&rhs)
        .and_then(|v| QTable::from_values(mdp.layout().clone(), v).ok());
    Ok(match polished {
        Some(p) if bellman_residual(mdp, &p) <= bellman_residual(mdp, &vi) => p,
        _ => vi,
    })
}

/// Greedy policy with lowest-index tie-breaking.
pub fn greedy_policy<T: Scalar>(q: &QTable<T>) -> Policy {
    let actions = (0..q.n_states()).map(|s| q.argmax_at(s)).collect();
    Policy::new(actions, q.n_actions()).expect("argmax is always in range")
}

/// Π^π: row `s` selects stacked index `(π(s), s)`.
pub fn policy_matrix<T: Scalar>(policy: &Policy, n_states: usize, n_actions: usize) -> DenseMatrix<T> {
    let mut m = DenseMatrix::zeros(n_states, n_states * n_actions);
    for s in 0..n_states {
        m[(s, policy.action(s) * n_states + s)] = T::one();
    }
    m
}

/// The stacked transition matrix P, one row per pair `(s, a)` in stacked order.
pub fn stacked_transition<T: Scalar>(mdp: &TabularMdp<T>) -> DenseMatrix<T> {
    let layout = mdp.layout();
    let mut m = DenseMatrix::zeros(mdp.n_pairs(), mdp.n_states());
    for i in 0..mdp.n_pairs() {
        let (s, a) = layout.pair(i);
        for (s2, &p) in mdp.row(s, a).iter().enumerate() {
            m[(i, s2)] = p;
        }
    }
    m
}

/// P·Π^π, the state–action transition matrix under `policy`.
pub fn sa_transition_matrix<T: Scalar>(mdp: &TabularMdp<T>, policy: &Policy) -> DenseMatrix<T> {
    stacked_transition(mdp).matmul(&policy_matrix(policy, mdp.n_states(), mdp.n_actions()))
}

/// Stacked expected rewards R.
pub fn expected_reward_vector<T: Scalar>(mdp: &TabularMdp<T>) -> Vec<T> {
    let layout = mdp.layout();
    (0..mdp.n_pairs())
        .map(|i| {
            let (s, a) = layout.pair(i);
            mdp.expected_reward(s, a)
        })
        .collect()
}
