//! Finite MDPs, Q-tables and the stacked operators built from them.

mod io;
mod qtable;
mod random;
mod solve;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use io::{from_toml_str, read_mdp_file, to_toml_string, write_mdp_file, MDP_SCHEMA_VERSION};
pub use qtable::{Layout, QTable};
pub use random::{random_distribution, random_mdp, random_q};
pub use solve::{
    bellman_optimality, bellman_residual, expected_reward_vector, greedy_policy, optimal_q,
    policy_matrix, sa_transition_matrix, stacked_transition, value_iteration, ViOptions,
};

use crate::error::{Error, Result};
use crate::Scalar;

/// A finite MDP with expected rewards.
///
/// `transition` and `reward` are dense over `(s, a, s')`. Terminal states are
/// absorbing zero-reward self-loops so the infinite-horizon operators stay
/// well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    layout: Arc<Layout>,
    gamma: T,
    transition: Vec<T>,
    reward: Vec<T>,
    terminal: Vec<bool>,
}

impl<T: Scalar> TabularMdp<T> {
    #[inline]
    fn tix(&self, s: usize, a: usize, s2: usize) -> usize {
        let n = self.layout.n_states();
        (s * self.layout.n_actions() + a) * n + s2
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn n_states(&self) -> usize {
        self.layout.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.layout.n_actions()
    }

    pub fn n_pairs(&self) -> usize {
        self.layout.n_pairs()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// P(s' | s, a).
    #[inline]
    pub fn p(&self, s: usize, a: usize, s2: usize) -> T {
        self.transition[self.tix(s, a, s2)]
    }

    /// r(s, a, s').
    #[inline]
    pub fn r(&self, s: usize, a: usize, s2: usize) -> T {
        self.reward[self.tix(s, a, s2)]
    }

    /// Probability row P(· | s, a).
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[T] {
        let start = self.tix(s, a, 0);
        &self.transition[start..start + self.n_states()]
    }

    #[inline]
    pub fn reward_row(&self, s: usize, a: usize) -> &[T] {
        let start = self.tix(s, a, 0);
        &self.reward[start..start + self.n_states()]
    }

    /// E[r | s, a].
    pub fn expected_reward(&self, s: usize, a: usize) -> T {
        self.row(s, a)
            .iter()
            .zip(self.reward_row(s, a))
            .map(|(&p, &r)| p * r)
            .sum()
    }

    #[inline]
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal.iter().enumerate().filter(|(_, &t)| t).map(|(s, _)| s)
    }

    /// max |r(s, a, s')| over reachable triples.
    pub fn r_max(&self) -> T {
        self.transition
            .iter()
            .zip(&self.reward)
            .filter(|(&p, _)| p > T::zero())
            .fold(T::zero(), |m, (_, &r)| m.max(r.abs()))
    }

    /// Returns a copy with all rewards divided by `factor` (> 0).
    pub fn scaled_rewards(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.reward.iter_mut().for_each(|r| *r = *r / factor);
        out
    }

    /// Rescales rewards so that `r_max() <= 1`; returns the divisor used
    /// (1 when no rescaling was needed).
    pub fn with_unit_rewards(&self) -> (Self, T) {
        let r_max = self.r_max();
        if r_max <= T::one() {
            (self.clone(), T::one())
        } else {
            (self.scaled_rewards(r_max), r_max)
        }
    }

    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        check_gamma(gamma)?;
        let mut out = self.clone();
        out.gamma = gamma;
        Ok(out)
    }

    /// All `(s, a, s', p, r)` entries with `p > 0`, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, T, T)> + '_ {
        let ns = self.n_states();
        let na = self.n_actions();
        (0..ns).flat_map(move |s| {
            (0..na).flat_map(move |a| {
                (0..ns).filter_map(move |s2| {
                    let p = self.p(s, a, s2);
                    (p > T::zero()).then(|| (s, a, s2, p, self.r(s, a, s2)))
                })
            })
        })
    }

    fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward"));
        }
        let tol = T::stochastic_tol();
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                let row = self.row(s, a);
                for (s2, &p) in row.iter().enumerate() {
                    if !(p >= T::zero() && p <= T::one()) {
                        return Err(Error::BadProbability {
                            state: s,
                            action: a,
                            next: s2,
                            p: p.as_f64(),
                        });
                    }
                }
                let sum: T = row.iter().copied().sum();
                if (sum - T::one()).abs() > tol {
                    return Err(Error::RowSum {
                        state: s,
                        action: a,
                        sum: sum.as_f64(),
                    });
                }
                if self.terminal[s]
                    && (self.p(s, a, s) != T::one() || self.r(s, a, s) != T::zero())
                {
                    return Err(Error::NotAbsorbing(s));
                }
            }
        }
        Ok(())
    }
}

fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if gamma >= T::zero() && gamma < T::one() {
        Ok(())
    } else {
        Err(Error::Discount(gamma.as_f64()))
    }
}

/// Incremental construction from sparse `(s, a, s', p, r)` tuples.
///
/// Repeated triples merge: probabilities add and the reward becomes the
/// probability-weighted mean. Rows of terminal states that were left empty
/// are filled with the absorbing self-loop.
#[derive(Debug, Clone)]
pub struct MdpBuilder<T> {
    n_states: usize,
    n_actions: usize,
    gamma: T,
    available: Option<Vec<usize>>,
    terminals: Vec<usize>,
    entries: BTreeMap<(usize, usize, usize), (T, T)>,
}

impl<T: Scalar> MdpBuilder<T> {
    pub fn new(n_states: usize, n_actions: usize, gamma: T) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            available: None,
            terminals: Vec::new(),
            entries: BTreeMap::new(),
        }
    }

    pub fn available_actions(mut self, available: Vec<usize>) -> Self {
        self.available = Some(available);
        self
    }

    pub fn terminal(mut self, s: usize) -> Self {
        self.terminals.push(s);
        self
    }

    pub fn transition(mut self, s: usize, a: usize, s2: usize, p: T, r: T) -> Self {
        self.add(s, a, s2, p, r);
        self
    }

    pub fn add(&mut self, s: usize, a: usize, s2: usize, p: T, r: T) {
        let e = self
            .entries
            .entry((s, a, s2))
            .or_insert((T::zero(), T::zero()));
        let total = e.0 + p;
        e.1 = if total > T::zero() {
            (e.0 * e.1 + p * r) / total
        } else {
            r
        };
        e.0 = total;
    }

    pub fn build(self) -> Result<TabularMdp<T>> {
        let layout = match self.available {
            Some(av) => Layout::with_available(self.n_states, self.n_actions, av)?,
            None => Layout::new(self.n_states, self.n_actions)?,
        };
        let (ns, na) = (self.n_states, self.n_actions);
        let mut terminal = vec![false; ns];
        for &s in &self.terminals {
            if s >= ns {
                return Err(Error::StateOutOfRange { state: s, n_states: ns });
            }
            terminal[s] = true;
        }
        let mut transition = vec![T::zero(); ns * na * ns];
        let mut reward = vec![T::zero(); ns * na * ns];
        let mut touched = vec![false; ns * na];
        for (&(s, a, s2), &(p, r)) in &self.entries {
            if s >= ns || s2 >= ns {
                return Err(Error::StateOutOfRange {
                    state: s.max(s2),
                    n_states: ns,
                });
            }
            if a >= na {
                return Err(Error::ActionOutOfRange {
                    action: a,
                    n_actions: na,
                });
            }
            let i = (s * na + a) * ns + s2;
            transition[i] = p;
            reward[i] = r;
            touched[s * na + a] = true;
        }
        for s in 0..ns {
            for a in 0..na {
                if touched[s * na + a] {
                    continue;
                }
                if terminal[s] {
                    transition[(s * na + a) * ns + s] = T::one();
                } else {
                    return Err(Error::MissingRow { state: s, action: a });
                }
            }
        }
        let mdp = TabularMdp {
            layout: Arc::new(layout),
            gamma: self.gamma,
            transition,
            reward,
            terminal,
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

/// Deterministic policy, one action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::ActionOutOfRange { action: a, n_actions });
        }
        Ok(Self { actions })
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// i.i.d. behaviour distribution d(s, a) over stacked pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution<T> {
    d: Vec<T>,
}

impl<T: Scalar> SamplingDistribution<T> {
    /// Entries in stacked order. Every entry must be strictly positive and
    /// the total must be one.
    pub fn new(d: Vec<T>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Distribution("empty".into()));
        }
        if let Some((i, v)) = d.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
            return Err(Error::Distribution(format!("entry {i} = {v}")));
        }
        let sum: T = d.iter().copied().sum();
        if (sum - T::one()).abs() > T::stochastic_tol() {
            return Err(Error::Distribution(format!("sum = {sum}")));
        }
        Ok(Self { d })
    }

    pub fn uniform(n_pairs: usize) -> Self {
        let v = T::one() / T::of(n_pairs as f64);
        Self { d: vec![v; n_pairs] }
    }

    /// Normalises positive weights.
    pub fn from_weights(w: &[T]) -> Result<Self> {
        let total: T = w.iter().copied().sum();
        Self::new(w.iter().map(|&x| x / total).collect())
    }

    pub fn probs(&self) -> &[T] {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn d_min(&self) -> T {
        self.d.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn d_max(&self) -> T {
        self.d.iter().copied().fold(T::zero(), T::max)
    }
}

/// ρ = 1 − α·d_min·(1 − γ).
pub fn decay_rate<T: Scalar>(alpha: T, d_min: T, gamma: T) -> Result<T> {
    let unit = |x: T| x > T::zero() && x < T::one();
    if !unit(alpha) {
        return Err(Error::Precondition(format!("alpha = {alpha} not in (0, 1)")));
    }
    if !(d_min > T::zero() && d_min <= T::one()) {
        return Err(Error::Precondition(format!("d_min = {d_min} not in (0, 1]")));
    }
    check_gamma(gamma).map_err(|_| Error::Precondition(format!("gamma = {gamma} not in [0, 1)")))?;
    Ok(T::one() - alpha * d_min * (T::one() - gamma))
}

/// Uniform bound on every iterate: max(R_max, ‖Q₀‖_∞) / (1 − γ).
pub fn q_max_bound<T: Scalar>(r_max: T, q0_inf_norm: T, gamma: T) -> T {
    r_max.max(q0_inf_norm) / (T::one() - gamma)
}
