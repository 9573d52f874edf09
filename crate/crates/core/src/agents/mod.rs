//! Q-learning, double Q-learning and SDQ as value-to-value step functions.
//!
//! The update functions only touch Q-tables; [`AgentState::observe`] is the
//! driver that bumps visit counters, reads the step size and (for double
//! Q-learning) flips the estimator coin.

mod rollout;
mod schedule;

use std::sync::Arc;

use rand::Rng;

pub use rollout::{run_episode, EpisodeStats, Rollout, RunStreams};
pub use schedule::{Exploration, Schedule, StepSize};

use crate::envs::Transition;
use crate::error::{Error, Result};
use crate::mdp::{random_q, Layout, QTable};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Q,
    DoubleQ,
    Sdq,
}

impl AgentKind {
    pub fn two_estimators(self) -> bool {
        !matches!(self, AgentKind::Q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Single,
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init<T> {
    Zero,
    Uniform { lo: T, hi: T },
}

/// Per-pair update counters (stacked index) and per-state visit counters.
/// `n_a` doubles as the single counter of Q-learning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub n_a: Vec<u64>,
    pub n_b: Vec<u64>,
    pub state_visits: Vec<u64>,
}

impl Counts {
    fn new(layout: &Layout) -> Self {
        Self {
            n_a: vec![0; layout.n_pairs()],
            n_b: vec![0; layout.n_pairs()],
            state_visits: vec![0; layout.n_states()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<T> {
    kind: AgentKind,
    qa: QTable<T>,
    qb: Option<QTable<T>>,
    counts: Counts,
    step_index: u64,
    gamma: T,
}

#[inline]
fn td<T: Scalar>(q: T, r: T, gamma: T, boot: T, done: bool, alpha: T) -> T {
    let target = if done { r } else { r + gamma * boot };
    q + alpha * (target - q)
}

impl<T: Scalar> AgentState<T> {
    /// `qb` must be present exactly for the two-estimator kinds.
    pub fn new(kind: AgentKind, qa: QTable<T>, qb: Option<QTable<T>>, gamma: T) -> Result<Self> {
        match (&qb, kind.two_estimators()) {
            (None, false) => {}
            (Some(b), true) if b.layout() == qa.layout() => {}
            (Some(_), true) => return Err(Error::Precondition("estimators have different shapes".into())),
            (Some(_), false) => return Err(Error::Precondition("Q-learning takes one estimator".into())),
            (None, true) => return Err(Error::Precondition(format!("{kind:?} needs two estimators"))),
        }
        let counts = Counts::new(qa.layout());
        Ok(Self {
            kind,
            qa,
            qb,
            counts,
            step_index: 0,
            gamma,
        })
    }

    /// Fresh tables drawn from `init`; `qa` is drawn before `qb`.
    pub fn initialise<R: Rng + ?Sized>(
        kind: AgentKind,
        layout: Arc<Layout>,
        init: Init<T>,
        gamma: T,
        rng: &mut R,
    ) -> Result<Self> {
        let mut draw = || match init {
            Init::Zero => QTable::zeros(layout.clone()),
            Init::Uniform { lo, hi } => random_q(layout.clone(), lo.as_f64(), hi.as_f64(), rng),
        };
        let qa = draw();
        let qb = kind.two_estimators().then(draw);
        Self::new(kind, qa, qb, gamma)
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn qa(&self) -> &QTable<T> {
        &self.qa
    }

    pub fn qb(&self) -> Option<&QTable<T>> {
        self.qb.as_ref()
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Value of the acting table: `qa` for Q-learning, `(qa + qb)/2` otherwise.
    #[inline]
    pub fn acting_value(&self, s: usize, a: usize) -> T {
        match &self.qb {
            None => self.qa.get(s, a),
            Some(qb) => (self.qa.get(s, a) + qb.get(s, a)) / (T::one() + T::one()),
        }
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        let mut best = 0;
        let mut best_v = self.acting_value(s, 0);
        for a in self.qa.layout().actions(s).skip(1) {
            let v = self.acting_value(s, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    /// max_a of the acting table at `s`.
    pub fn acting_max(&self, s: usize) -> T {
        self.acting_value(s, self.greedy_action(s))
    }

    /// Largest |entry| over all estimators.
    pub fn max_abs(&self) -> T {
        let b = self.qb.as_ref().map_or(T::zero(), |q| q.inf_norm());
        self.qa.inf_norm().max(b)
    }

    fn apply_q(&mut self, t: &Transition<T>, alpha: T) {
        let boot = self.qa.max_at(t.s_next);
        let v = td(self.qa.get(t.s, t.a), t.r, self.gamma, boot, t.done, alpha);
        self.qa.set(t.s, t.a, v);
        self.step_index += 1;
    }

    fn apply_double_q(&mut self, t: &Transition<T>, alpha: T, zeta: bool) {
        let qb = self.qb.as_mut().expect("double Q-learning has two estimators");
        let (upd, other) = if zeta { (&mut self.qa, &*qb) } else { (qb, &self.qa) };
        let boot = other.get(t.s_next, upd.argmax_at(t.s_next));
        let v = td(upd.get(t.s, t.a), t.r, self.gamma, boot, t.done, alpha);
        upd.set(t.s, t.a, v);
        self.step_index += 1;
    }

    fn apply_sdq(&mut self, t: &Transition<T>, alpha_a: T, alpha_b: T) {
        let qb = self.qb.as_mut().expect("SDQ has two estimators");
        let boot_a = self.qa.get(t.s_next, qb.argmax_at(t.s_next));
        let boot_b = qb.get(t.s_next, self.qa.argmax_at(t.s_next));
        let va = td(self.qa.get(t.s, t.a), t.r, self.gamma, boot_a, t.done, alpha_a);
        let vb = td(qb.get(t.s, t.a), t.r, self.gamma, boot_b, t.done, alpha_b);
        self.qa.set(t.s, t.a, va);
        qb.set(t.s, t.a, vb);
        self.step_index += 1;
    }

    /// `qa(s,a) ← qa(s,a) + α(r + γ max_a' qa(s',a') − qa(s,a))`, no bootstrap when done.
    pub fn q_step(mut self, t: &Transition<T>, alpha: T) -> Self {
        assert_eq!(self.kind, AgentKind::Q);
        self.apply_q(t, alpha);
        self
    }

    /// `zeta = true` updates `qa` (selecting with `qa`, evaluating with `qb`);
    /// `false` is the mirror image. The other estimator is left alone.
    pub fn double_q_step(mut self, t: &Transition<T>, alpha: T, zeta: bool) -> Self {
        assert_eq!(self.kind, AgentKind::DoubleQ);
        self.apply_double_q(t, alpha, zeta);
        self
    }

    /// Both estimators update at `(s, a)` from the pre-step tables: each one
    /// picks the greedy action of the other and bootstraps from itself.
    pub fn sdq_step(mut self, t: &Transition<T>, alpha: T) -> Self {
        assert_eq!(self.kind, AgentKind::Sdq);
        self.apply_sdq(t, alpha, alpha);
        self
    }

    /// Step size for the named estimator's counter at `(s, a)`.
    pub fn step_size(&self, schedule: &Schedule<T>, s: usize, a: usize, estimator: Estimator) -> T {
        let i = self.qa.layout().index(s, a);
        let n = match estimator {
            Estimator::Single | Estimator::A => self.counts.n_a[i],
            Estimator::B => self.counts.n_b[i],
        };
        schedule.alpha_at(n)
    }

    /// Counts the visit to `s` and picks an ε-greedy action.
    pub fn act<R: Rng + ?Sized>(&mut self, s: usize, schedule: &Schedule<T>, rng: &mut R) -> usize {
        self.counts.state_visits[s] += 1;
        let eps = schedule.epsilon_at(self.counts.state_visits[s]);
        let greedy = self.greedy_action(s);
        explore_or(greedy, self.qa.layout().available_at(s), eps, rng)
    }

    /// Learns from one transition; the coin stream is only consumed by double
    /// Q-learning.
    pub fn observe<R: Rng + ?Sized>(&mut self, t: &Transition<T>, schedule: &Schedule<T>, coin: &mut R) {
        let i = self.qa.layout().index(t.s, t.a);
        match self.kind {
            AgentKind::Q => {
                self.counts.n_a[i] += 1;
                let alpha = self.step_size(schedule, t.s, t.a, Estimator::Single);
                self.apply_q(t, alpha);
            }
            AgentKind::DoubleQ => {
                let zeta: bool = coin.random();
                let est = if zeta {
                    self.counts.n_a[i] += 1;
                    Estimator::A
                } else {
                    self.counts.n_b[i] += 1;
                    Estimator::B
                };
                let alpha = self.step_size(schedule, t.s, t.a, est);
                self.apply_double_q(t, alpha, zeta);
            }
            AgentKind::Sdq => {
                self.counts.n_a[i] += 1;
                self.counts.n_b[i] += 1;
                let alpha_a = self.step_size(schedule, t.s, t.a, Estimator::A);
                let alpha_b = self.step_size(schedule, t.s, t.a, Estimator::B);
                self.apply_sdq(t, alpha_a, alpha_b);
            }
        }
    }
}

/// One uniform draw decides exploration; a second draw picks the random
/// action only when exploring. Random actions range over `0..n_legal`.
pub fn explore_or<T: Scalar, R: Rng + ?Sized>(greedy: usize, n_legal: usize, epsilon: T, rng: &mut R) -> usize {
    let u = T::of(rng.random::<f64>());
    if u < epsilon {
        rng.random_range(0..n_legal)
    } else {
        greedy
    }
}

/// ε-greedy on an explicit table (lowest-index ties).
pub fn select_action<T: Scalar, R: Rng + ?Sized>(q: &QTable<T>, s: usize, epsilon: T, rng: &mut R) -> usize {
    explore_or(q.argmax_at(s), q.layout().available_at(s), epsilon, rng)
}
