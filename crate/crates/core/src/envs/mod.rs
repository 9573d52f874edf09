//! Sampling environments built on top of an expected-reward [`TabularMdp`].
//!
//! Every environment carries its exact MDP (used by the oracles and the
//! vectorised operators) plus an optional per-triple reward noise model whose
//! mean is the MDP reward.

mod grid;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use grid::{make_named_env, make_stochastic_grid, GridRules, GRID_DOWN, GRID_LEFT, GRID_RIGHT, GRID_UP};

use crate::error::{Error, Result};
use crate::mdp::{MdpBuilder, TabularMdp};
use crate::Scalar;

/// Hard cap on episode length; the last transition is not marked `done`.
pub const MAX_EPISODE_STEPS: usize = 10_000;

/// Zero-mean perturbation added to `mdp.r(s, a, s')` when sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardNoise<T> {
    None,
    /// `r + std · N(0, 1)`.
    Gaussian { std: T },
    /// `r ± half_width` with equal probability.
    TwoPoint { half_width: T },
}

impl<T: Scalar> RewardNoise<T> {
    pub fn std_dev(&self) -> T {
        match *self {
            RewardNoise::None => T::zero(),
            RewardNoise::Gaussian { std } => std,
            RewardNoise::TwoPoint { half_width } => half_width,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            RewardNoise::None => T::zero(),
            RewardNoise::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                std * T::of(z)
            }
            RewardNoise::TwoPoint { half_width } => {
                if rng.random::<bool>() {
                    half_width
                } else {
                    -half_width
                }
            }
        }
    }

    fn scaled(self, factor: T) -> Self {
        match self {
            RewardNoise::None => RewardNoise::None,
            RewardNoise::Gaussian { std } => RewardNoise::Gaussian { std: std / factor },
            RewardNoise::TwoPoint { half_width } => RewardNoise::TwoPoint {
                half_width: half_width / factor,
            },
        }
    }
}

/// One observed step `(s, a, r, s', done)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub s: usize,
    pub a: usize,
    pub r: T,
    pub s_next: usize,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Env<T> {
    id: String,
    mdp: TabularMdp<T>,
    noise: Vec<RewardNoise<T>>,
    start: usize,
}

impl<T: Scalar> Env<T> {
    /// Environment with deterministic rewards.
    pub fn new(id: impl Into<String>, mdp: TabularMdp<T>, start: usize) -> Result<Self> {
        let n = mdp.n_states() * mdp.n_pairs();
        Self::with_noise(id, mdp, vec![RewardNoise::None; n], start)
    }

    /// `noise` is dense over `(s, a, s')` with index `(s * n_actions + a) * n_states + s'`.
    pub fn with_noise(
        id: impl Into<String>,
        mdp: TabularMdp<T>,
        noise: Vec<RewardNoise<T>>,
        start: usize,
    ) -> Result<Self> {
        let n = mdp.n_states() * mdp.n_pairs();
        if noise.len() != n {
            return Err(Error::Length {
                what: "reward noise",
                expected: n,
                got: noise.len(),
            });
        }
        if start >= mdp.n_states() {
            return Err(Error::StateOutOfRange {
                state: start,
                n_states: mdp.n_states(),
            });
        }
        if noise.iter().any(|z| !(z.std_dev() >= T::zero() && z.std_dev().is_finite())) {
            return Err(Error::NonFinite("reward noise"));
        }
        Ok(Self {
            id: id.into(),
            mdp,
            noise,
            start,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mdp(&self) -> &TabularMdp<T> {
        &self.mdp
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn reset(&self) -> usize {
        self.start
    }

    #[inline]
    fn nix(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.mdp.n_actions() + a) * self.mdp.n_states() + s2
    }

    pub fn noise(&self, s: usize, a: usize, s2: usize) -> RewardNoise<T> {
        self.noise[self.nix(s, a, s2)]
    }

    pub fn is_stochastic_reward(&self) -> bool {
        self.noise.iter().any(|z| *z != RewardNoise::None)
    }

    /// Draws `r(s, a, s')`; consumes randomness only for noisy triples.
    pub fn sample_reward<R: Rng + ?Sized>(&self, s: usize, a: usize, s2: usize, rng: &mut R) -> T {
        self.mdp.r(s, a, s2) + self.noise(s, a, s2).sample(rng)
    }

    /// Samples `s' ~ P(·|s,a)` by inversion of one uniform draw.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let row = self.mdp.row(s, a);
        let u = T::of(rng.random::<f64>());
        let mut acc = T::zero();
        let mut last = s;
        for (s2, &p) in row.iter().enumerate() {
            if p > T::zero() {
                acc = acc + p;
                last = s2;
                if u < acc {
                    return s2;
                }
            }
        }
        // rounding left a sliver above the cumulative sum
        last
    }

    /// One environment step. From a terminal state nothing is sampled and
    /// the episode is signalled as finished.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Transition<T> {
        debug_assert!(s < self.mdp.n_states() && a < self.mdp.n_actions());
        if self.mdp.is_terminal(s) {
            return Transition {
                s,
                a,
                r: T::zero(),
                s_next: s,
                done: true,
            };
        }
        let s_next = self.sample_next(s, a, rng);
        let r = self.sample_reward(s, a, s_next, rng);
        Transition {
            s,
            a,
            r,
            s_next,
            done: self.mdp.is_terminal(s_next),
        }
    }

    /// Rewards (and their noise) divided so that the expected rewards are
    /// bounded by one in magnitude; returns the divisor.
    pub fn with_unit_rewards(&self) -> (Self, T) {
        let (mdp, factor) = self.mdp.with_unit_rewards();
        let noise = self.noise.iter().map(|z| z.scaled(factor)).collect();
        (
            Self {
                id: self.id.clone(),
                mdp,
                noise,
                start: self.start,
            },
            factor,
        )
    }
}

pub const BIAS_A: usize = 0;
pub const BIAS_B: usize = 1;
pub const BIAS_T: usize = 2;
pub const BIAS_LEFT: usize = 0;
pub const BIAS_RIGHT: usize = 1;

/// The maximisation-bias chain A → {B, T}, B → T.
///
/// A has two legal actions: left (to B) and right (to T), both with reward 0.
/// B has `n_b_actions` legal actions, each to T with reward `mean + std·N(0,1)`.
/// When B has more actions than A, A's surplus (illegal) actions mirror
/// "right" so the full operator stays well defined.
pub fn make_bias_mdp<T: Scalar>(gamma: T, n_b_actions: usize, mean: T, std: T) -> Result<Env<T>> {
    if n_b_actions == 0 {
        return Err(Error::Precondition("n_b_actions must be at least 1".into()));
    }
    if !(std >= T::zero() && std.is_finite()) {
        return Err(Error::Precondition(format!("std = {std} must be finite and >= 0")));
    }
    let na = n_b_actions.max(2);
    let mut b = MdpBuilder::new(3, na, gamma)
        .available_actions(vec![2, n_b_actions, na])
        .terminal(BIAS_T);
    b.add(BIAS_A, BIAS_LEFT, BIAS_B, T::one(), T::zero());
    for a in 1..na {
        b.add(BIAS_A, a, BIAS_T, T::one(), T::zero());
    }
    for a in 0..na {
        b.add(BIAS_B, a, BIAS_T, T::one(), mean);
    }
    let mdp = b.build()?;
    let mut noise = vec![RewardNoise::None; 3 * na * 3];
    if std > T::zero() {
        for a in 0..n_b_actions {
            noise[(BIAS_B * na + a) * 3 + BIAS_T] = RewardNoise::Gaussian { std };
        }
    }
    Env::with_noise("bias", mdp, noise, BIAS_A)
}
