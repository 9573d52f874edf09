use crate::agents::{AgentState, Schedule};
use crate::envs::{Env, Transition, MAX_EPISODE_STEPS};
use crate::rng::{stream, Purpose, StreamRng};
use crate::Scalar;

/// The independent random streams of one run. Which algorithm is trained
/// does not enter the derivation, so different algorithms on the same run
/// index see common random numbers.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub init: StreamRng,
    pub env: StreamRng,
    pub explore: StreamRng,
    pub coin: StreamRng,
}

impl RunStreams {
    pub fn new(base_seed: u64, run_index: u64) -> Self {
        Self {
            init: stream(base_seed, run_index, Purpose::Init),
            env: stream(base_seed, run_index, Purpose::Environment),
            explore: stream(base_seed, run_index, Purpose::Exploration),
            coin: stream(base_seed, run_index, Purpose::EstimatorCoin),
        }
    }
}

/// Continuous act–step–learn loop that restarts episodes on termination or
/// after `max_steps` steps (truncation bootstraps as usual).
#[derive(Debug, Clone)]
pub struct Rollout {
    state: usize,
    t: usize,
    max_steps: usize,
    episodes: u64,
}

impl Rollout {
    pub fn new<T: Scalar>(env: &Env<T>) -> Self {
        Self::with_cap(env, MAX_EPISODE_STEPS)
    }

    pub fn with_cap<T: Scalar>(env: &Env<T>, max_steps: usize) -> Self {
        Self {
            state: env.reset(),
            t: 0,
            max_steps: max_steps.max(1),
            episodes: 0,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Episodes finished so far.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// One interaction; the flag reports whether this step ended the episode.
    pub fn step<T: Scalar>(
        &mut self,
        agent: &mut AgentState<T>,
        env: &Env<T>,
        schedule: &Schedule<T>,
        streams: &mut RunStreams,
    ) -> (Transition<T>, bool) {
        let a = agent.act(self.state, schedule, &mut streams.explore);
        let t = env.step(self.state, a, &mut streams.env);
        agent.observe(&t, schedule, &mut streams.coin);
        self.t += 1;
        let ended = t.done || self.t >= self.max_steps;
        if ended {
            self.state = env.reset();
            self.t = 0;
            self.episodes += 1;
        } else {
            self.state = t.s_next;
        }
        (t, ended)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats<T> {
    pub steps: usize,
    /// Undiscounted sum of rewards.
    pub total_reward: T,
    pub first_action: usize,
    pub truncated: bool,
}

pub fn run_episode<T: Scalar>(
    agent: &mut AgentState<T>,
    env: &Env<T>,
    schedule: &Schedule<T>,
    streams: &mut RunStreams,
    max_steps: usize,
) -> EpisodeStats<T> {
    let mut rollout = Rollout::with_cap(env, max_steps);
    let mut stats = EpisodeStats {
        steps: 0,
        total_reward: T::zero(),
        first_action: 0,
        truncated: false,
    };
    loop {
        let (t, ended) = rollout.step(agent, env, schedule, streams);
        if stats.steps == 0 {
            stats.first_action = t.a;
        }
        stats.steps += 1;
        stats.total_reward = stats.total_reward + t.r;
        if ended {
            stats.truncated = !t.done;
            return stats;
        }
    }
}
