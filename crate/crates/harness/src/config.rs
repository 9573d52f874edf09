//! Experiment configuration files.
//!
//! ```toml
//! schema_version = 1
//! id = "bias"
//! mode = "episodic"          # episodic | iid_analysis | lockstep_verify | bound_check
//! runs = 200
//! base_seed = 0
//! episodes = 500             # or `steps = ...`
//!
//! [env]
//! name = "bias"
//! gamma = 0.9
//!
//! [schedule]
//! epsilon = { constant = 0.1 }   # or "inverse_sqrt_state_visits"
//! alpha = { constant = 0.1 }     # or "inverse_sa_visits"
//!
//! [[algorithms]]
//! kind = "q"                     # q | double_q | sdq
//! init = "zero"                  # or { uniform = [-0.3, 0.3] }
//! label = "Q-learning"
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdq_core::agents::{AgentKind, Exploration, Init, Schedule, StepSize};
use sdq_core::envs::{make_bias_mdp, make_named_env, make_stochastic_grid, Env};
use sdq_core::mdp::{random_mdp, read_mdp_file, SamplingDistribution};
use sdq_core::rng::{stream, Purpose};

use crate::error::{HarnessError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Episodic,
    IidAnalysis,
    LockstepVerify,
    BoundCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Bias {
        #[serde(default = "default_bias_gamma")]
        gamma: f64,
        #[serde(default = "default_n_b")]
        n_b_actions: usize,
        #[serde(default = "default_bias_mean")]
        mean: f64,
        #[serde(default = "one")]
        std: f64,
    },
    Grid {
        #[serde(default = "default_grid_size")]
        size: usize,
        #[serde(default = "default_step_rewards")]
        step_rewards: [f64; 2],
        #[serde(default = "default_goal")]
        goal_reward: f64,
        #[serde(default = "default_grid_gamma")]
        gamma: f64,
    },
    Cliffwalk {
        #[serde(default = "default_gym_gamma")]
        gamma: f64,
    },
    FrozenlakeDet {
        #[serde(default = "default_gym_gamma")]
        gamma: f64,
    },
    /// Random MDP drawn from its own seed, independent of the run seeds.
    Random {
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        #[serde(default = "one")]
        r_bound: f64,
        #[serde(default)]
        mdp_seed: u64,
    },
    /// MDP file with deterministic rewards; relative paths resolve against
    /// the config file's directory.
    File {
        path: PathBuf,
        #[serde(default)]
        start: usize,
    },
}

fn one() -> f64 {
    1.0
}
fn default_bias_gamma() -> f64 {
    0.9
}
fn default_n_b() -> usize {
    10
}
fn default_bias_mean() -> f64 {
    -0.1
}
fn default_grid_size() -> usize {
    8
}
fn default_step_rewards() -> [f64; 2] {
    [-10.0, 2.0]
}
fn default_goal() -> f64 {
    20.0
}
fn default_grid_gamma() -> f64 {
    0.95
}
fn default_gym_gamma() -> f64 {
    0.99
}

impl EnvSpec {
    pub fn build(&self, base_dir: &Path) -> Result<Env<f64>> {
        let env = match self {
            EnvSpec::Bias {
                gamma,
                n_b_actions,
                mean,
                std,
            } => make_bias_mdp(*gamma, *n_b_actions, *mean, *std)?,
            EnvSpec::Grid {
                size,
                step_rewards,
                goal_reward,
                gamma,
            } => make_stochastic_grid(*size, (step_rewards[0], step_rewards[1]), *goal_reward, *gamma)?,
            EnvSpec::Cliffwalk { gamma } => make_named_env("cliffwalk", *gamma)?,
            EnvSpec::FrozenlakeDet { gamma } => make_named_env("frozenlake_det", *gamma)?,
            EnvSpec::Random {
                n_states,
                n_actions,
                gamma,
                r_bound,
                mdp_seed,
            } => {
                let mut rng = stream(*mdp_seed, 0, Purpose::MdpGeneration);
                let mdp = random_mdp(*n_states, *n_actions, *gamma, *r_bound, &mut rng)?;
                Env::new("random", mdp, 0)?
            }
            EnvSpec::File { path, start } => {
                let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
                Env::new("file", read_mdp_file(&path)?, *start)?
            }
        };
        Ok(env)
    }

    pub fn is_bias(&self) -> bool {
        matches!(self, EnvSpec::Bias { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSpec {
    Constant(f64),
    InverseSqrtStateVisits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSpec {
    Constant(f64),
    InverseSaVisits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub epsilon: EpsilonSpec,
    pub alpha: AlphaSpec,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule<f64>> {
        let eps = match self.epsilon {
            EpsilonSpec::Constant(e) => Exploration::Constant(e),
            EpsilonSpec::InverseSqrtStateVisits => Exploration::InverseSqrtStateVisits,
        };
        let alpha = match self.alpha {
            AlphaSpec::Constant(a) => StepSize::Constant(a),
            AlphaSpec::InverseSaVisits => StepSize::InverseSaVisits,
        };
        Ok(Schedule::new(eps, alpha)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Zero,
    Uniform([f64; 2]),
}

impl InitSpec {
    pub fn build(self) -> Init<f64> {
        match self {
            InitSpec::Zero => Init::Zero,
            InitSpec::Uniform([lo, hi]) => Init::Uniform { lo, hi },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Q,
    DoubleQ,
    Sdq,
}

impl From<AlgorithmKind> for AgentKind {
    fn from(k: AlgorithmKind) -> Self {
        match k {
            AlgorithmKind::Q => AgentKind::Q,
            AlgorithmKind::DoubleQ => AgentKind::DoubleQ,
            AlgorithmKind::Sdq => AgentKind::Sdq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    #[serde(default)]
    pub init: InitSpec,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSpec {
    #[default]
    Uniform,
    /// Unnormalised positive weights in stacked `(s, a)` order.
    Weights(Vec<f64>),
}

/// Settings of the i.i.d. sampling modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub alpha: f64,
    #[serde(default)]
    pub distribution: DistributionSpec,
    /// Initial estimator for the lockstep and bound modes.
    #[serde(default)]
    pub q0: InitSpec,
    /// Start both estimators from the same draw.
    #[serde(default = "yes")]
    pub equal_init: bool,
}

fn yes() -> bool {
    true
}

impl AnalysisSpec {
    pub fn distribution(&self, n_pairs: usize) -> Result<SamplingDistribution<f64>> {
        Ok(match &self.distribution {
            DistributionSpec::Uniform => SamplingDistribution::uniform(n_pairs),
            DistributionSpec::Weights(w) => {
                if w.len() != n_pairs {
                    return Err(HarnessError::Config(format!(
                        "distribution has {} weights, the MDP has {n_pairs} state-action pairs",
                        w.len()
                    )));
                }
                SamplingDistribution::from_weights(w)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub id: String,
    pub mode: Mode,
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    /// Episodes (episode budget) or steps between checkpoints. Defaults to
    /// 1 episode or 10 steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    /// Trailing moving-average window applied per run before aggregation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing_window: Option<usize>,
    /// Rescale rewards so that max |r| = 1.
    #[serde(default)]
    pub unit_rewards: bool,
    pub env: EnvSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSpec>,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmSpec>,
    /// Directory that relative paths in the config resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs always serialise")
    }

    /// SHA-256 of the serialised config with the output directory left out,
    /// so moving an experiment does not change its identity.
    pub fn hash(&self) -> String {
        let canonical = Self {
            out_dir: None,
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive".into());
        }
        if self.smoothing_window == Some(0) {
            return bad("smoothing_window must be positive".into());
        }
        let mut labels: Vec<&str> = self.algorithms.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("algorithm labels must be distinct".into());
        }
        if let Some(l) = self.algorithms.iter().find(|a| !valid_label(&a.label)) {
            return bad(format!("label `{}` must be non-empty, without commas or quotes", l.label));
        }
        match self.mode {
            Mode::Episodic => {
                if self.schedule.is_none() {
                    return bad("episodic mode needs a [schedule]".into());
                }
                if self.episodes.is_some() == self.steps.is_some() {
                    return bad("episodic mode needs exactly one of `episodes` and `steps`".into());
                }
                if self.algorithms.is_empty() {
                    return bad("at least one [[algorithms]] entry is required".into());
                }
            }
            Mode::IidAnalysis | Mode::LockstepVerify | Mode::BoundCheck => {
                if self.analysis.is_none() {
                    return bad(format!("{:?} mode needs an [analysis] table", self.mode));
                }
                if self.steps.is_none() || self.episodes.is_some() {
                    return bad("step modes take `steps` and no `episodes`".into());
                }
                if self.mode == Mode::IidAnalysis && self.algorithms.is_empty() {
                    return bad("at least one [[algorithms]] entry is required".into());
                }
            }
        }
        Ok(())
    }

    pub fn checkpoint_every(&self) -> u64 {
        self.checkpoint_every.unwrap_or(match (self.mode, self.episodes) {
            (Mode::Episodic, Some(_)) => 1,
            _ => 10,
        })
    }

    pub fn build_env(&self) -> Result<Env<f64>> {
        let env = self.env.build(&self.base_dir)?;
        Ok(if self.unit_rewards { env.with_unit_rewards().0 } else { env })
    }
}

fn valid_label(l: &str) -> bool {
    !l.is_empty() && !l.contains([',', '"', '\n', '\r'])
}

#[cfg(test)]
mod tests {
    use super::*;

    const BIAS: &str = r#"
schema_version = 1
id = "bias"
mode = "episodic"
runs = 3
episodes = 20

[env]
name = "bias"

[schedule]
epsilon = { constant = 0.1 }
alpha = { constant = 0.1 }

[[algorithms]]
kind = "q"
label = "Q-learning"

[[algorithms]]
kind = "sdq"
init = { uniform = [-0.3, 0.3] }
label = "SDQ"
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(BIAS).unwrap();
        assert_eq!(cfg.mode, Mode::Episodic);
        assert_eq!(
            cfg.env,
            EnvSpec::Bias {
                gamma: 0.9,
                n_b_actions: 10,
                mean: -0.1,
                std: 1.0
            }
        );
        assert_eq!(cfg.algorithms[1].init, InitSpec::Uniform([-0.3, 0.3]));
        assert_eq!(cfg.checkpoint_every(), 1);
    }

    #[test]
    fn round_trips_losslessly() {
        let cfg = ExperimentConfig::from_toml_str(BIAS).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let cfg = ExperimentConfig::from_toml_str(BIAS).unwrap();
        let moved = ExperimentConfig {
            out_dir: Some("elsewhere".into()),
            ..cfg.clone()
        };
        assert_eq!(cfg.hash(), moved.hash());
        let reseeded = ExperimentConfig {
            base_seed: 1,
            ..cfg.clone()
        };
        assert_ne!(cfg.hash(), reseeded.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = BIAS.replace("runs = 3", "runs = 3\nwarmup = 5");
        assert!(ExperimentConfig::from_toml_str(&extra).is_err());
        let env_extra = BIAS.replace("name = \"bias\"", "name = \"bias\"\nslippery = true");
        assert!(ExperimentConfig::from_toml_str(&env_extra).is_err());
        let sched_extra = BIAS.replace("alpha = { constant = 0.1 }", "alpha = { constant = 0.1 }\ndecay = 1");
        assert!(ExperimentConfig::from_toml_str(&sched_extra).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for (from, to) in [
            ("runs = 3", "runs = 0"),
            ("schema_version = 1", "schema_version = 2"),
            ("name = \"bias\"", "name = \"taxi\""),
            ("kind = \"sdq\"", "kind = \"ddqn\""),
            ("episodes = 20", "episodes = 20\nsteps = 5"),
            ("label = \"SDQ\"", "label = \"Q-learning\""),
            ("label = \"SDQ\"", "label = \"a,b\""),
        ] {
            let text = BIAS.replace(from, to);
            assert!(ExperimentConfig::from_toml_str(&text).is_err(), "{to}");
        }
        let no_sched = BIAS.replace("[schedule]\nepsilon = { constant = 0.1 }\nalpha = { constant = 0.1 }", "");
        assert!(ExperimentConfig::from_toml_str(&no_sched).is_err());
    }

    #[test]
    fn step_modes_need_analysis() {
        let text = r#"
schema_version = 1
id = "iid"
mode = "iid_analysis"
runs = 2
steps = 100

[env]
name = "random"
n_states = 2
n_actions = 2
gamma = 0.5

[analysis]
alpha = 0.05

[[algorithms]]
kind = "sdq"
label = "SDQ"
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.checkpoint_every(), 10);
        assert!(cfg.analysis.as_ref().unwrap().equal_init);
        let no_analysis = text.replace("[analysis]\nalpha = 0.05", "");
        assert!(ExperimentConfig::from_toml_str(&no_analysis).is_err());
    }

    #[test]
    fn schedules_and_envs_build() {
        let s = ScheduleSpec {
            epsilon: EpsilonSpec::InverseSqrtStateVisits,
            alpha: AlphaSpec::InverseSaVisits,
        };
        assert_eq!(s.build().unwrap().epsilon_at(4), 0.5);
        let bad = ScheduleSpec {
            epsilon: EpsilonSpec::Constant(0.1),
            alpha: AlphaSpec::Constant(1.5),
        };
        assert!(bad.build().is_err());
        let cfg = ExperimentConfig::from_toml_str(BIAS).unwrap();
        assert_eq!(cfg.build_env().unwrap().id(), "bias");
    }
}
