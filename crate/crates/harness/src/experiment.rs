//! Seeded multi-run execution.
//!
//! Run `i` of a config draws every random number from the streams keyed by
//! `(base_seed, i)`; each algorithm restarts from the same streams, so the
//! algorithms of one run see common random numbers. Runs are independent and
//! may execute in parallel; each one is strictly sequential.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use sdq_core::agents::{run_episode, AgentState, Init, Rollout, RunStreams, Schedule};
use sdq_core::bounds::{empirical_error_curve, theorem1_bound, write_bound_csv, BoundParams, ErrorCurve};
use sdq_core::envs::{Env, Transition, BIAS_LEFT, MAX_EPISODE_STEPS};
use sdq_core::linalg::vec_inf_norm;
use sdq_core::mdp::{optimal_q, QTable};
use sdq_core::rng::{stream, Purpose};
use sdq_core::switching::{
    assemble_dynamics_env, lockstep_simulate, subtraction_recursions, verify_sandwich, write_trace_csv,
    DynamicsContext, LockstepInit, Relation, SANDWICH_TOL,
};

use crate::aggregate::{aggregate, Summary};
use crate::config::{AlgorithmSpec, ExperimentConfig, InitSpec, Mode};
use crate::error::{HarnessError, Result};
use crate::table::RunTable;

pub const EPISODE_METRICS: [&str; 4] = ["episode_return", "max_q_s0", "err_a_inf", "err_b_inf"];
pub const LEFT_METRIC: &str = "left_from_a";
pub const STEP_METRICS: [&str; 5] = ["cumulative_reward", "reward_per_step", "max_q_s0", "err_a_inf", "err_b_inf"];
pub const IID_METRICS: [&str; 2] = ["err_a_inf", "err_b_inf"];
pub const LOCKSTEP_METRICS: [&str; 3] = ["qa_err_inf", "qb_err_inf", "q_err_inf"];

/// Outcome of the orderings check on one lockstep run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunVerification {
    pub run: u64,
    pub violations: usize,
    pub min_slack: Vec<(Relation, f64)>,
    pub max_identity_gap: f64,
    pub subtraction_gap: f64,
}

/// Empirical error curves of SDQ against the closed-form bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub params: BoundParams<f64>,
    pub curve_a: ErrorCurve<f64>,
    pub curve_b: ErrorCurve<f64>,
    /// Smallest `theorem1(k) − (mean + 2·SE)` over k and both estimators.
    pub min_margin: f64,
}

impl BoundCheck {
    pub fn dominated(&self) -> bool {
        self.min_margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config_hash: String,
    /// `(base_seed, run_index)` of each run's streams.
    pub seeds: Vec<(u64, u64)>,
    pub runs: Vec<RunTable>,
    pub summary: Summary,
    pub verification: Vec<RunVerification>,
    pub bound: Option<BoundCheck>,
    pub out_dir: Option<PathBuf>,
}

impl RunResult {
    pub fn total_violations(&self) -> usize {
        self.verification.iter().map(|v| v.violations).sum()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

/// Runs every repetition of `cfg`, aggregates, and persists to
/// `cfg.out_dir` when one is set.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunResult> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let hash = cfg.hash();
    let out = cfg.out_dir.clone();
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir.join("runs")).map_err(|e| HarnessError::io(dir, e))?;
    }
    let ctx = match cfg.mode {
        Mode::Episodic => None,
        _ => {
            let analysis = cfg.analysis.as_ref().expect("validated");
            let d = analysis.distribution(env.mdp().n_pairs())?;
            Some(assemble_dynamics_env(&env, &d, analysis.alpha)?)
        }
    };
    let q_star = match &ctx {
        Some(c) => c.q_star().clone(),
        None => optimal_q(env.mdp())?,
    };
    let shared = Shared {
        cfg,
        env: &env,
        ctx: ctx.as_ref(),
        q_star: &q_star,
        hash: &hash,
        out: out.as_deref(),
    };
    let one = |i: usize| shared.run(i as u64);
    let outcomes: Vec<Result<(RunTable, Option<RunVerification>)>> = match opts.jobs {
        Some(1) => (0..cfg.runs).map(one).collect(),
        jobs => {
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(j) = jobs {
                pool = pool.num_threads(j);
            }
            let pool = pool
                .build()
                .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
            pool.install(|| (0..cfg.runs).into_par_iter().map(one).collect())
        }
    };
    let mut runs = Vec::with_capacity(cfg.runs);
    let mut verification = Vec::new();
    for o in outcomes {
        let (table, v) = o?;
        runs.push(table);
        verification.extend(v);
    }
    let summary = aggregate(&runs, cfg.smoothing_window)?;
    let bound = match cfg.mode {
        Mode::BoundCheck => Some(bound_check(ctx.as_ref().expect("step mode"), &runs)?),
        _ => None,
    };
    if let Some(dir) = &out {
        persist(dir, cfg, &hash, &summary, &verification, bound.as_ref())?;
    }
    Ok(RunResult {
        config_hash: hash,
        seeds: (0..cfg.runs as u64).map(|i| (cfg.base_seed, i)).collect(),
        runs,
        summary,
        verification,
        bound,
        out_dir: out,
    })
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    env: &'a Env<f64>,
    ctx: Option<&'a DynamicsContext<f64>>,
    q_star: &'a QTable<f64>,
    hash: &'a str,
    out: Option<&'a Path>,
}

impl Shared<'_> {
    fn run(&self, run: u64) -> Result<(RunTable, Option<RunVerification>)> {
        let (table, verification) = match self.cfg.mode {
            Mode::Episodic => (self.episodic(run)?, None),
            Mode::IidAnalysis => (self.iid(run, &self.cfg.algorithms, self.cfg.checkpoint_every())?, None),
            Mode::BoundCheck => {
                let sdq = AlgorithmSpec {
                    kind: crate::config::AlgorithmKind::Sdq,
                    init: self.analysis_init(),
                    label: "SDQ".into(),
                };
                // every k enters the bound comparison
                (self.iid(run, &[sdq], 1)?, None)
            }
            Mode::LockstepVerify => {
                let (t, v) = self.lockstep(run)?;
                (t, Some(v))
            }
        };
        if let Some(dir) = self.out {
            table.write_file(&dir.join("runs").join(format!("run_{run:04}.csv")))?;
        }
        Ok((table, verification))
    }

    fn analysis_init(&self) -> InitSpec {
        self.cfg.analysis.as_ref().map(|a| a.q0).unwrap_or_default()
    }

    fn new_agent(&self, spec: &AlgorithmSpec, streams: &mut RunStreams) -> Result<AgentState<f64>> {
        let gamma = self.env.mdp().gamma();
        Ok(AgentState::initialise(
            spec.kind.into(),
            self.env.mdp().layout().clone(),
            spec.init.build(),
            gamma,
            &mut streams.init,
        )?)
    }

    fn errors(&self, agent: &AgentState<f64>) -> (f64, f64) {
        let ea = agent.qa().inf_dist(self.q_star);
        let eb = agent.qb().map_or(ea, |b| b.inf_dist(self.q_star));
        (ea, eb)
    }

    fn episodic(&self, run: u64) -> Result<RunTable> {
        let cfg = self.cfg;
        let schedule = cfg.schedule.as_ref().expect("validated").build()?;
        let every = cfg.checkpoint_every();
        let s0 = self.env.start_state();
        let bias = cfg.env.is_bias();
        let mut table = if let Some(episodes) = cfg.episodes {
            let mut metrics = EPISODE_METRICS.to_vec();
            if bias {
                metrics.insert(1, LEFT_METRIC);
            }
            let mut table = RunTable::new(run, cfg.base_seed, self.hash, "episode", &metrics);
            for spec in &cfg.algorithms {
                let mut streams = RunStreams::new(cfg.base_seed, run);
                let mut agent = self.new_agent(spec, &mut streams)?;
                let mut x = Vec::new();
                let mut cols = vec![Vec::new(); metrics.len()];
                for e in 1..=episodes {
                    let stats = run_episode(&mut agent, self.env, &schedule, &mut streams, MAX_EPISODE_STEPS);
                    if e % every == 0 || e == episodes {
                        let (ea, eb) = self.errors(&agent);
                        let mut row = vec![stats.total_reward, agent.acting_max(s0), ea, eb];
                        if bias {
                            row.insert(1, if stats.first_action == BIAS_LEFT { 1.0 } else { 0.0 });
                        }
                        x.push(e);
                        cols.iter_mut().zip(row).for_each(|(c, v)| c.push(v));
                    }
                }
                table.push_series(&spec.label, x, cols)?;
            }
            table
        } else {
            let steps = cfg.steps.expect("validated");
            let mut table = RunTable::new(run, cfg.base_seed, self.hash, "step", &STEP_METRICS);
            for spec in &cfg.algorithms {
                let mut streams = RunStreams::new(cfg.base_seed, run);
                let mut agent = self.new_agent(spec, &mut streams)?;
                let mut rollout = Rollout::new(self.env);
                let mut total = 0.0;
                let mut x = Vec::new();
                let mut cols = vec![Vec::new(); STEP_METRICS.len()];
                for k in 1..=steps {
                    let (t, _) = rollout.step(&mut agent, self.env, &schedule, &mut streams);
                    total += t.r;
                    if k % every == 0 || k == steps {
                        let (ea, eb) = self.errors(&agent);
                        x.push(k);
                        let row = [total, total / k as f64, agent.acting_max(s0), ea, eb];
                        for (c, v) in cols.iter_mut().zip(row) {
                            c.push(v);
                        }
                    }
                }
                table.push_series(&spec.label, x, cols)?;
            }
            table
        };
        table.run = run;
        Ok(table)
    }

    /// Learning from i.i.d. samples `(s, a) ~ d`; checkpoints include k = 0.
    fn iid(&self, run: u64, algorithms: &[AlgorithmSpec], every: u64) -> Result<RunTable> {
        let cfg = self.cfg;
        let ctx = self.ctx.expect("step mode");
        let steps = cfg.steps.expect("validated");
        let schedule = Schedule::constant(0.0, ctx.alpha())?;
        let equal = cfg.analysis.as_ref().is_some_and(|a| a.equal_init);
        let mut table = RunTable::new(run, cfg.base_seed, self.hash, "step", &IID_METRICS);
        for spec in algorithms {
            let mut streams = RunStreams::new(cfg.base_seed, run);
            let mut agent = self.new_agent(spec, &mut streams)?;
            if equal && agent.kind().two_estimators() {
                let qa = agent.qa().clone();
                agent = AgentState::new(agent.kind(), qa.clone(), Some(qa), agent.gamma())?;
            }
            let mut sampler = stream(cfg.base_seed, run, Purpose::Sampler);
            let mut x = Vec::new();
            let mut cols = vec![Vec::new(); IID_METRICS.len()];
            for k in 0..=steps {
                if k > 0 {
                    let s = ctx.sample(&mut sampler);
                    // the analysed dynamics always bootstrap, terminal or not
                    let t = Transition {
                        s: s.s,
                        a: s.a,
                        r: s.r,
                        s_next: s.s_next,
                        done: false,
                    };
                    agent.observe(&t, &schedule, &mut streams.coin);
                }
                if k % every == 0 || k == steps {
                    let (ea, eb) = self.errors(&agent);
                    x.push(k);
                    cols[0].push(ea);
                    cols[1].push(eb);
                }
            }
            table.push_series(&spec.label, x, cols)?;
        }
        Ok(table)
    }

    fn lockstep(&self, run: u64) -> Result<(RunTable, RunVerification)> {
        let cfg = self.cfg;
        let ctx = self.ctx.expect("step mode");
        let steps = cfg.steps.expect("validated") as usize;
        let analysis = cfg.analysis.as_ref().expect("validated");
        let mut init_rng = stream(cfg.base_seed, run, Purpose::Init);
        let layout = ctx.layout().clone();
        let mut draw = || match analysis.q0.build() {
            Init::Zero => QTable::zeros(layout.clone()).into_values(),
            Init::Uniform { lo, hi } => sdq_core::mdp::random_q(layout.clone(), lo, hi, &mut init_rng).into_values(),
        };
        let qa0 = draw();
        let qb0 = if analysis.equal_init { qa0.clone() } else { draw() };
        let mut sampler = stream(cfg.base_seed, run, Purpose::Sampler);
        let trace = lockstep_simulate(ctx, &LockstepInit { qa0, qb0 }, steps, &mut sampler)?;
        let report = verify_sandwich(&trace, SANDWICH_TOL);
        let sub = subtraction_recursions(&trace, ctx);
        if let Some(dir) = self.out {
            let path = dir.join("runs").join(format!("trace_{run:04}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            write_trace_csv(&trace, std::io::BufWriter::new(file))?;
        }
        let every = cfg.checkpoint_every() as usize;
        let mut table = RunTable::new(run, cfg.base_seed, self.hash, "step", &LOCKSTEP_METRICS);
        let mut x = Vec::new();
        let mut cols = vec![Vec::new(); LOCKSTEP_METRICS.len()];
        for (k, st) in trace.states.iter().enumerate() {
            if k % every == 0 || k == steps {
                x.push(k as u64);
                cols[0].push(vec_inf_norm(&trace.dev_a(k)));
                cols[1].push(vec_inf_norm(&trace.dev_b(k)));
                cols[2].push(vec_inf_norm(&st.err));
            }
        }
        table.push_series("SDQ", x, cols)?;
        let v = RunVerification {
            run,
            violations: report.violation_count,
            min_slack: report.min_slack.clone(),
            max_identity_gap: report.max_identity_gap,
            subtraction_gap: sub.worst(),
        };
        Ok((table, v))
    }
}

fn bound_check(ctx: &DynamicsContext<f64>, runs: &[RunTable]) -> Result<BoundCheck> {
    let params = BoundParams::new(ctx.alpha(), ctx.gamma(), ctx.d_min(), ctx.d_max(), ctx.n_sa(), 0)?;
    let curve = |metric: &str| -> Result<ErrorCurve<f64>> {
        let series: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| r.series("SDQ", metric).expect("bound runs record both errors").to_vec())
            .collect();
        Ok(empirical_error_curve(&series)?)
    };
    let (curve_a, curve_b) = (curve(IID_METRICS[0])?, curve(IID_METRICS[1])?);
    let mut min_margin = f64::INFINITY;
    for c in [&curve_a, &curve_b] {
        for k in 0..c.len() {
            let bound = theorem1_bound(&params.at(k as u64));
            min_margin = min_margin.min(bound - (c.mean[k] + 2.0 * c.se[k]));
        }
    }
    Ok(BoundCheck {
        params,
        curve_a,
        curve_b,
        min_margin,
    })
}

pub const VERIFY_SCHEMA: &str = "sdq-verify/1";

fn persist(
    dir: &Path,
    cfg: &ExperimentConfig,
    hash: &str,
    summary: &Summary,
    verification: &[RunVerification],
    bound: Option<&BoundCheck>,
) -> Result<()> {
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))
    };
    // stored without the output directory so moved experiments stay identical
    let stored = ExperimentConfig {
        out_dir: None,
        ..cfg.clone()
    };
    write("config.toml", stored.to_toml_string().as_bytes())?;
    let mut manifest = format!("# schema=sdq-manifest/1\n# config_hash={hash}\nrun,base_seed,run_index\n");
    for i in 0..cfg.runs {
        manifest.push_str(&format!("{i},{},{i}\n", cfg.base_seed));
    }
    write("manifest.csv", manifest.as_bytes())?;
    summary.write_all(dir)?;
    if !verification.is_empty() {
        let mut buf = Vec::new();
        write_verification_csv(verification, &mut buf)?;
        write("verify.csv", &buf)?;
    }
    if let Some(b) = bound {
        for (name, curve) in [("bound_a.csv", &b.curve_a), ("bound_b.csv", &b.curve_b)] {
            let mut buf = Vec::new();
            write_bound_csv(curve, &b.params, &mut buf)?;
            write(name, &buf)?;
        }
    }
    Ok(())
}

/// `id, violations, min slack per ordering, identity gap, subtraction gap`.
pub fn write_verification_csv<W: std::io::Write>(rows: &[RunVerification], mut out: W) -> Result<()> {
    let e = |e: std::io::Error| HarnessError::Csv(e.into());
    writeln!(out, "# schema={VERIFY_SCHEMA}").map_err(e)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["run".to_string(), "violations".to_string()];
    header.extend(Relation::ALL[..7].iter().map(|r| format!("min_slack[{}]", r.name())));
    header.push("max_identity_gap".into());
    header.push("subtraction_gap".into());
    w.write_record(&header)?;
    for v in rows {
        let mut row = vec![v.run.to_string(), v.violations.to_string()];
        row.extend(v.min_slack.iter().map(|(_, s)| format!("{s:e}")));
        row.push(format!("{:e}", v.max_identity_gap));
        row.push(format!("{:e}", v.subtraction_gap));
        w.write_record(&row)?;
    }
    w.flush().map_err(e)?;
    Ok(())
}
