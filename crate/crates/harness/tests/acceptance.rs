//! Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines always
//! print.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use sdq_core::agents::{AgentKind, AgentState, Exploration, Init, Rollout, RunStreams, Schedule, StepSize};
use sdq_core::bounds::{
    corollary1_bound, envelope_factor, linear_system_bound, noise_energy_limit, theorem1_bound, theorem1_transient,
    BoundParams,
};
use sdq_core::envs::{make_bias_mdp, make_named_env, make_stochastic_grid, Env};
use sdq_core::mdp::{optimal_q, q_max_bound, random_distribution, random_mdp, random_q, SamplingDistribution};
use sdq_core::rng::{stream, Purpose};
use sdq_core::switching::{assemble_dynamics, DynamicsContext};
use sdq_harness::config::ExperimentConfig;
use sdq_harness::experiment::LEFT_METRIC;
use sdq_harness::verify::{verify_suite, SuiteSpec, MAX_ACTIONS, MAX_STATES};
use sdq_harness::{run_experiment, RunOptions, Summary};

// criterion 1
const SUITE_MDPS: usize = 50;
const SUITE_SEEDS: usize = 10;
const SUITE_STEPS: usize = 2_000;
const SUITE_RUNTIME_S: f64 = 120.0;
// criterion 2
const DEGENERACY_STEPS: usize = 10_000;
// criterion 3
const BIAS_FINAL_EPISODES: usize = 100;
const BIAS_MIN_GAP: f64 = 0.05;
const EPSILON_FLOOR: f64 = 0.05;
const BIAS_FLOOR_BAND: f64 = 0.10;
const BIAS_RUNTIME_S: f64 = 60.0;
// criterion 6
const ENVELOPE_K_MAX: u64 = 100_000;
const ENVELOPE_RHOS: [f64; 3] = [0.9, 0.99, 0.999];
// criterion 7
const LS_N: usize = 4;
const LS_ALPHA: f64 = 0.05;
const LS_D_MIN: f64 = 0.25;
const LS_GAMMA: f64 = 0.5;
const LS_NOISE: f64 = 0.5;
const LS_RUNS: usize = 10_000;
const LS_K_MAX: usize = 200;
// criterion 8
const NOISE_PAIRS: usize = 20;
const NOISE_SAMPLES: usize = 100_000;
const NOISE_SIGMAS: f64 = 3.0;
const NOISE_GAMMA: f64 = 0.9;
// criterion 9
const MATRIX_PAIRS: u64 = 100;
const NORM_TOL: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-14;
// criterion 10
const BOX_GAMMA: f64 = 0.9;
const BOX_LIMIT: f64 = 10.0;
const BOX_STEPS: usize = 10_000;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load_config(name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(config_path(name)).expect("shipped config loads");
    cfg.out_dir = None;
    cfg
}

fn tail_mean(xs: &[f64], n: usize) -> f64 {
    let tail = &xs[xs.len() - n..];
    tail.iter().sum::<f64>() / n as f64
}

fn series<'a>(s: &'a Summary, metric: &str, label: &str) -> &'a [f64] {
    s.mean_of(metric, label)
        .unwrap_or_else(|| panic!("missing series {label}/{metric}"))
}

fn builtin_envs(gamma_override: Option<f64>) -> Vec<Env<f64>> {
    let g = |default: f64| gamma_override.unwrap_or(default);
    vec![
        make_bias_mdp(g(0.9), 10, -0.1, 1.0).unwrap(),
        make_stochastic_grid(8, (-10.0, 2.0), 20.0, g(0.95)).unwrap(),
        make_named_env("cliffwalk", g(0.99)).unwrap(),
        make_named_env("frozenlake_det", g(0.99)).unwrap(),
    ]
}

fn criterion_1() -> Outcome {
    let spec = SuiteSpec {
        mdps: SUITE_MDPS,
        seeds: SUITE_SEEDS,
        steps: SUITE_STEPS,
        base_seed: 0,
    };
    let t = Instant::now();
    let report = verify_suite(spec, None).expect("suite runs");
    let secs = t.elapsed().as_secs_f64();
    let sizes_ok = report
        .rows
        .iter()
        .all(|r| r.n_states <= MAX_STATES && r.n_actions <= MAX_ACTIONS);
    let v = report.violations();
    outcome(
        v == 0 && sizes_ok && secs < SUITE_RUNTIME_S,
        format!(
            "{} lockstep runs, violations {v}, max |err - (qa - qb)| {:e}, {secs:.1}s",
            report.rows.len(),
            report.max_identity_gap()
        ),
    )
}

fn criterion_2() -> Outcome {
    let schedules = [
        Schedule::constant(0.1, 0.1).unwrap(),
        Schedule::new(Exploration::InverseSqrtStateVisits, StepSize::InverseSaVisits).unwrap(),
    ];
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let mut failures = Vec::new();
    for env in builtin_envs(None) {
        for (j, sched) in schedules.iter().enumerate() {
            let mut init = stream(0, j as u64, Purpose::Init);
            let q0 = random_q::<f64, _>(env.mdp().layout().clone(), -0.3, 0.3, &mut init);
            let gamma = env.mdp().gamma();
            let mut q = AgentState::new(AgentKind::Q, q0.clone(), None, gamma).unwrap();
            let mut sdq = AgentState::new(AgentKind::Sdq, q0.clone(), Some(q0), gamma).unwrap();
            let (mut s1, mut s2) = (RunStreams::new(0, j as u64), RunStreams::new(0, j as u64));
            let (mut r1, mut r2) = (Rollout::new(&env), Rollout::new(&env));
            let mut same = true;
            for _ in 0..DEGENERACY_STEPS {
                let (t1, _) = r1.step(&mut q, &env, sched, &mut s1);
                let (t2, _) = r2.step(&mut sdq, &env, sched, &mut s2);
                same &= t1 == t2
                    && bits(q.qa().values()) == bits(sdq.qa().values())
                    && bits(q.qa().values()) == bits(sdq.qb().unwrap().values());
                if !same {
                    break;
                }
            }
            if !same {
                failures.push(format!("{}#{j}", env.id()));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "4 envs x 2 schedules x {DEGENERACY_STEPS} steps, diverged: {}",
            if failures.is_empty() { "none".to_string() } else { failures.join(" ") }
        ),
    )
}

fn criterion_3() -> Outcome {
    let cfg = load_config("bias.toml");
    let t = Instant::now();
    let result = run_experiment(&cfg, RunOptions::default()).expect("bias experiment runs");
    let secs = t.elapsed().as_secs_f64();
    let left = |label: &str| tail_mean(series(&result.summary, LEFT_METRIC, label), BIAS_FINAL_EPISODES);
    let (q, sdq, dq) = (left("Q-learning"), left("SDQ"), left("double Q-learning"));
    let gap_ok = q >= sdq + BIAS_MIN_GAP;
    let sdq_ok = (sdq - EPSILON_FLOOR).abs() <= BIAS_FLOOR_BAND;
    let dq_ok = (dq - EPSILON_FLOOR).abs() <= BIAS_FLOOR_BAND;
    outcome(
        gap_ok && sdq_ok && dq_ok && secs < BIAS_RUNTIME_S,
        format!(
            "{} runs x {} episodes, final-{BIAS_FINAL_EPISODES} left rate: Q {:.2}%, SDQ {:.2}%, double-Q {:.2}%; \
             Q - SDQ = {:.2}pp (need >= {:.0}), SDQ floor ok {sdq_ok}, double-Q floor ok {dq_ok}, {secs:.1}s",
            cfg.runs,
            cfg.episodes.unwrap_or(0),
            100.0 * q,
            100.0 * sdq,
            100.0 * dq,
            100.0 * (q - sdq),
            100.0 * BIAS_MIN_GAP
        ),
    )
}

fn criterion_4() -> Outcome {
    let cfg = load_config("grid.toml");
    let env = cfg.build_env().unwrap();
    let q_star = optimal_q(env.mdp()).unwrap();
    let target = q_star.max_at(env.start_state());
    let result = run_experiment(&cfg, RunOptions::default()).expect("grid experiment runs");
    let last = |label: &str| *series(&result.summary, "max_q_s0", label).last().unwrap() - target;
    let (q, dq, sdq) = (last("Q-learning"), last("double Q-learning"), last("SDQ"));
    let closest = sdq.abs() <= q.abs() && sdq.abs() <= dq.abs();
    let signs = q > 0.0 && dq < 0.0;
    outcome(
        closest && signs,
        format!(
            "max Q*(s0) = {target:.3}; signed error at step {}: Q {q:+.3}, double-Q {dq:+.3}, SDQ {sdq:+.3}; \
             SDQ closest {closest}, signs Q>0 & double-Q<0 {signs}",
            cfg.steps.unwrap_or(0)
        ),
    )
}

fn criterion_5() -> Outcome {
    let cfg = load_config("bound.toml");
    let result = run_experiment(&cfg, RunOptions::default()).expect("bound experiment runs");
    let b = result.bound.expect("bound_check mode");
    outcome(
        b.dominated(),
        format!(
            "{} runs x {} steps, rho {:.6}, min over k of bound - (mean + 2SE) = {:e}",
            cfg.runs,
            cfg.steps.unwrap_or(0),
            b.params.rho(),
            b.min_margin
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut bad = 0usize;
    for rho in ENVELOPE_RHOS {
        for k in 0..=ENVELOPE_K_MAX {
            let t = theorem1_transient(rho, k);
            let e = envelope_factor(rho, k);
            if t > e {
                bad += 1;
            }
            worst_ratio = worst_ratio.max(t / e);
        }
    }
    // corollary ≥ theorem on parameter sets whose ρ spans the same range
    let mut bad_cor = 0usize;
    for (alpha, gamma, d) in [(0.4, 0.75, 1.0), (0.05, 0.5, 0.25), (0.01, 0.9, 0.5)] {
        let p = BoundParams::new(alpha, gamma, d, d, 4, 0).unwrap();
        for k in (0..=ENVELOPE_K_MAX).step_by(7) {
            let p = p.at(k);
            if corollary1_bound(&p).unwrap() < theorem1_bound(&p) {
                bad_cor += 1;
            }
        }
    }
    outcome(
        bad == 0 && bad_cor == 0,
        format!(
            "k in [0, {ENVELOPE_K_MAX}], rho {ENVELOPE_RHOS:?}: envelope violations {bad}, \
             max transient/envelope {worst_ratio:.12}; corollary < theorem at {bad_cor} points"
        ),
    )
}

fn criterion_7() -> Outcome {
    let rho = 1.0 - LS_ALPHA * LS_D_MIN * (1.0 - LS_GAMMA);
    let x0 = vec![1.0; LS_N];
    let x0_norm = (LS_N as f64).sqrt();
    let mut sums = vec![0.0; LS_K_MAX + 1];
    let mut rng = stream(0, 0, Purpose::Custom(7));
    for _ in 0..LS_RUNS {
        let mut x = x0.clone();
        for (k, s) in sums.iter_mut().enumerate() {
            *s += x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if k == LS_K_MAX {
                break;
            }
            for xi in x.iter_mut() {
                let v = if rng.random::<bool>() { LS_NOISE } else { -LS_NOISE };
                *xi = rho * *xi + LS_ALPHA * v;
            }
        }
    }
    let mut worst = f64::INFINITY;
    let mut bad = 0usize;
    for (k, s) in sums.iter().enumerate() {
        let mean = s / LS_RUNS as f64;
        let bound = linear_system_bound(k as u64, LS_ALPHA, LS_N, LS_D_MIN, LS_GAMMA, x0_norm);
        if mean > bound {
            bad += 1;
        }
        worst = worst.min(bound - mean);
    }
    outcome(
        bad == 0,
        format!(
            "A = {rho}I, n {LS_N}, alpha {LS_ALPHA}, ||v||2 = 1, {LS_RUNS} runs, k <= {LS_K_MAX}: \
             violations {bad}, min bound - E||x_k|| = {worst:.4}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut gen = stream(0, 0, Purpose::MdpGeneration);
    let mdp = random_mdp(3, 2, NOISE_GAMMA, 1.0, &mut gen).unwrap();
    let ctx = assemble_dynamics(&mdp, &SamplingDistribution::uniform(mdp.n_pairs()), 0.1).unwrap();
    let q_max = q_max_bound(1.0, 1.0, NOISE_GAMMA);
    let limit = noise_energy_limit(NOISE_GAMMA);
    let n = ctx.n_sa();
    let mut mean_fail = 0usize;
    let mut worst_z: f64 = 0.0;
    let mut max_energy: f64 = 0.0;
    for pair in 0..NOISE_PAIRS as u64 {
        let mut init = stream(0, pair, Purpose::Init);
        let qa = random_q::<f64, _>(ctx.layout().clone(), -q_max, q_max, &mut init).into_values();
        let qb = random_q::<f64, _>(ctx.layout().clone(), -q_max, q_max, &mut init).into_values();
        let mut sampler = stream(0, pair, Purpose::Sampler);
        let (mut sum, mut sq) = (vec![0.0; n], vec![0.0; n]);
        let mut energy = 0.0;
        for _ in 0..NOISE_SAMPLES {
            let sample = ctx.sample(&mut sampler);
            let wa = ctx.noise(&qa, &qb, &sample);
            let wb = ctx.noise(&qb, &qa, &sample);
            for i in 0..n {
                sum[i] += wa[i];
                sq[i] += wa[i] * wa[i];
                energy += (wa[i] - wb[i]).powi(2);
            }
        }
        let nf = NOISE_SAMPLES as f64;
        for i in 0..n {
            let mean = sum[i] / nf;
            let sigma = ((sq[i] - nf * mean * mean) / (nf - 1.0)).max(0.0).sqrt();
            let tol = NOISE_SIGMAS * sigma / nf.sqrt();
            if mean.abs() > tol {
                mean_fail += 1;
            }
            if sigma > 0.0 {
                worst_z = worst_z.max(mean.abs() / (sigma / nf.sqrt()));
            }
        }
        max_energy = max_energy.max(energy / nf);
    }
    outcome(
        mean_fail == 0 && max_energy <= limit,
        format!(
            "{NOISE_PAIRS} pairs x {NOISE_SAMPLES} samples on a 3x2 MDP: coordinates beyond {NOISE_SIGMAS} SE {mean_fail} \
             (max |z| {worst_z:.2}), max E||wA - wB||^2 {max_energy:.3} vs limit {limit}"
        ),
    )
}

fn random_ctx(seed: u64, uniform: bool) -> DynamicsContext<f64> {
    let mut gen = stream(seed, 0, Purpose::MdpGeneration);
    let ns = gen.random_range(1..=MAX_STATES);
    let na = gen.random_range(1..=MAX_ACTIONS);
    let gamma: f64 = gen.random_range(0.0..0.99);
    let alpha: f64 = gen.random_range(0.01..0.99);
    let mdp = random_mdp(ns, na, gamma, 1.0, &mut gen).unwrap();
    let d = if uniform {
        SamplingDistribution::uniform(mdp.n_pairs())
    } else {
        random_distribution(mdp.n_pairs(), 0.05, &mut gen).unwrap()
    };
    assemble_dynamics(&mdp, &d, alpha).unwrap()
}

fn criterion_9() -> Outcome {
    let (mut neg, mut norm_bad, mut row_bad) = (0usize, 0usize, 0usize);
    let mut worst_row: f64 = 0.0;
    for seed in 0..MATRIX_PAIRS {
        for uniform in [false, true] {
            let ctx = random_ctx(seed, uniform);
            let mut rng = stream(seed, u64::from(uniform), Purpose::Init);
            let q = random_q::<f64, _>(ctx.layout().clone(), -5.0, 5.0, &mut rng);
            let a = ctx.system_matrix(q.values());
            neg += usize::from(a.min_entry() < 0.0);
            norm_bad += usize::from(a.inf_norm() > ctx.rho() + NORM_TOL);
            if uniform {
                for s in a.row_sums() {
                    let gap = (s - ctx.rho()).abs();
                    worst_row = worst_row.max(gap);
                    row_bad += usize::from(gap > ROW_SUM_TOL);
                }
            }
        }
    }
    outcome(
        neg == 0 && norm_bad == 0 && row_bad == 0,
        format!(
            "{} matrices: negative entries {neg}, norm > rho + {NORM_TOL:e}: {norm_bad}, \
             uniform-d rows off rho by > {ROW_SUM_TOL:e}: {row_bad} (max {worst_row:e})",
            2 * MATRIX_PAIRS
        ),
    )
}

fn criterion_10() -> Outcome {
    let limit = q_max_bound(1.0, 1.0, BOX_GAMMA);
    let schedules = [
        Schedule::constant(0.1, 0.1).unwrap(),
        Schedule::constant(0.5, 0.9).unwrap(),
        Schedule::new(Exploration::InverseSqrtStateVisits, StepSize::InverseSaVisits).unwrap(),
    ];
    // bounded rewards only: the bias MDP keeps its mean rewards, no Gaussian noise
    let mut envs = builtin_envs(Some(BOX_GAMMA));
    envs[0] = make_bias_mdp(BOX_GAMMA, 10, -0.1, 0.0).unwrap();
    let mut gen = stream(1, 0, Purpose::MdpGeneration);
    for i in 0..4 {
        let mdp = random_mdp(2 + i, 3, BOX_GAMMA, 1.0, &mut gen).unwrap();
        envs.push(Env::new(format!("random{i}"), mdp, 0).unwrap());
    }
    let mut max_seen: f64 = 0.0;
    let mut bad = Vec::new();
    for env in &envs {
        let (env, _) = env.with_unit_rewards();
        for (j, sched) in schedules.iter().enumerate() {
            for kind in [AgentKind::Q, AgentKind::DoubleQ, AgentKind::Sdq] {
                let mut streams = RunStreams::new(2, j as u64);
                let init = Init::Uniform { lo: -1.0, hi: 1.0 };
                let mut agent =
                    AgentState::initialise(kind, env.mdp().layout().clone(), init, BOX_GAMMA, &mut streams.init)
                        .unwrap();
                let mut rollout = Rollout::new(&env);
                let mut ok = agent.max_abs() <= limit;
                for _ in 0..BOX_STEPS {
                    rollout.step(&mut agent, &env, sched, &mut streams);
                    let m = agent.max_abs();
                    max_seen = max_seen.max(m);
                    ok &= m <= limit;
                }
                if !ok {
                    bad.push(format!("{}/{kind:?}#{j}", env.id()));
                }
            }
        }
    }
    outcome(
        bad.is_empty() && (limit - BOX_LIMIT).abs() <= 1e-9,
        format!(
            "{} envs x 3 schedules x 3 algorithms x {BOX_STEPS} steps: Q_max {limit}, largest |Q| {max_seen:.4}, \
             out of bounds: {}",
            envs.len(),
            if bad.is_empty() { "none".to_string() } else { bad.join(" ") }
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli(args: &[&str]) -> (i32, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["sdq"];
    argv.extend_from_slice(args);
    let code = sdq_harness::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned())
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut diffs = Vec::new();
    let mut files = 0usize;
    for (name, jobs) in [("lockstep.toml", ["1", "4"]), ("bound.toml", ["1", "4"]), ("bias.toml", ["2", "3"])] {
        let cfg = config_path(name);
        let mut snapshots = Vec::new();
        for (i, j) in jobs.iter().enumerate() {
            let out = tmp.path().join(format!("{name}-{i}"));
            let (code, _) = cli(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", j]);
            assert_eq!(code, 0, "train {name}");
            snapshots.push(dir_bytes(&out));
        }
        files += snapshots[0].len();
        if snapshots[0] != snapshots[1] {
            diffs.push(name.to_string());
        }
    }
    let mut verify = Vec::new();
    for (i, j) in ["1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("verify-{i}"));
        let (_, stdout) = cli(&["verify", "--mdps", "5", "--seeds", "3", "--steps", "300", "--out", out.to_str().unwrap(), "--jobs", j]);
        verify.push((stdout, dir_bytes(&out)));
    }
    files += verify[0].1.len();
    if verify[0] != verify[1] {
        diffs.push("verify".into());
    }
    outcome(
        diffs.is_empty(),
        format!(
            "train x3 configs and verify, each twice with different --jobs: {files} files compared, differing: {}",
            if diffs.is_empty() { "none".to_string() } else { diffs.join(" ") }
        ),
    )
}

fn main() {
    let criteria: [Check; 11] = [
        ("orderings suite", criterion_1),
        ("SDQ degeneracy", criterion_2),
        ("bias experiment", criterion_3),
        ("grid overestimation", criterion_4),
        ("finite-time bound dominance", criterion_5),
        ("geometric envelope", criterion_6),
        ("linear system bound", criterion_7),
        ("noise mean and energy", criterion_8),
        ("system matrix", criterion_9),
        ("iterate boundedness", criterion_10),
        ("determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "acceptance {:>2} {:<28} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
