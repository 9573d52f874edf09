//! The `sdq` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use sdq_core::mdp::{optimal_q, read_mdp_file};
use sdq_core::switching::Relation;

use crate::aggregate::aggregate;
use crate::config::{ExperimentConfig, Mode};
use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, RunOptions};
use crate::plot::{render_plot, PlotSpec};
use crate::table::RunTable;
use crate::verify::{verify_suite, SuiteSpec};

#[derive(Debug, Parser)]
#[command(name = "sdq", version, about = "Q-learning / double Q-learning / SDQ experiments and checks")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Base seed (overrides the config's `base_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print Q* of an MDP file.
    Solve { mdp_file: PathBuf },
    /// Run an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Lockstep orderings suite over random MDPs.
    Verify {
        #[arg(long, default_value_t = 50)]
        mdps: usize,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
    },
    /// Empirical SDQ error against the finite-time bound.
    Bound {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-aggregate the runs of an output directory and plot them.
    Report { dir: PathBuf },
}

/// Runs the CLI on `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            // --help and --version exit 0 and belong on stdout
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let w = |e: std::io::Error| HarnessError::io(Path::new("<stdout>"), e);
    match &cli.command {
        Command::Solve { mdp_file } => {
            let mdp = read_mdp_file::<f64>(mdp_file)?;
            let q = optimal_q(&mdp)?;
            for s in 0..mdp.n_states() {
                for a in mdp.layout().actions(s) {
                    writeln!(out, "Q*({s},{a}) = {}", tidy(q.get(s, a))).map_err(w)?;
                }
            }
            Ok(0)
        }
        Command::Train { config } => {
            let cfg = load(cli, config)?;
            let result = run_experiment(&cfg, RunOptions { jobs: cli.jobs })?;
            let dir = result.out_dir.as_deref().unwrap_or(Path::new("."));
            writeln!(
                out,
                "{}: {} runs written to {} (config_hash={})",
                cfg.id,
                cfg.runs,
                dir.display(),
                result.config_hash
            )
            .map_err(w)?;
            if cfg.mode == Mode::LockstepVerify {
                let v = result.total_violations();
                writeln!(out, "violations: {v}").map_err(w)?;
                return Ok(if v == 0 { 0 } else { 1 });
            }
            if let Some(b) = &result.bound {
                writeln!(out, "bound dominated: {} (min margin {:e})", b.dominated(), b.min_margin).map_err(w)?;
            }
            Ok(0)
        }
        Command::Verify { mdps, seeds, steps } => {
            let spec = SuiteSpec {
                mdps: *mdps,
                seeds: *seeds,
                steps: *steps,
                base_seed: cli.seed.unwrap_or(0),
            };
            let report = verify_suite(spec, cli.jobs)?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
                let path = dir.join("verify.csv");
                let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                report.write_csv(std::io::BufWriter::new(file))?;
            }
            writeln!(
                out,
                "verify: {mdps} mdps x {seeds} seeds x {steps} steps, base seed {}",
                spec.base_seed
            )
            .map_err(w)?;
            for rel in &Relation::ALL[..7] {
                writeln!(out, "  min slack {:<16} {:e}", rel.name(), report.min_slack(*rel)).map_err(w)?;
            }
            writeln!(out, "  max |err - (qa - qb)|   {:e}", report.max_identity_gap()).map_err(w)?;
            let v = report.violations();
            writeln!(out, "violations: {v}").map_err(w)?;
            Ok(if v == 0 { 0 } else { 1 })
        }
        Command::Bound { config } => {
            let cfg = load(cli, config)?;
            if cfg.mode != Mode::BoundCheck {
                return Err(HarnessError::Config(format!(
                    "`bound` needs mode = \"bound_check\", found {:?}",
                    cfg.mode
                )));
            }
            let result = run_experiment(&cfg, RunOptions { jobs: cli.jobs })?;
            let b = result.bound.as_ref().expect("bound mode");
            let dir = result.out_dir.as_deref().unwrap_or(Path::new("."));
            writeln!(out, "bound curves written to {}", dir.display()).map_err(w)?;
            writeln!(out, "bound dominated: {} (min margin {:e})", b.dominated(), b.min_margin).map_err(w)?;
            Ok(0)
        }
        Command::Report { dir } => {
            let written = report(dir, cli.out.as_deref())?;
            for p in written {
                writeln!(out, "{}", p.display()).map_err(w)?;
            }
            Ok(0)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("out").join(&cfg.id));
    }
    Ok(cfg)
}

/// Re-aggregates `dir/runs/run_*.csv` (smoothing from `dir/config.toml`
/// when present) and writes aggregate CSVs and one SVG per metric to `out`
/// (default `dir`).
pub fn report(dir: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let runs_dir = dir.join("runs");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&runs_dir)
        .map_err(|e| HarnessError::io(&runs_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    let runs = files.iter().map(|p| RunTable::read_file(p)).collect::<Result<Vec<_>>>()?;
    let cfg_path = dir.join("config.toml");
    let (id, window) = if cfg_path.exists() {
        let cfg = ExperimentConfig::load(&cfg_path)?;
        (cfg.id, cfg.smoothing_window)
    } else {
        (dir.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()), None)
    };
    let summary = aggregate(&runs, window)?;
    let out = out.unwrap_or(dir);
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut written = summary.write_all(out)?;
    for (m, name) in summary.metrics.iter().enumerate() {
        let mut buf = Vec::new();
        summary.write_metric_csv(m, &mut buf)?;
        let text = String::from_utf8(buf).expect("csv output is utf-8");
        let svg = render_plot(&text, &PlotSpec::titled(&format!("{id}: {name}"), name))?;
        let path = out.join(format!("plot_{name}.svg"));
        std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Rounds to 10 decimals and drops trailing zeros.
fn tidy(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}
