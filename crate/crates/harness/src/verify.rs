//! Lockstep orderings suite over random MDPs.
//!
//! MDP `i` (size, γ, α, d and rewards in [−1, 1]) comes from the generation
//! stream keyed by `(base_seed, i)`; seed `j` of that MDP draws its common
//! initial table and its samples from two custom streams of the same key.

use rayon::prelude::*;
use rand::Rng;

use sdq_core::mdp::{random_distribution, random_mdp, random_q};
use sdq_core::rng::{stream, Purpose};
use sdq_core::switching::{
    assemble_dynamics, lockstep_simulate, subtraction_recursions, verify_sandwich, LockstepInit, Relation,
    SANDWICH_TOL,
};

use crate::error::{HarnessError, Result};
use crate::experiment::{RunVerification, VERIFY_SCHEMA};

pub const MAX_STATES: usize = 6;
pub const MAX_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteSpec {
    pub mdps: usize,
    pub seeds: usize,
    pub steps: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub mdp: usize,
    pub seed: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub result: RunVerification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub spec: SuiteSpec,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.result.violations).sum()
    }

    /// Smallest slack of one ordering across the whole suite.
    pub fn min_slack(&self, rel: Relation) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.result.min_slack.iter())
            .filter(|(r, _)| *r == rel)
            .map(|&(_, s)| s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_identity_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.result.max_identity_gap).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let e = |e: std::io::Error| HarnessError::Csv(e.into());
        writeln!(out, "# schema={VERIFY_SCHEMA}").map_err(e)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["mdp", "seed", "n_states", "n_actions", "gamma", "alpha", "violations"]
            .map(String::from)
            .to_vec();
        header.extend(Relation::ALL[..7].iter().map(|r| format!("min_slack[{}]", r.name())));
        header.push("max_identity_gap".into());
        header.push("subtraction_gap".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![
                r.mdp.to_string(),
                r.seed.to_string(),
                r.n_states.to_string(),
                r.n_actions.to_string(),
                r.gamma.to_string(),
                r.alpha.to_string(),
                r.result.violations.to_string(),
            ];
            row.extend(r.result.min_slack.iter().map(|(_, s)| format!("{s:e}")));
            row.push(format!("{:e}", r.result.max_identity_gap));
            row.push(format!("{:e}", r.result.subtraction_gap));
            w.write_record(&row)?;
        }
        w.flush().map_err(e)?;
        Ok(())
    }
}

fn one_mdp(spec: &SuiteSpec, i: usize) -> Result<Vec<SuiteRow>> {
    let mut gen = stream(spec.base_seed, i as u64, Purpose::MdpGeneration);
    let n_states = gen.random_range(1..=MAX_STATES);
    let n_actions = gen.random_range(1..=MAX_ACTIONS);
    let gamma: f64 = gen.random_range(0.0..0.95);
    let alpha: f64 = gen.random_range(0.01..0.9);
    let mdp = random_mdp(n_states, n_actions, gamma, 1.0, &mut gen)?;
    let d = random_distribution(mdp.n_pairs(), 0.1, &mut gen)?;
    let ctx = assemble_dynamics(&mdp, &d, alpha)?;
    (0..spec.seeds)
        .map(|j| {
            let tag = 2 * j as u64;
            let mut init = stream(spec.base_seed, i as u64, Purpose::Custom(tag));
            let mut sampler = stream(spec.base_seed, i as u64, Purpose::Custom(tag + 1));
            let q0 = random_q::<f64, _>(mdp.layout().clone(), -1.0, 1.0, &mut init).into_values();
            let trace = lockstep_simulate(
                &ctx,
                &LockstepInit {
                    qa0: q0.clone(),
                    qb0: q0,
                },
                spec.steps,
                &mut sampler,
            )?;
            let report = verify_sandwich(&trace, SANDWICH_TOL);
            Ok(SuiteRow {
                mdp: i,
                seed: j,
                n_states,
                n_actions,
                gamma,
                alpha,
                result: RunVerification {
                    run: (i * spec.seeds + j) as u64,
                    violations: report.violation_count,
                    min_slack: report.min_slack,
                    max_identity_gap: report.max_identity_gap,
                    subtraction_gap: subtraction_recursions(&trace, &ctx).worst(),
                },
            })
        })
        .collect()
}

pub fn verify_suite(spec: SuiteSpec, jobs: Option<usize>) -> Result<SuiteReport> {
    if spec.mdps == 0 || spec.seeds == 0 {
        return Err(HarnessError::Empty("verify"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let per_mdp: Vec<Result<Vec<SuiteRow>>> =
        pool.install(|| (0..spec.mdps).into_par_iter().map(|i| one_mdp(&spec, i)).collect());
    let mut rows = Vec::with_capacity(spec.mdps * spec.seeds);
    for r in per_mdp {
        rows.extend(r?);
    }
    Ok(SuiteReport { spec, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_is_clean_and_reproducible() {
        let spec = SuiteSpec {
            mdps: 4,
            seeds: 2,
            steps: 200,
            base_seed: 5,
        };
        let a = verify_suite(spec, Some(1)).unwrap();
        let b = verify_suite(spec, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 8);
        assert_eq!(a.violations(), 0);
        assert!(a.rows.iter().all(|r| r.n_states <= MAX_STATES && r.n_actions <= MAX_ACTIONS));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2 + 8);
    }

    #[test]
    fn empty_suite_is_an_error() {
        let spec = SuiteSpec {
            mdps: 0,
            seeds: 1,
            steps: 1,
            base_seed: 0,
        };
        assert!(verify_suite(spec, None).is_err());
    }
}
