//! Mean ± standard error across runs, one CSV per metric.
//!
//! ```text
//! # schema=sdq-aggregate/1
//! # metric=left_from_a runs=200 window=none config_hash=<sha256>
//! episode,Q-learning,Q-learning_se,SDQ,SDQ_se
//! 1,0.52,0.035,0.49,0.035
//! ```
//!
//! Series appear in algorithm order, which is also the legend order of the
//! plots.

use std::io::Write;
use std::path::{Path, PathBuf};

use sdq_core::bounds::empirical_error_curve;

use crate::error::{HarnessError, Result};
use crate::table::RunTable;

pub const AGGREGATE_SCHEMA: &str = "sdq-aggregate/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub config_hash: String,
    pub runs: usize,
    pub window: Option<usize>,
    pub x_name: String,
    pub x: Vec<u64>,
    pub metrics: Vec<String>,
    pub labels: Vec<String>,
    /// `mean[metric][label][checkpoint]`, same layout for `se`.
    pub mean: Vec<Vec<Vec<f64>>>,
    pub se: Vec<Vec<Vec<f64>>>,
}

impl Summary {
    pub fn mean_of(&self, metric: &str, label: &str) -> Option<&[f64]> {
        let m = self.metrics.iter().position(|x| x == metric)?;
        let l = self.labels.iter().position(|x| x == label)?;
        Some(&self.mean[m][l])
    }

    pub fn se_of(&self, metric: &str, label: &str) -> Option<&[f64]> {
        let m = self.metrics.iter().position(|x| x == metric)?;
        let l = self.labels.iter().position(|x| x == label)?;
        Some(&self.se[m][l])
    }

    pub fn write_metric_csv<W: Write>(&self, metric: usize, mut out: W) -> Result<()> {
        let window = self.window.map_or_else(|| "none".to_string(), |w| w.to_string());
        let e = |e: std::io::Error| HarnessError::Csv(e.into());
        writeln!(out, "# schema={AGGREGATE_SCHEMA}").map_err(e)?;
        writeln!(
            out,
            "# metric={} runs={} window={window} config_hash={}",
            self.metrics[metric], self.runs, self.config_hash
        )
        .map_err(e)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.x_name.clone()];
        for l in &self.labels {
            header.push(l.clone());
            header.push(format!("{l}_se"));
        }
        w.write_record(&header)?;
        for (i, x) in self.x.iter().enumerate() {
            let mut row = vec![x.to_string()];
            for l in 0..self.labels.len() {
                row.push(format!("{:?}", self.mean[metric][l][i]));
                row.push(format!("{:?}", self.se[metric][l][i]));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(e)?;
        Ok(())
    }

    /// Writes `aggregate_<metric>.csv` for every metric; returns the paths.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for (m, name) in self.metrics.iter().enumerate() {
            let path = dir.join(format!("aggregate_{name}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            self.write_metric_csv(m, std::io::BufWriter::new(file))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Trailing moving average; the first `window − 1` points average over what
/// is available. Averages are taken as offsets from the window's first value
/// so a constant stretch stays exactly constant.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let base = xs[lo];
            let n = (i + 1 - lo) as f64;
            base + xs[lo..=i].iter().map(|&x| x - base).sum::<f64>() / n
        })
        .collect()
}

/// Per-checkpoint mean and SE over runs, after optional per-run smoothing.
pub fn aggregate(runs: &[RunTable], window: Option<usize>) -> Result<Summary> {
    let first = runs.first().ok_or(HarnessError::Empty("aggregate"))?;
    if let Some(bad) = runs.iter().find(|r| !r.same_shape(first)) {
        return Err(HarnessError::Schema(format!(
            "run {} does not match the layout of run {}",
            bad.run, first.run
        )));
    }
    if let Some(bad) = runs.iter().find(|r| r.config_hash != first.config_hash) {
        return Err(HarnessError::Schema(format!("run {} comes from a different config", bad.run)));
    }
    let smooth = |v: &[f64]| match window {
        Some(w) => moving_average(v, w),
        None => v.to_vec(),
    };
    let mut mean = Vec::with_capacity(first.metrics.len());
    let mut se = Vec::with_capacity(first.metrics.len());
    for m in 0..first.metrics.len() {
        let (mut mm, mut ss) = (Vec::new(), Vec::new());
        for l in 0..first.labels.len() {
            let series: Vec<Vec<f64>> = runs.iter().map(|r| smooth(&r.data[l][m])).collect();
            if first.x.is_empty() {
                mm.push(Vec::new());
                ss.push(Vec::new());
                continue;
            }
            let curve = empirical_error_curve(&series)?;
            mm.push(curve.mean);
            ss.push(curve.se);
        }
        mean.push(mm);
        se.push(ss);
    }
    Ok(Summary {
        config_hash: first.config_hash.clone(),
        runs: runs.len(),
        window,
        x_name: first.x_name.clone(),
        x: first.x.clone(),
        metrics: first.metrics.clone(),
        labels: first.labels.clone(),
        mean,
        se,
    })
}
