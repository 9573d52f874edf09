//! Per-run metric tables and their CSV form.
//!
//! ```text
//! # schema=sdq-run/1
//! # config_hash=<sha256>
//! # run=3 base_seed=0
//! algorithm,episode,episode_return,left_from_a,max_q_s0,err_a_inf,err_b_inf
//! Q-learning,1,0,1,0.0123,...
//! ```
//!
//! Floats are written in the shortest form that parses back to the same
//! value, so reading a table back reproduces it bit for bit.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{HarnessError, Result};

pub const RUN_SCHEMA: &str = "sdq-run/1";

/// Metrics of one run: `data[label][metric][checkpoint]`, all algorithms
/// sharing the checkpoint positions `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub run: u64,
    pub base_seed: u64,
    pub config_hash: String,
    /// `episode` or `step`.
    pub x_name: String,
    pub x: Vec<u64>,
    pub metrics: Vec<String>,
    pub labels: Vec<String>,
    pub data: Vec<Vec<Vec<f64>>>,
}

impl RunTable {
    pub fn new(run: u64, base_seed: u64, config_hash: &str, x_name: &str, metrics: &[&str]) -> Self {
        Self {
            run,
            base_seed,
            config_hash: config_hash.to_string(),
            x_name: x_name.to_string(),
            x: Vec::new(),
            metrics: metrics.iter().map(|m| m.to_string()).collect(),
            labels: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Appends one algorithm's series. The first call fixes `x`.
    pub fn push_series(&mut self, label: &str, x: Vec<u64>, columns: Vec<Vec<f64>>) -> Result<()> {
        if self.labels.is_empty() {
            self.x = x;
        } else if self.x != x {
            return Err(HarnessError::Schema(format!("checkpoints of `{label}` differ from the first series")));
        }
        if columns.len() != self.metrics.len() || columns.iter().any(|c| c.len() != self.x.len()) {
            return Err(HarnessError::Schema(format!("series `{label}` has the wrong shape")));
        }
        self.labels.push(label.to_string());
        self.data.push(columns);
        Ok(())
    }

    pub fn metric_index(&self, name: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == name)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// One series by label and metric name.
    pub fn series(&self, label: &str, metric: &str) -> Option<&[f64]> {
        Some(&self.data[self.label_index(label)?][self.metric_index(metric)?])
    }

    /// True when `other` has the same labels, metrics and checkpoints.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.x_name == other.x_name && self.x == other.x && self.metrics == other.metrics && self.labels == other.labels
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema={RUN_SCHEMA}").map_err(io)?;
        writeln!(out, "# config_hash={}", self.config_hash).map_err(io)?;
        writeln!(out, "# run={} base_seed={}", self.run, self.base_seed).map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["algorithm".to_string(), self.x_name.clone()];
        header.extend(self.metrics.iter().cloned());
        w.write_record(&header)?;
        for (label, cols) in self.labels.iter().zip(&self.data) {
            for (i, x) in self.x.iter().enumerate() {
                let mut row = vec![label.clone(), x.to_string()];
                row.extend(cols.iter().map(|c| format!("{:?}", c[i])));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut meta = Vec::new();
        let mut body = String::new();
        let mut line = String::new();
        while reader.read_line(&mut line).map_err(io)? > 0 {
            match line.strip_prefix("# ") {
                Some(m) => meta.push(m.trim().to_string()),
                None => body.push_str(&line),
            }
            line.clear();
        }
        let field = |key: &str| -> Result<String> {
            meta.iter()
                .flat_map(|m| m.split(' '))
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| HarnessError::Schema(format!("missing `{key}` in run header")))
        };
        let schema = field("schema")?;
        if schema != RUN_SCHEMA {
            return Err(HarnessError::Schema(format!("expected {RUN_SCHEMA}, found {schema}")));
        }
        let parse_u64 = |key: &str| -> Result<u64> {
            field(key)?
                .parse()
                .map_err(|_| HarnessError::Schema(format!("`{key}` is not an integer")))
        };
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "algorithm" {
            return Err(HarnessError::Schema("run table header must start with `algorithm`".into()));
        }
        let metrics: Vec<&str> = header[2..].iter().map(String::as_str).collect();
        let mut table = Self::new(parse_u64("run")?, parse_u64("base_seed")?, &field("config_hash")?, &header[1], &metrics);
        let mut current: Option<(String, Vec<u64>, Vec<Vec<f64>>)> = None;
        let bad_number = |v: &str| HarnessError::Schema(format!("`{v}` is not a number"));
        for rec in r.records() {
            let rec = rec?;
            let label = &rec[0];
            if current.as_ref().is_none_or(|(l, _, _)| l != label) {
                if let Some((l, x, cols)) = current.take() {
                    table.push_series(&l, x, cols)?;
                }
                current = Some((label.to_string(), Vec::new(), vec![Vec::new(); metrics.len()]));
            }
            let (_, x, cols) = current.as_mut().expect("set above");
            x.push(rec[1].parse().map_err(|_| bad_number(&rec[1]))?);
            for (c, v) in cols.iter_mut().zip(rec.iter().skip(2)) {
                c.push(v.parse().map_err(|_| bad_number(v))?);
            }
        }
        if let Some((l, x, cols)) = current {
            table.push_series(&l, x, cols)?;
        }
        Ok(table)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::read_csv(file)
    }
}

fn io(e: std::io::Error) -> HarnessError {
    HarnessError::Csv(e.into())
}
