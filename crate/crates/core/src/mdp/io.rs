//! Plain-text MDP files.
//!
//! ```toml
//! schema = "sdq-mdp"
//! version = 1
//! n_states = 3
//! n_actions = 2
//! gamma = 0.9
//! terminals = [2]
//! # optional prefix counts of legal actions per state
//! available_actions = [2, 2, 2]
//! # [state, action, next_state, probability, reward]
//! transitions = [
//!   [0, 0, 1, 1.0, 0.0],
//! ]
//! ```
//!
//! Rows of terminal states may be omitted; they are filled with absorbing
//! zero-reward self-loops on load.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mdp::{MdpBuilder, TabularMdp};
use crate::Scalar;

pub const MDP_SCHEMA: &str = "sdq-mdp";
pub const MDP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    schema: String,
    version: u32,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    #[serde(default)]
    terminals: Vec<usize>,
    #[serde(default)]
    available_actions: Option<Vec<usize>>,
    transitions: Vec<(usize, usize, usize, f64, f64)>,
}

pub fn from_toml_str<T: Scalar>(text: &str) -> Result<TabularMdp<T>> {
    let file: MdpFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.schema != MDP_SCHEMA {
        return Err(Error::Parse(format!("schema `{}` is not `{MDP_SCHEMA}`", file.schema)));
    }
    if file.version != MDP_SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported version {} (expected {MDP_SCHEMA_VERSION})",
            file.version
        )));
    }
    let mut b = MdpBuilder::new(file.n_states, file.n_actions, T::of(file.gamma));
    if let Some(av) = file.available_actions {
        b = b.available_actions(av);
    }
    for s in file.terminals {
        b = b.terminal(s);
    }
    for (s, a, s2, p, r) in file.transitions {
        b.add(s, a, s2, T::of(p), T::of(r));
    }
    b.build()
}

pub fn to_toml_string<T: Scalar>(mdp: &TabularMdp<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema = \"{MDP_SCHEMA}\"");
    let _ = writeln!(out, "version = {MDP_SCHEMA_VERSION}");
    let _ = writeln!(out, "n_states = {}", mdp.n_states());
    let _ = writeln!(out, "n_actions = {}", mdp.n_actions());
    let _ = writeln!(out, "gamma = {:?}", mdp.gamma().as_f64());
    let terminals: Vec<String> = mdp.terminals().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "terminals = [{}]", terminals.join(", "));
    let layout = mdp.layout();
    if layout.is_restricted() {
        let av: Vec<String> = (0..mdp.n_states())
            .map(|s| layout.available_at(s).to_string())
            .collect();
        let _ = writeln!(out, "available_actions = [{}]", av.join(", "));
    }
    out.push_str("# [state, action, next_state, probability, reward]\ntransitions = [\n");
    for (s, a, s2, p, r) in mdp.entries().filter(|&(s, ..)| !mdp.is_terminal(s)) {
        let _ = writeln!(out, "  [{s}, {a}, {s2}, {:?}, {:?}],", p.as_f64(), r.as_f64());
    }
    out.push_str("]\n");
    out
}

pub fn read_mdp_file<T: Scalar>(path: impl AsRef<Path>) -> Result<TabularMdp<T>> {
    from_toml_str(&std::fs::read_to_string(path)?)
}

pub fn write_mdp_file<T: Scalar>(mdp: &TabularMdp<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_toml_string(mdp))?;
    Ok(())
}
