//! Experiment configuration, seeded multi-run execution, CSV persistence,
//! aggregation, SVG plots and the `sdq` command line on top of `sdq-core`.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod table;
pub mod verify;

pub use aggregate::{aggregate, moving_average, Summary};
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RunOptions, RunResult};
pub use plot::{render_plot, PlotSpec};
pub use table::RunTable;
