//! Experiment harness: configuration, deterministic seeding, the
//! replication runner, CSV output, summaries and presets.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;
pub mod seeding;
pub mod summary;

pub use config::{AgentKind, AgentSpec, ConfigMap, ExperimentConfig, Family, Setting};
pub use runner::{run_experiment, run_replication, ExperimentOutput};
pub use summary::{summarize, Metric, SummaryOptions, SummaryRow};
