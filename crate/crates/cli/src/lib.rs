//! Configuration, pipelines and reporting behind the `lorentz-lab` binary.

pub mod config;
pub mod oracle;
pub mod pipeline;
pub mod record;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, Mode};
pub use pipeline::{run, Overrides};
pub use record::RunRecord;
pub use report::ReportError;
