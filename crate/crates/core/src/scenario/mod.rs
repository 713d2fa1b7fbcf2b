//! Scenario layer: JSON config, validation, network assembly, runs,
//! replications and file export.

mod build;
mod builtin;
mod config;
mod export;
mod run;
mod validate;

use thiserror::Error;

pub use build::{build_network, BuiltNetwork};
pub use builtin::{builtin, builtin_names, BUILTIN};
pub use config::{
    apply_override, load_config, parse_override, CalibrationSettings, ConnectionSpec, EveSettings, ModuleSpec,
    ProtocolSettings, QberSettings, RunSettings, ScenarioConfig,
};
pub use export::{write_aggregate, write_outputs, RECORDS_HEADER};
pub use run::{
    aggregate, replication_seed, run_replications, run_to_dir, simulate, Aggregate, ClickRow, MetricStats,
    QberWindow, RunOutcome, SlotRecord, StatRecorder, Summary,
};
pub use validate::{kind_info, validate, ConfigIssue, GateDirection, GateSpec, KindInfo, Plan, KINDS};

use crate::kernel::SimError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("bad override `{key}`: {message}")]
    Override { key: String, message: String },
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write `{path}`: {source}")]
    Output { path: String, source: std::io::Error },
    #[error("{0}")]
    Analysis(String),
}

impl ScenarioError {
    /// Whether the config itself is at fault, as opposed to the run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ScenarioError::Io { .. } | ScenarioError::Parse(_) | ScenarioError::Override { .. } | ScenarioError::Invalid(_)
        )
    }
}
