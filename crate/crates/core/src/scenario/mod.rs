//! Scenario configuration, CSV plumbing and the batch pipelines.

pub mod check;
pub mod config;
pub mod run;
pub mod trace;

pub use check::{run_checks, CheckOutcome};
pub use config::{
    IdentifierConfig, ObserverConfig, ParamSpec, Scenario, ScenarioConfig, SignalSpec,
    SCHEMA_VERSION,
};
pub use run::{run, Mode, RunLog, RunRecord, RunSummary, Simulation};
pub use trace::{export, import_trace, TraceColumns};
