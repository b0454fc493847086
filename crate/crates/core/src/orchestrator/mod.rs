//! Experiment orchestration: configuration, condition schedules, the
//! per-pair relay and run export.

mod config;
mod export;
mod log;
mod relay;
mod schedule;

pub use config::{ConfigError, ExperimentConfig};
pub use export::{export_run, load_run, rating_rows, ExportError, LOG_FILE, RATINGS_FILE, RUN_FILE};
pub use log::{write_entries, Direction, SessionLog, SessionLogEntry};
pub use relay::{
    ConditionOutcome, Outbound, Phase, Relay, RelayError, RelayOptions, RouteError, RunRecord,
    RATINGS_PER_CONDITION, RELAY_SENDER,
};
pub use schedule::{generate_schedule, pair_seed, ConditionSchedule, SplitMix64};
