//! Scripted bots and a discrete-event runtime for the relay.
//!
//! Under [`SimClock::Virtual`] time jumps from event to event, so a full
//! 42-condition run takes seconds; [`SimClock::Real`] drives the same loop
//! against the wall clock.

mod bot;
mod report;
mod runtime;

pub use bot::{point_along, Bot, BotScript, RatingPolicy, SlotPolicy, APPEND_INTERVAL};
pub use report::{
    default_scripts, measure_latency, predicted_completion, run_condition, run_experiment, run_schedule, sc_timing_check,
    sim_pair_id, single_condition_config, DelayReport, TimingCheck,
};
pub use runtime::{Dropout, Harness, SimClock, SimError, SimRun, STALL_LIMIT};
