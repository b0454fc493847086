//! Latency-controllable collaborative whiteboard testbed.
//!
//! Two participants draw on a shared board under sequential (SC) or free
//! (FC) collaboration rules while a relay delays every partner-bound event
//! to a target end-to-end latency. Ratings collected after each condition
//! feed the QoE statistics in [`ratings`].
//!
//! Everything here is sans-IO: the relay, injector and bots are driven by a
//! [`clock::Clock`], so the same code runs under wall-clock time in the
//! service and under simulated time in [`sim`].

pub mod clock;
pub mod ids;
pub mod injector;
pub mod orchestrator;
pub mod protocol;
pub mod ratings;
pub mod session;
pub mod sim;

pub use ids::{PairId, ParticipantId, SessionId, StrokeId};
