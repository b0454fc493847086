//! Front end for the testbed: the WebSocket relay service, network bots,
//! and the offline schedule, export, analysis and simulation commands.

pub mod analyze;
pub mod netbot;
pub mod server;
pub mod simulate;
