use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ids::ParticipantId;
use crate::protocol::{Envelope, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Received from `subscriber`.
    Ingress,
    /// Released to `subscriber` by its injector queue.
    Egress,
    /// Sent to `subscriber` without injected delay (relay replies).
    Direct,
}

/// One routed envelope. Times are milliseconds since the relay started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub wall_time_ms: f64,
    pub direction: Direction,
    pub subscriber: ParticipantId,
    pub envelope: Envelope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    /// Egress only: time spent in the wait queue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_delay_ms: Option<f64>,
    /// Egress only: `target - inherent` in force when the envelope was queued.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_ms: Option<f64>,
}

impl SessionLogEntry {
    /// Whether an egress entry left within `[hold, hold + 1/tick_rate)`.
    /// `None` for other directions.
    pub fn conforms(&self, tick_rate: u32) -> Option<bool> {
        let (delay, hold) = (self.release_delay_ms?, self.hold_ms?);
        Some(delay >= hold && delay < hold + 1000.0 / f64::from(tick_rate))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    entries: Vec<SessionLogEntry>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: SessionLogEntry) -> usize {
        debug_assert!(self
            .entries
            .last()
            .is_none_or(|e| e.wall_time_ms <= entry.wall_time_ms));
        self.entries.push(entry);
        self.entries.len() - 1
    }

    pub(crate) fn set_verdict(&mut self, index: usize, verdict: Verdict) {
        self.entries[index].verdict = Some(verdict);
    }

    pub(crate) fn set_timing(&mut self, index: usize, delay_ms: f64, hold_ms: f64) {
        let e = &mut self.entries[index];
        e.release_delay_ms = Some(delay_ms);
        e.hold_ms = Some(hold_ms);
    }

    pub fn entries(&self) -> &[SessionLogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn egress(&self) -> impl Iterator<Item = &SessionLogEntry> {
        self.entries.iter().filter(|e| e.direction == Direction::Egress)
    }

    /// Entries past `from`, for incremental flushing.
    pub fn since(&self, from: usize) -> &[SessionLogEntry] {
        &self.entries[from.min(self.entries.len())..]
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_entries(&self.entries, out)
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> std::io::Result<Self> {
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
        Ok(Self { entries })
    }
}

pub fn write_entries<W: Write>(entries: &[SessionLogEntry], mut out: W) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
