//! Ratings CSV: one row per (participant, condition, dimension).
//!
//! Columns: `pair_id, participant_id, platform, mode, latency_ms, dimension,
//! score, t_submitted, status`. Rows of aborted or timed-out conditions keep
//! their condition columns but leave `score` and `t_submitted` empty.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Dimension, RatingRecord, Score};
use crate::session::{Condition, Mode, Platform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Completed,
    Aborted,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRow {
    pub pair_id: String,
    pub participant_id: String,
    pub platform: Platform,
    pub mode: Mode,
    pub latency_ms: u64,
    pub dimension: Dimension,
    pub score: Option<u8>,
    pub t_submitted: Option<u64>,
    pub status: RowStatus,
}

impl RatingRow {
    pub fn from_record(r: &RatingRecord) -> Self {
        Self {
            pair_id: r.pair_id.to_string(),
            participant_id: r.participant_id.to_string(),
            platform: r.condition.platform,
            mode: r.condition.mode,
            latency_ms: r.condition.latency_ms,
            dimension: r.dimension,
            score: Some(r.score.get()),
            t_submitted: Some(r.t_submitted),
            status: RowStatus::Completed,
        }
    }

    pub fn condition(&self) -> Condition {
        Condition::new(self.platform, self.mode, self.latency_ms)
    }

    /// The rating carried by a completed row.
    pub fn to_record(&self) -> Option<Result<RatingRecord, super::RatingError>> {
        if self.status != RowStatus::Completed {
            return None;
        }
        let (score, t) = (self.score?, self.t_submitted.unwrap_or(0));
        Some(Score::new(score).map(|score| RatingRecord {
            pair_id: self.pair_id.as_str().into(),
            participant_id: self.participant_id.as_str().into(),
            condition: self.condition(),
            dimension: self.dimension,
            score,
            t_submitted: t,
        }))
    }
}

pub fn write_ratings_csv<W: Write>(rows: &[RatingRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "pair_id",
            "participant_id",
            "platform",
            "mode",
            "latency_ms",
            "dimension",
            "score",
            "t_submitted",
            "status",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ratings_csv<R: Read>(input: R) -> Result<Vec<RatingRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
