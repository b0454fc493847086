use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::log::SessionLog;
use super::relay::RunRecord;
use crate::ratings::{write_ratings_csv, Dimension, RatingRow, RowStatus};

pub const RATINGS_FILE: &str = "ratings.csv";
pub const LOG_FILE: &str = "session_log.jsonl";
pub const RUN_FILE: &str = "run.json";

/// Ratings rows in schedule order. Conditions that did not complete get
/// one empty row per participant and dimension, flagged with their status.
pub fn rating_rows(run: &RunRecord) -> Vec<RatingRow> {
    let mut participants = run.participants.clone();
    participants.sort();
    let mut rows = Vec::new();
    for outcome in &run.outcomes {
        if outcome.status == RowStatus::Completed {
            rows.extend(outcome.ratings.iter().map(RatingRow::from_record));
            continue;
        }
        for p in &participants {
            for dimension in Dimension::ALL {
                rows.push(RatingRow {
                    pair_id: run.pair_id.to_string(),
                    participant_id: p.to_string(),
                    platform: outcome.condition.platform,
                    mode: outcome.condition.mode,
                    latency_ms: outcome.condition.latency_ms,
                    dimension,
                    score: None,
                    t_submitted: None,
                    status: outcome.status,
                });
            }
        }
    }
    rows
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("export: {0}")]
    Io(#[from] std::io::Error),
    #[error("export: {0}")]
    Csv(#[from] csv::Error),
    #[error("export: {0}")]
    Json(#[from] serde_json::Error),
}

/// Writes `ratings.csv`, `session_log.jsonl` and `run.json` into `dir`.
/// Re-exporting the same run produces identical files.
pub fn export_run(run: &RunRecord, log: &SessionLog, dir: &Path) -> Result<(), ExportError> {
    std::fs::create_dir_all(dir)?;
    write_ratings_csv(&rating_rows(run), BufWriter::new(File::create(dir.join(RATINGS_FILE))?))?;
    log.write_jsonl(BufWriter::new(File::create(dir.join(LOG_FILE))?))?;
    let mut run_file = BufWriter::new(File::create(dir.join(RUN_FILE))?);
    serde_json::to_writer_pretty(&mut run_file, run)?;
    run_file.write_all(b"\n")?;
    run_file.flush()?;
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<(RunRecord, SessionLog), ExportError> {
    let run = serde_json::from_reader(std::io::BufReader::new(File::open(dir.join(RUN_FILE))?))?;
    let log = SessionLog::read_jsonl(std::io::BufReader::new(File::open(dir.join(LOG_FILE))?))?;
    Ok((run, log))
}
