//! `lagboard simulate`: bots against an in-process relay.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lagboard_core::clock::as_millis_f64;
use lagboard_core::orchestrator::{export_run, ExperimentConfig, LOG_FILE, RATINGS_FILE};
use lagboard_core::ratings::RowStatus;
use lagboard_core::session::{Condition, Mode, Platform, TemplateSet};
use lagboard_core::sim::{
    default_scripts, predicted_completion, run_condition, run_experiment, sim_pair_id, BotScript, DelayReport,
    RatingPolicy, SimClock, SimRun,
};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub mode: Mode,
    pub platform: Platform,
    pub latency_ms: u64,
    pub inherent_ms: u64,
    pub slots: Option<usize>,
    pub stroke_ms: u64,
    pub seed: u64,
    pub virtual_clock: bool,
    /// Directory for the exported run.
    pub out_dir: PathBuf,
    /// Play a whole randomized schedule from this config instead of one
    /// condition.
    pub full: Option<ExperimentConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub status: RowStatus,
    pub drawing_ms: Option<f64>,
    /// Closed-form drawing time for the default bots; single-condition runs
    /// only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance_ms: Option<f64>,
    pub accepted_actions: u64,
    pub rejected_actions: u64,
    pub ratings: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub pair_id: String,
    pub virtual_clock: bool,
    pub slots: usize,
    pub stroke_ms: u64,
    pub inherent_ms: u64,
    pub delay: DelayReport,
    pub conditions: Vec<ConditionSummary>,
    pub sim_duration_ms: f64,
    pub wall_ms: f64,
    pub run_dir: PathBuf,
    pub log_path: PathBuf,
    pub ratings_path: PathBuf,
}

fn scripts(opts: &SimulateOptions) -> [BotScript; 2] {
    let mut s = default_scripts(opts.stroke_ms);
    s[0].rating_policy = RatingPolicy::Random(opts.seed);
    s[1].rating_policy = RatingPolicy::Random(opts.seed.wrapping_add(1));
    s
}

pub fn simulate(opts: &SimulateOptions) -> Result<SimulateReport> {
    let templates = match opts.slots {
        Some(n) => TemplateSet::with_slot_count(n)?,
        None => TemplateSet::default_set(),
    };
    let slots = templates.slot_count();
    let clock = if opts.virtual_clock {
        SimClock::virtual_clock()
    } else {
        SimClock::real()
    };
    let (run, tick_rate, single): (SimRun, u32, bool) = match &opts.full {
        Some(cfg) => (
            run_experiment(cfg.clone(), opts.seed, templates, scripts(opts), clock)?,
            cfg.tick_rate,
            false,
        ),
        None => {
            let condition = Condition::new(opts.platform, opts.mode, opts.latency_ms);
            let run = run_condition(condition, opts.inherent_ms, templates, scripts(opts), clock)?;
            (run, ExperimentConfig::default().tick_rate, true)
        }
    };
    export_run(&run.record, &run.log, &opts.out_dir)
        .with_context(|| format!("exporting to {}", opts.out_dir.display()))?;

    let conditions = run
        .record
        .outcomes
        .iter()
        .map(|o| {
            let predicted = single.then(|| {
                predicted_completion(o.condition.mode, slots, opts.stroke_ms, o.condition.latency_ms, opts.inherent_ms, tick_rate)
            });
            ConditionSummary {
                condition: o.condition,
                status: o.status,
                drawing_ms: o.drawing_done_ms.map(|d| d - o.started_ms),
                predicted_ms: predicted.map(|p| p.0),
                tolerance_ms: predicted.map(|p| p.1),
                accepted_actions: o.accepted_actions,
                rejected_actions: o.rejected_actions,
                ratings: o.ratings.len(),
            }
        })
        .collect();

    Ok(SimulateReport {
        pair_id: sim_pair_id().to_string(),
        virtual_clock: opts.virtual_clock,
        slots,
        stroke_ms: opts.stroke_ms,
        inherent_ms: opts.inherent_ms,
        delay: DelayReport::from_log(&run.log, tick_rate),
        conditions,
        sim_duration_ms: as_millis_f64(run.sim_duration),
        wall_ms: as_millis_f64(run.wall),
        run_dir: opts.out_dir.clone(),
        log_path: opts.out_dir.join(LOG_FILE),
        ratings_path: opts.out_dir.join(RATINGS_FILE),
    })
}

pub fn write_report(report: &SimulateReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(f, report)?;
    Ok(())
}
