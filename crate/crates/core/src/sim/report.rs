use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::bot::{Bot, BotScript, SlotPolicy};
use super::runtime::{Dropout, Harness, SimClock, SimError, SimRun};
use crate::clock::Clock;
use crate::ids::{PairId, ParticipantId, StrokeId};
use crate::orchestrator::{
    generate_schedule, ConditionSchedule, ExperimentConfig, Relay, RelayOptions, SessionLog,
    SplitMix64,
};
use crate::protocol::{ControlPayload, Envelope, Payload, PenColor, Point, PresencePayload, SlotRef, StrokePayload};
use crate::session::{Condition, Mode, TemplateSet};

/// Added delay of every egress message in a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub count: usize,
    pub hold_ms: f64,
    pub tick_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub p99_ms: f64,
    /// Messages outside `[hold, hold + tick)`.
    pub violations: usize,
    /// Releases to one subscriber out of a sender's sequence order.
    pub fifo_inversions: usize,
}

impl DelayReport {
    pub fn from_log(log: &SessionLog, tick_rate: u32) -> Self {
        let mut delays = Vec::new();
        let mut violations = 0;
        let mut hold_ms = 0.0;
        let mut fifo_inversions = 0;
        let mut last_seq: BTreeMap<(ParticipantId, ParticipantId), u64> = BTreeMap::new();
        for e in log.egress() {
            let (Some(d), Some(h)) = (e.release_delay_ms, e.hold_ms) else {
                continue;
            };
            hold_ms = h;
            delays.push(d);
            if e.conforms(tick_rate) != Some(true) {
                violations += 1;
            }
            let key = (e.subscriber.clone(), e.envelope.sender.clone());
            let prev = last_seq.insert(key, e.envelope.seq);
            if prev.is_some_and(|p| p >= e.envelope.seq) {
                fifo_inversions += 1;
            }
        }
        let count = delays.len();
        let mut sorted = delays.clone();
        sorted.sort_by(f64::total_cmp);
        let p99 = if count == 0 {
            0.0
        } else {
            sorted[(count * 99).div_ceil(100).max(1) - 1]
        };
        Self {
            count,
            hold_ms,
            tick_ms: 1000.0 / f64::from(tick_rate),
            min_ms: sorted.first().copied().unwrap_or(0.0),
            max_ms: sorted.last().copied().unwrap_or(0.0),
            mean_ms: if count == 0 { 0.0 } else { delays.iter().sum::<f64>() / count as f64 },
            p99_ms: p99,
            violations,
            fifo_inversions,
        }
    }

    pub fn conforming(&self) -> bool {
        self.violations == 0 && self.fifo_inversions == 0
    }
}

/// Configuration that schedules exactly one condition.
pub fn single_condition_config(condition: Condition, inherent_ms: u64) -> ExperimentConfig {
    ExperimentConfig {
        latency_levels: vec![condition.latency_ms],
        platforms: vec![condition.platform],
        modes: vec![condition.mode],
        inherent_latency_ms: BTreeMap::from([(condition.platform, inherent_ms)]),
        ..ExperimentConfig::default()
    }
}

pub fn sim_pair_id() -> PairId {
    PairId::new("sim")
}

/// Streams `n` partner-bound messages (alternating stroke points and
/// presence) from one participant at random sub-tick spacings and reports
/// the delays the relay added.
pub fn measure_latency(
    condition: Condition,
    inherent_ms: u64,
    n: usize,
    seed: u64,
) -> Result<DelayReport, SimError> {
    let config = single_condition_config(condition, inherent_ms);
    let tick_rate = config.tick_rate;
    let clock = SimClock::virtual_clock();
    let pair = sim_pair_id();
    let schedule = ConditionSchedule::fixed(pair.clone(), vec![condition]);
    let mut relay = Relay::new(
        schedule,
        config,
        TemplateSet::default_set(),
        clock.clone(),
        RelayOptions::default(),
    )?;
    let (a, b) = (ParticipantId::new("a"), ParticipantId::new("b"));
    let send = |relay: &mut Relay<SimClock>, from: &ParticipantId, seq: u64, payload| {
        let t = clock.now().as_millis() as u64;
        relay.ingest(from, Envelope::new(seq, from.clone(), pair.clone(), t, payload))
    };
    send(&mut relay, &a, 1, Payload::Control(ControlPayload::JoinSession))?;
    send(&mut relay, &b, 1, Payload::Control(ControlPayload::JoinSession))?;

    let stroke_id = StrokeId::new("probe");
    let mut seq = 2;
    send(
        &mut relay,
        &a,
        seq,
        Payload::Stroke(StrokePayload::BeginStroke {
            stroke_id: stroke_id.clone(),
            slot: SlotRef::new(0, 0),
            color: PenColor::Black,
        }),
    )?;

    let mut rng = SplitMix64::new(seed);
    let max_gap = 2 * 1_000_000_000 / u64::from(tick_rate);
    let drain_until = |relay: &mut Relay<SimClock>, t: Duration| {
        while let Some(due) = relay.next_due().filter(|d| *d <= t) {
            clock.wait_until(due);
            relay.tick();
        }
        clock.wait_until(t);
    };
    for i in 0..n {
        let gap = Duration::from_nanos(rng.below(max_gap + 1));
        drain_until(&mut relay, clock.now() + gap);
        let p = rng.unit_f64();
        let payload = if i % 2 == 0 {
            Payload::Stroke(StrokePayload::AppendPoints {
                stroke_id: stroke_id.clone(),
                points: vec![Point::new(p, 1.0 - p)],
            })
        } else {
            Payload::Presence(PresencePayload {
                cursor: Point::new(p, p),
                pen_down: true,
                pose_hint: None,
            })
        };
        seq += 1;
        send(&mut relay, &a, seq, payload)?;
    }
    let horizon = clock.now() + Duration::from_millis(condition.latency_ms) + Duration::from_secs(1);
    drain_until(&mut relay, horizon);
    Ok(DelayReport::from_log(relay.log(), tick_rate))
}

/// Bots for a pair: `a` draws in template order, `b` in reverse, so free
/// collaboration has no slot conflicts.
pub fn default_scripts(stroke_ms: u64) -> [BotScript; 2] {
    [
        BotScript::new("a").with_stroke_ms(stroke_ms),
        BotScript::new("b")
            .with_stroke_ms(stroke_ms)
            .with_policy(SlotPolicy::Reverse),
    ]
}

pub fn run_schedule(
    schedule: ConditionSchedule,
    config: ExperimentConfig,
    templates: TemplateSet,
    scripts: Vec<BotScript>,
    clock: SimClock,
    dropouts: &[Dropout],
) -> Result<SimRun, SimError> {
    let pair = schedule.pair_id.clone();
    let bots = scripts
        .into_iter()
        .map(|s| Bot::new(s, pair.clone(), templates.clone()))
        .collect();
    Harness::new(schedule, config, templates, bots, clock, RelayOptions::default())?
        .with_dropouts(dropouts)?
        .run()
}

/// One condition played by two bots.
pub fn run_condition(
    condition: Condition,
    inherent_ms: u64,
    templates: TemplateSet,
    scripts: [BotScript; 2],
    clock: SimClock,
) -> Result<SimRun, SimError> {
    let config = single_condition_config(condition, inherent_ms);
    let schedule = ConditionSchedule::fixed(sim_pair_id(), vec![condition]);
    run_schedule(schedule, config, templates, scripts.to_vec(), clock, &[])
}

/// A full randomized schedule played by two bots.
pub fn run_experiment(
    config: ExperimentConfig,
    seed: u64,
    templates: TemplateSet,
    scripts: [BotScript; 2],
    clock: SimClock,
) -> Result<SimRun, SimError> {
    let schedule = generate_schedule(sim_pair_id(), &config, seed)?;
    run_schedule(schedule, config, templates, scripts.to_vec(), clock, &[])
}

/// Predicted versus measured time to finish every slot of a condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCheck {
    pub mode: Mode,
    pub slots: usize,
    pub stroke_ms: u64,
    pub target_ms: u64,
    pub inherent_ms: u64,
    pub predicted_ms: f64,
    pub measured_ms: f64,
    /// Allowed excess over the prediction.
    pub tolerance_ms: f64,
    pub within: bool,
}

/// Predicted drawing time and allowed excess for one condition played by
/// the [`default_scripts`] bots.
pub fn predicted_completion(
    mode: Mode,
    slots: usize,
    stroke_ms: u64,
    target_ms: u64,
    inherent_ms: u64,
    tick_rate: u32,
) -> (f64, f64) {
    let n = slots as f64;
    let d = stroke_ms as f64;
    let tick_ms = 1000.0 / f64::from(tick_rate);
    match mode {
        Mode::Sc => (
            n * d + (n - 1.0) * target_ms.saturating_sub(inherent_ms) as f64,
            (n + 1.0) * tick_ms,
        ),
        Mode::Fc => (slots.div_ceil(2) as f64 * d, tick_ms),
    }
}

/// Completion time of one condition with `slots` strokes of `stroke_ms`.
///
/// SC prediction: `N*d + (N-1)*(target - inherent)`, since every handoff
/// waits for the delayed `EndStroke`; each handoff may add up to one tick,
/// so the tolerance is `N+1` ticks. FC prediction with one bot drawing from
/// each end: `ceil(N/2)*d`, independent of latency.
pub fn sc_timing_check(
    mode: Mode,
    slots: usize,
    stroke_ms: u64,
    target_ms: u64,
    inherent_ms: u64,
) -> Result<TimingCheck, SimError> {
    let templates = TemplateSet::with_slot_count(slots)?;
    let condition = Condition::new(crate::session::Platform::Vr, mode, target_ms);
    let run = run_condition(
        condition,
        inherent_ms,
        templates,
        default_scripts(stroke_ms),
        SimClock::virtual_clock(),
    )?;
    let outcome = &run.record.outcomes[0];
    let measured_ms = outcome.drawing_done_ms.unwrap_or(f64::INFINITY) - outcome.started_ms;
    let (predicted_ms, tolerance_ms) = predicted_completion(
        mode,
        slots,
        stroke_ms,
        target_ms,
        inherent_ms,
        ExperimentConfig::default().tick_rate,
    );
    let within = measured_ms >= predicted_ms - 1e-9 && measured_ms <= predicted_ms + tolerance_ms;
    Ok(TimingCheck {
        mode,
        slots,
        stroke_ms,
        target_ms,
        inherent_ms,
        predicted_ms,
        measured_ms,
        tolerance_ms,
        within,
    })
}
