//! Scripted participants.
//!
//! A bot is a sans-IO client: feed it relay messages with
//! [`Bot::on_message`], wake it at [`Bot::next_wakeup`] with
//! [`Bot::on_timer`], and send whatever envelopes it returns.

use std::collections::BTreeMap;
use std::time::Duration;

use crate::clock::duration_to_nanos;
use crate::ids::{PairId, ParticipantId, StrokeId};
use crate::orchestrator::SplitMix64;
use crate::protocol::{
    ControlPayload, Envelope, Payload, PenColor, Point, PresencePayload, RejectReason, SlotRef,
    StrokePayload, Verdict,
};
use crate::ratings::{Dimension, RatingRecord, Score};
use crate::session::{Condition, Mode, TemplateSet};

/// Minimum spacing of `AppendPoints` messages (one 60 Hz frame, rounded up).
pub const APPEND_INTERVAL: Duration = Duration::from_nanos(16_666_667);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotPolicy {
    /// Lowest free slot in template order.
    InOrder,
    /// Highest free slot first.
    Reverse,
    /// Uniformly among locally free slots.
    Random(u64),
    /// In template order, including slots the partner is known to hold.
    AdversarialSameSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatingPolicy {
    Fixed(u8),
    Random(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BotScript {
    pub participant_id: ParticipantId,
    pub stroke_duration: Duration,
    pub points_per_tick: usize,
    pub slot_policy: SlotPolicy,
    pub rating_policy: RatingPolicy,
    /// Cursor updates while a condition runs.
    pub presence_interval: Option<Duration>,
    /// Pause between the end of drawing and the rating submission.
    pub rating_delay: Duration,
    pub color: PenColor,
}

impl BotScript {
    pub fn new(participant_id: impl Into<ParticipantId>) -> Self {
        Self {
            participant_id: participant_id.into(),
            stroke_duration: Duration::from_millis(500),
            points_per_tick: 2,
            slot_policy: SlotPolicy::InOrder,
            rating_policy: RatingPolicy::Fixed(3),
            presence_interval: None,
            rating_delay: Duration::ZERO,
            color: PenColor::Black,
        }
    }

    pub fn with_policy(mut self, policy: SlotPolicy) -> Self {
        self.slot_policy = policy;
        self
    }

    pub fn with_stroke_ms(mut self, ms: u64) -> Self {
        self.stroke_duration = Duration::from_millis(ms);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Local {
    Free,
    PartnerHeld,
    Mine,
    Done,
    Refused,
}

#[derive(Debug, Clone)]
struct Drawing {
    stroke_id: StrokeId,
    slot: SlotRef,
    start: Duration,
    end: Duration,
    next_append: Duration,
    last_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct Bot {
    script: BotScript,
    pair: PairId,
    templates: TemplateSet,
    seq: u64,
    condition: Option<(u32, Condition)>,
    running: bool,
    slots: BTreeMap<SlotRef, Local>,
    partner_strokes: BTreeMap<StrokeId, SlotRef>,
    my_turn: bool,
    pending_begin: Option<(u64, SlotRef, StrokeId)>,
    drawing: Option<Drawing>,
    strokes_started: u64,
    slot_rng: SplitMix64,
    score_rng: SplitMix64,
    rating_due: Option<Duration>,
    next_presence: Option<Duration>,
    finished: bool,
    verdicts: Vec<Verdict>,
}

fn millis(t: Duration) -> u64 {
    duration_to_nanos(t) / 1_000_000
}

/// Point at arc-length fraction `f` of a polyline.
pub fn point_along(polyline: &[Point], f: f64) -> Point {
    let total: f64 = polyline.windows(2).map(|w| w[0].distance(w[1])).sum();
    if polyline.len() < 2 || total == 0.0 {
        return polyline.first().copied().unwrap_or(Point::new(0.5, 0.5));
    }
    let mut left = f.clamp(0.0, 1.0) * total;
    for w in polyline.windows(2) {
        let len = w[0].distance(w[1]);
        if left <= len {
            return w[0].lerp(w[1], if len == 0.0 { 0.0 } else { left / len });
        }
        left -= len;
    }
    *polyline.last().expect("non-empty")
}

impl Bot {
    pub fn new(script: BotScript, pair: PairId, templates: TemplateSet) -> Self {
        let slot_seed = match script.slot_policy {
            SlotPolicy::Random(s) => s,
            _ => 0,
        };
        let score_seed = match script.rating_policy {
            RatingPolicy::Random(s) => s,
            RatingPolicy::Fixed(_) => 0,
        };
        Self {
            script,
            pair,
            templates,
            seq: 0,
            condition: None,
            running: false,
            slots: BTreeMap::new(),
            partner_strokes: BTreeMap::new(),
            my_turn: false,
            pending_begin: None,
            drawing: None,
            strokes_started: 0,
            slot_rng: SplitMix64::new(slot_seed),
            score_rng: SplitMix64::new(score_seed),
            rating_due: None,
            next_presence: None,
            finished: false,
            verdicts: Vec::new(),
        }
    }

    pub fn id(&self) -> &ParticipantId {
        &self.script.participant_id
    }

    pub fn script(&self) -> &BotScript {
        &self.script
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Verdicts received for this bot's own messages, in arrival order.
    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    fn envelope(&mut self, now: Duration, payload: Payload) -> Envelope {
        self.seq += 1;
        Envelope::new(self.seq, self.id().clone(), self.pair.clone(), millis(now), payload)
    }

    /// Opens a fresh connection: sequence numbers restart and local board
    /// state is dropped.
    pub fn join(&mut self, now: Duration) -> Vec<Envelope> {
        self.seq = 0;
        self.running = false;
        self.drawing = None;
        self.pending_begin = None;
        self.rating_due = None;
        self.next_presence = None;
        vec![self.envelope(now, Payload::Control(ControlPayload::JoinSession))]
    }

    pub fn on_message(&mut self, env: &Envelope, now: Duration) -> Vec<Envelope> {
        let mut out = Vec::new();
        match &env.payload {
            Payload::Control(c) => self.on_control(c, now, &mut out),
            Payload::Stroke(s) if env.sender != *self.id() => self.on_partner_stroke(s, now, &mut out),
            _ => {}
        }
        out
    }

    fn on_control(&mut self, c: &ControlPayload, now: Duration, out: &mut Vec<Envelope>) {
        match c {
            ControlPayload::ConditionStart { index, condition } => {
                self.condition = Some((*index, *condition));
                self.running = true;
                self.slots = self.templates.slot_refs().map(|s| (s, Local::Free)).collect();
                self.partner_strokes.clear();
                self.my_turn = false;
                self.pending_begin = None;
                self.drawing = None;
                self.rating_due = None;
                self.next_presence = self.script.presence_interval.map(|i| now + i);
                self.try_start(now, out);
            }
            ControlPayload::TurnGrant { owner } => {
                if owner == self.id() && self.running {
                    self.my_turn = true;
                    self.try_start(now, out);
                }
            }
            ControlPayload::ClaimResult { ack_seq, verdict } => {
                self.verdicts.push(*verdict);
                let Some((seq, slot, stroke_id)) = self.pending_begin.clone() else {
                    return;
                };
                if seq != *ack_seq {
                    return;
                }
                self.pending_begin = None;
                match verdict {
                    Verdict::Accepted => {
                        self.slots.insert(slot, Local::Mine);
                        self.drawing = Some(Drawing {
                            stroke_id,
                            slot,
                            start: now,
                            end: now + self.script.stroke_duration,
                            next_append: now,
                            last_fraction: 0.0,
                        });
                        self.advance_stroke(now, out);
                    }
                    Verdict::Rejected { reason } => {
                        match reason {
                            RejectReason::SlotTaken => {
                                self.slots.insert(slot, Local::Refused);
                            }
                            RejectReason::NotYourTurn => self.my_turn = false,
                            _ => {}
                        }
                        self.try_start(now, out);
                    }
                }
            }
            ControlPayload::ConditionEnd { .. } => {
                self.running = false;
                self.drawing = None;
                self.pending_begin = None;
                self.next_presence = None;
                self.rating_due = Some(now + self.script.rating_delay);
            }
            ControlPayload::SessionComplete => self.finished = true,
            ControlPayload::ClockProbe { probe_id, t_probe } => {
                let echo = ControlPayload::ClockEcho {
                    probe_id: *probe_id,
                    t_probe: *t_probe,
                    t_echo: duration_to_nanos(now) / 1_000,
                };
                let env = self.envelope(now, Payload::Control(echo));
                out.push(env);
            }
            _ => {}
        }
    }

    fn on_partner_stroke(&mut self, s: &StrokePayload, now: Duration, out: &mut Vec<Envelope>) {
        match s {
            StrokePayload::BeginStroke { stroke_id, slot, .. } => {
                self.partner_strokes.insert(stroke_id.clone(), *slot);
                if let Some(l @ (Local::Free | Local::Refused)) = self.slots.get_mut(slot) {
                    *l = Local::PartnerHeld;
                }
            }
            StrokePayload::EndStroke { stroke_id } => {
                if let Some(slot) = self.partner_strokes.get(stroke_id) {
                    self.slots.insert(*slot, Local::Done);
                }
                if self.is_sc() && self.running {
                    self.my_turn = true;
                }
                self.try_start(now, out);
            }
            StrokePayload::Erase { stroke_id } => {
                if let Some(slot) = self.partner_strokes.remove(stroke_id) {
                    self.slots.insert(slot, Local::Free);
                }
                self.try_start(now, out);
            }
            _ => {}
        }
    }

    fn is_sc(&self) -> bool {
        matches!(self.condition, Some((_, c)) if c.mode == Mode::Sc)
    }

    fn pick_slot(&mut self) -> Option<SlotRef> {
        let free: Vec<SlotRef> = self
            .slots
            .iter()
            .filter(|(_, l)| **l == Local::Free)
            .map(|(s, _)| *s)
            .collect();
        match self.script.slot_policy {
            SlotPolicy::InOrder => free.first().copied(),
            SlotPolicy::Reverse => free.last().copied(),
            SlotPolicy::Random(_) if free.is_empty() => None,
            SlotPolicy::Random(_) => Some(free[self.slot_rng.below(free.len() as u64) as usize]),
            SlotPolicy::AdversarialSameSlot => self
                .slots
                .iter()
                .find(|(_, l)| matches!(l, Local::Free | Local::PartnerHeld))
                .map(|(s, _)| *s),
        }
    }

    fn try_start(&mut self, now: Duration, out: &mut Vec<Envelope>) {
        if !self.running || self.drawing.is_some() || self.pending_begin.is_some() {
            return;
        }
        if self.is_sc() && !self.my_turn {
            return;
        }
        let Some(slot) = self.pick_slot() else {
            return;
        };
        self.strokes_started += 1;
        let stroke_id = StrokeId::new(format!("{}-{}", self.id(), self.strokes_started));
        let env = self.envelope(
            now,
            Payload::Stroke(StrokePayload::BeginStroke {
                stroke_id: stroke_id.clone(),
                slot,
                color: self.script.color,
            }),
        );
        self.pending_begin = Some((env.seq, slot, stroke_id));
        out.push(env);
    }

    /// Emits the appends due by `now` and the end of the stroke once its
    /// duration has elapsed.
    fn advance_stroke(&mut self, now: Duration, out: &mut Vec<Envelope>) {
        let Some(mut d) = self.drawing.take() else {
            return;
        };
        let polyline = self
            .templates
            .polyline(d.slot)
            .map(|s| s.polyline.clone())
            .unwrap_or_default();
        let span = duration_to_nanos(d.end - d.start).max(1) as f64;
        while d.next_append <= now && d.next_append < d.end {
            let f = duration_to_nanos(d.next_append - d.start) as f64 / span;
            let points: Vec<Point> = if d.next_append == d.start {
                vec![point_along(&polyline, 0.0)]
            } else {
                let n = self.script.points_per_tick.clamp(1, crate::protocol::MAX_POINTS_PER_APPEND);
                (1..=n)
                    .map(|i| point_along(&polyline, d.last_fraction + (f - d.last_fraction) * i as f64 / n as f64))
                    .collect()
            };
            d.last_fraction = f;
            d.next_append += APPEND_INTERVAL;
            let env = self.envelope(
                now,
                Payload::Stroke(StrokePayload::AppendPoints {
                    stroke_id: d.stroke_id.clone(),
                    points,
                }),
            );
            out.push(env);
        }
        if now < d.end {
            self.drawing = Some(d);
            return;
        }
        let env = self.envelope(now, Payload::Stroke(StrokePayload::EndStroke { stroke_id: d.stroke_id }));
        out.push(env);
        self.slots.insert(d.slot, Local::Done);
        if self.is_sc() {
            self.my_turn = false;
        }
        self.try_start(now, out);
    }

    pub fn next_wakeup(&self) -> Option<Duration> {
        let stroke = self
            .drawing
            .as_ref()
            .map(|d| if d.next_append < d.end { d.next_append } else { d.end });
        [stroke, self.next_presence, self.rating_due].into_iter().flatten().min()
    }

    pub fn on_timer(&mut self, now: Duration) -> Vec<Envelope> {
        let mut out = Vec::new();
        self.advance_stroke(now, &mut out);
        if let (Some(due), Some(interval)) = (self.next_presence, self.script.presence_interval) {
            if due <= now && self.running {
                let cursor = match &self.drawing {
                    Some(d) => {
                        let poly = self.templates.polyline(d.slot).map(|s| s.polyline.as_slice()).unwrap_or(&[]);
                        point_along(poly, d.last_fraction)
                    }
                    None => Point::new(0.5, 0.5),
                };
                let presence = PresencePayload {
                    cursor,
                    pen_down: self.drawing.is_some(),
                    pose_hint: None,
                };
                let env = self.envelope(now, Payload::Presence(presence));
                out.push(env);
                let mut next = due + interval.max(Duration::from_nanos(1));
                while next <= now {
                    next += interval.max(Duration::from_nanos(1));
                }
                self.next_presence = Some(next);
            }
        }
        if self.rating_due.is_some_and(|t| t <= now) {
            self.rating_due = None;
            if let Some((_, condition)) = self.condition {
                for dimension in Dimension::ALL {
                    let score = match self.script.rating_policy {
                        RatingPolicy::Fixed(s) => s,
                        RatingPolicy::Random(_) => self.score_rng.below(5) as u8 + 1,
                    };
                    let rating = RatingRecord {
                        pair_id: self.pair.clone(),
                        participant_id: self.id().clone(),
                        condition,
                        dimension,
                        score: Score::new(score).unwrap_or(Score::new(3).expect("valid")),
                        t_submitted: millis(now),
                    };
                    let env = self.envelope(now, Payload::Control(ControlPayload::RatingSubmit { rating }));
                    out.push(env);
                }
            }
        }
        out
    }
}
