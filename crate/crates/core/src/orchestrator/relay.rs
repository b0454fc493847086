//! Sans-IO relay for one pair.
//!
//! The relay validates and sequences incoming envelopes, applies stroke
//! actions to the session engine, answers the sender at once, and parks
//! everything bound for the partner in that partner's injector queue. The
//! caller feeds envelopes through [`Relay::ingest`], calls [`Relay::tick`]
//! at the times reported by [`Relay::next_due`], and delivers the returned
//! [`Outbound`] messages.
//!
//! Phase flow: `Lobby -> [Calibrating] -> Running -> Rating -> Running ...
//! -> Finished`. A disconnect during a condition aborts it and parks the
//! relay in `AwaitingRejoin`; once both participants are back the next
//! condition starts.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use super::log::{Direction, SessionLog, SessionLogEntry};
use super::schedule::ConditionSchedule;
use crate::clock::{duration_to_nanos, Clock};
use crate::ids::{PairId, ParticipantId};
use crate::injector::{calibrate_inherent, InjectorConfig, InjectorError, InjectorQueue, MIN_CALIBRATION_SAMPLES};
use crate::protocol::{
    ControlPayload, Envelope, Payload, RejectReason, SeqCheck, SequenceTracker, Verdict,
};
use crate::ratings::{Dimension, RatingRecord, RatingStore, RowStatus};
use crate::session::{create_session, Completion, Condition, Mode, SessionState, StrokeVerdict, TemplateSet};

/// Sender id of relay-originated envelopes.
pub const RELAY_SENDER: &str = "relay";

/// Ratings needed to close a condition: every dimension from both participants.
pub const RATINGS_PER_CONDITION: usize = 2 * Dimension::ALL.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    Calibrating,
    Running,
    Rating,
    AwaitingRejoin,
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: ParticipantId,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("envelope for session `{got}` sent to the relay of `{expected}`")]
    UnknownSession { expected: PairId, got: PairId },
    #[error("`{connection}` sent an envelope claiming to be `{claimed}`")]
    SenderMismatch {
        connection: ParticipantId,
        claimed: ParticipantId,
    },
    #[error("sequence gap from `{sender}`: expected {expected}, got {got}")]
    SequenceGap {
        sender: ParticipantId,
        expected: u64,
        got: u64,
    },
    #[error("duplicate or stale sequence number {got} from `{sender}`")]
    Duplicate { sender: ParticipantId, got: u64 },
    #[error("pair already has two participants; `{0}` refused")]
    PairFull(ParticipantId),
    #[error("`{0}` has not joined")]
    NotJoined(ParticipantId),
}

#[derive(Debug, thiserror::Error)]
pub enum RelayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Injector(#[from] InjectorError),
    #[error("schedule is empty")]
    EmptySchedule,
}

#[derive(Debug, Clone, Default)]
pub struct RelayOptions {
    /// Estimate the inherent latency from clock probes before the first
    /// condition instead of using the configured per-platform values.
    pub calibrate: bool,
    /// Inherent latency used for every platform, overriding the config.
    pub inherent_override: Option<Duration>,
}

/// How one scheduled condition ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub index: u32,
    pub condition: Condition,
    pub status: RowStatus,
    pub target_ms: f64,
    pub inherent_ms: f64,
    pub started_ms: f64,
    /// When the last slot was completed.
    pub drawing_done_ms: Option<f64>,
    pub ended_ms: f64,
    pub accepted_actions: u64,
    pub rejected_actions: u64,
    pub completions: Vec<Completion>,
    /// Present only for completed conditions.
    pub ratings: Vec<RatingRecord>,
}

#[derive(Debug, Clone)]
struct Active {
    index: usize,
    started_ms: f64,
    drawing_done: Option<(Duration, f64)>,
    accepted: u64,
    rejected: u64,
    ratings: RatingStore,
}

#[derive(Debug)]
pub struct Relay<C: Clock + Clone> {
    pair: PairId,
    relay_id: ParticipantId,
    config: ExperimentConfig,
    schedule: ConditionSchedule,
    templates: TemplateSet,
    options: RelayOptions,
    clock: C,
    origin: Duration,
    members: Vec<ParticipantId>,
    connected: BTreeSet<ParticipantId>,
    queues: BTreeMap<ParticipantId, InjectorQueue<Envelope, C>>,
    seq_in: SequenceTracker,
    seq_out: BTreeMap<ParticipantId, u64>,
    phase: Phase,
    session: Option<SessionState>,
    active: Option<Active>,
    next_index: usize,
    rtt_samples: BTreeMap<ParticipantId, Vec<Duration>>,
    next_probe_id: u64,
    calibrated_inherent: Option<Duration>,
    outcomes: Vec<ConditionOutcome>,
    log: SessionLog,
}

fn ms(d: Duration) -> f64 {
    duration_to_nanos(d) as f64 / 1e6
}

fn control(p: ControlPayload) -> Payload {
    Payload::Control(p)
}

impl<C: Clock + Clone> Relay<C> {
    pub fn new(
        schedule: ConditionSchedule,
        config: ExperimentConfig,
        templates: TemplateSet,
        clock: C,
        options: RelayOptions,
    ) -> Result<Self, RelayError> {
        config.validate()?;
        if schedule.is_empty() {
            return Err(RelayError::EmptySchedule);
        }
        let origin = clock.now();
        let relay = Self {
            pair: schedule.pair_id.clone(),
            relay_id: ParticipantId::new(RELAY_SENDER),
            config,
            schedule,
            templates,
            options,
            clock,
            origin,
            members: Vec::new(),
            connected: BTreeSet::new(),
            queues: BTreeMap::new(),
            seq_in: SequenceTracker::new(),
            seq_out: BTreeMap::new(),
            phase: Phase::Lobby,
            session: None,
            active: None,
            next_index: 0,
            rtt_samples: BTreeMap::new(),
            next_probe_id: 1,
            calibrated_inherent: None,
            outcomes: Vec::new(),
            log: SessionLog::new(),
        };
        for i in 0..relay.schedule.len() {
            relay.injector_config(i)?;
        }
        Ok(relay)
    }

    pub fn pair_id(&self) -> &PairId {
        &self.pair
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    pub fn schedule(&self) -> &ConditionSchedule {
        &self.schedule
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Participants in join order.
    pub fn members(&self) -> &[ParticipantId] {
        &self.members
    }

    pub fn is_connected(&self, p: &ParticipantId) -> bool {
        self.connected.contains(p)
    }

    pub fn session(&self) -> Option<&SessionState> {
        self.session.as_ref()
    }

    /// Schedule index of the condition in progress.
    pub fn current_index(&self) -> Option<usize> {
        self.active.as_ref().map(|a| a.index)
    }

    pub fn outcomes(&self) -> &[ConditionOutcome] {
        &self.outcomes
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn calibrated_inherent(&self) -> Option<Duration> {
        self.calibrated_inherent
    }

    /// Relay start time on its clock; log times are relative to it.
    pub fn origin(&self) -> Duration {
        self.origin
    }

    pub fn queued(&self, p: &ParticipantId) -> usize {
        self.queues.get(p).map_or(0, InjectorQueue::len)
    }

    fn now(&self) -> Duration {
        self.clock.now()
    }

    fn now_ms(&self) -> f64 {
        ms(self.now().saturating_sub(self.origin))
    }

    fn now_ms_u64(&self) -> u64 {
        duration_to_nanos(self.now().saturating_sub(self.origin)) / 1_000_000
    }

    fn now_us(&self) -> u64 {
        duration_to_nanos(self.now()) / 1_000
    }

    fn inherent_for(&self, condition: &Condition) -> Duration {
        self.calibrated_inherent
            .or(self.options.inherent_override)
            .unwrap_or_else(|| Duration::from_millis(self.config.inherent_for(condition.platform)))
    }

    fn injector_config(&self, index: usize) -> Result<InjectorConfig, InjectorError> {
        let c = self.schedule.conditions[index];
        InjectorConfig::new(
            Duration::from_millis(c.latency_ms),
            self.inherent_for(&c),
            self.config.tick_rate,
        )
    }

    fn partner_of(&self, p: &ParticipantId) -> Option<ParticipantId> {
        self.members.iter().find(|m| *m != p).cloned()
    }

    fn log_entry(&mut self, direction: Direction, subscriber: &ParticipantId, envelope: &Envelope) -> usize {
        let wall_time_ms = self.now_ms();
        self.log.push(SessionLogEntry {
            wall_time_ms,
            direction,
            subscriber: subscriber.clone(),
            envelope: envelope.clone(),
            verdict: None,
            release_delay_ms: None,
            hold_ms: None,
        })
    }

    fn relay_envelope(&self, payload: Payload) -> Envelope {
        Envelope::new(0, self.relay_id.clone(), self.pair.clone(), self.now_ms_u64(), payload)
    }

    fn stamp(&mut self, to: &ParticipantId, env: &mut Envelope) {
        let seq = self.seq_out.entry(to.clone()).or_insert(0);
        *seq += 1;
        env.seq = *seq;
    }

    /// Sends a relay message to `to` right away.
    fn direct(&mut self, to: &ParticipantId, payload: Payload, out: &mut Vec<Outbound>) {
        if !self.connected.contains(to) {
            return;
        }
        let mut env = self.relay_envelope(payload);
        self.stamp(to, &mut env);
        self.log_entry(Direction::Direct, to, &env);
        out.push(Outbound {
            to: to.clone(),
            envelope: env,
        });
    }

    fn enqueue(&mut self, to: &ParticipantId, env: Envelope) {
        if let Some(q) = self.queues.get_mut(to) {
            // queues are only closed while nobody reads them
            let _ = q.push(env);
        }
    }

    fn enqueue_control(&mut self, to: &ParticipantId, payload: ControlPayload) {
        let env = self.relay_envelope(control(payload));
        self.enqueue(to, env);
    }

    /// Routes one envelope received on `from`'s connection.
    pub fn ingest(&mut self, from: &ParticipantId, env: Envelope) -> Result<Vec<Outbound>, RouteError> {
        if env.session != self.pair {
            return Err(RouteError::UnknownSession {
                expected: self.pair.clone(),
                got: env.session.clone(),
            });
        }
        if &env.sender != from {
            return Err(RouteError::SenderMismatch {
                connection: from.clone(),
                claimed: env.sender.clone(),
            });
        }
        let is_join = matches!(env.payload, Payload::Control(ControlPayload::JoinSession));
        if is_join {
            if !self.members.contains(from) && self.members.len() == 2 {
                return Err(RouteError::PairFull(from.clone()));
            }
        } else if !self.connected.contains(from) {
            return Err(RouteError::NotJoined(from.clone()));
        }
        match self.seq_in.observe(&env) {
            SeqCheck::Accept => {}
            SeqCheck::Duplicate => {
                return Err(RouteError::Duplicate {
                    sender: from.clone(),
                    got: env.seq,
                })
            }
            SeqCheck::Gap => {
                return Err(RouteError::SequenceGap {
                    sender: from.clone(),
                    expected: self.seq_in.last_seq(from, &self.pair) + 1,
                    got: env.seq,
                })
            }
        }

        let mut out = Vec::new();
        let entry = self.log_entry(Direction::Ingress, from, &env);
        match &env.payload {
            Payload::Stroke(action) => {
                let verdict = match (self.phase, self.session.as_mut()) {
                    (Phase::Running, Some(s)) => s.handle_stroke(from, action),
                    _ => StrokeVerdict::Rejected(RejectReason::NoActiveCondition),
                };
                let wire = verdict.to_wire();
                self.log.set_verdict(entry, wire);
                self.direct(
                    from,
                    control(ControlPayload::ClaimResult {
                        ack_seq: env.seq,
                        verdict: wire,
                    }),
                    &mut out,
                );
                let active = self.active.as_mut();
                match verdict {
                    StrokeVerdict::Accepted(delta) => {
                        if let Some(a) = active {
                            a.accepted += 1;
                        }
                        let partner = self.partner_of(from).expect("running session has two members");
                        self.enqueue(&partner, env.clone());
                        if let Some(owner) = delta.turn_passed_to {
                            self.enqueue_control(&partner, ControlPayload::TurnGrant { owner });
                        }
                        if delta.session_completed {
                            self.drawing_done(from, &partner, &mut out);
                        }
                    }
                    StrokeVerdict::Rejected(_) => {
                        if let Some(a) = active {
                            a.rejected += 1;
                        }
                    }
                }
            }
            Payload::Presence(_) => {
                if self.phase == Phase::Running {
                    if let Some(partner) = self.partner_of(from) {
                        self.enqueue(&partner, env.clone());
                    }
                } else {
                    self.log.set_verdict(
                        entry,
                        Verdict::Rejected {
                            reason: RejectReason::NoActiveCondition,
                        },
                    );
                }
            }
            Payload::Control(c) => match c {
                ControlPayload::JoinSession => {
                    self.log.set_verdict(entry, Verdict::Accepted);
                    self.join(from, env.seq, &mut out);
                }
                ControlPayload::RatingSubmit { rating } => {
                    let verdict = self.accept_rating(from, rating);
                    self.log.set_verdict(entry, verdict);
                    self.direct(
                        from,
                        control(ControlPayload::ClaimResult {
                            ack_seq: env.seq,
                            verdict,
                        }),
                        &mut out,
                    );
                    if verdict.is_accepted()
                        && self.active.as_ref().map(|a| a.ratings.len()) == Some(RATINGS_PER_CONDITION)
                    {
                        self.close_condition(RowStatus::Completed);
                        self.advance(&mut out);
                    }
                }
                ControlPayload::ClockProbe { probe_id, t_probe } => {
                    let echo = ControlPayload::ClockEcho {
                        probe_id: *probe_id,
                        t_probe: *t_probe,
                        t_echo: self.now_us(),
                    };
                    self.direct(from, control(echo), &mut out);
                }
                ControlPayload::ClockEcho { t_probe, .. } => {
                    if self.phase == Phase::Calibrating {
                        let rtt = Duration::from_micros(self.now_us().saturating_sub(*t_probe));
                        self.rtt_samples.entry(from.clone()).or_default().push(rtt);
                        self.continue_calibration(from, &mut out);
                    }
                }
                _ => {
                    let verdict = Verdict::Rejected {
                        reason: RejectReason::UnexpectedMessage,
                    };
                    self.log.set_verdict(entry, verdict);
                    self.direct(
                        from,
                        control(ControlPayload::ClaimResult {
                            ack_seq: env.seq,
                            verdict,
                        }),
                        &mut out,
                    );
                }
            },
        }
        Ok(out)
    }

    fn join(&mut self, from: &ParticipantId, seq: u64, out: &mut Vec<Outbound>) {
        if !self.members.contains(from) {
            self.members.push(from.clone());
            let cfg = self
                .injector_config(self.next_index.min(self.schedule.len() - 1))
                .expect("validated at construction");
            self.queues.insert(
                from.clone(),
                InjectorQueue::with_origin(cfg, self.clock.clone(), self.origin),
            );
        }
        self.connected.insert(from.clone());
        self.direct(
            from,
            control(ControlPayload::ClaimResult {
                ack_seq: seq,
                verdict: Verdict::Accepted,
            }),
            out,
        );
        if self.connected.len() < 2 {
            return;
        }
        match self.phase {
            Phase::Lobby if self.options.calibrate => {
                self.phase = Phase::Calibrating;
                self.rtt_samples.clear();
                for m in self.members.clone() {
                    self.probe(&m, out);
                }
            }
            Phase::Lobby | Phase::AwaitingRejoin => self.advance(out),
            Phase::Finished => self.direct(from, control(ControlPayload::SessionComplete), out),
            _ => {}
        }
    }

    fn probe(&mut self, to: &ParticipantId, out: &mut Vec<Outbound>) {
        let probe = ControlPayload::ClockProbe {
            probe_id: self.next_probe_id,
            t_probe: self.now_us(),
        };
        self.next_probe_id += 1;
        self.direct(to, control(probe), out);
    }

    fn continue_calibration(&mut self, from: &ParticipantId, out: &mut Vec<Outbound>) {
        let have = self.rtt_samples.get(from).map_or(0, Vec::len);
        if have < MIN_CALIBRATION_SAMPLES {
            self.probe(from, out);
            return;
        }
        let done = self
            .members
            .iter()
            .all(|m| self.rtt_samples.get(m).map_or(0, Vec::len) >= MIN_CALIBRATION_SAMPLES);
        if !done {
            return;
        }
        let all: Vec<Duration> = self.rtt_samples.values().flatten().copied().collect();
        let measured = calibrate_inherent(&all, Duration::ZERO).expect("enough samples");
        // never estimate above the smallest target, or that target becomes unreachable
        let lowest = self
            .schedule
            .conditions
            .iter()
            .map(|c| Duration::from_millis(c.latency_ms))
            .min()
            .expect("non-empty schedule");
        self.calibrated_inherent = Some(measured.min(lowest));
        self.advance(out);
    }

    fn accept_rating(&mut self, from: &ParticipantId, rating: &RatingRecord) -> Verdict {
        let reject = |reason| Verdict::Rejected { reason };
        let (Phase::Rating, Some(active)) = (self.phase, self.active.as_mut()) else {
            return reject(RejectReason::NoActiveCondition);
        };
        let condition = self.schedule.conditions[active.index];
        if &rating.participant_id != from || rating.pair_id != self.pair || rating.condition != condition {
            return reject(RejectReason::InvalidRating);
        }
        match active.ratings.insert(rating.clone()) {
            Ok(()) => Verdict::Accepted,
            Err(_) => reject(RejectReason::DuplicateRating),
        }
    }

    fn drawing_done(&mut self, completer: &ParticipantId, partner: &ParticipantId, out: &mut Vec<Outbound>) {
        let now = self.now();
        let now_ms = self.now_ms();
        let Some(active) = self.active.as_mut() else {
            return;
        };
        active.drawing_done = Some((now, now_ms));
        let index = active.index;
        self.phase = Phase::Rating;
        let end = ControlPayload::ConditionEnd {
            index: index as u32,
            condition: self.schedule.conditions[index],
        };
        self.direct(completer, control(end.clone()), out);
        self.enqueue_control(partner, end);
    }

    fn close_condition(&mut self, status: RowStatus) {
        let Some(active) = self.active.take() else {
            return;
        };
        let condition = self.schedule.conditions[active.index];
        let session = self.session.take();
        let inj = self.injector_config(active.index).expect("validated");
        self.outcomes.push(ConditionOutcome {
            index: active.index as u32,
            condition,
            status,
            target_ms: ms(inj.target()),
            inherent_ms: ms(inj.inherent()),
            started_ms: active.started_ms,
            drawing_done_ms: active.drawing_done.map(|(_, m)| m),
            ended_ms: self.now_ms(),
            accepted_actions: active.accepted,
            rejected_actions: active.rejected,
            completions: session.map(|s| s.completions().to_vec()).unwrap_or_default(),
            ratings: if status == RowStatus::Completed {
                active.ratings.iter().cloned().collect()
            } else {
                Vec::new()
            },
        });
    }

    /// Starts the next scheduled condition, or finishes the run.
    fn advance(&mut self, out: &mut Vec<Outbound>) {
        if self.next_index >= self.schedule.len() {
            self.phase = Phase::Finished;
            for m in self.members.clone() {
                self.direct(&m, control(ControlPayload::SessionComplete), out);
            }
            return;
        }
        let index = self.next_index;
        self.next_index += 1;
        let condition = self.schedule.conditions[index];
        let cfg = self.injector_config(index).expect("validated");
        for q in self.queues.values_mut() {
            q.retarget(cfg.target(), cfg.inherent()).expect("validated");
        }
        let pair = [self.members[0].clone(), self.members[1].clone()];
        let session = create_session(pair, condition.mode, &self.templates, condition)
            .expect("schedule conditions carry their own mode");
        let turn_owner = session.turn_owner().cloned();
        self.session = Some(session);
        self.active = Some(Active {
            index,
            started_ms: self.now_ms(),
            drawing_done: None,
            accepted: 0,
            rejected: 0,
            ratings: RatingStore::new(),
        });
        self.phase = Phase::Running;
        for m in self.members.clone() {
            let start = ControlPayload::ConditionStart {
                index: index as u32,
                condition,
            };
            self.direct(&m, control(start), out);
            if let (Mode::Sc, Some(owner)) = (condition.mode, &turn_owner) {
                self.direct(&m, control(ControlPayload::TurnGrant { owner: owner.clone() }), out);
            }
        }
    }

    /// Handles a dropped connection. A condition in progress is aborted and
    /// the remaining participant is told it ended.
    pub fn disconnect(&mut self, p: &ParticipantId) -> Vec<Outbound> {
        let mut out = Vec::new();
        if !self.connected.remove(p) {
            return out;
        }
        self.seq_in.reset(p, &self.pair);
        self.seq_out.remove(p);
        match self.phase {
            Phase::Running | Phase::Rating => {
                let index = self.active.as_ref().map(|a| a.index).expect("active condition");
                self.close_condition(RowStatus::Aborted);
                for q in self.queues.values_mut() {
                    q.clear();
                }
                self.phase = Phase::AwaitingRejoin;
                let end = ControlPayload::ConditionEnd {
                    index: index as u32,
                    condition: self.schedule.conditions[index],
                };
                for m in self.members.clone() {
                    self.direct(&m, control(end.clone()), &mut out);
                }
            }
            Phase::Calibrating => {
                self.phase = Phase::Lobby;
                self.rtt_samples.clear();
            }
            Phase::Lobby | Phase::AwaitingRejoin | Phase::Finished => {}
        }
        if let Some(q) = self.queues.get_mut(p) {
            q.clear();
        }
        out
    }

    /// Earliest time at which [`tick`](Self::tick) has work to do.
    pub fn next_due(&self) -> Option<Duration> {
        let queues = self.queues.values().filter_map(InjectorQueue::next_release_time);
        queues.chain(self.rating_deadline()).min()
    }

    fn rating_deadline(&self) -> Option<Duration> {
        let timeout = self.config.rating_timeout_ms?;
        if self.phase != Phase::Rating {
            return None;
        }
        let (done_at, _) = self.active.as_ref()?.drawing_done?;
        Some(done_at + Duration::from_millis(timeout))
    }

    /// Releases due messages from every queue and enforces the rating timeout.
    pub fn tick(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        for m in self.members.clone() {
            self.drain_into(&m, &mut out);
        }
        out.extend(self.poll_timeout());
        out
    }

    /// Closes the condition as timed out once its rating deadline passed.
    pub fn poll_timeout(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.rating_deadline().is_some_and(|d| self.now() >= d) {
            self.close_condition(RowStatus::TimedOut);
            self.advance(&mut out);
        }
        out
    }

    /// Drains a single subscriber's queue (per-subscriber drain loops).
    pub fn tick_subscriber(&mut self, p: &ParticipantId) -> Vec<Outbound> {
        let mut out = Vec::new();
        self.drain_into(p, &mut out);
        out
    }

    fn drain_into(&mut self, p: &ParticipantId, out: &mut Vec<Outbound>) {
        let Some(q) = self.queues.get_mut(p) else {
            return;
        };
        for released in q.drain_due() {
            let delay = released.delay();
            let mut env = released.item;
            if env.sender == self.relay_id {
                self.stamp(p, &mut env);
            }
            let entry = self.log_entry(Direction::Egress, p, &env);
            self.log.set_timing(entry, ms(delay), ms(released.hold));
            out.push(Outbound {
                to: p.clone(),
                envelope: env,
            });
        }
    }

    /// Summary of everything that happened so far.
    pub fn record(&self) -> RunRecord {
        RunRecord {
            pair_id: self.pair.clone(),
            participants: self.members.clone(),
            schedule: self.schedule.clone(),
            calibrated_inherent_ms: self.calibrated_inherent.map(ms),
            outcomes: self.outcomes.clone(),
        }
    }
}

/// Schedule and per-condition outcomes of one pair's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pair_id: PairId,
    pub participants: Vec<ParticipantId>,
    pub schedule: ConditionSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_inherent_ms: Option<f64>,
    pub outcomes: Vec<ConditionOutcome>,
}

impl RunRecord {
    pub fn ratings(&self) -> impl Iterator<Item = &RatingRecord> {
        self.outcomes.iter().flat_map(|o| o.ratings.iter())
    }
}
