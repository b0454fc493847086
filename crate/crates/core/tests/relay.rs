use std::time::Duration;

use lagboard_core::clock::ManualClock;
use lagboard_core::orchestrator::{
    export_run, load_run, ConditionSchedule, Direction, ExperimentConfig, Outbound, Phase, Relay,
    RelayOptions, RouteError, RELAY_SENDER,
};
use lagboard_core::protocol::{
    ControlPayload, Envelope, Payload, PenColor, Point, PresencePayload, RejectReason, SlotRef,
    StrokePayload, Verdict,
};
use lagboard_core::ratings::{read_ratings_csv, Dimension, RatingRecord, RowStatus, Score};
use lagboard_core::session::{Condition, Mode, Platform, TemplateSet};
use lagboard_core::ParticipantId;

struct Client {
    id: ParticipantId,
    seq: u64,
}

impl Client {
    fn new(id: &str) -> Self {
        Self { id: id.into(), seq: 0 }
    }

    fn env(&mut self, payload: Payload) -> Envelope {
        self.seq += 1;
        Envelope::new(self.seq, self.id.clone(), "pair".into(), 0, payload)
    }

    fn send(&mut self, relay: &mut Relay<ManualClock>, payload: Payload) -> Result<Vec<Outbound>, RouteError> {
        let env = self.env(payload);
        relay.ingest(&self.id.clone(), env)
    }
}

fn join() -> Payload {
    Payload::Control(ControlPayload::JoinSession)
}

fn begin(id: &str, template: u8, slot: u16) -> Payload {
    Payload::Stroke(StrokePayload::BeginStroke {
        stroke_id: id.into(),
        slot: SlotRef::new(template, slot),
        color: PenColor::Red,
    })
}

fn end(id: &str) -> Payload {
    Payload::Stroke(StrokePayload::EndStroke { stroke_id: id.into() })
}

fn claim_result(out: &[Outbound]) -> Option<Verdict> {
    out.iter().find_map(|o| match o.envelope.payload {
        Payload::Control(ControlPayload::ClaimResult { verdict, .. }) => Some(verdict),
        _ => None,
    })
}

fn setup(conditions: Vec<Condition>, config: ExperimentConfig) -> (Relay<ManualClock>, ManualClock, Client, Client) {
    let clock = ManualClock::new();
    let schedule = ConditionSchedule::fixed("pair".into(), conditions);
    let templates = TemplateSet::with_slot_count(2).unwrap();
    let relay = Relay::new(schedule, config, templates, clock.clone(), RelayOptions::default()).unwrap();
    (relay, clock, Client::new("ann"), Client::new("bob"))
}

fn sc_setup() -> (Relay<ManualClock>, ManualClock, Client, Client) {
    let c = Condition::new(Platform::Vr, Mode::Sc, 600);
    setup(vec![c], ExperimentConfig::default())
}

fn started() -> (Relay<ManualClock>, ManualClock, Client, Client) {
    let (mut relay, clock, mut a, mut b) = sc_setup();
    a.send(&mut relay, join()).unwrap();
    b.send(&mut relay, join()).unwrap();
    assert_eq!(relay.phase(), Phase::Running);
    (relay, clock, a, b)
}

#[test]
fn condition_starts_once_both_joined() {
    let (mut relay, _clock, mut a, mut b) = sc_setup();
    let out = a.send(&mut relay, join()).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Accepted));
    assert_eq!(relay.phase(), Phase::Lobby);
    let out = b.send(&mut relay, join()).unwrap();
    let starts = out
        .iter()
        .filter(|o| matches!(o.envelope.payload, Payload::Control(ControlPayload::ConditionStart { .. })))
        .count();
    let grants: Vec<_> = out
        .iter()
        .filter_map(|o| match &o.envelope.payload {
            Payload::Control(ControlPayload::TurnGrant { owner }) => Some(owner.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(starts, 2);
    assert_eq!(grants, vec![ParticipantId::new("ann"); 2]);
}

#[test]
fn routing_errors() {
    let (mut relay, _clock, mut a, mut b) = sc_setup();
    let stray = Envelope::new(1, "ann".into(), "other".into(), 0, join());
    assert!(matches!(relay.ingest(&"ann".into(), stray), Err(RouteError::UnknownSession { .. })));
    let spoof = Envelope::new(1, "bob".into(), "pair".into(), 0, join());
    assert!(matches!(relay.ingest(&"ann".into(), spoof), Err(RouteError::SenderMismatch { .. })));
    let early = Envelope::new(1, "ann".into(), "pair".into(), 0, end("s"));
    assert_eq!(relay.ingest(&"ann".into(), early), Err(RouteError::NotJoined("ann".into())));

    a.send(&mut relay, join()).unwrap();
    b.send(&mut relay, join()).unwrap();
    let mut carol = Client::new("carol");
    assert_eq!(carol.send(&mut relay, join()), Err(RouteError::PairFull("carol".into())));

    let dup = Envelope::new(1, "ann".into(), "pair".into(), 0, begin("x", 0, 0));
    assert!(matches!(relay.ingest(&"ann".into(), dup), Err(RouteError::Duplicate { got: 1, .. })));
    let gap = Envelope::new(5, "ann".into(), "pair".into(), 0, begin("x", 0, 0));
    assert_eq!(
        relay.ingest(&"ann".into(), gap),
        Err(RouteError::SequenceGap { sender: "ann".into(), expected: 2, got: 5 })
    );
}

#[test]
fn verdict_is_immediate_and_accepted_action_is_delayed() {
    let (mut relay, clock, mut a, mut b) = started();
    let out = b.send(&mut relay, begin("b1", 0, 0)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Rejected { reason: RejectReason::NotYourTurn }));
    assert_eq!(relay.queued(&"ann".into()), 0, "rejected actions are not forwarded");

    let out = a.send(&mut relay, begin("a1", 0, 0)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Accepted));
    assert!(out.iter().all(|o| o.to.as_str() == "ann"));
    assert_eq!(relay.queued(&"bob".into()), 1);

    // 600 - 80 = 520 ms hold; first tick at or after 520 ms is tick 32 (533.3 ms)
    let due = relay.next_due().unwrap();
    assert_eq!(due, Duration::from_nanos(533_333_333));
    clock.advance_to(Duration::from_millis(520) - Duration::from_nanos(1));
    assert!(relay.tick().is_empty());
    clock.advance_to(due);
    let out = relay.tick();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].to.as_str(), "bob");
    assert_eq!(out[0].envelope.sender.as_str(), "ann");
}

#[test]
fn sc_end_stroke_queues_turn_grant_behind_it() {
    let (mut relay, clock, mut a, _b) = started();
    a.send(&mut relay, begin("a1", 0, 0)).unwrap();
    a.send(&mut relay, end("a1")).unwrap();
    clock.advance(Duration::from_secs(1));
    let out = relay.tick();
    let kinds: Vec<String> = out
        .iter()
        .map(|o| match &o.envelope.payload {
            Payload::Stroke(s) => s.kind_name().to_string(),
            Payload::Control(ControlPayload::TurnGrant { owner }) => format!("grant:{owner}"),
            other => format!("{other:?}"),
        })
        .collect();
    assert_eq!(kinds, vec!["begin_stroke", "end_stroke", "grant:bob"]);
    let grant = &out[2].envelope;
    assert_eq!(grant.sender.as_str(), RELAY_SENDER);
    // relay messages to bob: claim result of join, start, grant, then this one
    let relay_seqs: Vec<u64> = relay
        .log()
        .entries()
        .iter()
        .filter(|e| e.direction != Direction::Ingress && e.subscriber.as_str() == "bob")
        .filter(|e| e.envelope.sender.as_str() == RELAY_SENDER)
        .map(|e| e.envelope.seq)
        .collect();
    assert_eq!(relay_seqs, vec![1, 2, 3, 4]);
}

#[test]
fn presence_is_forwarded_only_while_running() {
    let (mut relay, clock, mut a, _b) = started();
    let presence = Payload::Presence(PresencePayload {
        cursor: Point::new(0.1, 0.2),
        pen_down: false,
        pose_hint: Some(vec![0.5; 16]),
    });
    let out = a.send(&mut relay, presence.clone()).unwrap();
    assert!(out.is_empty(), "presence gets no verdict");
    clock.advance(Duration::from_secs(1));
    let out = relay.tick();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].envelope.payload, presence);
}

fn finish_drawing(relay: &mut Relay<ManualClock>, clock: &ManualClock, a: &mut Client, b: &mut Client) {
    a.send(relay, begin("a1", 0, 0)).unwrap();
    a.send(relay, end("a1")).unwrap();
    let slot = relay.session().unwrap().slots().find(|(_, s)| s.is_unclaimed()).unwrap().0;
    let out = b.send(relay, begin("b1", slot.template, slot.slot)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Accepted));
    let out = b.send(relay, end("b1")).unwrap();
    assert!(out
        .iter()
        .any(|o| o.to.as_str() == "bob" && matches!(o.envelope.payload, Payload::Control(ControlPayload::ConditionEnd { .. }))));
    assert_eq!(relay.phase(), Phase::Rating);
    clock.advance(Duration::from_secs(2));
    relay.tick();
}

fn rating(who: &str, condition: Condition, dimension: Dimension, score: u8) -> Payload {
    Payload::Control(ControlPayload::RatingSubmit {
        rating: RatingRecord {
            pair_id: "pair".into(),
            participant_id: who.into(),
            condition,
            dimension,
            score: Score::new(score).unwrap(),
            t_submitted: 0,
        },
    })
}

#[test]
fn rating_gate_and_validation() {
    let (mut relay, clock, mut a, mut b) = started();
    let c = relay.schedule().conditions[0];
    let out = a.send(&mut relay, rating("ann", c, Dimension::Overall, 4)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Rejected { reason: RejectReason::NoActiveCondition }));

    finish_drawing(&mut relay, &clock, &mut a, &mut b);
    let wrong = Condition::new(Platform::Pc, Mode::Fc, 100);
    let out = a.send(&mut relay, rating("ann", wrong, Dimension::Overall, 4)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Rejected { reason: RejectReason::InvalidRating }));
    let out = a.send(&mut relay, rating("bob", c, Dimension::Overall, 4)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Rejected { reason: RejectReason::InvalidRating }));

    for d in Dimension::ALL {
        a.send(&mut relay, rating("ann", c, d, 5)).unwrap();
    }
    let out = a.send(&mut relay, rating("ann", c, Dimension::Overall, 1)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Rejected { reason: RejectReason::DuplicateRating }));
    for d in &Dimension::ALL[..3] {
        b.send(&mut relay, rating("bob", c, *d, 2)).unwrap();
    }
    assert_eq!(relay.phase(), Phase::Rating, "seven ratings keep the gate closed");
    let out = b.send(&mut relay, rating("bob", c, Dimension::Overall, 2)).unwrap();
    assert_eq!(relay.phase(), Phase::Finished);
    assert_eq!(
        out.iter()
            .filter(|o| o.envelope.payload == Payload::Control(ControlPayload::SessionComplete))
            .count(),
        2
    );
    let outcome = &relay.outcomes()[0];
    assert_eq!(outcome.status, RowStatus::Completed);
    assert_eq!(outcome.ratings.len(), 8);
    assert!(outcome.ratings.iter().all(|r| r.score.get() == if r.participant_id.as_str() == "ann" { 5 } else { 2 }));
}

#[test]
fn rating_timeout_moves_on() {
    let config = ExperimentConfig {
        rating_timeout_ms: Some(30_000),
        ..ExperimentConfig::default()
    };
    let conditions = vec![
        Condition::new(Platform::Vr, Mode::Sc, 600),
        Condition::new(Platform::Vr, Mode::Sc, 100),
    ];
    let (mut relay, clock, mut a, mut b) = setup(conditions, config);
    a.send(&mut relay, join()).unwrap();
    b.send(&mut relay, join()).unwrap();
    finish_drawing(&mut relay, &clock, &mut a, &mut b);
    let c = relay.schedule().conditions[0];
    a.send(&mut relay, rating("ann", c, Dimension::Overall, 3)).unwrap();
    let deadline = relay.next_due().unwrap();
    clock.advance_to(deadline);
    let out = relay.tick();
    assert_eq!(relay.outcomes()[0].status, RowStatus::TimedOut);
    assert!(relay.outcomes()[0].ratings.is_empty());
    assert_eq!(relay.current_index(), Some(1));
    assert!(out
        .iter()
        .any(|o| matches!(o.envelope.payload, Payload::Control(ControlPayload::ConditionStart { index: 1, .. }))));
}

#[test]
fn disconnect_aborts_and_rejoin_starts_next_condition() {
    let conditions = vec![
        Condition::new(Platform::Pc, Mode::Fc, 300),
        Condition::new(Platform::Pc, Mode::Sc, 300),
    ];
    let (mut relay, clock, mut a, mut b) = setup(conditions, ExperimentConfig::default());
    a.send(&mut relay, join()).unwrap();
    b.send(&mut relay, join()).unwrap();
    a.send(&mut relay, begin("a1", 0, 0)).unwrap();
    let out = relay.disconnect(&"bob".into());
    assert_eq!(relay.phase(), Phase::AwaitingRejoin);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].to.as_str(), "ann");
    assert_eq!(relay.queued(&"bob".into()), 0);
    assert_eq!(relay.outcomes()[0].status, RowStatus::Aborted);

    clock.advance(Duration::from_secs(5));
    let mut b2 = Client::new("bob");
    b2.send(&mut relay, join()).unwrap();
    assert_eq!(relay.current_index(), Some(1));
    assert_eq!(relay.phase(), Phase::Running);
}

#[test]
fn clock_probe_is_echoed() {
    let (mut relay, clock, mut a, _b) = started();
    clock.advance_to(Duration::from_micros(1_234_567));
    let out = a
        .send(&mut relay, Payload::Control(ControlPayload::ClockProbe { probe_id: 9, t_probe: 77 }))
        .unwrap();
    assert_eq!(
        out[0].envelope.payload,
        Payload::Control(ControlPayload::ClockEcho { probe_id: 9, t_probe: 77, t_echo: 1_234_567 })
    );
}

#[test]
fn unexpected_control_is_rejected() {
    let (mut relay, _clock, mut a, _b) = started();
    let out = a.send(&mut relay, Payload::Control(ControlPayload::SessionComplete)).unwrap();
    assert_eq!(claim_result(&out), Some(Verdict::Rejected { reason: RejectReason::UnexpectedMessage }));
}

#[test]
fn calibration_measures_inherent_latency() {
    let clock = ManualClock::new();
    let schedule = ConditionSchedule::fixed("pair".into(), vec![Condition::new(Platform::Vr, Mode::Fc, 600)]);
    let options = RelayOptions {
        calibrate: true,
        ..RelayOptions::default()
    };
    let mut relay = Relay::new(schedule, ExperimentConfig::default(), TemplateSet::default_set(), clock.clone(), options).unwrap();
    let mut clients = [Client::new("ann"), Client::new("bob")];
    let mut pending: Vec<Outbound> = Vec::new();
    for c in &mut clients {
        pending.extend(c.send(&mut relay, join()).unwrap());
    }
    assert_eq!(relay.phase(), Phase::Calibrating);
    // every probe comes back after a 40 ms round trip
    while let Some(o) = pending.pop() {
        if let Payload::Control(ControlPayload::ClockProbe { probe_id, t_probe }) = o.envelope.payload {
            clock.advance(Duration::from_millis(40));
            let c = clients.iter_mut().find(|c| c.id == o.to).unwrap();
            let echo = ControlPayload::ClockEcho { probe_id, t_probe, t_echo: 0 };
            pending.extend(c.send(&mut relay, Payload::Control(echo)).unwrap());
        }
    }
    assert_eq!(relay.calibrated_inherent(), Some(Duration::from_millis(20)));
    assert_eq!(relay.phase(), Phase::Running);
}

#[test]
fn export_is_idempotent_and_round_trips() {
    let (mut relay, clock, mut a, mut b) = started();
    finish_drawing(&mut relay, &clock, &mut a, &mut b);
    let c = relay.schedule().conditions[0];
    for d in Dimension::ALL {
        a.send(&mut relay, rating("ann", c, d, 4)).unwrap();
        b.send(&mut relay, rating("bob", c, d, 3)).unwrap();
    }
    let record = relay.record();
    let dir = tempfile::tempdir().unwrap();
    export_run(&record, relay.log(), dir.path()).unwrap();
    let first: Vec<Vec<u8>> = ["ratings.csv", "session_log.jsonl", "run.json"]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    export_run(&record, relay.log(), dir.path()).unwrap();
    for (f, bytes) in ["ratings.csv", "session_log.jsonl", "run.json"].iter().zip(&first) {
        assert_eq!(&std::fs::read(dir.path().join(f)).unwrap(), bytes, "{f}");
    }
    let rows = read_ratings_csv(first[0].as_slice()).unwrap();
    assert_eq!(rows.len(), 8);
    let (back, log) = load_run(dir.path()).unwrap();
    assert_eq!(back, record);
    assert_eq!(&log, relay.log());
}
