use lagboard_core::protocol::{PenColor, Point, RejectReason, SlotRef, StrokePayload};
use lagboard_core::session::{
    create_session, BoardSnapshot, Condition, Mode, Platform, SlotStatus, StrokeVerdict, TemplateSet,
};
use lagboard_core::ParticipantId;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Act {
    Begin(u8, u16, u8),
    Append(u8),
    End(u8),
    Erase(u8),
    Clear,
}

fn act() -> impl Strategy<Value = (bool, Act)> {
    let a = prop_oneof![
        3 => (0u8..6, 0u16..3, 0u8..6).prop_map(|(t, s, id)| Act::Begin(t, s, id)),
        2 => (0u8..6).prop_map(Act::Append),
        3 => (0u8..6).prop_map(Act::End),
        1 => (0u8..6).prop_map(Act::Erase),
        1 => Just(Act::Clear),
    ];
    (any::<bool>(), a)
}

fn payload(who: &str, a: &Act) -> StrokePayload {
    let sid = |n: &u8| format!("{who}{n}").into();
    match a {
        Act::Begin(t, s, n) => StrokePayload::BeginStroke {
            stroke_id: sid(n),
            slot: SlotRef::new(*t, *s),
            color: PenColor::Blue,
        },
        Act::Append(n) => StrokePayload::AppendPoints { stroke_id: sid(n), points: vec![Point::new(0.3, 0.3)] },
        Act::End(n) => StrokePayload::EndStroke { stroke_id: sid(n) },
        Act::Erase(n) => StrokePayload::Erase { stroke_id: sid(n) },
        Act::Clear => StrokePayload::ClearBoard,
    }
}

fn pair() -> [ParticipantId; 2] {
    ["zed".into(), "amy".into()]
}

fn run(mode: Mode, acts: &[(bool, Act)]) -> (lagboard_core::session::SessionState, Vec<StrokeVerdict>) {
    let templates = TemplateSet::with_slot_count(9).unwrap();
    let mut s = create_session(pair(), mode, &templates, Condition::new(Platform::Pc, mode, 300)).unwrap();
    let mut verdicts = Vec::new();
    for (first, a) in acts {
        let who = if *first { "zed" } else { "amy" };
        let before: Vec<(SlotRef, SlotStatus)> = s.slots().map(|(r, st)| (r, st.clone())).collect();
        let v = s.handle_stroke(&who.into(), &payload(who, a));
        let after: Vec<(SlotRef, SlotStatus)> = s.slots().map(|(r, st)| (r, st.clone())).collect();
        for ((r, b), (_, af)) in before.iter().zip(&after) {
            if b.is_completed() {
                assert_eq!(b, af, "completed slot {r} changed");
            }
            if let (SlotStatus::Claimed { participant: p1, .. }, SlotStatus::Claimed { participant: p2, .. }) = (b, af) {
                assert_eq!(p1, p2, "slot {r} changed hands while claimed");
            }
        }
        if matches!(a, Act::Clear) {
            assert!(matches!(
                v,
                StrokeVerdict::Rejected(RejectReason::ClearNotAllowed | RejectReason::SessionComplete)
            ));
        }
        verdicts.push(v);
    }
    (s, verdicts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn sc_strictly_alternates(acts in prop::collection::vec(act(), 0..300)) {
        let (s, _) = run(Mode::Sc, &acts);
        prop_assert!(s.open_stroke_count() <= 1);
        for (i, c) in s.completions().iter().enumerate() {
            // "amy" < "zed" starts
            prop_assert_eq!(c.participant.as_str(), if i % 2 == 0 { "amy" } else { "zed" });
        }
    }

    #[test]
    fn fc_single_claim(acts in prop::collection::vec(act(), 0..300)) {
        let (s, _) = run(Mode::Fc, &acts);
        prop_assert!(s.open_stroke_count() <= 2);
        let mut slots: Vec<SlotRef> = s.completions().iter().map(|c| c.slot).collect();
        let n = slots.len();
        slots.sort();
        slots.dedup();
        prop_assert_eq!(slots.len(), n, "a slot completed twice");
    }

    #[test]
    fn snapshot_is_a_fold_of_accepted_events(mode_sc in any::<bool>(), acts in prop::collection::vec(act(), 0..200)) {
        let mode = if mode_sc { Mode::Sc } else { Mode::Fc };
        let (s, _) = run(mode, &acts);
        let templates = TemplateSet::with_slot_count(9).unwrap();
        let mut board = BoardSnapshot::initial(pair(), mode, &templates);
        for e in s.strokes() {
            board.apply(e);
        }
        let snap = s.snapshot();
        prop_assert_eq!(board.slots, snap.slots);
        prop_assert_eq!(board.strokes, snap.strokes);
        prop_assert_eq!(board.complete, snap.complete);
    }

    #[test]
    fn engine_is_deterministic(mode_sc in any::<bool>(), acts in prop::collection::vec(act(), 0..200)) {
        let mode = if mode_sc { Mode::Sc } else { Mode::Fc };
        let (s1, v1) = run(mode, &acts);
        let (s2, v2) = run(mode, &acts);
        prop_assert_eq!(v1, v2);
        prop_assert_eq!(s1, s2);
    }
}
