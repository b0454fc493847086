use std::time::Duration;

use lagboard_core::orchestrator::{
    ConditionSchedule, Direction, ExperimentConfig, SessionLog, RATINGS_PER_CONDITION,
};
use lagboard_core::protocol::{Payload, RejectReason, Verdict};
use lagboard_core::ratings::RowStatus;
use lagboard_core::session::{Condition, Mode, Platform, TemplateSet};
use lagboard_core::sim::{
    default_scripts, measure_latency, run_condition, run_experiment, run_schedule, sc_timing_check,
    sim_pair_id, BotScript, Dropout, SimClock, SlotPolicy,
};

#[test]
fn latency_measurement_conforms() {
    for (inherent, target) in [(80, 100), (27, 100), (80, 2500), (27, 600)] {
        let c = Condition::new(Platform::Vr, Mode::Fc, target);
        let r = measure_latency(c, inherent, 500, 7).unwrap();
        assert_eq!(r.count, 501);
        assert!(r.conforming(), "{r:?}");
        assert!((r.hold_ms - (target - inherent) as f64).abs() < 1e-9);
        assert!(r.min_ms >= r.hold_ms && r.max_ms < r.hold_ms + r.tick_ms);
    }
}

#[test]
fn sc_completion_follows_timing_law() {
    for (n, target, inherent) in [(12, 1000, 80), (1, 2500, 80), (5, 100, 27), (2, 600, 80)] {
        let check = sc_timing_check(Mode::Sc, n, 500, target, inherent).unwrap();
        assert!(check.within, "{check:?}");
    }
}

#[test]
fn fc_completion_independent_of_latency() {
    let times: Vec<f64> = [100, 600, 1500, 2500]
        .into_iter()
        .map(|l| sc_timing_check(Mode::Fc, 12, 500, l, 80).unwrap().measured_ms)
        .collect();
    let (lo, hi) = times.iter().fold((f64::MAX, f64::MIN), |(a, b), &t| (a.min(t), b.max(t)));
    assert!((hi - lo) / lo < 0.02, "{times:?}");
}

#[test]
fn single_condition_run_collects_ratings() {
    let c = Condition::new(Platform::Pc, Mode::Sc, 300);
    let run = run_condition(c, 27, TemplateSet::default_set(), default_scripts(200), SimClock::virtual_clock()).unwrap();
    let o = &run.record.outcomes[0];
    assert_eq!(o.status, RowStatus::Completed);
    assert_eq!(o.ratings.len(), RATINGS_PER_CONDITION);
    assert_eq!(o.completions.len(), 24);
    assert!(run.bots.iter().all(|b| b.is_finished()));
    // SC: completions alternate starting with the smaller id
    for (i, comp) in o.completions.iter().enumerate() {
        assert_eq!(comp.participant.as_str(), if i % 2 == 0 { "a" } else { "b" });
    }
}

#[test]
fn full_experiment_in_virtual_time() {
    let run = run_experiment(
        ExperimentConfig::default(),
        11,
        TemplateSet::default_set(),
        default_scripts(500),
        SimClock::virtual_clock(),
    )
    .unwrap();
    assert_eq!(run.record.outcomes.len(), 42);
    assert_eq!(run.record.ratings().count(), 42 * 8);
    assert!(run.record.outcomes.iter().all(|o| o.status == RowStatus::Completed));
    println!("wall {:?} sim {:?} log {}", run.wall, run.sim_duration, run.log.len());
}

/// (sender, action, verdict) of every stroke the relay judged.
fn stroke_verdicts(log: &SessionLog) -> Vec<(String, &'static str, Verdict)> {
    log.entries()
        .iter()
        .filter(|e| e.direction == Direction::Ingress)
        .filter_map(|e| match (&e.envelope.payload, e.verdict) {
            (Payload::Stroke(s), Some(v)) => Some((e.envelope.sender.to_string(), s.kind_name(), v)),
            _ => None,
        })
        .collect()
}

#[test]
fn adversarial_fc_bots_conflict_but_each_slot_is_claimed_once() {
    let c = Condition::new(Platform::Vr, Mode::Fc, 1000);
    let scripts = [
        BotScript::new("a").with_stroke_ms(120).with_policy(SlotPolicy::AdversarialSameSlot),
        BotScript::new("b").with_stroke_ms(90).with_policy(SlotPolicy::AdversarialSameSlot),
    ];
    let run = run_condition(c, 80, TemplateSet::default_set(), scripts, SimClock::virtual_clock()).unwrap();
    let verdicts = stroke_verdicts(&run.log);
    let accepted_begins = verdicts
        .iter()
        .filter(|(_, k, v)| *k == "begin_stroke" && v.is_accepted())
        .count();
    let conflicts = verdicts
        .iter()
        .filter(|(_, _, v)| *v == Verdict::Rejected { reason: RejectReason::SlotTaken })
        .count();
    assert_eq!(accepted_begins, 24);
    assert!(conflicts > 0);
    assert_eq!(run.record.outcomes[0].completions.len(), 24);
}

#[test]
fn dropout_aborts_condition_and_run_resumes() {
    let config = ExperimentConfig {
        latency_levels: vec![100, 600],
        platforms: vec![Platform::Pc],
        modes: vec![Mode::Sc, Mode::Fc],
        ..ExperimentConfig::default()
    };
    let schedule = lagboard_core::orchestrator::generate_schedule(sim_pair_id(), &config, 3).unwrap();
    let dropout = Dropout {
        participant: "b".into(),
        at: Duration::from_millis(1500),
        rejoin_after: Duration::from_millis(700),
    };
    let run = run_schedule(
        schedule,
        config,
        TemplateSet::default_set(),
        default_scripts(200).to_vec(),
        SimClock::virtual_clock(),
        &[dropout],
    )
    .unwrap();
    let statuses: Vec<RowStatus> = run.record.outcomes.iter().map(|o| o.status).collect();
    assert_eq!(statuses.len(), 4);
    assert_eq!(statuses[0], RowStatus::Aborted);
    assert!(statuses[1..].iter().all(|s| *s == RowStatus::Completed));
    assert!(run.record.outcomes[0].ratings.is_empty());
    let rows = lagboard_core::orchestrator::rating_rows(&run.record);
    assert_eq!(rows.len(), 32);
    assert_eq!(rows.iter().filter(|r| r.status == RowStatus::Aborted).count(), 8);
}

#[test]
fn rating_gate_precedes_next_condition() {
    let config = ExperimentConfig {
        latency_levels: vec![100, 300, 600],
        platforms: vec![Platform::Vr],
        ..ExperimentConfig::default()
    };
    let mut scripts = default_scripts(100);
    scripts[1].rating_delay = Duration::from_millis(2500);
    let run = run_experiment(config, 5, TemplateSet::default_set(), scripts, SimClock::virtual_clock()).unwrap();
    let mut ratings_since_start = None;
    for e in run.log.entries() {
        match &e.envelope.payload {
            Payload::Control(lagboard_core::protocol::ControlPayload::ConditionStart { index, .. })
                if e.direction == Direction::Direct && e.subscriber.as_str() == "a" =>
            {
                if *index > 0 {
                    assert_eq!(ratings_since_start, Some(RATINGS_PER_CONDITION));
                }
                ratings_since_start = Some(0);
            }
            Payload::Control(lagboard_core::protocol::ControlPayload::RatingSubmit { .. })
                if e.verdict == Some(Verdict::Accepted) =>
            {
                *ratings_since_start.as_mut().unwrap() += 1;
            }
            _ => {}
        }
    }
}

#[test]
fn egress_log_conforms_in_full_runs() {
    for (mode, seed) in [(Mode::Sc, 1), (Mode::Fc, 2)] {
        let mut scripts = default_scripts(150);
        for s in &mut scripts {
            s.presence_interval = Some(Duration::from_millis(33));
        }
        let c = Condition::new(Platform::VrPlus, mode, 1500);
        let run = run_condition(c, 80, TemplateSet::default_set(), scripts, SimClock::virtual_clock()).unwrap();
        let report = lagboard_core::sim::DelayReport::from_log(&run.log, 60);
        assert!(report.count > 100, "{seed}");
        assert!(report.conforming(), "{report:?}");
    }
}

#[test]
fn stroke_and_presence_share_one_fifo() {
    let mut scripts = default_scripts(200);
    scripts[0].presence_interval = Some(Duration::from_millis(10));
    let c = Condition::new(Platform::VrPlus, Mode::Fc, 600);
    let run = run_condition(c, 80, TemplateSet::default_set(), scripts, SimClock::virtual_clock()).unwrap();
    let to_b: Vec<u64> = run
        .log
        .egress()
        .filter(|e| e.subscriber.as_str() == "b" && e.envelope.sender.as_str() == "a")
        .map(|e| e.envelope.seq)
        .collect();
    assert!(to_b.len() > 50);
    assert!(to_b.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn virtual_and_real_clock_agree_on_verdicts() {
    let c = Condition::new(Platform::Vr, Mode::Sc, 100);
    let templates = TemplateSet::with_slot_count(4).unwrap();
    let virt = run_condition(c, 80, templates.clone(), default_scripts(40), SimClock::virtual_clock()).unwrap();
    let real = run_condition(c, 80, templates, default_scripts(40), SimClock::real()).unwrap();
    assert_eq!(stroke_verdicts(&virt.log), stroke_verdicts(&real.log));
    assert!(virt.wall < real.wall);
}

#[test]
fn stalled_run_is_reported() {
    // b never comes back
    let schedule = ConditionSchedule::fixed(sim_pair_id(), vec![Condition::new(Platform::Pc, Mode::Sc, 100)]);
    let config = lagboard_core::sim::single_condition_config(schedule.conditions[0], 27);
    let dropout = Dropout {
        participant: "b".into(),
        at: Duration::from_millis(300),
        rejoin_after: Duration::from_secs(3600),
    };
    let err = run_schedule(
        schedule,
        config,
        TemplateSet::default_set(),
        default_scripts(100).to_vec(),
        SimClock::virtual_clock(),
        &[dropout],
    )
    .unwrap_err();
    assert!(matches!(err, lagboard_core::sim::SimError::Stalled { .. }), "{err}");
}

#[test]
fn seeded_random_sessions_respect_mode_rules() {
    let mut rng = lagboard_core::orchestrator::SplitMix64::new(2024);
    for i in 0..100u64 {
        let mode = if i % 2 == 0 { Mode::Sc } else { Mode::Fc };
        let policies = [
            SlotPolicy::InOrder,
            SlotPolicy::Reverse,
            SlotPolicy::Random(rng.next_u64()),
            SlotPolicy::AdversarialSameSlot,
        ];
        let pick = |rng: &mut lagboard_core::orchestrator::SplitMix64| policies[rng.below(4) as usize].clone();
        let scripts = [
            BotScript::new("a").with_stroke_ms(20 + rng.below(300)).with_policy(pick(&mut rng)),
            BotScript::new("b").with_stroke_ms(20 + rng.below(300)).with_policy(pick(&mut rng)),
        ];
        let slots = 1 + rng.below(12) as usize;
        let latency = [100, 300, 600, 1000, 1500, 2000, 2500][rng.below(7) as usize];
        let c = Condition::new(Platform::Vr, mode, latency);
        let templates = TemplateSet::with_slot_count(slots).unwrap();
        let run = run_condition(c, 80, templates, scripts, SimClock::virtual_clock()).unwrap();
        let o = &run.record.outcomes[0];
        assert_eq!(o.completions.len(), slots);
        let begins: Vec<_> = stroke_verdicts(&run.log)
            .into_iter()
            .filter(|(_, k, v)| *k == "begin_stroke" && v.is_accepted())
            .collect();
        assert_eq!(begins.len(), slots, "one accepted claim per slot");
        if mode == Mode::Sc {
            for (k, comp) in o.completions.iter().enumerate() {
                assert_eq!(comp.participant.as_str(), if k % 2 == 0 { "a" } else { "b" });
            }
        }
    }
}
