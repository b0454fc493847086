use std::time::Duration;

use lagboard_core::clock::{Clock, ManualClock};
use lagboard_core::injector::{InjectorConfig, InjectorQueue};
use proptest::prelude::*;

const TICK_NS: u128 = 1_000_000_000;

/// Independent oracle: first tick `origin + floor(k*1e9/rate)` at or after `t`.
fn first_tick_at_or_after(t: u128, rate: u128) -> u128 {
    let mut k = t * rate / TICK_NS;
    while k * TICK_NS / rate < t {
        k += 1;
    }
    while k > 0 && (k - 1) * TICK_NS / rate >= t {
        k -= 1;
    }
    k * TICK_NS / rate
}

/// Pushes at the given gaps, ticks on the grid, returns (arrival, hold, release).
fn simulate(gaps_ns: &[u64], holds_ms: &[u64], inherent_ms: u64, rate: u32) -> Vec<(u128, u128, u128, usize)> {
    let clock = ManualClock::new();
    let first = InjectorConfig::from_millis(inherent_ms + holds_ms[0], inherent_ms).unwrap();
    let cfg = InjectorConfig::new(first.target(), first.inherent(), rate).unwrap();
    let mut q: InjectorQueue<usize, _> = InjectorQueue::new(cfg, &clock);
    let mut released = Vec::new();
    let mut pushed = Vec::new();
    let drain_to = |q: &mut InjectorQueue<usize, &ManualClock>, until: Duration, out: &mut Vec<_>| {
        while let Some(t) = q.next_release_time().filter(|t| *t <= until) {
            clock.advance_to(t);
            for r in q.drain_due() {
                out.push(r);
            }
        }
        clock.advance_to(until);
    };
    for (i, gap) in gaps_ns.iter().enumerate() {
        let at = clock.now() + Duration::from_nanos(*gap);
        drain_to(&mut q, at, &mut released);
        let hold = holds_ms[i % holds_ms.len()];
        q.set_target(Duration::from_millis(inherent_ms + hold)).unwrap();
        q.push(i).unwrap();
        pushed.push((clock.now().as_nanos(), u128::from(hold) * 1_000_000));
    }
    drain_to(&mut q, clock.now() + Duration::from_secs(10), &mut released);
    released
        .into_iter()
        .map(|r| {
            let (arr, hold) = pushed[r.item];
            assert_eq!(arr, r.arrival.as_nanos());
            (arr, hold, r.released_at.as_nanos(), r.item)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn constant_hold_releases_on_first_eligible_tick(
        gaps in prop::collection::vec(0u64..40_000_000, 1..200),
        hold in 0u64..2500,
        inherent in 0u64..100,
        rate in prop_oneof![Just(60u32), Just(30), Just(90), Just(7)],
    ) {
        let out = simulate(&gaps, &[hold], inherent, rate);
        prop_assert_eq!(out.len(), gaps.len());
        for (i, (arr, h, rel, item)) in out.iter().enumerate() {
            prop_assert_eq!(*item, i, "FIFO");
            prop_assert_eq!(*rel, first_tick_at_or_after(arr + h, u128::from(rate)));
            prop_assert!(rel - arr >= *h);
            prop_assert!((rel - arr - h) * u128::from(rate) < TICK_NS);
        }
    }

    #[test]
    fn changing_hold_keeps_fifo_and_lower_bound(
        gaps in prop::collection::vec(0u64..40_000_000, 1..200),
        holds in prop::collection::vec(0u64..2500, 1..5),
    ) {
        let out = simulate(&gaps, &holds, 20, 60);
        prop_assert_eq!(out.len(), gaps.len());
        let mut prev_release = 0;
        for (i, (arr, h, rel, item)) in out.iter().enumerate() {
            prop_assert_eq!(*item, i);
            // blocked only by its predecessor
            let own = first_tick_at_or_after(arr + h, 60);
            prop_assert_eq!(*rel, own.max(prev_release));
            prev_release = *rel;
        }
    }
}
