//! Time-based latency injection.
//!
//! Each received item is stamped with its arrival time `Tr` and parked in a
//! FIFO wait queue. A drain loop ticks the queue at a fixed rate (60 Hz by
//! default); on every tick the head of the queue is released while
//!
//! ```text
//! now - Tr >= target - inherent
//! ```
//!
//! where `target` is the end-to-end latency being emulated and `inherent` is
//! the latency the pipeline already has. Items behind an ineligible head
//! wait, so release order always equals arrival order.
//!
//! Tick `k` happens at `origin + floor(k * 1e9 / tick_rate)` nanoseconds,
//! with `origin` the queue's creation time. An item therefore leaves at the
//! first tick at or after `Tr + hold`, and its added delay lies in
//! `[hold, hold + 1/tick_rate)`.

use std::collections::VecDeque;
use std::time::Duration;

use crate::clock::{duration_to_nanos, Clock};

pub const DEFAULT_TICK_RATE: u32 = 60;
/// Probe round trips needed before the inherent latency is estimated.
pub const MIN_CALIBRATION_SAMPLES: usize = 10;

const NANOS_PER_SEC: u128 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectorError {
    #[error("target latency {target:?} is below the inherent latency {inherent:?}")]
    TargetBelowInherent { target: Duration, inherent: Duration },
    #[error("tick rate must be positive")]
    ZeroTickRate,
    #[error("queue is closed")]
    QueueClosed,
    #[error("calibration needs at least {need} probe samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectorConfig {
    target: Duration,
    inherent: Duration,
    tick_rate: u32,
}

impl InjectorConfig {
    pub fn new(target: Duration, inherent: Duration, tick_rate: u32) -> Result<Self, InjectorError> {
        if tick_rate == 0 {
            return Err(InjectorError::ZeroTickRate);
        }
        if target < inherent {
            return Err(InjectorError::TargetBelowInherent { target, inherent });
        }
        Ok(Self {
            target,
            inherent,
            tick_rate,
        })
    }

    /// Millisecond convenience constructor at the default 60 Hz drain rate.
    pub fn from_millis(target_ms: u64, inherent_ms: u64) -> Result<Self, InjectorError> {
        Self::new(
            Duration::from_millis(target_ms),
            Duration::from_millis(inherent_ms),
            DEFAULT_TICK_RATE,
        )
    }

    pub fn target(&self) -> Duration {
        self.target
    }

    pub fn inherent(&self) -> Duration {
        self.inherent
    }

    pub fn tick_rate(&self) -> u32 {
        self.tick_rate
    }

    /// Added delay: `target - inherent`.
    pub fn hold(&self) -> Duration {
        self.target - self.inherent
    }

    /// Nominal tick spacing (rounded to the nanosecond).
    pub fn tick_period(&self) -> Duration {
        Duration::from_nanos((NANOS_PER_SEC / u128::from(self.tick_rate)) as u64)
    }
}

/// A queued item with the arrival time and hold it was pushed under.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedItem<T> {
    pub arrival: Duration,
    pub hold: Duration,
    pub item: T,
}

impl<T> DelayedItem<T> {
    pub fn eligible_at(&self) -> Duration {
        self.arrival + self.hold
    }
}

/// An item leaving the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Released<T> {
    pub item: T,
    pub arrival: Duration,
    pub hold: Duration,
    pub released_at: Duration,
}

impl<T> Released<T> {
    /// Delay added by the queue.
    pub fn delay(&self) -> Duration {
        self.released_at - self.arrival
    }
}

/// FIFO wait queue for one receiving endpoint.
///
/// Not internally locked: callers sharing a queue between a producer and a
/// drain loop wrap it in a mutex so operations are serialized.
#[derive(Debug)]
pub struct InjectorQueue<T, C> {
    config: InjectorConfig,
    clock: C,
    origin: Duration,
    items: VecDeque<DelayedItem<T>>,
    closed: bool,
}

impl<T, C: Clock> InjectorQueue<T, C> {
    pub fn new(config: InjectorConfig, clock: C) -> Self {
        let origin = clock.now();
        Self::with_origin(config, clock, origin)
    }

    /// Queue whose tick grid starts at `origin` instead of now, so several
    /// queues can share one drain phase.
    pub fn with_origin(config: InjectorConfig, clock: C, origin: Duration) -> Self {
        Self {
            config,
            clock,
            origin,
            items: VecDeque::new(),
            closed: false,
        }
    }

    pub fn config(&self) -> &InjectorConfig {
        &self.config
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    /// Stamps `item` with the current time and appends it.
    pub fn push(&mut self, item: T) -> Result<(), InjectorError> {
        if self.closed {
            return Err(InjectorError::QueueClosed);
        }
        let arrival = self.clock.now();
        debug_assert!(self.items.back().is_none_or(|last| last.arrival <= arrival));
        self.items.push_back(DelayedItem {
            arrival,
            hold: self.config.hold(),
            item,
        });
        Ok(())
    }

    /// Releases the eligible head run, in push order.
    pub fn tick(&mut self) -> Vec<T> {
        self.drain_due().into_iter().map(|r| r.item).collect()
    }

    /// Like [`tick`](Self::tick) but keeps the timing of every release.
    pub fn drain_due(&mut self) -> Vec<Released<T>> {
        let now = self.clock.now();
        let mut out = Vec::new();
        while let Some(head) = self.items.front() {
            // Tc - Tr >= Dt - Di
            if now.saturating_sub(head.arrival) < head.hold || now < head.arrival {
                break;
            }
            let head = self.items.pop_front().expect("front exists");
            out.push(Released {
                item: head.item,
                arrival: head.arrival,
                hold: head.hold,
                released_at: now,
            });
        }
        out
    }

    /// Changes the target latency for items pushed from now on. Queued items
    /// keep the hold they were pushed with.
    pub fn set_target(&mut self, target: Duration) -> Result<(), InjectorError> {
        self.config = InjectorConfig::new(target, self.config.inherent, self.config.tick_rate)?;
        Ok(())
    }

    /// Changes both target and inherent latency for future pushes.
    pub fn retarget(&mut self, target: Duration, inherent: Duration) -> Result<(), InjectorError> {
        self.config = InjectorConfig::new(target, inherent, self.config.tick_rate)?;
        Ok(())
    }

    /// Refuses further pushes. Already queued items can still be drained.
    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Drops everything still queued and returns it.
    pub fn clear(&mut self) -> Vec<DelayedItem<T>> {
        self.items.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn origin(&self) -> Duration {
        self.origin
    }

    pub fn tick_time(&self, k: u64) -> Duration {
        let offset = u128::from(k) * NANOS_PER_SEC / u128::from(self.config.tick_rate);
        self.origin + Duration::from_nanos(offset as u64)
    }

    /// First tick time `>= t`.
    pub fn next_tick_at_or_after(&self, t: Duration) -> Duration {
        if t <= self.origin {
            return self.origin;
        }
        let rel = u128::from(duration_to_nanos(t - self.origin));
        let rate = u128::from(self.config.tick_rate);
        let k = (rel * rate).div_ceil(NANOS_PER_SEC);
        self.tick_time(k as u64)
    }

    /// Tick at which the current head becomes releasable.
    pub fn next_release_time(&self) -> Option<Duration> {
        self.items
            .front()
            .map(|head| self.next_tick_at_or_after(head.eligible_at()))
    }
}

/// Estimates the inherent latency from clock-probe round trips:
/// `median(rtt) / 2 + processing`.
pub fn calibrate_inherent(probe_rtts: &[Duration], processing: Duration) -> Result<Duration, InjectorError> {
    if probe_rtts.len() < MIN_CALIBRATION_SAMPLES {
        return Err(InjectorError::InsufficientSamples {
            got: probe_rtts.len(),
            need: MIN_CALIBRATION_SAMPLES,
        });
    }
    let mut sorted = probe_rtts.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2
    };
    Ok(median / 2 + processing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    fn queue(target: u64, inherent: u64) -> (InjectorQueue<char, ManualClock>, ManualClock) {
        let clock = ManualClock::new();
        let q = InjectorQueue::new(InjectorConfig::from_millis(target, inherent).unwrap(), clock.clone());
        (q, clock)
    }

    #[test]
    fn config_rejects_target_below_inherent() {
        assert!(matches!(
            InjectorConfig::from_millis(79, 80),
            Err(InjectorError::TargetBelowInherent { .. })
        ));
        assert_eq!(
            InjectorConfig::new(ms(1), ms(0), 0),
            Err(InjectorError::ZeroTickRate)
        );
        assert_eq!(InjectorConfig::from_millis(80, 80).unwrap().hold(), Duration::ZERO);
    }

    #[test]
    fn eligible_after_target_minus_inherent() {
        let (mut q, clock) = queue(100, 80);
        q.push('a').unwrap();
        clock.advance_to(Duration::from_micros(19_999));
        assert!(q.tick().is_empty());
        clock.advance_to(ms(20));
        assert_eq!(q.tick(), vec!['a']);
    }

    #[test]
    fn one_second_target_on_80ms_baseline() {
        let (mut q, clock) = queue(1000, 80);
        q.push('a').unwrap();
        clock.advance_to(ms(919));
        assert!(q.tick().is_empty());
        clock.advance_to(ms(920));
        assert_eq!(q.tick(), vec!['a']);
    }

    #[test]
    fn zero_hold_releases_on_next_tick() {
        let (mut q, clock) = queue(80, 80);
        q.push('a').unwrap();
        q.push('b').unwrap();
        assert_eq!(q.tick(), vec!['a', 'b']);
        clock.advance(ms(3));
        q.push('c').unwrap();
        assert_eq!(q.tick(), vec!['c']);
    }

    #[test]
    fn empty_tick() {
        let (mut q, _) = queue(100, 0);
        assert!(q.tick().is_empty());
    }

    // Hand-simulated: A at 0 ms, B at 5 ms, hold 20 ms, 60 Hz ticks.
    // tick 1 (16.67 ms): A needs 20 -> nothing. tick 2 (33.33 ms): A (33.3 >= 20)
    // and B (28.3 >= 20) both go.
    #[test]
    fn hand_simulated_tick_schedule() {
        let (mut q, clock) = queue(20, 0);
        q.push('A').unwrap();
        clock.advance_to(ms(5));
        q.push('B').unwrap();
        clock.advance_to(q.tick_time(1));
        assert_eq!(q.tick_time(1), Duration::from_nanos(16_666_666));
        assert!(q.tick().is_empty());
        clock.advance_to(q.tick_time(2));
        assert_eq!(q.tick(), vec!['A', 'B']);
    }

    #[test]
    fn head_blocks_later_items() {
        let (mut q, clock) = queue(500, 0);
        q.push('a').unwrap();
        q.set_target(ms(0)).unwrap();
        clock.advance_to(ms(10));
        q.push('b').unwrap();
        clock.advance_to(ms(100));
        assert!(q.tick().is_empty(), "b is eligible but sits behind a");
        clock.advance_to(ms(500));
        assert_eq!(q.tick(), vec!['a', 'b']);
    }

    #[test]
    fn retarget_keeps_queued_holds() {
        let (mut q, clock) = queue(100, 80);
        q.push('a').unwrap();
        q.set_target(ms(2500)).unwrap();
        q.push('b').unwrap();
        clock.advance_to(ms(20));
        let out = q.drain_due();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].hold, ms(20));
        clock.advance_to(ms(2420));
        let out = q.drain_due();
        assert_eq!(out[0].item, 'b');
        assert_eq!(out[0].hold, ms(2420));
        assert_eq!(out[0].delay(), ms(2420));
    }

    #[test]
    fn set_target_bounds() {
        let (mut q, _) = queue(100, 80);
        assert!(q.set_target(ms(80)).is_ok());
        assert_eq!(q.config().hold(), Duration::ZERO);
        assert!(matches!(
            q.set_target(ms(79)),
            Err(InjectorError::TargetBelowInherent { .. })
        ));
        assert_eq!(q.config().target(), ms(80));
    }

    #[test]
    fn closed_queue_refuses_pushes() {
        let (mut q, clock) = queue(10, 0);
        q.push('a').unwrap();
        q.close();
        assert_eq!(q.push('b'), Err(InjectorError::QueueClosed));
        clock.advance_to(ms(10));
        assert_eq!(q.tick(), vec!['a']);
    }

    #[test]
    fn tick_grid() {
        let (q, _) = queue(10, 0);
        assert_eq!(q.next_tick_at_or_after(Duration::ZERO), Duration::ZERO);
        assert_eq!(q.next_tick_at_or_after(Duration::from_nanos(1)), q.tick_time(1));
        assert_eq!(q.next_tick_at_or_after(q.tick_time(7)), q.tick_time(7));
        assert_eq!(
            q.next_tick_at_or_after(q.tick_time(7) + Duration::from_nanos(1)),
            q.tick_time(8)
        );
        assert_eq!(q.tick_time(60), Duration::from_secs(1));
    }

    #[test]
    fn calibration() {
        let rtts = vec![ms(160); 10];
        assert_eq!(calibrate_inherent(&rtts, Duration::ZERO).unwrap(), ms(80));
        let rtts = vec![ms(54); 12];
        assert_eq!(calibrate_inherent(&rtts, Duration::ZERO).unwrap(), ms(27));
        assert_eq!(
            calibrate_inherent(&[ms(54); 9], Duration::ZERO),
            Err(InjectorError::InsufficientSamples { got: 9, need: 10 })
        );
        let rtts: Vec<_> = [10, 200, 30, 40, 50, 60, 70, 80, 90, 100].map(ms).to_vec();
        // sorted: 10 30 40 50 60 70 80 90 100 200 -> median (60 + 70) / 2 = 65
        assert_eq!(calibrate_inherent(&rtts, ms(2)).unwrap(), Duration::from_micros(34_500));
    }
}
