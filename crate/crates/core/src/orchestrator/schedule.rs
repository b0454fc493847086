//! Randomized condition order.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood) and shuffles are
//! Fisher–Yates with rejection sampling for unbiased bounds, so a seed
//! yields the same schedule in any language that reproduces these two
//! routines. Draw order: platforms; then, for each platform in schedule
//! order, the modes; then, for each (platform, mode) block, the latency
//! levels.

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use crate::ids::PairId;
use crate::session::Condition;

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        // reject the top 2^64 mod bound values
        let reject = (u64::MAX % bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= u64::MAX - reject {
                return x % bound;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Per-pair seed derived from a service-wide seed (FNV-1a over the pair id).
pub fn pair_seed(base: u64, pair: &PairId) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in pair.as_str().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    base ^ h
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSchedule {
    pub pair_id: PairId,
    pub seed: u64,
    pub conditions: Vec<Condition>,
}

impl ConditionSchedule {
    /// Canonical serialization; equal schedules give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("schedule serializes")
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    /// A schedule with explicit conditions (tests, single-condition runs).
    pub fn fixed(pair_id: PairId, conditions: Vec<Condition>) -> Self {
        Self {
            pair_id,
            seed: 0,
            conditions,
        }
    }
}

pub fn generate_schedule(
    pair_id: PairId,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<ConditionSchedule, ConfigError> {
    config.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut platforms = config.platforms.clone();
    rng.shuffle(&mut platforms);
    let mut conditions = Vec::with_capacity(config.condition_count());
    for platform in platforms {
        let mut modes = config.modes.clone();
        rng.shuffle(&mut modes);
        for mode in modes {
            let mut levels = config.latency_levels.clone();
            rng.shuffle(&mut levels);
            conditions.extend(levels.into_iter().map(|l| Condition::new(platform, mode, l)));
        }
    }
    Ok(ConditionSchedule {
        pair_id,
        seed,
        conditions,
    })
}
