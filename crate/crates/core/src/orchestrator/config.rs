use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::injector::DEFAULT_TICK_RATE;
use crate::session::{Mode, Platform};

/// Experiment design and timing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Target end-to-end latencies in milliseconds, strictly increasing.
    pub latency_levels: Vec<u64>,
    pub platforms: Vec<Platform>,
    pub modes: Vec<Mode>,
    /// Baseline latency of each platform profile, in milliseconds.
    pub inherent_latency_ms: BTreeMap<Platform, u64>,
    pub tick_rate: u32,
    /// Informational: break between platforms, in minutes.
    pub break_after_platform: u32,
    /// Abandon a condition whose ratings are still incomplete after this
    /// many milliseconds. `None` waits forever.
    pub rating_timeout_ms: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            latency_levels: vec![100, 300, 600, 1000, 1500, 2000, 2500],
            platforms: Platform::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            inherent_latency_ms: BTreeMap::from([
                (Platform::VrPlus, 80),
                (Platform::Vr, 80),
                (Platform::Pc, 27),
            ]),
            tick_rate: DEFAULT_TICK_RATE,
            break_after_platform: 15,
            rating_timeout_ms: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config file: {0}")]
    Parse(#[from] serde_json::Error),
}

fn distinct<T: Ord + Copy>(items: &[T]) -> bool {
    let mut v = items.to_vec();
    v.sort_unstable();
    v.windows(2).all(|w| w[0] != w[1])
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.latency_levels.is_empty() || self.platforms.is_empty() || self.modes.is_empty() {
            return bad("latency_levels, platforms and modes must be non-empty".into());
        }
        if !self.latency_levels.windows(2).all(|w| w[0] < w[1]) {
            return bad("latency_levels must be strictly increasing".into());
        }
        if !distinct(&self.platforms) || !distinct(&self.modes) {
            return bad("platforms and modes must not repeat".into());
        }
        if self.tick_rate == 0 {
            return bad("tick_rate must be positive".into());
        }
        let lowest = self.latency_levels[0];
        for p in &self.platforms {
            let Some(&inherent) = self.inherent_latency_ms.get(p) else {
                return bad(format!("no inherent latency for platform {p}"));
            };
            if lowest < inherent {
                return bad(format!(
                    "latency level {lowest} ms is below the {inherent} ms inherent latency of {p}"
                ));
            }
        }
        Ok(())
    }

    pub fn inherent_for(&self, platform: Platform) -> u64 {
        self.inherent_latency_ms.get(&platform).copied().unwrap_or(0)
    }

    /// Number of conditions in one schedule.
    pub fn condition_count(&self) -> usize {
        self.platforms.len() * self.modes.len() * self.latency_levels.len()
    }
}
