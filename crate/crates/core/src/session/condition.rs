use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Platform cue profile. Only `VrPlus` shows the partner's presence cursor;
/// the label also selects the inherent-latency constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    VrPlus,
    Vr,
    Pc,
}

impl Platform {
    pub const ALL: [Platform; 3] = [Platform::VrPlus, Platform::Vr, Platform::Pc];

    pub fn shows_presence(self) -> bool {
        matches!(self, Platform::VrPlus)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::VrPlus => "vrplus",
            Platform::Vr => "vr",
            Platform::Pc => "pc",
        }
    }
}

/// Collaboration mode: sequential (strict alternation) or free (parallel claims).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sc,
    Fc,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Sc, Mode::Fc];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sc => "sc",
            Mode::Fc => "fc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseLabelError {
    kind: &'static str,
    value: String,
}

impl FromStr for Platform {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Platform::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseLabelError {
                kind: "platform",
                value: s.to_owned(),
            })
    }
}

impl FromStr for Mode {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseLabelError {
                kind: "mode",
                value: s.to_owned(),
            })
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One experimental cell: platform profile, collaboration mode and target
/// end-to-end latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub platform: Platform,
    pub mode: Mode,
    pub latency_ms: u64,
}

impl Condition {
    pub fn new(platform: Platform, mode: Mode, latency_ms: u64) -> Self {
        Self {
            platform,
            mode,
            latency_ms,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}ms", self.platform, self.mode, self.latency_ms)
    }
}
