use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::{PairId, ParticipantId};
use crate::session::Condition;

/// Rated QoE sub-dimension, in questionnaire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Interactivity,
    Efficiency,
    Believability,
    Overall,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Interactivity,
        Dimension::Efficiency,
        Dimension::Believability,
        Dimension::Overall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Interactivity => "interactivity",
            Dimension::Efficiency => "efficiency",
            Dimension::Believability => "believability",
            Dimension::Overall => "overall",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = RatingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| RatingError::UnknownDimension(s.to_owned()))
    }
}

/// A 5-point ACR score: 5 = Perfect, 4 = Good, 3 = Fair, 2 = Poor, 1 = Bad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Score(u8);

impl Score {
    pub fn new(v: u8) -> Result<Self, RatingError> {
        if (1..=5).contains(&v) {
            Ok(Self(v))
        } else {
            Err(RatingError::ScoreOutOfRange(v))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            5 => "Perfect",
            4 => "Good",
            3 => "Fair",
            2 => "Poor",
            _ => "Bad",
        }
    }
}

impl TryFrom<u8> for Score {
    type Error = RatingError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Score::new(v)
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub pair_id: PairId,
    pub participant_id: ParticipantId,
    pub condition: Condition,
    pub dimension: Dimension,
    pub score: Score,
    /// Milliseconds since the session epoch.
    pub t_submitted: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RatingError {
    #[error("score {0} outside the 1-5 ACR scale")]
    ScoreOutOfRange(u8),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("duplicate rating by {participant} for {condition} / {dimension}")]
    Duplicate {
        participant: ParticipantId,
        condition: Condition,
        dimension: Dimension,
    },
}

type RatingKey = (PairId, ParticipantId, Condition, Dimension);

/// Validated ratings. A second submission for the same participant,
/// condition and dimension is an error; nothing is ever overwritten.
#[derive(Debug, Clone, Default)]
pub struct RatingStore {
    records: BTreeMap<RatingKey, RatingRecord>,
}

impl RatingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: RatingRecord) -> Result<(), RatingError> {
        let key = (
            record.pair_id.clone(),
            record.participant_id.clone(),
            record.condition,
            record.dimension,
        );
        if self.records.contains_key(&key) {
            return Err(RatingError::Duplicate {
                participant: record.participant_id,
                condition: record.condition,
                dimension: record.dimension,
            });
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in (pair, participant, condition, dimension) order.
    pub fn iter(&self) -> impl Iterator<Item = &RatingRecord> {
        self.records.values()
    }

    pub fn count_for(&self, pair: &PairId, condition: &Condition) -> usize {
        self.records
            .values()
            .filter(|r| &r.pair_id == pair && &r.condition == condition)
            .count()
    }
}

impl FromIterator<RatingRecord> for Result<RatingStore, RatingError> {
    fn from_iter<I: IntoIterator<Item = RatingRecord>>(iter: I) -> Self {
        let mut store = RatingStore::new();
        for r in iter {
            store.insert(r)?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{Mode, Platform};

    fn rec(participant: &str, dim: Dimension, score: u8) -> RatingRecord {
        RatingRecord {
            pair_id: "p1".into(),
            participant_id: participant.into(),
            condition: Condition::new(Platform::Pc, Mode::Fc, 300),
            dimension: dim,
            score: Score::new(score).unwrap(),
            t_submitted: 10,
        }
    }

    #[test]
    fn score_range() {
        assert!(Score::new(0).is_err());
        assert!(Score::new(6).is_err());
        assert_eq!(Score::new(5).unwrap().label(), "Perfect");
        assert_eq!(Score::new(1).unwrap().label(), "Bad");
        assert!(serde_json::from_str::<Score>("7").is_err());
        assert_eq!(serde_json::from_str::<Score>("3").unwrap().get(), 3);
    }

    #[test]
    fn duplicates_rejected() {
        let mut store = RatingStore::new();
        store.insert(rec("a", Dimension::Overall, 4)).unwrap();
        store.insert(rec("b", Dimension::Overall, 4)).unwrap();
        let err = store.insert(rec("a", Dimension::Overall, 2)).unwrap_err();
        assert!(matches!(err, RatingError::Duplicate { .. }));
        assert_eq!(store.len(), 2);
        assert_eq!(
            store.iter().find(|r| r.participant_id.as_str() == "a").unwrap().score.get(),
            4
        );
    }

    #[test]
    fn dimension_parse() {
        assert_eq!("Overall".parse::<Dimension>().unwrap(), Dimension::Overall);
        assert!("enjoyment".parse::<Dimension>().is_err());
    }
}
