//! Grouped analyses over a set of ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::Serialize;

use super::stats::{cohens_h, mos_ci, paired_t, pearson_r, rm_anova, MosResult, PairedT, RmAnova, StatsError};
use super::{Dimension, RatingRecord};
use crate::session::{Mode, Platform};

/// Which condition fields split the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupBy {
    pub platform: bool,
    pub mode: bool,
    pub latency: bool,
    pub dimension: bool,
}

impl GroupBy {
    pub fn all() -> Self {
        Self {
            platform: true,
            mode: true,
            latency: true,
            dimension: true,
        }
    }

    pub fn with_dimension(mut self) -> Self {
        self.dimension = true;
        self
    }

    pub fn without_latency(mut self) -> Self {
        self.latency = false;
        self
    }

    pub fn key_of(&self, r: &RatingRecord) -> GroupKey {
        GroupKey {
            platform: self.platform.then_some(r.condition.platform),
            mode: self.mode.then_some(r.condition.mode),
            latency_ms: self.latency.then_some(r.condition.latency_ms),
            dimension: self.dimension.then_some(r.dimension),
        }
    }
}

impl FromStr for GroupBy {
    type Err = String;

    /// Comma-separated list of `platform`, `mode`, `latency`, `dimension`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut g = GroupBy::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "platform" => g.platform = true,
                "mode" => g.mode = true,
                "latency" | "latency_ms" => g.latency = true,
                "dimension" => g.dimension = true,
                other => return Err(format!("unknown group-by field `{other}`")),
            }
        }
        Ok(g)
    }
}

/// Group identity. Ordering is platform, mode, latency (ascending), then
/// dimension in questionnaire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupKey {
    pub platform: Option<Platform>,
    pub mode: Option<Mode>,
    pub latency_ms: Option<u64>,
    pub dimension: Option<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosRow {
    pub key: GroupKey,
    pub result: MosResult,
}

fn group_scores<'a>(records: impl IntoIterator<Item = &'a RatingRecord>, by: GroupBy) -> BTreeMap<GroupKey, Vec<u8>> {
    let mut groups: BTreeMap<GroupKey, Vec<u8>> = BTreeMap::new();
    for r in records {
        groups.entry(by.key_of(r)).or_default().push(r.score.get());
    }
    groups
}

/// One MOS per non-empty group, in key order.
pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a RatingRecord>, by: GroupBy) -> Vec<MosRow> {
    group_scores(records, by)
        .into_iter()
        .map(|(key, scores)| MosRow {
            key,
            result: mos_ci(&scores).expect("non-empty group of validated scores"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProportionRow {
    pub key: GroupKey,
    pub n: usize,
    /// Share of scores at or above the threshold.
    pub proportion: f64,
    pub h: f64,
}

/// Cohen's h of the share of scores `>= threshold` in each group against a
/// baseline proportion (0.5 for the usual agreement check).
pub fn cohens_h_table<'a>(
    records: impl IntoIterator<Item = &'a RatingRecord>,
    by: GroupBy,
    threshold: u8,
    baseline: f64,
) -> Result<Vec<ProportionRow>, StatsError> {
    group_scores(records, by)
        .into_iter()
        .map(|(key, scores)| {
            let hits = scores.iter().filter(|&&s| s >= threshold).count();
            let p = hits as f64 / scores.len() as f64;
            Ok(ProportionRow {
                key,
                n: scores.len(),
                proportion: p,
                h: cohens_h(p, baseline)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaRow {
    /// Split key; latency is the within-subject factor and never part of it.
    pub key: GroupKey,
    pub subjects: usize,
    pub levels: Vec<u64>,
    pub anova: RmAnova,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub key: GroupKey,
    pub error: StatsError,
}

/// Repeated-measures ANOVA with latency as the within factor and each
/// (pair, participant) as a subject. Cells average repeated scores; subjects
/// missing a level are dropped.
pub fn anova_table<'a>(
    records: impl IntoIterator<Item = &'a RatingRecord>,
    by: GroupBy,
) -> (Vec<AnovaRow>, Vec<Skipped>) {
    let by = by.without_latency();
    type Cells = BTreeMap<(String, String), BTreeMap<u64, Vec<f64>>>;
    let mut splits: BTreeMap<GroupKey, Cells> = BTreeMap::new();
    for r in records {
        splits
            .entry(by.key_of(r))
            .or_default()
            .entry((r.pair_id.to_string(), r.participant_id.to_string()))
            .or_default()
            .entry(r.condition.latency_ms)
            .or_default()
            .push(f64::from(r.score.get()));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (key, cells) in splits {
        let levels: BTreeSet<u64> = cells.values().flat_map(|m| m.keys().copied()).collect();
        let matrix: Vec<Vec<f64>> = cells
            .values()
            .filter(|m| m.len() == levels.len())
            .map(|m| m.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect())
            .collect();
        match rm_anova(&matrix) {
            Ok(anova) => rows.push(AnovaRow {
                key,
                subjects: matrix.len(),
                levels: levels.into_iter().collect(),
                anova,
            }),
            Err(error) => skipped.push(Skipped { key, error }),
        }
    }
    (rows, skipped)
}

/// Per-dimension MOS series aligned over the groups where every dimension
/// was rated.
fn aligned_series<'a>(
    records: impl IntoIterator<Item = &'a RatingRecord>,
    by: GroupBy,
) -> BTreeMap<Dimension, Vec<f64>> {
    let by = GroupBy {
        dimension: true,
        ..by
    };
    let rows = aggregate(records, by);
    let mut per_key: BTreeMap<GroupKey, BTreeMap<Dimension, f64>> = BTreeMap::new();
    for row in rows {
        let dim = row.key.dimension.expect("dimension grouping on");
        let key = GroupKey {
            dimension: None,
            ..row.key
        };
        per_key.entry(key).or_default().insert(dim, row.result.mos);
    }
    let mut series: BTreeMap<Dimension, Vec<f64>> = BTreeMap::new();
    for dims in per_key.values().filter(|d| d.len() == Dimension::ALL.len()) {
        for (d, v) in dims {
            series.entry(*d).or_default().push(*v);
        }
    }
    series
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub dimension: Dimension,
    pub n: usize,
    pub r: f64,
}

/// Pearson r between the overall MOS and each sub-dimension's MOS across
/// the groups selected by `by`.
pub fn correlation_table<'a>(
    records: impl IntoIterator<Item = &'a RatingRecord>,
    by: GroupBy,
) -> Result<Vec<CorrelationRow>, StatsError> {
    let series = aligned_series(records, by);
    let overall = series.get(&Dimension::Overall).cloned().unwrap_or_default();
    Dimension::ALL
        .into_iter()
        .filter(|d| *d != Dimension::Overall)
        .map(|d| {
            let other = series.get(&d).cloned().unwrap_or_default();
            Ok(CorrelationRow {
                dimension: d,
                n: overall.len(),
                r: pearson_r(&overall, &other)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedTRow {
    pub dimension: Dimension,
    pub n: usize,
    pub result: PairedT,
}

/// Paired t test of the overall MOS against each sub-dimension's MOS across
/// the groups selected by `by`.
pub fn paired_t_table<'a>(
    records: impl IntoIterator<Item = &'a RatingRecord>,
    by: GroupBy,
) -> Result<Vec<PairedTRow>, StatsError> {
    let series = aligned_series(records, by);
    let overall = series.get(&Dimension::Overall).cloned().unwrap_or_default();
    Dimension::ALL
        .into_iter()
        .filter(|d| *d != Dimension::Overall)
        .map(|d| {
            let other = series.get(&d).cloned().unwrap_or_default();
            Ok(PairedTRow {
                dimension: d,
                n: overall.len(),
                result: paired_t(&overall, &other)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::Score;
    use crate::session::Condition;

    fn rec(participant: &str, cond: Condition, dim: Dimension, score: u8) -> RatingRecord {
        RatingRecord {
            pair_id: "p".into(),
            participant_id: participant.into(),
            condition: cond,
            dimension: dim,
            score: Score::new(score).unwrap(),
            t_submitted: 0,
        }
    }

    fn one_condition() -> Vec<RatingRecord> {
        let c = Condition::new(Platform::Vr, Mode::Sc, 600);
        let mut v = Vec::new();
        for (who, base) in [("a", 3), ("b", 4)] {
            for (i, d) in Dimension::ALL.into_iter().enumerate() {
                v.push(rec(who, c, d, base + (i as u8 % 2)));
            }
        }
        v
    }

    #[test]
    fn eight_ratings_four_rows() {
        let rows = aggregate(&one_condition(), GroupBy::all());
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.result.n == 2));
        let dims: Vec<_> = rows.iter().map(|r| r.key.dimension.unwrap()).collect();
        assert_eq!(dims, Dimension::ALL.to_vec());
    }

    #[test]
    fn empty_groups_absent_and_ordering() {
        let mut records = one_condition();
        let c2 = Condition::new(Platform::VrPlus, Mode::Fc, 100);
        records.push(rec("a", c2, Dimension::Overall, 5));
        let rows = aggregate(&records, GroupBy::all());
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].key.platform, Some(Platform::VrPlus));
        let by_platform = aggregate(&records, "platform".parse().unwrap());
        assert_eq!(by_platform.len(), 2);
        assert!(aggregate(&[], GroupBy::all()).is_empty());
    }

    #[test]
    fn group_by_parse() {
        let g: GroupBy = "platform, mode,latency".parse().unwrap();
        assert!(g.platform && g.mode && g.latency && !g.dimension);
        assert!("colour".parse::<GroupBy>().is_err());
    }

    #[test]
    fn anova_uses_latency_as_factor() {
        let mut records = Vec::new();
        let scores = [[5, 4, 2], [4, 4, 3], [5, 3, 1], [3, 3, 2]];
        for (s, row) in scores.iter().enumerate() {
            for (j, lat) in [100, 1000, 2500].into_iter().enumerate() {
                let c = Condition::new(Platform::Pc, Mode::Fc, lat);
                records.push(rec(&format!("s{s}"), c, Dimension::Overall, row[j]));
            }
        }
        let (rows, skipped) = anova_table(&records, GroupBy::all());
        assert!(skipped.is_empty());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].levels, vec![100, 1000, 2500]);
        assert_eq!(rows[0].subjects, 4);
        assert!((rows[0].anova.f - 9.0).abs() < 1e-12);
        assert_eq!(rows[0].key.latency_ms, None);
    }

    #[test]
    fn h_table_against_half() {
        let records = one_condition();
        let rows = cohens_h_table(&records, GroupBy::default(), 3, 0.5).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].proportion, 1.0);
        assert!((rows[0].h - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
