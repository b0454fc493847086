//! Statistics over ratings: MOS with Student-t confidence intervals,
//! Cohen's h, Pearson r, paired t and one-way repeated-measures ANOVA.

use serde::Serialize;

use super::special::{f_upper_p, t_quantile, t_two_sided_p};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("score {0} is outside the 1-5 scale")]
    ScoreOutOfRange(u8),
    #[error("proportion {0} is outside [0, 1]")]
    OutOfRangeProportion(f64),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("series is constant")]
    ConstantSeries,
    #[error("matrix has missing or non-finite cells")]
    MissingCells,
    #[error("need at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
}

/// Mean opinion score of one group with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MosResult {
    pub n: usize,
    pub mos: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MosResult {
    pub fn ci95(&self) -> (f64, f64) {
        (self.ci_low, self.ci_high)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
fn sample_sd(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Mean with a two-sided Student-t interval at `level` (e.g. 0.95).
/// A single observation yields a zero-width interval.
pub fn mean_ci(values: &[f64], level: f64) -> Result<MosResult, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = values.len();
    let m = mean(values);
    let sd = sample_sd(values, m);
    let half = if n < 2 || sd == 0.0 {
        0.0
    } else {
        let q = t_quantile(0.5 + level / 2.0, (n - 1) as f64);
        q * sd / (n as f64).sqrt()
    };
    Ok(MosResult {
        n,
        mos: m,
        sd,
        ci_low: m - half,
        ci_high: m + half,
    })
}

/// MOS of ACR scores with a 95% Student-t interval.
pub fn mos_ci(scores: &[u8]) -> Result<MosResult, StatsError> {
    if let Some(&bad) = scores.iter().find(|s| !(1..=5).contains(*s)) {
        return Err(StatsError::ScoreOutOfRange(bad));
    }
    let values: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
    mean_ci(&values, 0.95)
}

/// Cohen's h effect size between two proportions:
/// `2·asin(√p1) − 2·asin(√p2)`.
pub fn cohens_h(p1: f64, p2: f64) -> Result<f64, StatsError> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::OutOfRangeProportion(p));
        }
    }
    Ok(2.0 * p1.sqrt().asin() - 2.0 * p2.sqrt().asin())
}

/// Sample Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewObservations {
            need: 2,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedT {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub mean_diff: f64,
    /// Set when the differences have zero spread; `t` is reported as 0
    /// and `p` as 1 in that case.
    pub degenerate: bool,
}

/// Paired-samples t test on `x − y`, two-sided.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<PairedT, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { need: 2, got: n });
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let md = mean(&d);
    let sd = sample_sd(&d, md);
    let df = n - 1;
    if sd == 0.0 {
        return Ok(PairedT {
            t: 0.0,
            df,
            p: 1.0,
            mean_diff: md,
            degenerate: true,
        });
    }
    let t = md / (sd / (n as f64).sqrt());
    Ok(PairedT {
        t,
        df,
        p: t_two_sided_p(t, df as f64),
        mean_diff: md,
        degenerate: false,
    })
}

/// One-way within-subjects ANOVA table (no sphericity correction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmAnova {
    pub f: f64,
    pub df_effect: usize,
    pub df_error: usize,
    pub p: f64,
    pub partial_eta_sq: f64,
    pub ss_total: f64,
    pub ss_subjects: f64,
    pub ss_effect: f64,
    pub ss_error: f64,
}

/// Repeated-measures ANOVA over `data[subject][level]`.
pub fn rm_anova(data: &[Vec<f64>]) -> Result<RmAnova, StatsError> {
    let n = data.len();
    let k = data.first().map_or(0, Vec::len);
    if data.iter().any(|row| row.len() != k || row.iter().any(|v| !v.is_finite())) {
        return Err(StatsError::MissingCells);
    }
    if k < 2 {
        return Err(StatsError::TooFewLevels(k));
    }
    if n < 2 {
        return Err(StatsError::TooFewSubjects(n));
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = data.iter().flatten().sum::<f64>() / (nf * kf);
    let ss_total: f64 = data.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_subjects: f64 = data
        .iter()
        .map(|row| (mean(row) - grand).powi(2))
        .sum::<f64>()
        * kf;
    let ss_effect: f64 = (0..k)
        .map(|j| {
            let level_mean = data.iter().map(|row| row[j]).sum::<f64>() / nf;
            (level_mean - grand).powi(2)
        })
        .sum::<f64>()
        * nf;
    // residual = interaction of subject and level
    let ss_error: f64 = data
        .iter()
        .map(|row| {
            let subj = mean(row);
            (0..k)
                .map(|j| {
                    let level_mean = data.iter().map(|r| r[j]).sum::<f64>() / nf;
                    (row[j] - subj - level_mean + grand).powi(2)
                })
                .sum::<f64>()
        })
        .sum();
    let df_effect = k - 1;
    let df_error = (k - 1) * (n - 1);
    // round-off can leave tiny positive residue on exactly additive data
    let ss_error_clean = if ss_error <= 1e-12 * ss_total.max(1.0) { 0.0 } else { ss_error };
    let (f, p) = if ss_error_clean == 0.0 {
        if ss_effect == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_effect / df_effect as f64) / (ss_error_clean / df_error as f64);
        (f, f_upper_p(f, df_effect as f64, df_error as f64))
    };
    let partial_eta_sq = if ss_effect + ss_error == 0.0 {
        0.0
    } else {
        ss_effect / (ss_effect + ss_error)
    };
    Ok(RmAnova {
        f,
        df_effect,
        df_error,
        p,
        partial_eta_sq,
        ss_total,
        ss_subjects,
        ss_effect,
        ss_error,
    })
}

/// Any statistic the analysis can emit.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "stat", rename_all = "snake_case")]
pub enum StatResult {
    CohensH { h: f64 },
    PearsonR { r: f64 },
    PairedT(PairedT),
    RmAnova(RmAnova),
}
