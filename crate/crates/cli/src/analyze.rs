//! `lagboard analyze`: grouped statistics over a ratings CSV.

use std::io::{Read, Write};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use lagboard_core::ratings::{
    aggregate, anova_table, cohens_h_table, correlation_table, paired_t_table, read_ratings_csv, GroupBy,
    GroupKey, RatingRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Mos,
    Anova,
    H,
    R,
    T,
}

impl FromStr for Stat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mos" => Ok(Stat::Mos),
            "anova" => Ok(Stat::Anova),
            "h" => Ok(Stat::H),
            "r" => Ok(Stat::R),
            "t" => Ok(Stat::T),
            other => Err(format!("unknown stat `{other}` (expected mos, anova, h, r or t)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    pub group_by: GroupBy,
    pub stat: Stat,
    /// Lowest score counted as a hit for `h`.
    pub threshold: u8,
    /// Reference proportion for `h`.
    pub baseline: f64,
}

impl AnalyzeOptions {
    pub fn new(group_by: GroupBy, stat: Stat) -> Self {
        Self {
            group_by,
            stat,
            threshold: 3,
            baseline: 0.5,
        }
    }
}

/// Completed ratings from a CSV; aborted and timed-out rows are skipped.
pub fn read_records<R: Read>(input: R) -> Result<Vec<RatingRecord>> {
    let rows = read_ratings_csv(input).context("reading ratings CSV")?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if let Some(r) = row.to_record() {
            out.push(r.with_context(|| format!("row {}", i + 2))?);
        }
    }
    Ok(out)
}

fn key_header(by: GroupBy) -> Vec<&'static str> {
    let mut h = Vec::new();
    if by.platform {
        h.push("platform");
    }
    if by.mode {
        h.push("mode");
    }
    if by.latency {
        h.push("latency_ms");
    }
    if by.dimension {
        h.push("dimension");
    }
    h
}

fn key_fields(by: GroupBy, key: &GroupKey) -> Vec<String> {
    let mut f = Vec::new();
    if by.platform {
        f.push(key.platform.map(|p| p.to_string()).unwrap_or_default());
    }
    if by.mode {
        f.push(key.mode.map(|m| m.to_string()).unwrap_or_default());
    }
    if by.latency {
        f.push(key.latency_ms.map(|l| l.to_string()).unwrap_or_default());
    }
    if by.dimension {
        f.push(key.dimension.map(|d| d.as_str().to_string()).unwrap_or_default());
    }
    f
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes the requested statistic as CSV and returns the number of data rows.
///
/// `mos`, `h` and `anova` always split by dimension as well. `anova` uses
/// latency as the within-subject factor, so latency is never a key there.
/// `r` and `t` compare the overall score with each sub-dimension across the
/// groups named in `group_by`.
pub fn analyze<W: Write>(records: &[RatingRecord], opts: AnalyzeOptions, out: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    let rows = match opts.stat {
        Stat::Mos => {
            let by = opts.group_by.with_dimension();
            let mut header = key_header(by);
            header.extend(["n", "mos", "sd", "ci_low", "ci_high"]);
            w.write_record(&header)?;
            let rows = aggregate(records, by);
            for row in &rows {
                let mut f = key_fields(by, &row.key);
                let r = row.result;
                f.extend([r.n.to_string(), num(r.mos), num(r.sd), num(r.ci_low), num(r.ci_high)]);
                w.write_record(&f)?;
            }
            rows.len()
        }
        Stat::H => {
            let by = opts.group_by.with_dimension();
            let mut header = key_header(by);
            header.extend(["n", "proportion", "h"]);
            w.write_record(&header)?;
            let rows = cohens_h_table(records, by, opts.threshold, opts.baseline)?;
            for row in &rows {
                let mut f = key_fields(by, &row.key);
                f.extend([row.n.to_string(), num(row.proportion), num(row.h)]);
                w.write_record(&f)?;
            }
            rows.len()
        }
        Stat::Anova => {
            let by = opts.group_by.with_dimension().without_latency();
            let mut header = key_header(by);
            header.extend(["subjects", "levels", "f", "df_effect", "df_error", "p", "partial_eta_sq"]);
            w.write_record(&header)?;
            let (rows, skipped) = anova_table(records, by);
            for s in &skipped {
                log::warn!("anova skipped for {:?}: {}", s.key, s.error);
            }
            for row in &rows {
                let mut f = key_fields(by, &row.key);
                let a = row.anova;
                let levels: Vec<String> = row.levels.iter().map(u64::to_string).collect();
                f.extend([
                    row.subjects.to_string(),
                    levels.join(";"),
                    num(a.f),
                    a.df_effect.to_string(),
                    a.df_error.to_string(),
                    num(a.p),
                    num(a.partial_eta_sq),
                ]);
                w.write_record(&f)?;
            }
            rows.len()
        }
        Stat::R => {
            if opts.group_by.dimension {
                bail!("`r` correlates dimensions with each other; drop `dimension` from --group-by");
            }
            w.write_record(["dimension", "n", "r"])?;
            let rows = correlation_table(records, opts.group_by)?;
            for row in &rows {
                w.write_record([row.dimension.as_str().to_string(), row.n.to_string(), num(row.r)])?;
            }
            rows.len()
        }
        Stat::T => {
            if opts.group_by.dimension {
                bail!("`t` compares dimensions with each other; drop `dimension` from --group-by");
            }
            w.write_record(["dimension", "n", "t", "df", "p", "mean_diff", "degenerate"])?;
            let rows = paired_t_table(records, opts.group_by)?;
            for row in &rows {
                let t = row.result;
                w.write_record([
                    row.dimension.as_str().to_string(),
                    row.n.to_string(),
                    num(t.t),
                    t.df.to_string(),
                    num(t.p),
                    num(t.mean_diff),
                    t.degenerate.to_string(),
                ])?;
            }
            rows.len()
        }
    };
    w.flush()?;
    Ok(rows)
}
