//! Aggregate decay analyses producing plot-ready tables: hit rate against lag
//! for groups of videos ranked by memorability, and the linear versus
//! log-linear trend comparison on pooled data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::pearson_r;
use crate::model::{AnnotationRecord, VideoScoreTable};

pub const DEFAULT_GROUPS: usize = 10;
pub const DEFAULT_LAG_BINS: usize = 20;

/// Equal-width binning of integer lags over `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagBinning {
    pub min_lag: u32,
    pub max_lag: u32,
    pub bins: usize,
}

impl LagBinning {
    pub fn covering(records: &[AnnotationRecord], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidValue("lag_bins must be >= 1".into()));
        }
        let min_lag = records
            .iter()
            .map(|r| r.lag)
            .min()
            .ok_or_else(|| Error::EmptyInput("no annotations".into()))?;
        let max_lag = records.iter().map(|r| r.lag).max().unwrap_or(min_lag);
        Ok(Self {
            min_lag,
            max_lag,
            bins,
        })
    }

    /// Bin index of `lag`; the top edge falls in the last bin.
    pub fn index(&self, lag: u32) -> usize {
        let span = u64::from(self.max_lag - self.min_lag);
        if span == 0 {
            return 0;
        }
        let off = u64::from(lag.clamp(self.min_lag, self.max_lag) - self.min_lag);
        ((off * self.bins as u64 / span) as usize).min(self.bins - 1)
    }

    pub fn center(&self, bin: usize) -> f64 {
        let width = f64::from(self.max_lag - self.min_lag) / self.bins as f64;
        f64::from(self.min_lag) + (bin as f64 + 0.5) * width
    }
}

/// Mean hit rate of one `(group, lag bin)` cell. Empty cells keep `n = 0` and
/// no mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileRow {
    pub group: usize,
    pub lag_bin: usize,
    pub lag_bin_center: f64,
    pub mean_hit_rate: Option<f64>,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileTable {
    pub rows: Vec<DecileRow>,
    /// Number of videos in each group, lowest-scoring group first.
    pub group_sizes: Vec<usize>,
    pub binning: LagBinning,
    /// How videos were ordered before grouping.
    pub grouping: String,
}

impl DecileTable {
    pub fn row(&self, group: usize, lag_bin: usize) -> &DecileRow {
        &self.rows[group * self.binning.bins + lag_bin]
    }
}

const GROUPING_NOTE: &str =
    "videos ordered by raw score at the reference lag, ties broken by video_id; group 0 is lowest";

/// Hit rate against lag for `n_groups` quantile groups of videos.
///
/// Annotated videos are ranked by their score at the reference lag and cut
/// into `n_groups` groups whose sizes differ by at most one; the larger
/// groups are the lowest-scoring ones. Lags are binned into `lag_bins`
/// equal-width bins shared across groups.
pub fn decile_curves(
    records: &[AnnotationRecord],
    scores: &VideoScoreTable,
    n_groups: usize,
    lag_bins: usize,
) -> Result<DecileTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotations".into()));
    }
    if n_groups < 2 {
        return Err(Error::InvalidValue("n_groups must be >= 2".into()));
    }
    let binning = LagBinning::covering(records, lag_bins)?;

    let mut annotated: Vec<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    annotated.sort_unstable();
    annotated.dedup();
    let missing: Vec<String> = annotated
        .iter()
        .filter(|id| scores.get(id).is_none())
        .map(|id| (*id).to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingScores(missing));
    }
    if annotated.len() < n_groups {
        return Err(Error::InvalidValue(format!(
            "{} annotated videos cannot fill {n_groups} groups",
            annotated.len()
        )));
    }

    // `annotated` is already in id order, so a stable sort breaks ties by id.
    let mut ranked = annotated;
    ranked.sort_by(|a, b| {
        let sa = scores.get(a).expect("checked").m_ref;
        let sb = scores.get(b).expect("checked").m_ref;
        sa.total_cmp(&sb)
    });

    let base = ranked.len() / n_groups;
    let extra = ranked.len() % n_groups;
    let group_sizes: Vec<usize> = (0..n_groups)
        .map(|g| base + usize::from(g < extra))
        .collect();
    let mut group_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut it = ranked.into_iter();
    for (g, &size) in group_sizes.iter().enumerate() {
        for id in it.by_ref().take(size) {
            group_of.insert(id, g);
        }
    }

    let mut cells = vec![(0u64, 0u64); n_groups * lag_bins];
    for r in records {
        let g = group_of[r.video_id.as_str()];
        let cell = &mut cells[g * lag_bins + binning.index(r.lag)];
        cell.0 += 1;
        cell.1 += u64::from(r.response);
    }

    let rows = cells
        .iter()
        .enumerate()
        .map(|(i, &(n, hits))| DecileRow {
            group: i / lag_bins,
            lag_bin: i % lag_bins,
            lag_bin_center: binning.center(i % lag_bins),
            mean_hit_rate: (n > 0).then(|| hits as f64 / n as f64),
            n,
        })
        .collect();

    Ok(DecileTable {
        rows,
        group_sizes,
        binning,
        grouping: GROUPING_NOTE.to_owned(),
    })
}

/// Pooled hit rate in one lag bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagBin {
    pub lag_bin_center: f64,
    pub mean_hit_rate: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendComparison {
    /// Correlation of bin mean hit rate with bin center.
    pub r_linear: f64,
    /// Correlation of bin mean hit rate with the natural log of bin center.
    pub r_loglinear: f64,
    /// Non-empty bins only.
    pub bins: Vec<LagBin>,
}

impl TrendComparison {
    /// Correlates already-binned hit rates with lag and log lag.
    pub fn from_bins(bins: Vec<LagBin>) -> Result<Self> {
        if bins.len() < 3 {
            return Err(Error::TooFewBins {
                needed: 3,
                got: bins.len(),
            });
        }
        let centers: Vec<f64> = bins.iter().map(|b| b.lag_bin_center).collect();
        let logs: Vec<f64> = centers.iter().map(|c| c.ln()).collect();
        let rates: Vec<f64> = bins.iter().map(|b| b.mean_hit_rate).collect();
        Ok(Self {
            r_linear: pearson_r(&centers, &rates)?,
            r_loglinear: pearson_r(&logs, &rates)?,
            bins,
        })
    }
}

/// Pools all annotations, bins them by lag and compares a linear against a
/// log-linear trend in the per-bin mean hit rate.
pub fn compare_trend_fits(
    records: &[AnnotationRecord],
    lag_bins: usize,
) -> Result<TrendComparison> {
    let binning = LagBinning::covering(records, lag_bins)?;
    let mut cells = vec![(0u64, 0u64); lag_bins];
    for r in records {
        let c = &mut cells[binning.index(r.lag)];
        c.0 += 1;
        c.1 += u64::from(r.response);
    }
    let bins = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.0 > 0)
        .map(|(i, &(n, hits))| LagBin {
            lag_bin_center: binning.center(i),
            mean_hit_rate: hits as f64 / n as f64,
            n,
        })
        .collect();
    TrendComparison::from_bins(bins)
}
