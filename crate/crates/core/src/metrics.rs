//! Evaluation statistics: rank and product-moment correlation, R² at fixed
//! lags, mean absolute error between decay curves, and split-half human
//! consistency.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    is_extrapolated, AnnotationRecord, DecayCurve, VideoScoreTable, DEFAULT_REF_LAG,
};
use crate::rng::{stream_rng, Domain};

pub const FORMAT_VERSION: u32 = 1;

/// Lags at which R² is reported by default.
pub const DEFAULT_EVAL_LAGS: [u32; 3] = [40, 80, 160];

/// Split count used for human consistency.
pub const DEFAULT_SPLITS: usize = 25;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean(values: &[f64]) -> f64 {
    neumaier_sum(values.iter().copied()) / values.len() as f64
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("inputs must be finite".into()));
    }
    Ok(())
}

/// 1-based ranks with ties given the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let sab = neumaier_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    let saa = neumaier_sum(a.iter().map(|x| (x - ma) * (x - ma)));
    let sbb = neumaier_sum(b.iter().map(|y| (y - mb) * (y - mb)));
    if saa == 0.0 {
        return Err(Error::ZeroVariance("first input"));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance("second input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson_unchecked(a, b)
}

/// Spearman rank correlation: Pearson correlation of midranks.
pub fn spearman_rc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson_unchecked(&average_ranks(a), &average_ranks(b))
}

/// Coefficient of determination `1 - SS_res / SS_tot`. Can be negative.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let mt = mean(truth);
    let ss_tot = neumaier_sum(truth.iter().map(|t| (t - mt) * (t - mt)));
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance("truth"));
    }
    let ss_res = neumaier_sum(truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)));
    Ok(1.0 - ss_res / ss_tot)
}

/// Evenly spaced, inclusive grid of lags used to compare two curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveGrid {
    pub lag_lo: u32,
    pub lag_hi: u32,
    pub n_samples: usize,
}

impl Default for CurveGrid {
    fn default() -> Self {
        Self {
            lag_lo: 40,
            lag_hi: 180,
            n_samples: 100,
        }
    }
}

impl CurveGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lag_lo >= self.lag_hi {
            return Err(Error::InvalidRange(format!(
                "lag_lo ({}) must be below lag_hi ({})",
                self.lag_lo, self.lag_hi
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidRange(format!(
                "need at least 2 samples, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    pub fn lags(&self) -> impl Iterator<Item = f64> + '_ {
        let lo = f64::from(self.lag_lo);
        let span = f64::from(self.lag_hi) - lo;
        let last = (self.n_samples - 1) as f64;
        (0..self.n_samples).map(move |i| lo + span * i as f64 / last)
    }
}

/// Mean absolute difference between two unclamped curves over `grid`.
pub fn curve_mae(truth: &DecayCurve, pred: &DecayCurve, grid: &CurveGrid) -> Result<f64> {
    grid.validate()?;
    let gap = |t: f64| -> f64 {
        if truth.ref_lag == pred.ref_lag {
            // Subtract the lines before evaluating them: a pure offset stays exact.
            let dt = t - f64::from(truth.ref_lag);
            (truth.alpha - pred.alpha)
                .mul_add(dt, truth.m_ref - pred.m_ref)
                .abs()
        } else {
            (truth.value_at(t) - pred.value_at(t)).abs()
        }
    };
    // Shifted mean: identical gaps average to themselves without rounding.
    let first = gap(f64::from(grid.lag_lo));
    let total = neumaier_sum(grid.lags().map(|t| gap(t) - first));
    Ok(first + total / grid.n_samples as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Lags at which R² is computed.
    pub eval_lags: Vec<u32>,
    /// Lag whose predicted score is used for ranking.
    pub score_lag: u32,
    pub mae_grid: CurveGrid,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            eval_lags: DEFAULT_EVAL_LAGS.to_vec(),
            score_lag: DEFAULT_REF_LAG,
            mae_grid: CurveGrid::default(),
        }
    }
}

/// Comparison of predicted curves against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub n_videos: usize,
    /// Spearman correlation of scores at `score_lag`.
    pub rank_correlation: f64,
    pub score_lag: u32,
    pub r2_by_lag: BTreeMap<u32, f64>,
    /// Mean over videos of the per-video curve MAE.
    pub curve_mae: f64,
    pub mae_grid: CurveGrid,
    /// Requested lags that fall outside the annotated lag range.
    pub extrapolated_lags: Vec<u32>,
}

/// [`evaluate_predictions_with`] using the default score lag and MAE grid.
pub fn evaluate_predictions(
    truth: &VideoScoreTable,
    pred: &VideoScoreTable,
    eval_lags: &[u32],
) -> Result<EvalReport> {
    let opts = EvalOptions {
        eval_lags: eval_lags.to_vec(),
        ..EvalOptions::default()
    };
    evaluate_predictions_with(truth, pred, &opts)
}

/// Scores every predicted video against its ground-truth curve.
pub fn evaluate_predictions_with(
    truth: &VideoScoreTable,
    pred: &VideoScoreTable,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    opts.mae_grid.validate()?;
    if opts.score_lag == 0 || opts.eval_lags.contains(&0) {
        return Err(Error::InvalidValue("lags must be >= 1".into()));
    }
    let missing: Vec<String> = pred
        .iter()
        .filter(|(id, _)| truth.get(id).is_none())
        .map(|(id, _)| id.to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingVideos(missing));
    }
    let pairs: Vec<(&DecayCurve, &DecayCurve)> = pred
        .iter()
        .map(|(id, p)| (truth.get(id).expect("checked above"), p))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            got: pairs.len(),
        });
    }

    let at = |lag: u32| -> (Vec<f64>, Vec<f64>) {
        pairs
            .iter()
            .map(|(t, p)| (t.score_at_lag(lag, false), p.score_at_lag(lag, false)))
            .unzip()
    };

    let (ts, ps) = at(opts.score_lag);
    let rank_correlation = spearman_rc(&ts, &ps)?;

    let mut lags = opts.eval_lags.clone();
    lags.sort_unstable();
    lags.dedup();
    let mut r2_by_lag = BTreeMap::new();
    for &lag in &lags {
        let (t, p) = at(lag);
        r2_by_lag.insert(lag, r_squared(&t, &p)?);
    }

    let maes = pairs
        .iter()
        .map(|(t, p)| curve_mae(t, p, &opts.mae_grid))
        .collect::<Result<Vec<_>>>()?;

    let mut extrapolated_lags: Vec<u32> = lags
        .iter()
        .copied()
        .chain([opts.score_lag, opts.mae_grid.lag_lo, opts.mae_grid.lag_hi])
        .filter(|&l| is_extrapolated(l))
        .collect();
    extrapolated_lags.sort_unstable();
    extrapolated_lags.dedup();

    Ok(EvalReport {
        format_version: FORMAT_VERSION,
        n_videos: pairs.len(),
        rank_correlation,
        score_lag: opts.score_lag,
        r2_by_lag,
        curve_mae: mean(&maes),
        mae_grid: opts.mae_grid,
        extrapolated_lags,
    })
}

/// Result of repeatedly splitting the participant pool in two and comparing
/// the rankings each half produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub format_version: u32,
    pub mean_rho: f64,
    pub per_split_rho: Vec<f64>,
    pub split_seed: u64,
    pub n_participants: usize,
    pub n_videos: usize,
    /// Per split, videos dropped because one half never annotated them.
    pub dropped_videos: Vec<usize>,
}

/// Split-half consistency of per-video hit-rate rankings.
///
/// For each split the sorted participant pool is shuffled with a stream
/// derived from `(seed, split index)`; the first `ceil(P / 2)` participants
/// form one half. Each half ranks videos by raw hit rate and the two rankings
/// are compared with [`spearman_rc`].
pub fn split_half_consistency(
    records: &[AnnotationRecord],
    n_splits: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotations".into()));
    }
    if n_splits == 0 {
        return Err(Error::InvalidValue("n_splits must be >= 1".into()));
    }
    let mut participants: Vec<&str> = records.iter().map(|r| r.participant_id.as_str()).collect();
    participants.sort_unstable();
    participants.dedup();
    if participants.len() < 2 {
        return Err(Error::TooFewParticipants(participants.len()));
    }
    let mut videos: Vec<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    videos.sort_unstable();
    videos.dedup();

    let p_index: HashMap<&str, usize> = participants
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, i))
        .collect();
    let v_index: HashMap<&str, usize> = videos.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let coded: Vec<(usize, usize, bool)> = records
        .iter()
        .map(|r| {
            (
                v_index[r.video_id.as_str()],
                p_index[r.participant_id.as_str()],
                r.response,
            )
        })
        .collect();

    let n_p = participants.len();
    let first_half = n_p.div_ceil(2);
    let outcomes: Vec<(f64, usize)> = (0..n_splits)
        .into_par_iter()
        .map(|split| {
            let mut order: Vec<usize> = (0..n_p).collect();
            order.shuffle(&mut stream_rng(seed, Domain::Split, split as u64));
            let mut in_first = vec![false; n_p];
            for &p in &order[..first_half] {
                in_first[p] = true;
            }
            // [trials, hits] per half.
            let mut counts = vec![[[0u64; 2]; 2]; videos.len()];
            for &(v, p, hit) in &coded {
                let half = usize::from(!in_first[p]);
                counts[v][half][0] += 1;
                counts[v][half][1] += u64::from(hit);
            }
            let mut a = Vec::with_capacity(videos.len());
            let mut b = Vec::with_capacity(videos.len());
            let mut dropped = 0;
            for c in &counts {
                if c[0][0] == 0 || c[1][0] == 0 {
                    dropped += 1;
                    continue;
                }
                a.push(c[0][1] as f64 / c[0][0] as f64);
                b.push(c[1][1] as f64 / c[1][0] as f64);
            }
            spearman_rc(&a, &b).map(|rho| (rho, dropped))
        })
        .collect::<Result<_>>()?;

    let per_split_rho: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    Ok(ConsistencyReport {
        format_version: FORMAT_VERSION,
        mean_rho: mean(&per_split_rho),
        per_split_rho,
        split_seed: seed,
        n_participants: n_p,
        n_videos: videos.len(),
        dropped_videos: outcomes.iter().map(|o| o.1).collect(),
    })
}
