//! Per-video decay fitting by alternating least squares.
//!
//! For one video with binary responses `x_j` observed at lags `t_j`, the fit
//! minimises
//!
//! ```text
//! E(alpha, m_T) = sum_j (x_j - m_T - alpha * (t_j - T))^2
//! ```
//!
//! by alternating the two exact coordinate minimisers
//!
//! ```text
//! alpha <- sum_j (t_j - T) (x_j - m_T) / sum_j (t_j - T)^2
//! m_T   <- mean_j (x_j - alpha * (t_j - T))
//! ```
//!
//! Each pass updates `alpha` first, using the current `m_T`, then `m_T` using
//! the new `alpha`. The fit starts from `alpha = alpha_init` and
//! `m_T = mean hit rate`.
//!
//! Responses are reduced to integer sufficient statistics (per-lag counts and
//! hits) before any floating-point work, so the result does not depend on
//! record order and duplicating every record leaves it unchanged bit for bit.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationRecord, DecayCurve, FitConfig, FitProvenance, VideoScoreTable};

/// Per-lag trial and hit counts for one video.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LagHistogram {
    bins: BTreeMap<u32, (u64, u64)>,
}

impl LagHistogram {
    pub fn add(&mut self, lag: u32, response: bool) {
        let e = self.bins.entry(lag).or_insert((0, 0));
        e.0 += 1;
        e.1 += u64::from(response);
    }

    pub fn n(&self) -> u64 {
        self.bins.values().map(|&(n, _)| n).sum()
    }

    pub fn hits(&self) -> u64 {
        self.bins.values().map(|&(_, h)| h).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Number of distinct lags observed.
    pub fn distinct_lags(&self) -> usize {
        self.bins.len()
    }

    /// `(lag, trials, hits)` in increasing lag order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u64, u64)> + '_ {
        self.bins.iter().map(|(&lag, &(n, h))| (lag, n, h))
    }

    fn moments(&self, ref_lag: u32) -> Moments {
        let mut m = Moments::default();
        for (lag, n, h) in self.iter() {
            let x = i128::from(lag) - i128::from(ref_lag);
            let (n, h) = (i128::from(n), i128::from(h));
            m.n += n;
            m.sx += n * x;
            m.sxx += n * x * x;
            m.sy += h;
            m.sxy += h * x;
        }
        m
    }

    /// Residual sum of squares of the line `(m_ref, alpha)` around `ref_lag`.
    ///
    /// Accumulated in double-double arithmetic, so successive states of a
    /// fit compare correctly even when they differ by far less than one f64
    /// ulp of the total.
    pub fn sse(&self, m_ref: f64, alpha: f64, ref_lag: u32) -> f64 {
        let mut total = Dd::ZERO;
        for (lag, n, h) in self.iter() {
            let x = f64::from(lag) - f64::from(ref_lag);
            let p = Dd::from(m_ref) + Dd::product(alpha, x);
            let miss = Dd::from(1.0) - p;
            total = total + Dd::from(h as f64) * miss * miss + Dd::from((n - h) as f64) * p * p;
        }
        total.to_f64()
    }
}

impl<'a> FromIterator<&'a AnnotationRecord> for LagHistogram {
    fn from_iter<I: IntoIterator<Item = &'a AnnotationRecord>>(iter: I) -> Self {
        let mut h = LagHistogram::default();
        for r in iter {
            h.add(r.lag, r.response);
        }
        h
    }
}

/// Unevaluated sum `hi + lo` carrying about 106 bits of precision.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn product(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn normalized(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;
    fn add(self, rhs: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, rhs.hi);
        Dd::normalized(s.hi, s.lo + self.lo + rhs.lo)
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, rhs: Dd) -> Dd {
        self + Dd {
            hi: -rhs.hi,
            lo: -rhs.lo,
        }
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    fn mul(self, rhs: Dd) -> Dd {
        let p = Dd::product(self.hi, rhs.hi);
        Dd::normalized(p.hi, p.lo + self.hi * rhs.lo + self.lo * rhs.hi)
    }
}

/// Exact integer sums over the centred regressor `x = lag - T`.
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: i128,
    sx: i128,
    sxx: i128,
    sy: i128,
    sxy: i128,
}

impl Moments {
    /// One alternating pass from `m_ref`: returns the new `(alpha, m_ref)`.
    /// Requires at least two distinct lags.
    fn pass(&self, m_ref: f64) -> (f64, f64) {
        let (n, sx, sxx, sy, sxy) = (
            self.n as f64,
            self.sx as f64,
            self.sxx as f64,
            self.sy as f64,
            self.sxy as f64,
        );
        let alpha = (-m_ref).mul_add(sx, sxy) / sxx;
        let m_ref = (-alpha).mul_add(sx, sy) / n;
        (alpha, m_ref)
    }
}

/// Applies `passes` alternating updates to `curve` using `hist`.
///
/// With fewer than two distinct lags the curve is returned unchanged.
pub fn refine(hist: &LagHistogram, curve: &DecayCurve, passes: u32) -> DecayCurve {
    let mut out = *curve;
    if hist.distinct_lags() < 2 {
        return out;
    }
    let mom = hist.moments(curve.ref_lag);
    for _ in 0..passes {
        let (a, m) = mom.pass(out.m_ref);
        out.alpha = a;
        out.m_ref = m;
    }
    out
}

/// State after one pass (or the initial state, at index 0 of a trace).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStep {
    pub iteration: u32,
    pub alpha: f64,
    pub m_ref: f64,
    /// Residual sum of squares at this state.
    pub sse: f64,
}

/// Parameter and error history of one fit. `steps[0]` is the initial state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub steps: Vec<FitStep>,
    /// True when the fit stopped on `convergence_tol` rather than on the
    /// iteration budget.
    pub converged: bool,
    /// True when all annotations share one lag and the slope was set to zero.
    pub degenerate_lags: bool,
}

impl FitTrace {
    pub fn initial_sse(&self) -> f64 {
        self.steps.first().map_or(f64::NAN, |s| s.sse)
    }

    pub fn final_sse(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.sse)
    }

    /// Number of passes run (excludes the initial state).
    pub fn passes(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

/// Fits one video's decay curve from its annotations.
pub fn fit_video(records: &[AnnotationRecord], cfg: &FitConfig) -> Result<(DecayCurve, FitTrace)> {
    let first = records
        .first()
        .ok_or_else(|| Error::EmptyInput("no annotations to fit".into()))?;
    if let Some(other) = records.iter().find(|r| r.video_id != first.video_id) {
        return Err(Error::MixedVideos {
            first: first.video_id.clone(),
            other: other.video_id.clone(),
        });
    }
    fit_histogram(&records.iter().collect(), cfg)
}

/// Fits a curve from pre-aggregated lag counts.
pub fn fit_histogram(hist: &LagHistogram, cfg: &FitConfig) -> Result<(DecayCurve, FitTrace)> {
    fit_impl(hist, cfg, true)
}

/// Shared fitting loop. Without `with_sse` the trace records parameters only
/// (its `sse` fields are NaN); the fitted curve is identical either way.
fn fit_impl(
    hist: &LagHistogram,
    cfg: &FitConfig,
    with_sse: bool,
) -> Result<(DecayCurve, FitTrace)> {
    cfg.validate()?;
    if hist.is_empty() {
        return Err(Error::EmptyInput("no annotations to fit".into()));
    }
    let ref_lag = cfg.ref_lag;
    let sse = |m: f64, a: f64| {
        if with_sse {
            hist.sse(m, a, ref_lag)
        } else {
            f64::NAN
        }
    };
    let mom = hist.moments(ref_lag);
    let n = mom.n as f64;
    let sy = mom.sy as f64;

    let mut m_ref = sy / n;
    let mut alpha = cfg.alpha_init;
    let mut trace = FitTrace {
        steps: vec![FitStep {
            iteration: 0,
            alpha,
            m_ref,
            sse: sse(m_ref, alpha),
        }],
        ..FitTrace::default()
    };

    if hist.distinct_lags() == 1 {
        // Slope is unidentifiable; take the minimum-norm solution.
        alpha = 0.0;
        m_ref = sy / n;
        trace.degenerate_lags = true;
        trace.steps.push(FitStep {
            iteration: 1,
            alpha,
            m_ref,
            sse: sse(m_ref, alpha),
        });
    } else {
        for it in 1..=cfg.iterations {
            let (next_alpha, next_m) = mom.pass(m_ref);
            let d_alpha = (next_alpha - alpha).abs();
            let d_m = (next_m - m_ref).abs();
            alpha = next_alpha;
            m_ref = next_m;
            trace.steps.push(FitStep {
                iteration: it,
                alpha,
                m_ref,
                sse: sse(m_ref, alpha),
            });
            if cfg.convergence_tol > 0.0
                && d_alpha < cfg.convergence_tol
                && d_m < cfg.convergence_tol
            {
                trace.converged = true;
                break;
            }
        }
    }

    let curve = DecayCurve::new(m_ref, alpha, ref_lag, mom.n as u64)?;
    Ok((curve, trace))
}

/// Fits every video independently. Output is keyed (and ordered) by video id.
pub fn fit_all(records: &[AnnotationRecord], cfg: &FitConfig) -> Result<VideoScoreTable> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotations to fit".into()));
    }
    // Histograms do not depend on record order, so hash grouping is safe; the
    // table re-sorts by id.
    let mut by_video: HashMap<&str, LagHistogram> = HashMap::new();
    for r in records {
        by_video
            .entry(r.video_id.as_str())
            .or_default()
            .add(r.lag, r.response);
    }
    let fitted: Vec<(String, DecayCurve)> = by_video
        .into_par_iter()
        .map(|(id, hist)| fit_impl(&hist, cfg, false).map(|(c, _)| (id.to_owned(), c)))
        .collect::<Result<_>>()?;
    let mut table: VideoScoreTable = fitted.into_iter().collect();
    table.provenance = Some(FitProvenance {
        fit_config: *cfg,
        input_sha256: None,
    });
    Ok(table)
}

/// Closed-form least-squares line through `(lag - ref_lag, response)`.
///
/// Solves the normal equations in exact integer arithmetic and rounds once,
/// so it serves as an independent check on [`fit_video`]. When every record
/// shares one lag the slope is zero and `m_ref` is the mean response.
pub fn ols_reference(records: &[AnnotationRecord], ref_lag: u32) -> Result<DecayCurve> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no annotations to fit".into()));
    }
    if ref_lag == 0 {
        return Err(Error::InvalidValue("ref_lag must be >= 1".into()));
    }
    let (mut n, mut sx, mut sxx, mut sy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for r in records {
        let x = i128::from(r.lag) - i128::from(ref_lag);
        let y = i128::from(r.hit());
        n += 1;
        sx += x;
        sxx += x * x;
        sy += y;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    let (alpha, m_ref) = if det == 0 {
        (0.0, sy as f64 / n as f64)
    } else {
        let det_f = det as f64;
        (
            (n * sxy - sx * sy) as f64 / det_f,
            (sy * sxx - sx * sxy) as f64 / det_f,
        )
    };
    DecayCurve::new(m_ref, alpha, ref_lag, n as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(lag: u32, response: bool) -> AnnotationRecord {
        AnnotationRecord::new("v", "p", lag, response).unwrap()
    }

    fn converge() -> FitConfig {
        FitConfig {
            iterations: 10_000_000,
            convergence_tol: 1e-12,
            ..FitConfig::default()
        }
    }

    #[test]
    fn symmetric_constant_data() {
        let records = [rec(40, true), rec(120, true)];
        let (c, trace) = fit_video(&records, &FitConfig::default()).unwrap();
        assert_eq!(c.alpha, 0.0);
        assert_eq!(c.m_ref, 1.0);
        assert_eq!(trace.steps[1].alpha, 0.0);
        assert_eq!(trace.steps[1].m_ref, 1.0);
        assert_eq!(trace.passes(), 10);
    }

    #[test]
    fn degenerate_lags_force_zero_slope() {
        let records = [rec(80, true), rec(80, true), rec(80, false), rec(80, true)];
        let (c, trace) = fit_video(&records, &FitConfig::default()).unwrap();
        assert_eq!(c.alpha, 0.0);
        assert_eq!(c.m_ref, 0.75);
        assert!(trace.degenerate_lags);

        let off_ref = [rec(130, true), rec(130, false)];
        let (c, _) = fit_video(&off_ref, &FitConfig::default()).unwrap();
        assert_eq!((c.alpha, c.m_ref), (0.0, 0.5));
    }

    #[test]
    fn single_annotation() {
        let (c, _) = fit_video(&[rec(33, false)], &FitConfig::default()).unwrap();
        assert_eq!((c.alpha, c.m_ref, c.n_annotations), (0.0, 0.0, 1));
    }

    #[test]
    fn ols_two_points() {
        let c = ols_reference(&[rec(60, true), rec(100, false)], 80).unwrap();
        assert_eq!(c.alpha, -0.025);
        assert_eq!(c.m_ref, 0.5);
        let c = ols_reference(&[rec(40, true), rec(120, true)], 80).unwrap();
        assert_eq!((c.alpha, c.m_ref), (0.0, 1.0));
        let c = ols_reference(&[rec(150, true), rec(150, false), rec(150, false)], 80).unwrap();
        assert_eq!(c.alpha, 0.0);
        assert_eq!(c.m_ref, 1.0 / 3.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_video(&[], &FitConfig::default()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(ols_reference(&[], 80), Err(Error::EmptyInput(_))));
        assert!(matches!(
            fit_all(&[], &FitConfig::default()),
            Err(Error::EmptyInput(_))
        ));
        let mixed = [
            rec(10, true),
            AnnotationRecord::new("w", "p", 10, true).unwrap(),
        ];
        assert!(matches!(
            fit_video(&mixed, &FitConfig::default()),
            Err(Error::MixedVideos { .. })
        ));
        let bad = FitConfig {
            iterations: 0,
            ..FitConfig::default()
        };
        assert!(fit_video(&[rec(10, true)], &bad).is_err());
    }

    #[test]
    fn fit_all_groups_and_orders() {
        let mut records = Vec::new();
        for id in ["b", "a"] {
            records.push(AnnotationRecord::new(id, "p1", 40, true).unwrap());
            records.push(AnnotationRecord::new(id, "p2", 120, true).unwrap());
        }
        let table = fit_all(&records, &FitConfig::default()).unwrap();
        let ids: Vec<_> = table.iter().map(|(id, _)| id).collect();
        assert_eq!(ids, ["a", "b"]);
        for (_, c) in table.iter() {
            assert_eq!((c.alpha, c.m_ref), (0.0, 1.0));
        }
    }

    #[test]
    fn singleton_table_matches_fit_video() {
        let records = [
            rec(20, true),
            rec(90, false),
            rec(150, true),
            rec(199, false),
        ];
        let table = fit_all(&records, &FitConfig::default()).unwrap();
        let (c, _) = fit_video(&records, &FitConfig::default()).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.get("v"), Some(&c));
    }

    #[test]
    fn early_stop_reports_convergence() {
        let records = [
            rec(20, true),
            rec(90, false),
            rec(150, true),
            rec(199, false),
        ];
        let (_, trace) = fit_video(&records, &converge()).unwrap();
        assert!(trace.converged);
        assert!(trace.passes() < 10_000);
    }

    fn arb_records() -> impl Strategy<Value = Vec<AnnotationRecord>> {
        prop::collection::vec((9u32..=200, any::<bool>()), 1..120)
            .prop_map(|v| v.into_iter().map(|(l, r)| rec(l, r)).collect())
    }

    proptest! {
        #[test]
        fn sse_never_increases(records in arb_records()) {
            let (_, trace) = fit_video(&records, &FitConfig::default()).unwrap();
            for w in trace.steps.windows(2) {
                prop_assert!(w[1].sse <= w[0].sse, "{:?}", trace.steps);
            }
        }

        #[test]
        fn converged_fit_matches_ols(records in arb_records()) {
            let (c, _) = fit_video(&records, &converge()).unwrap();
            let o = ols_reference(&records, 80).unwrap();
            prop_assert!((c.alpha - o.alpha).abs() < 1e-9);
            prop_assert!((c.m_ref - o.m_ref).abs() < 1e-9);
        }

        #[test]
        fn ols_is_a_fixed_point(records in arb_records()) {
            let o = ols_reference(&records, 80).unwrap();
            let hist: LagHistogram = records.iter().collect();
            let next = refine(&hist, &o, 1);
            prop_assert!((next.alpha - o.alpha).abs() <= 1e-15, "{} vs {}", next.alpha, o.alpha);
            prop_assert!((next.m_ref - o.m_ref).abs() <= 1e-13, "{} vs {}", next.m_ref, o.m_ref);
        }

        #[test]
        fn order_and_duplication_invariant(records in arb_records(), seed in any::<u64>()) {
            let cfg = FitConfig::default();
            let (base, _) = fit_video(&records, &cfg).unwrap();
            let mut shuffled = records.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let (perm, _) = fit_video(&shuffled, &cfg).unwrap();
            prop_assert_eq!(base.alpha, perm.alpha);
            prop_assert_eq!(base.m_ref, perm.m_ref);

            let doubled: Vec<_> = records.iter().chain(records.iter()).cloned().collect();
            let (dup, _) = fit_video(&doubled, &cfg).unwrap();
            prop_assert_eq!(base.alpha, dup.alpha);
            prop_assert_eq!(base.m_ref, dup.m_ref);
        }
    }
}
