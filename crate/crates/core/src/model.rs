//! Domain types shared by every module, and evaluation of the linear decay
//! law `m_t = m_T + alpha * (t - T)`.
//!
//! Lags are counted in intervening items (videos shown between the first and
//! second presentation). Converting to wall-clock time is left to callers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference lag at which a memorability score is reported.
pub const DEFAULT_REF_LAG: u32 = 80;

/// Slope every fit starts from.
pub const DEFAULT_ALPHA_INIT: f64 = -5e-4;

/// Number of alternating passes run by default.
pub const DEFAULT_ITERATIONS: u32 = 10;

/// Lag range covered by the memory game. Evaluating a curve outside it is an
/// extrapolation; it is allowed but reports flag it.
pub const ANNOTATED_LAG_RANGE: (u32, u32) = (9, 200);

/// Returns true when `lag` lies outside [`ANNOTATED_LAG_RANGE`].
pub fn is_extrapolated(lag: u32) -> bool {
    lag < ANNOTATED_LAG_RANGE.0 || lag > ANNOTATED_LAG_RANGE.1
}

/// One participant's outcome for one repeat presentation of one video.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub participant_id: String,
    /// Number of videos shown between the first and second presentation.
    pub lag: u32,
    /// `true` when the participant detected the repeat.
    pub response: bool,
}

impl AnnotationRecord {
    pub fn new(
        video_id: impl Into<String>,
        participant_id: impl Into<String>,
        lag: u32,
        response: bool,
    ) -> Result<Self> {
        if lag == 0 {
            return Err(Error::InvalidValue("lag must be >= 1".into()));
        }
        Ok(Self {
            video_id: video_id.into(),
            participant_id: participant_id.into(),
            lag,
            response,
        })
    }

    /// Response as a 0/1 value.
    pub fn hit(&self) -> u8 {
        u8::from(self.response)
    }
}

/// Fitted linear decay curve for one video.
///
/// Parameters are stored unclamped: `m_ref` may leave `[0, 1]` and the
/// intercept may exceed one. Clamping happens only when a caller asks for it
/// in [`DecayCurve::score_at_lag`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// Recall probability at `ref_lag`.
    pub m_ref: f64,
    /// Change in recall probability per unit lag.
    pub alpha: f64,
    pub ref_lag: u32,
    /// Number of annotations the curve was fitted from.
    pub n_annotations: u64,
}

impl DecayCurve {
    pub fn new(m_ref: f64, alpha: f64, ref_lag: u32, n_annotations: u64) -> Result<Self> {
        let curve = Self {
            m_ref,
            alpha,
            ref_lag,
            n_annotations,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ref_lag == 0 {
            return Err(Error::InvalidValue("ref_lag must be >= 1".into()));
        }
        if self.n_annotations == 0 {
            return Err(Error::InvalidValue("n_annotations must be >= 1".into()));
        }
        if !self.m_ref.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidValue(format!(
                "curve parameters must be finite (m_ref={}, alpha={})",
                self.m_ref, self.alpha
            )));
        }
        if !self.base_memorability().is_finite() {
            return Err(Error::InvalidValue("intercept is not finite".into()));
        }
        Ok(())
    }

    /// Recall probability at lag `t`, optionally truncated into `[0, 1]`.
    ///
    /// Evaluated with a single rounding, so `score_at_lag(ref_lag, _)`
    /// returns `m_ref` exactly.
    pub fn score_at_lag(&self, t: u32, clamp: bool) -> f64 {
        let dt = f64::from(t) - f64::from(self.ref_lag);
        let raw = self.alpha.mul_add(dt, self.m_ref);
        if clamp {
            raw.clamp(0.0, 1.0)
        } else {
            raw
        }
    }

    /// Unclamped value of the line at a real-valued lag.
    pub fn value_at(&self, t: f64) -> f64 {
        self.alpha.mul_add(t - f64::from(self.ref_lag), self.m_ref)
    }

    /// Intercept of the line at lag 0: `m_ref - alpha * ref_lag`.
    pub fn base_memorability(&self) -> f64 {
        self.value_at(0.0)
    }
}

/// Configuration of the alternating least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub ref_lag: u32,
    pub alpha_init: f64,
    /// Number of passes. When `convergence_tol > 0` this is an upper bound.
    pub iterations: u32,
    /// `0` runs exactly `iterations` passes; otherwise the fit stops once
    /// both parameters move by less than this in a pass.
    pub convergence_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ref_lag: DEFAULT_REF_LAG,
            alpha_init: DEFAULT_ALPHA_INIT,
            iterations: DEFAULT_ITERATIONS,
            convergence_tol: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ref_lag == 0 {
            return Err(Error::InvalidValue("ref_lag must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidValue("iterations must be >= 1".into()));
        }
        if !self.alpha_init.is_finite() {
            return Err(Error::InvalidValue("alpha_init must be finite".into()));
        }
        if !(self.convergence_tol >= 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::InvalidValue(
                "convergence_tol must be a finite non-negative number".into(),
            ));
        }
        Ok(())
    }
}

/// Where a score table came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub fit_config: FitConfig,
    /// Hex SHA-256 of the annotation file the fit consumed, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
}

/// Decay curves keyed by video id, iterated in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VideoScoreTable {
    pub curves: BTreeMap<String, DecayCurve>,
    pub provenance: Option<FitProvenance>,
}

impl VideoScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a curve, rejecting duplicate ids.
    pub fn insert(&mut self, video_id: impl Into<String>, curve: DecayCurve) -> Result<()> {
        let id = video_id.into();
        if self.curves.contains_key(&id) {
            return Err(Error::InvalidValue(format!("duplicate video_id `{id}`")));
        }
        self.curves.insert(id, curve);
        Ok(())
    }

    pub fn get(&self, video_id: &str) -> Option<&DecayCurve> {
        self.curves.get(video_id)
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DecayCurve)> {
        self.curves.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, DecayCurve)> for VideoScoreTable {
    fn from_iter<I: IntoIterator<Item = (String, DecayCurve)>>(iter: I) -> Self {
        Self {
            curves: iter.into_iter().collect(),
            provenance: None,
        }
    }
}
