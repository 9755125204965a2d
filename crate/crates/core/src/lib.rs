//! Per-item linear memory-decay curves from memory-game annotations.
//!
//! Each video's recall probability is modelled as a line in lag,
//! `m_t = m_T + alpha * (t - T)`, fitted to binary repeat-detection outcomes
//! by alternating least squares ([`fit`]). Around the fit sit evaluation
//! metrics ([`metrics`]), a seeded experiment simulator ([`sim`]), aggregate
//! analyses ([`analysis`]) and the file formats used by the command line
//! tool ([`io`]).

pub mod analysis;
pub mod error;
pub mod fit;
pub mod io;
pub mod metrics;
pub mod model;
mod rng;
pub mod sim;

pub use analysis::{compare_trend_fits, decile_curves, DecileTable, TrendComparison};
pub use error::{Error, Result};
pub use fit::{fit_all, fit_video, ols_reference, FitTrace};
pub use metrics::{
    curve_mae, evaluate_predictions, evaluate_predictions_with, pearson_r, r_squared, spearman_rc,
    split_half_consistency, ConsistencyReport, CurveGrid, EvalReport,
};
pub use model::{AnnotationRecord, DecayCurve, FitConfig, VideoScoreTable};
pub use sim::{simulate_dataset, simulate_stream_session, ParamDist, SimResult, SimSpec};
