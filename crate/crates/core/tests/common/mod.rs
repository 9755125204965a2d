#![allow(dead_code)]

use memdecay_core::AnnotationRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One video's annotations: `n` lags uniform over [9, 200] with Bernoulli
/// responses from a random line around lag 80.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Vec<AnnotationRecord> {
    let m: f64 = rng.random_range(0.2..1.0);
    let a: f64 = rng.random_range(-3e-3..5e-4);
    (0..n)
        .map(|j| {
            let lag = rng.random_range(9u32..=200);
            let p = (m + a * (f64::from(lag) - 80.0)).clamp(0.0, 1.0);
            let hit = rng.random::<f64>() < p;
            AnnotationRecord::new("v", format!("p{j}"), lag, hit).unwrap()
        })
        .collect()
}

/// Annotations whose lags come in pairs `80 - d`, `80 + d`.
pub fn symmetric_instance(rng: &mut ChaCha8Rng, pairs: usize) -> Vec<AnnotationRecord> {
    let mut out = Vec::with_capacity(2 * pairs);
    for j in 0..pairs {
        let d = rng.random_range(1u32..=71);
        for lag in [80 - d, 80 + d] {
            let hit = rng.random::<f64>() < 0.7;
            out.push(AnnotationRecord::new("v", format!("p{j}"), lag, hit).unwrap());
        }
    }
    out
}

/// Residual sum of squares by direct per-record summation.
pub fn naive_sse(records: &[AnnotationRecord], m_ref: f64, alpha: f64, ref_lag: u32) -> f64 {
    records
        .iter()
        .map(|r| {
            let pred = m_ref + alpha * (f64::from(r.lag) - f64::from(ref_lag));
            let x = f64::from(r.hit());
            (x - pred) * (x - pred)
        })
        .sum()
}
