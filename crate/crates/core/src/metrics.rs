//! Perturbation-size metrics and the four-statistic summary used in
//! report tables.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Coordinates differing by more than this count toward L0. Guards against
/// representation noise without hiding genuine perturbations.
pub const L0_THRESHOLD: f64 = 1e-9;

/// `(L0, L1, L2)` of `x - x_prime`.
pub fn lp_norms(x: &Tensor, x_prime: &Tensor) -> Result<(f64, f64, f64)> {
    if !x.same_shape(x_prime) {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            got: x_prime.shape().to_vec(),
        });
    }
    let mut l0 = 0.0;
    let mut l1 = 0.0;
    let mut sq = 0.0;
    for (a, b) in x.data().iter().zip(x_prime.data()) {
        let d = (a - b).abs();
        if d > L0_THRESHOLD {
            l0 += 1.0;
        }
        l1 += d;
        sq += d * d;
    }
    Ok((l0, l1, sq.sqrt()))
}

/// Mean, population standard deviation, minimum, and maximum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    /// Stats of `values`; an empty slice yields all zeros.
    pub fn of(values: &[f64]) -> SummaryStats {
        if values.is_empty() {
            return SummaryStats {
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                max: 0.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        SummaryStats {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }
}
