//! Box-plot summaries.

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Values outside `[q1 - 1.5 IQR, q3 + 1.5 IQR]`, in input order.
    pub outliers: Vec<f64>,
}

impl Summary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantile of sorted data by linear interpolation between order
/// statistics, at position `(n - 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with denominator `n - 1`; 0 when `n < 2`.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

pub fn summary_stats(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let fence = 1.5 * (q3 - q1);
    Ok(Summary {
        n: values.len(),
        mean: mean(values),
        std: sample_std(values),
        median: quantile_sorted(&sorted, 0.5),
        q1,
        q3,
        outliers: values.iter().copied().filter(|&v| v < q1 - fence || v > q3 + fence).collect(),
    })
}
