//! Paired t-test on per-subject differences.
//!
//! `S_d` is the sample standard deviation `sqrt(sum (d_j - mean)^2 / (n - 1))`
//! and `t0 = mean / (S_d / sqrt(n))` with `n - 1` degrees of freedom.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{AnalysisError, Result};
use crate::stats::{mean, sample_std};

/// Alternative hypothesis about the mean difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// Mean difference greater than zero.
    #[default]
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub t0: f64,
    pub df: usize,
    pub p_value: f64,
    pub mean_diff: f64,
    pub s_d: f64,
    pub alternative: Alternative,
}

/// Student-t CDF with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1").cdf(t)
}

/// Upper tail `P(T > t)`, computed without cancellation.
pub fn student_t_sf(t: f64, df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1").sf(t)
}

pub fn paired_t_test(diffs: &[f64], alternative: Alternative) -> Result<PairedTestResult> {
    let n = diffs.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData(n));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mean_diff = mean(diffs);
    let s_d = sample_std(diffs);
    if s_d == 0.0 {
        return Err(AnalysisError::DegenerateVariance);
    }
    let t0 = mean_diff / (s_d / (n as f64).sqrt());
    let df = n - 1;
    let p_value = match alternative {
        Alternative::Greater => student_t_sf(t0, df),
        Alternative::TwoSided => (2.0 * student_t_sf(t0.abs(), df)).min(1.0),
    };
    Ok(PairedTestResult { n, t0, df, p_value, mean_diff, s_d, alternative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// `P(T <= t)` for integer `df` from the finite trigonometric series
    /// for `P(|T| < t)`.
    fn cdf_oracle(t: f64, df: usize) -> f64 {
        let theta = (t.abs() / (df as f64).sqrt()).atan();
        let (s, c) = theta.sin_cos();
        let c2 = c * c;
        let a = if df % 2 == 1 {
            let mut sum = 0.0;
            if df > 1 {
                let mut term = 1.0;
                sum = 1.0;
                let mut k = 2;
                while k <= df - 3 {
                    term *= k as f64 / (k + 1) as f64 * c2;
                    sum += term;
                    k += 2;
                }
                sum *= s * c;
            }
            2.0 / PI * (theta + sum)
        } else {
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut k = 1;
            while k + 1 < df {
                term *= k as f64 / (k + 1) as f64 * c2;
                sum += term;
                k += 2;
            }
            s * sum
        };
        if t >= 0.0 {
            0.5 + 0.5 * a
        } else {
            0.5 - 0.5 * a
        }
    }

    #[test]
    fn oracle_sanity() {
        assert!((cdf_oracle(1.0, 1) - 0.75).abs() < 1e-15);
        // df = 2: 1/2 + t / (2 sqrt(2 + t^2)).
        assert!((cdf_oracle(1.5, 2) - (0.5 + 1.5 / (2.0 * (2.0f64 + 2.25).sqrt()))).abs() < 1e-15);
    }

    #[test]
    fn cdf_matches_series_on_grid() {
        for df in 1..=30 {
            for i in -40..=40 {
                let t = i as f64 * 0.25;
                let (got, want) = (student_t_cdf(t, df), cdf_oracle(t, df));
                assert!((got - want).abs() < 1e-10, "df={df} t={t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn hand_example() {
        let r = paired_t_test(&[2.0, 0.0, 2.0, 0.0], Alternative::Greater).unwrap();
        assert_eq!((r.n, r.df, r.mean_diff), (4, 3, 1.0));
        assert!((r.s_d - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r.t0 - 3f64.sqrt()).abs() < 1e-12);
        assert!((r.t0 - 1.7321).abs() < 1e-4);
        assert!((r.p_value - (1.0 - cdf_oracle(r.t0, 3))).abs() < 1e-10);
        let two = paired_t_test(&[2.0, 0.0, 2.0, 0.0], Alternative::TwoSided).unwrap();
        assert!((two.p_value - 2.0 * r.p_value).abs() < 1e-15);
    }

    #[test]
    fn zero_mean_and_errors() {
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0], Alternative::Greater).unwrap();
        assert_eq!(r.t0, 0.0);
        assert!((r.p_value - 0.5).abs() < 1e-15);
        assert!(matches!(paired_t_test(&[3.0; 5], Alternative::Greater), Err(AnalysisError::DegenerateVariance)));
        assert!(matches!(paired_t_test(&[1.0], Alternative::Greater), Err(AnalysisError::InsufficientData(1))));
        assert!(matches!(paired_t_test(&[], Alternative::Greater), Err(AnalysisError::InsufficientData(0))));
    }

    #[test]
    fn report_round_trips_reported_magnitudes() {
        for (t0, p, df) in [(25.61, 1.6e-12, 13), (4.99, 2e-4, 13)] {
            let r = PairedTestResult { n: df + 1, t0, df, p_value: p, mean_diff: 1.0, s_d: 0.5, alternative: Alternative::Greater };
            let back: PairedTestResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
            assert_eq!(back, r);
        }
        // The p-value of t = 25.61 at 13 df is of the reported order.
        let p = student_t_sf(25.61, 13);
        assert!(p > 1e-13 && p < 1e-11, "{p}");
    }

    proptest! {
        #[test]
        fn antisymmetric(d in prop::collection::vec(-50.0f64..50.0, 2..20)) {
            prop_assume!(sample_std(&d) > 1e-6);
            let a = paired_t_test(&d, Alternative::Greater).unwrap();
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            let b = paired_t_test(&neg, Alternative::Greater).unwrap();
            prop_assert!((a.t0 + b.t0).abs() <= 1e-9 * (1.0 + a.t0.abs()));
            prop_assert!((a.p_value - (1.0 - b.p_value)).abs() < 1e-9);
        }

        #[test]
        fn scale_invariant(d in prop::collection::vec(-50.0f64..50.0, 2..20), k in 0.01f64..100.0) {
            prop_assume!(sample_std(&d) > 1e-6);
            let a = paired_t_test(&d, Alternative::Greater).unwrap();
            let scaled: Vec<f64> = d.iter().map(|x| k * x).collect();
            let b = paired_t_test(&scaled, Alternative::Greater).unwrap();
            prop_assert!((a.t0 - b.t0).abs() <= 1e-9 * (1.0 + a.t0.abs()));
        }
    }
}
