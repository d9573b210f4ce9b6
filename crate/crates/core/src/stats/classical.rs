//! Uncorrected asymptotic thresholds, as a naive analysis would use them.

use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use super::{Sidedness, TestKind, TestSpec};
use crate::error::{Error, Result};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Classical critical value for `spec` with `k` arms and `n_total` draws.
///
/// t-family statistics use normal quantiles, ANOVA the F quantile with
/// `(k - 1, n_total - k)` degrees of freedom, and the Tukey best-arm
/// statistic the large-sample studentized range quantile divided by √2.
pub fn classical_threshold(spec: &TestSpec, k: usize, n_total: u64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha", "must lie in (0, 1)"));
    }
    let z = std_normal();
    Ok(match spec.kind {
        TestKind::TwoSampleT { .. } | TestKind::TConstant { .. } | TestKind::TControl { .. } => {
            match spec.sidedness() {
                Sidedness::OneSidedRight => z.inverse_cdf(1.0 - alpha),
                Sidedness::TwoSided => z.inverse_cdf(1.0 - alpha / 2.0),
            }
        }
        TestKind::Anova => {
            let df2 = n_total as f64 - k as f64;
            if df2 <= 0.0 {
                return Err(Error::config("horizon", "ANOVA needs more draws than arms"));
            }
            FisherSnedecor::new(k as f64 - 1.0, df2)
                .map_err(|e| Error::config("anova", e.to_string()))?
                .inverse_cdf(1.0 - alpha)
        }
        TestKind::TukeyBest => {
            studentized_range_quantile(k, 1.0 - alpha) / std::f64::consts::SQRT_2
        }
        TestKind::Lrt { .. } => {
            return Err(Error::config(
                "test",
                "the LRT has no classical threshold; calibrate it",
            ))
        }
    })
}

/// CDF of the range of `k` i.i.d. standard normals.
fn range_cdf(k: usize, q: f64) -> f64 {
    let z = std_normal();
    // Simpson's rule on [-9, 9]; the integrand is negligible outside.
    let steps = 3000;
    let (lo, hi) = (-9.0, 9.0);
    let h = (hi - lo) / steps as f64;
    let f = |x: f64| {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        density * (z.cdf(x) - z.cdf(x - q)).max(0.0).powi(k as i32 - 1)
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    (k as f64 * acc * h / 3.0).min(1.0)
}

/// Quantile of the studentized range with `k` groups and infinite degrees of
/// freedom.
pub fn studentized_range_quantile(k: usize, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 12.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if range_cdf(k, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
