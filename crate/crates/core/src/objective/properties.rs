//! Numerical checks of the objective's defining properties.
//!
//! In terms of the cumulative reward `R`, the objective is
//! `F(T, R, w) = R / T - w ln T`. Its level sets satisfy
//! `∂F/∂T + (∂F/∂R)(R/T + w) = 0`: one more step is worth exactly the mean
//! reward plus the cost `w`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_stream, stage};

fn f_total(t: f64, r: f64, w: f64) -> f64 {
    r / t - w * t.ln()
}

fn linear(t: f64, r: f64, w: f64) -> f64 {
    r - w * t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub points: usize,
    /// Largest finite-difference residual of the iso-value condition.
    pub max_pde_residual: f64,
    pub monotonicity_violations: usize,
    /// Pairs whose order flipped under `R → R + bT`.
    pub shift_violations: usize,
    /// Pairs whose order flipped under `(R, w) → (aR, aw)`.
    pub scale_violations: usize,
    /// `(T=100, R=50)` against `(T=101, R=50.3)` at `w = 0.2`: the objective
    /// keeps the first, `R - wT` prefers the dominated second.
    pub counterexample_reproduced: bool,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.max_pde_residual < 1e-6
            && self.monotonicity_violations == 0
            && self.shift_violations == 0
            && self.scale_violations == 0
            && self.counterexample_reproduced
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Checks the iso-value condition, monotonicity, invariance of orderings
/// under location and scale changes of the reward, and the counterexample
/// against a linear cost, on `points` random designs.
pub fn ecp_property_suite(points: usize, seed: u64) -> PropertyReport {
    let mut rng = derive_stream(seed, 0, stage::PROPERTY_SUITE);
    let mut max_res: f64 = 0.0;
    let mut mono = 0;
    let mut shift = 0;
    let mut scale = 0;
    for _ in 0..points {
        let t: f64 = rng.random_range(2.0..10_000.0);
        let r = rng.random_range(0.0..1.0) * t;
        let w: f64 = rng.random_range(1e-3..1.0);

        let ht = 1e-4 * t;
        let hr = 1e-4 * t;
        let df_dt = (f_total(t + ht, r, w) - f_total(t - ht, r, w)) / (2.0 * ht);
        let df_dr = (f_total(t, r + hr, w) - f_total(t, r - hr, w)) / (2.0 * hr);
        max_res = max_res.max((df_dt + df_dr * (r / t + w)).abs());

        // More steps at the same total reward lower the score; more reward
        // at the same length raises it.
        let t2 = t + rng.random_range(1.0..1000.0);
        let r2 = r + rng.random_range(1e-3..10.0);
        if f_total(t2, r, w) >= f_total(t, r, w) || f_total(t, r2, w) <= f_total(t, r, w) {
            mono += 1;
        }

        let tb: f64 = rng.random_range(2.0..10_000.0);
        let rb = rng.random_range(0.0..1.0) * tb;
        let base = sign(f_total(t, r, w) - f_total(tb, rb, w));
        let b: f64 = rng.random_range(-1.0..1.0);
        if sign(f_total(t, r + b * t, w) - f_total(tb, rb + b * tb, w)) != base {
            shift += 1;
        }
        let a: f64 = rng.random_range(0.1..10.0);
        if sign(f_total(t, a * r, a * w) - f_total(tb, a * rb, a * w)) != base {
            scale += 1;
        }
    }
    let counterexample = f_total(100.0, 50.0, 0.2) > f_total(101.0, 50.3, 0.2)
        && linear(101.0, 50.3, 0.2) > linear(100.0, 50.0, 0.2);
    PropertyReport {
        points,
        max_pde_residual: max_res,
        monotonicity_violations: mono,
        shift_violations: shift,
        scale_violations: scale,
        counterexample_reproduced: counterexample,
    }
}
