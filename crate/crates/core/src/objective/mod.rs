//! The ECP-reward objective and design optimization.
//!
//! A design run for `T` steps with mean reward `r̄` scores
//! `F(T, r̄, w) = r̄ - w ln T`, where `w` is the experiment extension cost.
//! [`obj_opt`] evaluates a family of policies indexed by a parameter `φ`,
//! finds for each the shortest horizon meeting the power target, and picks
//! the parameter with the highest score.

mod design;
mod properties;

pub use design::{
    evaluate_designs, evaluate_designs_with_progress, obj_opt, post_experiment_eval,
    sensitivity_sweep, sensitivity_sweep_with_progress, DesignEvaluation, DesignProblem,
    PolicyFamily, PostEval, SensitivityReport, SensitivityRow,
};
pub use properties::{ecp_property_suite, PropertyReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ECP-reward `mean_reward - w ln T`.
pub fn ecp(horizon: u64, mean_reward: f64, w: f64) -> f64 {
    mean_reward - w * (horizon as f64).ln()
}

/// Outcome of the power analysis for one parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub phi: f64,
    /// Shortest horizon meeting the power target, `None` when infeasible
    /// within the cap.
    pub horizon: Option<u64>,
    /// Mean reward at `horizon`, or at the cap when infeasible.
    pub mean_reward: f64,
}

impl DesignPoint {
    pub fn is_feasible(&self) -> bool {
        self.horizon.is_some()
    }

    pub fn ecp(&self, w: f64) -> Option<f64> {
        self.horizon.map(|t| ecp(t, self.mean_reward, w))
    }
}

/// A feasible design with its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDesign {
    pub phi: f64,
    pub horizon: u64,
    pub mean_reward: f64,
    pub ecp: f64,
}

/// The best design for one cost `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecommendation {
    pub w: f64,
    pub phi: f64,
    pub horizon: u64,
    pub mean_reward: f64,
    pub ecp: f64,
    pub feasible_set: Vec<ScoredDesign>,
    /// Parameters that missed the power target within the cap.
    pub infeasible: Vec<f64>,
}

/// Scores every feasible point and picks the maximizer, breaking ties
/// towards the smaller parameter.
pub fn recommend(points: &[DesignPoint], w: f64) -> Result<DesignRecommendation> {
    let mut feasible: Vec<ScoredDesign> = points
        .iter()
        .filter_map(|p| {
            p.horizon.map(|t| ScoredDesign {
                phi: p.phi,
                horizon: t,
                mean_reward: p.mean_reward,
                ecp: ecp(t, p.mean_reward, w),
            })
        })
        .collect();
    feasible.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    let best = best_index(feasible.iter().map(|d| d.ecp)).ok_or(Error::NoFeasibleDesign)?;
    let b = feasible[best];
    let mut infeasible: Vec<f64> = points
        .iter()
        .filter(|p| !p.is_feasible())
        .map(|p| p.phi)
        .collect();
    infeasible.sort_by(f64::total_cmp);
    Ok(DesignRecommendation {
        w,
        phi: b.phi,
        horizon: b.horizon,
        mean_reward: b.mean_reward,
        ecp: b.ecp,
        feasible_set: feasible,
        infeasible,
    })
}

/// First index of the maximum.
fn best_index(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// `n` log-spaced costs on `[lo, hi]`.
pub fn log_w_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// 50 log-spaced costs on `[1e-4, 1]`.
pub fn default_w_grid() -> Vec<f64> {
    log_w_grid(1e-4, 1.0, 50)
}

/// Relative score of one design across costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeSeries {
    pub phi: f64,
    pub values: Vec<f64>,
}

/// `F(T_φ, r̄_φ, w) - max_φ' F(T_φ', r̄_φ', w)` for every feasible design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEcpCurve {
    pub w: Vec<f64>,
    pub series: Vec<RelativeSeries>,
    /// Optimal parameter at each cost.
    pub best_phi: Vec<f64>,
}

pub fn relative_ecp_curve(feasible: &[ScoredDesign], w_grid: &[f64]) -> Result<RelativeEcpCurve> {
    if feasible.is_empty() {
        return Err(Error::NoFeasibleDesign);
    }
    let mut designs = feasible.to_vec();
    designs.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    let mut series: Vec<RelativeSeries> = designs
        .iter()
        .map(|d| RelativeSeries {
            phi: d.phi,
            values: Vec::with_capacity(w_grid.len()),
        })
        .collect();
    let mut best_phi = Vec::with_capacity(w_grid.len());
    for &w in w_grid {
        let scores: Vec<f64> = designs
            .iter()
            .map(|d| ecp(d.horizon, d.mean_reward, w))
            .collect();
        let best = best_index(scores.iter().copied()).expect("nonempty");
        for (s, score) in series.iter_mut().zip(&scores) {
            s.values.push(score - scores[best]);
        }
        best_phi.push(designs[best].phi);
    }
    Ok(RelativeEcpCurve {
        w: w_grid.to_vec(),
        series,
        best_phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_table_scores() {
        // 0.81 - 0.01 ln 906 and friends, rounded to four decimals.
        let r = |x: f64| (x * 1e4).round() / 1e4;
        assert_eq!(r(ecp(906, 0.8100, 0.01)), 0.7419);
        assert_eq!(r(ecp(4186, 0.8251, 0.01)), 0.7417);
        assert_eq!(r(ecp(1338, 0.8185, 0.01)), 0.7465);
        assert_eq!(ecp(1000, 0.7, 0.0), 0.7);
    }

    fn points() -> Vec<DesignPoint> {
        vec![
            DesignPoint {
                phi: 0.0,
                horizon: Some(4000),
                mean_reward: 0.825,
            },
            DesignPoint {
                phi: 0.3,
                horizon: Some(1300),
                mean_reward: 0.818,
            },
            DesignPoint {
                phi: 0.6,
                horizon: None,
                mean_reward: 0.5,
            },
            DesignPoint {
                phi: 1.0,
                horizon: Some(900),
                mean_reward: 0.81,
            },
        ]
    }

    #[test]
    fn recommendation_depends_on_cost() {
        let p = points();
        assert_eq!(recommend(&p, 0.0).unwrap().phi, 0.0);
        assert_eq!(recommend(&p, 0.01).unwrap().phi, 0.3);
        let huge = recommend(&p, 1e6).unwrap();
        assert_eq!(huge.phi, 1.0);
        assert_eq!(huge.infeasible, vec![0.6]);
        assert_eq!(huge.feasible_set.len(), 3);
        let none = [DesignPoint {
            phi: 0.1,
            horizon: None,
            mean_reward: 0.0,
        }];
        assert!(matches!(
            recommend(&none, 0.1),
            Err(Error::NoFeasibleDesign)
        ));
    }

    #[test]
    fn ties_go_to_smaller_parameter() {
        let p = [
            DesignPoint {
                phi: 0.5,
                horizon: Some(100),
                mean_reward: 0.5,
            },
            DesignPoint {
                phi: 0.2,
                horizon: Some(100),
                mean_reward: 0.5,
            },
        ];
        assert_eq!(recommend(&p, 0.1).unwrap().phi, 0.2);
    }

    #[test]
    fn relative_curve_touches_zero_once() {
        let rec = recommend(&points(), 0.01).unwrap();
        let grid = default_w_grid();
        assert_eq!(grid.len(), 50);
        assert!((grid[0] - 1e-4).abs() < 1e-18 && (grid[49] - 1.0).abs() < 1e-12);
        let c = relative_ecp_curve(&rec.feasible_set, &grid).unwrap();
        for (j, &w) in c.w.iter().enumerate() {
            let zeros = c.series.iter().filter(|s| s.values[j] == 0.0).count();
            assert!(zeros >= 1);
            assert!(c.series.iter().all(|s| s.values[j] <= 0.0));
            assert_eq!(c.best_phi[j], recommend(&points(), w).unwrap().phi);
        }
        assert_eq!(c.best_phi[0], 0.0);
        assert_eq!(*c.best_phi.last().unwrap(), 1.0);
    }
}
