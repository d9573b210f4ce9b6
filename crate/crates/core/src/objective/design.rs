use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::{power_analysis_with_progress, Calibration, PowerConfig, PowerCurve, PriorSpec};
use crate::rng::{derive_seed, derive_stream, stage};
use crate::sim::{run, ArmVector, Policy, RunMode};
use crate::stats::TestSpec;

use super::{ecp, recommend, DesignPoint, DesignRecommendation};

/// One-parameter policy family searched by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    /// ε-TS: ε = 0 is Thompson sampling, ε = 1 uniform randomization.
    EpsThompson,
    EpsGreedy,
}

impl PolicyFamily {
    pub fn policy(self, phi: f64) -> Policy {
        match self {
            PolicyFamily::EpsThompson => Policy::eps_thompson(phi),
            PolicyFamily::EpsGreedy => Policy::eps_greedy(phi),
        }
    }
}

/// Everything the optimizer needs apart from the cost `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignProblem {
    pub k: usize,
    pub prior: PriorSpec,
    pub spec: TestSpec,
    pub family: PolicyFamily,
    pub phis: Vec<f64>,
    pub alpha: f64,
    /// Target Type-II error β0.
    pub beta_target: f64,
    /// Horizon cap T_max.
    pub t_max: u64,
    pub replications: usize,
    pub grid_points: usize,
    #[serde(default)]
    pub null_replications: Option<usize>,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub calibration: Calibration,
}

impl DesignProblem {
    pub fn validate(&self) -> Result<()> {
        if self.phis.is_empty() {
            return Err(Error::config("phis", "must be nonempty"));
        }
        if !(self.beta_target > 0.0 && self.beta_target < 1.0) {
            return Err(Error::config("beta_target", "must lie in (0, 1)"));
        }
        if self.t_max < 2 {
            return Err(Error::config("t_max", "must be ≥ 2"));
        }
        for &phi in &self.phis {
            self.power_config(phi).validate()?;
        }
        Ok(())
    }

    pub fn power_config(&self, phi: f64) -> PowerConfig {
        PowerConfig {
            k: self.k,
            prior: self.prior.clone(),
            horizon: self.t_max,
            policy: self.family.policy(phi),
            spec: self.spec.clone(),
            alpha: self.alpha,
            replications: self.replications,
            grid_points: self.grid_points,
            null_replications: self.null_replications,
            mode: self.mode,
            calibration: self.calibration,
        }
    }
}

/// Power curves and design points for every parameter, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEvaluation {
    pub points: Vec<DesignPoint>,
    pub curves: Vec<PowerCurve>,
}

pub fn evaluate_designs(problem: &DesignProblem, seed: u64) -> Result<DesignEvaluation> {
    evaluate_designs_with_progress(problem, seed, &|_| {})
}

/// Runs the power analysis of every parameter. All parameters share one
/// seed so their comparisons use common random numbers.
pub fn evaluate_designs_with_progress(
    problem: &DesignProblem,
    seed: u64,
    progress: &(dyn Fn(f64) + Sync),
) -> Result<DesignEvaluation> {
    problem.validate()?;
    let shared = derive_seed(seed, 0, stage::POLICY_PARAMETER);
    let n = problem.phis.len() as f64;
    let mut points = Vec::with_capacity(problem.phis.len());
    let mut curves = Vec::with_capacity(problem.phis.len());
    for (i, &phi) in problem.phis.iter().enumerate() {
        let inner = |f: f64| progress((i as f64 + f) / n);
        let curve = power_analysis_with_progress(&problem.power_config(phi), shared, &inner)?;
        let horizon = curve.min_horizon(problem.beta_target);
        points.push(DesignPoint {
            phi,
            horizon,
            mean_reward: curve.mean_reward_at(horizon.unwrap_or(problem.t_max)),
        });
        curves.push(curve);
    }
    progress(1.0);
    Ok(DesignEvaluation { points, curves })
}

/// Finds the parameter maximizing the ECP-reward among designs that reach
/// the power target within the cap.
pub fn obj_opt(problem: &DesignProblem, w: f64, seed: u64) -> Result<DesignRecommendation> {
    recommend(&evaluate_designs(problem, seed)?.points, w)
}

/// Score of a design point; a design that never reaches the power target
/// runs to the cap.
fn capped_ecp(p: &DesignPoint, t_max: u64, w: f64) -> f64 {
    ecp(p.horizon.unwrap_or(t_max), p.mean_reward, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub label: String,
    pub prior: PriorSpec,
    /// Best parameter under this prior.
    pub true_best_phi: f64,
    /// Loss of the parameter chosen under the design prior.
    pub mis_opt_loss: f64,
    /// Loss averaged over a uniformly chosen parameter.
    pub random_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub chosen_phi: f64,
    pub rows: Vec<SensitivityRow>,
}

/// Optimizes under `problem.prior`, then measures the ECP-reward lost by
/// that choice under each alternative prior. Designs that miss the power
/// target are scored at the cap.
pub fn sensitivity_sweep(
    problem: &DesignProblem,
    true_priors: &[(String, PriorSpec)],
    w: f64,
    seed: u64,
) -> Result<SensitivityReport> {
    sensitivity_sweep_with_progress(problem, true_priors, w, seed, &|_| {})
}

pub fn sensitivity_sweep_with_progress(
    problem: &DesignProblem,
    true_priors: &[(String, PriorSpec)],
    w: f64,
    seed: u64,
    progress: &(dyn Fn(f64) + Sync),
) -> Result<SensitivityReport> {
    if true_priors.is_empty() {
        return Err(Error::config("true_priors", "must be nonempty"));
    }
    let chosen = obj_opt(problem, w, seed)?.phi;
    let n = (true_priors.len() + 1) as f64;
    progress(1.0 / n);
    let rows = true_priors
        .iter()
        .enumerate()
        .map(|(i, (label, prior))| {
            let p = DesignProblem {
                prior: prior.clone(),
                ..problem.clone()
            };
            let eval = evaluate_designs(&p, seed)?;
            let scores: Vec<f64> = eval
                .points
                .iter()
                .map(|d| capped_ecp(d, p.t_max, w))
                .collect();
            let best = recommend(&eval.points, w)?;
            let chosen_score = eval
                .points
                .iter()
                .zip(&scores)
                .find(|(d, _)| d.phi == chosen)
                .map(|(_, s)| *s)
                .expect("chosen parameter is in the grid");
            let random = scores.iter().map(|s| best.ecp - s).sum::<f64>() / scores.len() as f64;
            progress((i + 2) as f64 / n);
            Ok(SensitivityRow {
                label: label.clone(),
                prior: prior.clone(),
                true_best_phi: best.phi,
                mis_opt_loss: best.ecp - chosen_score,
                random_loss: random,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SensitivityReport {
        chosen_phi: chosen,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostEval {
    pub mean_reward: f64,
    pub ecp: f64,
}

/// Re-simulates a design at a fixed horizon in a known environment.
pub fn post_experiment_eval(
    policy: &Policy,
    horizon: u64,
    arms: &ArmVector,
    w: f64,
    replications: usize,
    mode: RunMode,
    seed: u64,
) -> Result<PostEval> {
    policy.validate()?;
    if replications == 0 || horizon == 0 {
        return Err(Error::config(
            "replications",
            "replications and horizon must be ≥ 1",
        ));
    }
    let rewards: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|m| {
            let mut rng = derive_stream(seed, m as u64, stage::POST_EVAL);
            let h = run(mode, arms, horizon, policy, &mut rng);
            h.reward_at(horizon as f64) / horizon as f64
        })
        .collect();
    let mean_reward = rewards.iter().sum::<f64>() / replications as f64;
    Ok(PostEval {
        mean_reward,
        ecp: ecp(horizon, mean_reward, w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{Sidedness, TestKind};

    fn problem() -> DesignProblem {
        DesignProblem {
            k: 2,
            prior: PriorSpec::fixed_bernoulli(&[0.7, 0.4]),
            spec: TestSpec::two_sample(Sidedness::TwoSided),
            family: PolicyFamily::EpsThompson,
            phis: vec![0.0, 0.5, 1.0],
            alpha: 0.05,
            beta_target: 0.2,
            t_max: 300,
            replications: 600,
            grid_points: 3,
            null_replications: Some(400),
            mode: RunMode::Batched,
            calibration: Calibration::Ait,
        }
    }

    #[test]
    fn optimizer_is_reproducible_and_maximal() {
        let p = problem();
        let a = obj_opt(&p, 0.01, 5).unwrap();
        let b = obj_opt(&p, 0.01, 5).unwrap();
        assert_eq!(a, b);
        for d in &a.feasible_set {
            assert!(a.ecp >= d.ecp);
        }
        let huge = obj_opt(&p, 1e6, 5).unwrap();
        let min_t = huge.feasible_set.iter().map(|d| d.horizon).min().unwrap();
        assert_eq!(huge.horizon, min_t);
    }

    #[test]
    fn vacuous_and_impossible_targets() {
        let mut p = problem();
        p.beta_target = 0.999;
        let eval = evaluate_designs(&p, 1).unwrap();
        assert!(eval
            .points
            .iter()
            .all(|d| d.horizon.is_some_and(|t| t < 20)));
        let mut p = problem();
        p.prior = PriorSpec::fixed_bernoulli(&[0.5, 0.49]);
        p.t_max = 10;
        assert!(matches!(obj_opt(&p, 0.1, 1), Err(Error::NoFeasibleDesign)));
    }

    #[test]
    fn post_eval_constant_environment() {
        let arms = ArmVector::gaussian(&[0.8, 0.8, 0.8], 0.1).unwrap();
        let e = post_experiment_eval(
            &Policy::eps_thompson(0.3),
            500,
            &arms,
            0.01,
            200,
            RunMode::Exact,
            2,
        )
        .unwrap();
        assert!((e.mean_reward - 0.8).abs() < 0.002, "{e:?}");
        assert!((e.ecp - (e.mean_reward - 0.01 * 500f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn sweep_at_design_prior_has_no_loss() {
        let mut p = problem();
        p.k = 3;
        p.prior = PriorSpec::BetaIid { a: 5.0, b: 5.0 };
        p.spec = TestSpec::new(TestKind::Anova);
        p.t_max = 1500;
        let rep = sensitivity_sweep(&p, &[("same".into(), p.prior.clone())], 0.1, 3).unwrap();
        assert_eq!(rep.rows[0].mis_opt_loss, 0.0);
        assert!(rep.rows[0].random_loss >= 0.0);
    }
}
