use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::art::art_test;
use crate::calibration::{calibration_scores, CriticalSchedule, Tail};
use crate::error::{Error, Result};
use crate::rng::{derive_stream, stage};
use crate::sim::{run, ArmVector, Policy, RunMode};
use crate::stats::classical_threshold;
use crate::stats::TestSpec;

use super::{power_analysis, Calibration, PowerConfig, PriorSpec};

/// Where the rejection threshold at the horizon comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSource {
    /// Asymptotic threshold of the statistic for i.i.d. data.
    Classical,
    Ait(CriticalSchedule),
}

/// Rejection rate at `horizon` over `replications` runs under `null`.
///
/// Per-comparison tests report the fraction of rejected comparisons.
#[allow(clippy::too_many_arguments)]
pub fn fpr_analysis(
    null: &ArmVector,
    horizon: u64,
    policy: &Policy,
    spec: &TestSpec,
    source: &ThresholdSource,
    alpha: f64,
    replications: usize,
    mode: RunMode,
    seed: u64,
) -> Result<f64> {
    spec.validate(null.len())?;
    policy.validate()?;
    if replications == 0 {
        return Err(Error::config("replications", "must be ≥ 1"));
    }
    let tail = Tail::for_spec(spec);
    let q = match source {
        ThresholdSource::Classical => classical_threshold(spec, null.len(), horizon, alpha)?,
        ThresholdSource::Ait(s) => {
            if s.horizon() < horizon {
                return Err(Error::config("schedule", "shorter than the horizon"));
            }
            s.threshold(horizon)
        }
    };
    let counts: Vec<(u32, u32)> = (0..replications)
        .into_par_iter()
        .map(|m| {
            let mut rng = derive_stream(seed, m as u64, stage::FPR);
            let h = run(mode, null, horizon, policy, &mut rng);
            let stat = spec.evaluate(&h.moments_at(horizon as f64));
            let mut scores = Vec::new();
            calibration_scores(spec, tail, &stat, &mut scores);
            (
                scores.iter().filter(|&&s| s > q).count() as u32,
                scores.len() as u32,
            )
        })
        .collect();
    let (hits, total) = counts.iter().fold((0u64, 0u64), |a, c| {
        (a.0 + u64::from(c.0), a.1 + u64::from(c.1))
    });
    Ok(hits as f64 / total.max(1) as f64)
}

/// One policy's row of an AIT/ART comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub ait_power: f64,
    pub art_power: f64,
    pub ait_fpr: f64,
    pub art_fpr: f64,
}

/// Settings for [`power_comparison`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub horizon: u64,
    pub alpha: f64,
    pub replications: usize,
    pub art_resamples: usize,
    pub grid_points: usize,
    pub null_replications: Option<usize>,
}

fn fixed_prior(arms: &ArmVector) -> PriorSpec {
    PriorSpec::FixedVector {
        means: arms.means(),
        reward: arms.kind(),
        reward_scale: arms.kernels()[0].scale,
    }
}

fn art_rate(
    env: &ArmVector,
    policy: &Policy,
    spec: &TestSpec,
    cfg: &ComparisonConfig,
    seed: u64,
    stream: u32,
) -> Result<f64> {
    let rejections: Vec<bool> = (0..cfg.replications)
        .into_par_iter()
        .map(|m| {
            let mut rng = derive_stream(seed, m as u64, stream);
            let h = run(RunMode::Exact, env, cfg.horizon, policy, &mut rng);
            let mut rng = derive_stream(seed ^ u64::from(stream), m as u64, stage::ART_RESAMPLE);
            Ok(art_test(&h, spec, policy, cfg.alpha, cfg.art_resamples, &mut rng)?.reject)
        })
        .collect::<Result<_>>()?;
    Ok(rejections.iter().filter(|&&r| r).count() as f64 / cfg.replications as f64)
}

/// Compares AIT and ART power and size for each policy in one environment.
///
/// Observed experiments use the exact runner. AIT estimates the common null
/// from each experiment; the size legs run under identical arms at the
/// environment's average mean.
pub fn power_comparison(
    policies: &[Policy],
    spec: &TestSpec,
    env: &ArmVector,
    cfg: &ComparisonConfig,
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    let k = env.len();
    let avg = env.means().iter().sum::<f64>() / k as f64;
    let null = ArmVector::identical(
        crate::sim::RewardKernel {
            mean: avg,
            ..env.kernels()[0]
        },
        k,
    )?;
    let null_spec = spec.clone().with_min_effect(0.0);
    policies
        .iter()
        .map(|policy| {
            let power_cfg = |prior: PriorSpec, spec: TestSpec| PowerConfig {
                k,
                prior,
                horizon: cfg.horizon,
                policy: policy.clone(),
                spec,
                alpha: cfg.alpha,
                replications: cfg.replications,
                grid_points: cfg.grid_points,
                null_replications: cfg.null_replications,
                mode: RunMode::Exact,
                calibration: Calibration::Ait,
            };
            let ait_power = power_analysis(&power_cfg(fixed_prior(env), spec.clone()), seed)?
                .power_at(cfg.horizon);
            let ait_fpr =
                power_analysis(&power_cfg(fixed_prior(&null), null_spec.clone()), seed ^ 1)?
                    .power_at(cfg.horizon);
            let art_power = art_rate(env, policy, spec, cfg, seed, stage::ALTERNATIVE)?;
            let art_fpr = art_rate(&null, policy, spec, cfg, seed, stage::FPR)?;
            Ok(ComparisonRow {
                policy: policy.label(),
                ait_power,
                art_power,
                ait_fpr,
                art_fpr,
            })
        })
        .collect()
}
