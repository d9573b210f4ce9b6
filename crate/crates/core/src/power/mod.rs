//! Power analysis for a policy and test under a prior over arm means.
//!
//! Every replication draws arm means from the prior, runs the policy and
//! estimates the null parameter from its data. Null calibrations are shared
//! across replications through a grid of null parameters spanning the
//! estimates; each replication interpolates its thresholds between the two
//! bracketing grid points.

mod compare;

pub use compare::{
    fpr_analysis, power_comparison, ComparisonConfig, ComparisonRow, ThresholdSource,
};

use std::io::Write;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    fmt_float, null_from_sums, schedule_from_histories, simulate_null, AitConfig, Tail,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derive_stream, stage};
use crate::sim::{
    run, ArmMoments, ArmVector, CompressedHistory, Policy, PrefixWalker, RewardKernel, RewardKind,
    RunMode,
};
use crate::stats::{classical_threshold, StatValue, TestKind, TestSpec};

/// Prior over the arm means of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Independent Beta(a, b) means with Bernoulli rewards.
    BetaIid { a: f64, b: f64 },
    /// Independent N(mean, scale²) means with N(μ, reward_scale²) rewards.
    GaussianIid {
        mean: f64,
        scale: f64,
        reward_scale: f64,
    },
    /// A single known environment.
    FixedVector {
        means: Vec<f64>,
        reward: RewardKind,
        #[serde(default)]
        reward_scale: f64,
    },
}

impl PriorSpec {
    pub fn fixed_bernoulli(means: &[f64]) -> Self {
        PriorSpec::FixedVector {
            means: means.to_vec(),
            reward: RewardKind::Bernoulli,
            reward_scale: 0.0,
        }
    }

    pub fn fixed_gaussian(means: &[f64], reward_scale: f64) -> Self {
        PriorSpec::FixedVector {
            means: means.to_vec(),
            reward: RewardKind::Gaussian,
            reward_scale,
        }
    }

    /// Beta prior with the given mean and standard deviation.
    pub fn beta_from_moments(mean: f64, sd: f64) -> Result<Self> {
        let var = sd * sd;
        if !(mean > 0.0 && mean < 1.0) || !(var > 0.0 && var < mean * (1.0 - mean)) {
            return Err(Error::config("prior", "mean/sd outside the Beta family"));
        }
        let total = mean * (1.0 - mean) / var - 1.0;
        Ok(PriorSpec::BetaIid {
            a: mean * total,
            b: (1.0 - mean) * total,
        })
    }

    pub fn reward_kind(&self) -> RewardKind {
        match self {
            PriorSpec::BetaIid { .. } => RewardKind::Bernoulli,
            PriorSpec::GaussianIid { .. } => RewardKind::Gaussian,
            PriorSpec::FixedVector { reward, .. } => *reward,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            PriorSpec::BetaIid { a, b } => {
                if !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::config("prior", "Beta parameters must be positive"));
                }
            }
            PriorSpec::GaussianIid {
                mean,
                scale,
                reward_scale,
            } => {
                if !(mean.is_finite() && *scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::config("prior", "Gaussian mean/scale invalid"));
                }
                if !(*reward_scale > 0.0 && reward_scale.is_finite()) {
                    return Err(Error::config("prior", "reward scale must be positive"));
                }
            }
            PriorSpec::FixedVector { means, .. } => {
                if means.len() != k {
                    return Err(Error::config("prior", "fixed vector length must equal K"));
                }
                self.arms_for(means)?;
            }
        }
        Ok(())
    }

    fn arms_for(&self, means: &[f64]) -> Result<ArmVector> {
        match self {
            PriorSpec::BetaIid { .. } => ArmVector::bernoulli(means),
            PriorSpec::GaussianIid { reward_scale, .. } => {
                ArmVector::gaussian(means, *reward_scale)
            }
            PriorSpec::FixedVector {
                reward,
                reward_scale,
                ..
            } => ArmVector::new(
                means
                    .iter()
                    .map(|&m| RewardKernel::with_kind(*reward, m, *reward_scale))
                    .collect::<Result<_>>()?,
            ),
        }
    }

    /// Draws one environment. Fixed vectors consume no randomness.
    pub fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<ArmVector> {
        let means: Vec<f64> = match self {
            PriorSpec::BetaIid { a, b } => {
                let d = Beta::new(*a, *b).map_err(|e| Error::config("prior", e.to_string()))?;
                (0..k).map(|_| d.sample(rng)).collect()
            }
            PriorSpec::GaussianIid { mean, scale, .. } => {
                let d = Normal::new(*mean, *scale)
                    .map_err(|e| Error::config("prior", e.to_string()))?;
                (0..k).map(|_| d.sample(rng)).collect()
            }
            PriorSpec::FixedVector { means, .. } => means.clone(),
        };
        self.arms_for(&means)
    }
}

/// How rejection thresholds are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Simulated under the policy with the estimated common null.
    #[default]
    Ait,
    /// Asymptotic i.i.d. thresholds, ignoring the adaptive design.
    Classical,
}

/// Power-analysis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub k: usize,
    pub prior: PriorSpec,
    pub horizon: u64,
    pub policy: Policy,
    pub spec: TestSpec,
    pub alpha: f64,
    /// Replications M drawn from the prior.
    pub replications: usize,
    /// Grid points B for the null calibration.
    pub grid_points: usize,
    /// Null replications per grid point; `M / B` when absent.
    #[serde(default)]
    pub null_replications: Option<usize>,
    /// Runner for the replications. Null calibrations always use the batched
    /// runner.
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub calibration: Calibration,
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("arms", "K must be ≥ 2"));
        }
        if self.horizon < 2 {
            return Err(Error::config("horizon", "must be ≥ 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1)"));
        }
        if self.grid_points < 1 || self.replications < self.grid_points {
            return Err(Error::config("grid_points", "need M ≥ B ≥ 1"));
        }
        if self.null_replications == Some(0) {
            return Err(Error::config("null_replications", "must be ≥ 1"));
        }
        self.prior.validate(self.k)?;
        self.policy.validate()?;
        self.spec.validate(self.k)?;
        if let TestKind::Lrt { null, .. } = &self.spec.kind {
            if null.kind() != self.prior.reward_kind() {
                return Err(Error::config(
                    "test",
                    "LRT null reward kind differs from the prior",
                ));
            }
            if self.calibration == Calibration::Classical {
                return Err(Error::config(
                    "calibration",
                    "the LRT has no classical threshold",
                ));
            }
        }
        Ok(())
    }

    fn null_reps(&self) -> usize {
        self.null_replications
            .unwrap_or(self.replications / self.grid_points)
            .max(1)
    }
}

/// Type-II error and mean reward at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    /// `beta[t - 1]` is the estimated Type-II error after `t` draws.
    pub beta: Vec<f64>,
    /// Mean reward per draw over the first `t` draws, averaged over all
    /// replications.
    pub mean_reward: Vec<f64>,
    /// Replications, or comparisons for per-comparison tests, that meet the
    /// minimum effect.
    pub effective: u64,
    #[serde(default)]
    pub fpr_estimate: Option<f64>,
}

impl PowerCurve {
    pub fn horizon(&self) -> u64 {
        self.beta.len() as u64
    }

    pub fn power_at(&self, t: u64) -> f64 {
        1.0 - self.beta[t as usize - 1]
    }

    pub fn mean_reward_at(&self, t: u64) -> f64 {
        self.mean_reward[t as usize - 1]
    }

    /// Smallest `t` with `β̂_t ≤ beta_target`, read off the raw curve.
    pub fn min_horizon(&self, beta_target: f64) -> Option<u64> {
        self.beta
            .iter()
            .position(|&b| b <= beta_target)
            .map(|i| i as u64 + 1)
    }

    /// Writes `t,beta,mean_reward` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,beta,mean_reward")?;
        for (i, (b, r)) in self.beta.iter().zip(&self.mean_reward).enumerate() {
            writeln!(w, "{},{},{}", i + 1, fmt_float(*b), fmt_float(*r))?;
        }
        Ok(())
    }
}

/// Which replications and comparisons count towards power.
#[derive(Debug, Clone)]
enum EffectFilter {
    Scalar(bool),
    /// Qualifying arms, indexed like the statistic's comparisons.
    Comparisons(Vec<bool>),
    /// Tukey: the true best arm when it beats every other arm by `d0`.
    Best(Option<usize>),
}

impl EffectFilter {
    fn new(spec: &TestSpec, means: &[f64]) -> Self {
        let d0 = spec.min_effect;
        match &spec.kind {
            TestKind::TwoSampleT { first, second, .. } => {
                let gap = means[*first] - means[*second];
                let gap = match spec.sidedness() {
                    crate::stats::Sidedness::OneSidedRight => gap,
                    crate::stats::Sidedness::TwoSided => gap.abs(),
                };
                EffectFilter::Scalar(gap >= d0)
            }
            TestKind::TConstant { baseline } => {
                EffectFilter::Comparisons(means.iter().map(|m| m - baseline >= d0).collect())
            }
            TestKind::TControl { control } => EffectFilter::Comparisons(
                (0..means.len())
                    .filter(|a| a != control)
                    .map(|a| (means[a] - means[*control]).abs() >= d0)
                    .collect(),
            ),
            TestKind::TukeyBest => {
                let best = crate::sim::argmax(means.iter().copied());
                let clear = means
                    .iter()
                    .enumerate()
                    .all(|(a, m)| a == best || means[best] - m >= d0 && means[best] > *m);
                EffectFilter::Best(clear.then_some(best))
            }
            TestKind::Anova | TestKind::Lrt { .. } => EffectFilter::Scalar(true),
        }
    }

    fn trials(&self) -> u32 {
        match self {
            EffectFilter::Scalar(p) => *p as u32,
            EffectFilter::Comparisons(v) => v.iter().filter(|&&p| p).count() as u32,
            EffectFilter::Best(b) => b.is_some() as u32,
        }
    }

    /// Number of qualifying rejections of `stat` at threshold `q`.
    fn hits(&self, tail: Tail, stat: &StatValue, q: f64) -> u32 {
        match self {
            EffectFilter::Scalar(p) => (*p && tail.score(stat.value) > q) as u32,
            EffectFilter::Comparisons(v) => stat
                .comparisons
                .iter()
                .zip(v)
                .filter(|(c, &p)| p && tail.score(c.stat) > q)
                .count() as u32,
            EffectFilter::Best(b) => {
                (b.is_some() && stat.best_arm == *b && tail.score(stat.value) > q) as u32
            }
        }
    }
}

/// Null models whose calibrations the replications share.
enum NullModel {
    /// Identical-arm nulls at equally spaced parameters.
    Grid {
        thetas: Vec<f64>,
        scale: f64,
    },
    Fixed(ArmVector),
    Classical,
}

/// Position of `theta` on the grid: lower index and weight of the upper one.
fn bracket(thetas: &[f64], theta: f64) -> (usize, f64) {
    let last = thetas.len() - 1;
    if last == 0 || theta <= thetas[0] {
        return (0, 0.0);
    }
    if theta >= thetas[last] {
        return (last, 0.0);
    }
    let step = (thetas[last] - thetas[0]) / last as f64;
    let i = (((theta - thetas[0]) / step).floor() as usize).min(last - 1);
    let w = ((theta - thetas[i]) / (thetas[i + 1] - thetas[i])).clamp(0.0, 1.0);
    if w == 1.0 {
        (i + 1, 0.0)
    } else {
        (i, w)
    }
}

fn interpolate(lo: f64, hi: f64, w: f64) -> f64 {
    if w == 0.0 {
        lo
    } else if lo.is_infinite() || hi.is_infinite() {
        f64::INFINITY
    } else {
        (1.0 - w) * lo + w * hi
    }
}

/// One replication after the first pass.
struct Replication {
    history: CompressedHistory,
    filter: EffectFilter,
    theta: f64,
    scale: f64,
}

fn replicate(cfg: &PowerConfig, seed: u64, m: usize) -> Result<Replication> {
    let mut rng = derive_stream(seed, m as u64, stage::REPLICATION);
    let arms = cfg.prior.draw(cfg.k, &mut rng)?;
    let history = run(cfg.mode, &arms, cfg.horizon, &cfg.policy, &mut rng);
    let mut moments = vec![ArmMoments::default(); cfg.k];
    PrefixWalker::new(&history).moments_at(cfg.horizon as f64, &mut moments);
    let (n, s, ss) = moments.iter().fold((0.0, 0.0, 0.0), |a, m| {
        (a.0 + m.n, a.1 + m.sum, a.2 + m.sum_sq)
    });
    let est = null_from_sums(arms.kind(), n, s, ss);
    Ok(Replication {
        filter: EffectFilter::new(&cfg.spec, &arms.means()),
        theta: est.theta,
        scale: est.kernel.scale,
        history,
    })
}

/// Progress callback receiving the completed fraction in `[0, 1]`.
pub type Progress<'a> = &'a (dyn Fn(f64) + Sync);

/// Runs the power analysis.
pub fn power_analysis(cfg: &PowerConfig, seed: u64) -> Result<PowerCurve> {
    power_analysis_with_progress(cfg, seed, &|_| {})
}

const REP_CHUNK: usize = 256;

pub fn power_analysis_with_progress(
    cfg: &PowerConfig,
    seed: u64,
    progress: Progress,
) -> Result<PowerCurve> {
    cfg.validate()?;
    let kind = cfg.prior.reward_kind();
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|m| replicate(cfg, seed, m))
        .collect::<Result<_>>()?;
    progress(1.0 / 3.0);

    let trials: u64 = reps.iter().map(|r| u64::from(r.filter.trials())).sum();
    if trials == 0 {
        return Err(Error::NoEffectReplications);
    }

    let mean_scale = reps.iter().map(|r| r.scale).sum::<f64>() / reps.len() as f64;
    let model = match &cfg.spec.kind {
        _ if cfg.calibration == Calibration::Classical => NullModel::Classical,
        TestKind::Lrt { null, .. } => NullModel::Fixed(null.clone()),
        TestKind::TConstant { baseline } => NullModel::Fixed(ArmVector::identical(
            RewardKernel::with_kind(kind, *baseline, mean_scale)?,
            cfg.k,
        )?),
        _ => {
            let lo = reps.iter().map(|r| r.theta).fold(f64::INFINITY, f64::min);
            let hi = reps
                .iter()
                .map(|r| r.theta)
                .fold(f64::NEG_INFINITY, f64::max);
            let b = cfg.grid_points;
            let thetas = if b == 1 || hi <= lo {
                vec![reps.iter().map(|r| r.theta).sum::<f64>() / reps.len() as f64]
            } else {
                (0..b)
                    .map(|i| lo + (hi - lo) * i as f64 / (b - 1) as f64)
                    .collect()
            };
            NullModel::Grid {
                thetas,
                scale: mean_scale,
            }
        }
    };

    let ait = AitConfig {
        k: cfg.k,
        horizon: cfg.horizon,
        policy: cfg.policy.clone(),
        spec: cfg.spec.clone(),
        alpha: cfg.alpha,
        replications: cfg.null_reps(),
        mode: RunMode::Batched,
    };
    let schedules: Vec<Vec<f64>> = match &model {
        NullModel::Classical => vec![(1..=cfg.horizon)
            .map(|t| classical_threshold(&cfg.spec, cfg.k, t, cfg.alpha).unwrap_or(f64::INFINITY))
            .collect()],
        NullModel::Fixed(arms) => {
            let ait = AitConfig {
                replications: cfg.null_reps() * cfg.grid_points,
                ..ait
            };
            let h = simulate_null(&ait, arms, derive_seed(seed, 0, stage::GRID_POINT));
            vec![schedule_from_histories(&ait, &h).thresholds]
        }
        NullModel::Grid { thetas, scale } => {
            let mut out = Vec::with_capacity(thetas.len());
            for (g, &theta) in thetas.iter().enumerate() {
                let mean = match kind {
                    RewardKind::Bernoulli => theta.clamp(0.0, 1.0),
                    RewardKind::Gaussian => theta,
                };
                let arms =
                    ArmVector::identical(RewardKernel::with_kind(kind, mean, *scale)?, cfg.k)?;
                let h = simulate_null(&ait, &arms, derive_seed(seed, g as u64, stage::GRID_POINT));
                out.push(schedule_from_histories(&ait, &h).thresholds);
                progress((1.0 + (g + 1) as f64 / thetas.len() as f64) / 3.0);
            }
            out
        }
    };
    progress(2.0 / 3.0);

    let horizon = cfg.horizon as usize;
    let tail = Tail::for_spec(&cfg.spec);
    let mut hits = vec![0u64; horizon];
    let mut reward = vec![0.0f64; horizon];
    for (c, chunk) in reps.chunks(REP_CHUNK).enumerate() {
        let partial: Vec<(Vec<u32>, Vec<f64>)> = chunk
            .par_iter()
            .map(|rep| {
                let (g, w) = match &model {
                    NullModel::Grid { thetas, .. } => bracket(thetas, rep.theta),
                    NullModel::Fixed(_) | NullModel::Classical => (0, 0.0),
                };
                let lo = &schedules[g];
                let hi = schedules.get(g + 1).unwrap_or(lo);
                let mut walker = PrefixWalker::new(&rep.history);
                let mut moments = vec![ArmMoments::default(); cfg.k];
                let mut stat = StatValue::default();
                let mut h = vec![0u32; horizon];
                let mut r = vec![0.0; horizon];
                for t in 1..=horizon {
                    walker.moments_at(t as f64, &mut moments);
                    r[t - 1] = moments.iter().map(|m| m.sum).sum::<f64>() / t as f64;
                    if rep.filter.trials() == 0 {
                        continue;
                    }
                    cfg.spec.evaluate_into(&moments, &mut stat);
                    let q = interpolate(lo[t - 1], hi[t - 1], w);
                    h[t - 1] = rep.filter.hits(tail, &stat, q);
                }
                (h, r)
            })
            .collect();
        for (h, r) in partial {
            for t in 0..horizon {
                hits[t] += u64::from(h[t]);
                reward[t] += r[t];
            }
        }
        let done = ((c + 1) * REP_CHUNK).min(reps.len()) as f64 / reps.len() as f64;
        progress((2.0 + done) / 3.0);
    }
    let m = reps.len() as f64;
    Ok(PowerCurve {
        beta: hits
            .iter()
            .map(|&h| 1.0 - h as f64 / trials as f64)
            .collect(),
        mean_reward: reward.into_iter().map(|r| r / m).collect(),
        effective: trials,
        fpr_estimate: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{FamilyMode, Sidedness};

    #[test]
    fn beta_moment_matching() {
        let PriorSpec::BetaIid { a, b } = PriorSpec::beta_from_moments(0.35, 0.15).unwrap() else {
            unreachable!()
        };
        assert!(
            (a - 3.1883).abs() < 1e-3 && (b - 5.9213).abs() < 1e-3,
            "{a} {b}"
        );
        assert!(PriorSpec::beta_from_moments(0.5, 0.6).is_err());
    }

    #[test]
    fn bracket_and_interpolate() {
        let g = [0.0, 0.5, 1.0];
        assert_eq!(bracket(&g, -1.0), (0, 0.0));
        assert_eq!(bracket(&g, 0.5), (1, 0.0));
        assert_eq!(bracket(&g, 2.0), (2, 0.0));
        let (i, w) = bracket(&g, 0.75);
        assert_eq!(i, 1);
        assert!((w - 0.5).abs() < 1e-12);
        assert_eq!(interpolate(1.0, 3.0, 0.5), 2.0);
        assert_eq!(interpolate(1.0, f64::INFINITY, 0.5), f64::INFINITY);
        assert_eq!(interpolate(1.0, f64::INFINITY, 0.0), 1.0);
    }

    #[test]
    fn effect_filters() {
        let s = TestSpec::new(TestKind::TukeyBest).with_min_effect(0.1);
        assert!(matches!(
            EffectFilter::new(&s, &[0.5, 0.7, 0.55]),
            EffectFilter::Best(Some(1))
        ));
        assert!(matches!(
            EffectFilter::new(&s, &[0.5, 0.7, 0.65]),
            EffectFilter::Best(None)
        ));
        let s = TestSpec::new(TestKind::TControl { control: 0 }).with_min_effect(0.1);
        let f = EffectFilter::new(&s, &[0.5, 0.7, 0.45, 0.35]);
        assert_eq!(f.trials(), 2);
        let s = TestSpec::new(TestKind::TConstant { baseline: 0.5 });
        assert_eq!(EffectFilter::new(&s, &[0.5, 0.4, 0.6]).trials(), 2);
    }

    fn small(policy: Policy, prior: PriorSpec, spec: TestSpec) -> PowerConfig {
        PowerConfig {
            k: 2,
            prior,
            horizon: 120,
            policy,
            spec,
            alpha: 0.05,
            replications: 2000,
            grid_points: 5,
            null_replications: Some(1000),
            mode: RunMode::Batched,
            calibration: Calibration::Ait,
        }
    }

    #[test]
    fn null_power_is_near_alpha() {
        let cfg = small(
            Policy::uniform(),
            PriorSpec::fixed_bernoulli(&[0.5, 0.5]),
            TestSpec::two_sample(Sidedness::TwoSided),
        );
        let curve = power_analysis(&cfg, 1).unwrap();
        let p = curve.power_at(120);
        assert!((p - 0.05).abs() < 0.02, "{p}");
        assert!((curve.mean_reward_at(120) - 0.5).abs() < 0.01);
    }

    #[test]
    fn power_grows_with_horizon_and_is_deterministic() {
        let cfg = small(
            Policy::thompson(),
            PriorSpec::BetaIid { a: 2.0, b: 2.0 },
            TestSpec::two_sample(Sidedness::TwoSided).with_min_effect(0.1),
        );
        let a = power_analysis(&cfg, 3).unwrap();
        let b = power_analysis(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.power_at(120) > a.power_at(20) + 0.1);
        assert!(a.effective < 2000);
    }

    #[test]
    fn incompatible_prior_is_an_error() {
        let cfg = small(
            Policy::uniform(),
            PriorSpec::fixed_bernoulli(&[0.5, 0.5]),
            TestSpec::two_sample(Sidedness::TwoSided).with_min_effect(0.1),
        );
        assert!(matches!(
            power_analysis(&cfg, 1),
            Err(Error::NoEffectReplications)
        ));
    }

    #[test]
    fn per_comparison_family_runs() {
        let mut cfg = small(
            Policy::uniform(),
            PriorSpec::fixed_bernoulli(&[0.5, 0.5, 0.7]),
            TestSpec::new(TestKind::TControl { control: 0 })
                .with_min_effect(0.1)
                .with_family(FamilyMode::PerComparison),
        );
        cfg.k = 3;
        let curve = power_analysis(&cfg, 5).unwrap();
        assert_eq!(curve.effective, 2000);
        assert!(curve.power_at(120) > 0.2, "{}", curve.power_at(120));
    }
}
