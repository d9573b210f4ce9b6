//! Critical-region calibration for adaptively collected data.
//!
//! [`ait_calibrate`] simulates the experiment under the estimated common null
//! distribution with the same policy, and takes the empirical `(1 - α)`
//! quantile of the statistic at every step as that step's threshold.
//! [`art`] holds the randomization-test baseline and [`lrt_check`] the
//! empirical check that the calibrated likelihood-ratio test is most
//! powerful for simple hypotheses.

pub mod art;
pub mod lrt_check;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_stream, stage};
use crate::sim::{
    run, ArmMoments, ArmVector, CompressedHistory, Policy, PrefixWalker, RewardKernel, RewardKind,
    RunMode,
};
use crate::stats::{Sidedness, StatValue, TestSpec};

/// Smallest Gaussian scale used for a simulated null.
pub const GAUSSIAN_SCALE_FLOOR: f64 = 1e-6;

/// Estimated common reward distribution under the null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullEstimate {
    pub kernel: RewardKernel,
    /// Scalar used for grid binning: the pooled mean.
    pub theta: f64,
}

impl NullEstimate {
    pub fn from_kernel(kernel: RewardKernel) -> Self {
        NullEstimate {
            kernel,
            theta: kernel.mean,
        }
    }
}

/// Pooled maximum-likelihood estimate of the common arm distribution.
pub fn estimate_null(history: &CompressedHistory, kind: RewardKind) -> Result<NullEstimate> {
    let (mut n, mut s, mut ss) = (0.0, 0.0, 0.0);
    for e in &history.entries {
        n += f64::from(e.draws);
        s += e.reward_sum;
        ss += e.reward_sq_sum;
    }
    if n == 0.0 {
        return Err(Error::EmptyHistory);
    }
    Ok(null_from_sums(kind, n, s, ss))
}

pub(crate) fn null_from_sums(kind: RewardKind, n: f64, s: f64, ss: f64) -> NullEstimate {
    let mean = s / n;
    let kernel = match kind {
        RewardKind::Bernoulli => RewardKernel {
            kind,
            mean: mean.clamp(0.0, 1.0),
            scale: 0.0,
        },
        RewardKind::Gaussian => {
            let var = (ss / n - mean * mean).max(0.0);
            RewardKernel {
                kind,
                mean,
                scale: var.sqrt().max(GAUSSIAN_SCALE_FLOOR),
            }
        }
    };
    NullEstimate {
        kernel,
        theta: kernel.mean,
    }
}

/// Shape of a critical region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Reject when the statistic exceeds the threshold.
    RightTail,
    /// Reject when the absolute statistic exceeds the threshold.
    AbsTwoSided,
}

impl Tail {
    pub fn for_spec(spec: &TestSpec) -> Tail {
        match spec.sidedness() {
            Sidedness::OneSidedRight => Tail::RightTail,
            Sidedness::TwoSided => Tail::AbsTwoSided,
        }
    }

    /// Maps a statistic to the scale thresholds are compared on; undefined
    /// values map to `-inf` and can never reject.
    pub fn score(self, value: Option<f64>) -> f64 {
        match (self, value) {
            (_, None) => f64::NEG_INFINITY,
            (Tail::RightTail, Some(v)) => v,
            (Tail::AbsTwoSided, Some(v)) => v.abs(),
        }
    }
}

/// Values of one statistic that the calibration ranks: the scalar statistic,
/// or every comparison for per-comparison families.
pub fn calibration_scores(spec: &TestSpec, tail: Tail, stat: &StatValue, out: &mut Vec<f64>) {
    if spec.per_comparison() {
        out.extend(stat.comparisons.iter().map(|c| tail.score(c.stat)));
    } else {
        out.push(tail.score(stat.value));
    }
}

/// Per-step rejection thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSchedule {
    /// `thresholds[t - 1]` is the threshold after `t` draws.
    pub thresholds: Vec<f64>,
    pub tail: Tail,
    pub alpha: f64,
    pub replications: usize,
}

impl CriticalSchedule {
    pub fn horizon(&self) -> u64 {
        self.thresholds.len() as u64
    }

    pub fn threshold(&self, t: u64) -> f64 {
        self.thresholds[t as usize - 1]
    }

    pub fn rejects(&self, t: u64, value: Option<f64>) -> bool {
        self.tail.score(value) > self.threshold(t)
    }

    /// Writes `t,q_t` rows after a comment header naming the tail.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let tail = match self.tail {
            Tail::RightTail => "right_tail",
            Tail::AbsTwoSided => "abs_two_sided",
        };
        writeln!(
            w,
            "# tail={tail} alpha={} replications={}",
            self.alpha, self.replications
        )?;
        writeln!(w, "t,q_t")?;
        for (i, q) in self.thresholds.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, fmt_float(*q))?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

/// Rank `ceil((1 - α) n)` (1-based) of the calibration order statistic.
pub fn quantile_rank(alpha: f64, n: usize) -> usize {
    let r = ((1.0 - alpha) * n as f64 - 1e-9).ceil() as usize;
    r.clamp(1, n.max(1))
}

/// Empirical `(1 - α)` threshold of `scores`, reordering them in place. A
/// threshold landing on an undefined value becomes `+inf`.
pub fn empirical_threshold(scores: &mut [f64], alpha: f64) -> f64 {
    if scores.is_empty() {
        return f64::INFINITY;
    }
    let r = quantile_rank(alpha, scores.len());
    let (_, q, _) = scores.select_nth_unstable_by(r - 1, f64::total_cmp);
    if *q == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        *q
    }
}

/// Settings shared by every calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct AitConfig {
    pub k: usize,
    pub horizon: u64,
    pub policy: Policy,
    pub spec: TestSpec,
    pub alpha: f64,
    pub replications: usize,
    pub mode: RunMode,
}

impl AitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("arms", "K must be ≥ 2"));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon", "must be ≥ 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::config("alpha", "must lie in (0, 0.5]"));
        }
        if self.replications < 1 {
            return Err(Error::config("replications", "must be ≥ 1"));
        }
        self.policy.validate()?;
        self.spec.validate(self.k)
    }
}

const T_CHUNK: usize = 128;

/// Computes calibration scores at every `t = 1..=horizon` for each history
/// and hands each step's pooled scores to `sink`.
pub(crate) fn scores_by_step(
    histories: &[CompressedHistory],
    spec: &TestSpec,
    tail: Tail,
    horizon: u64,
    mut sink: impl FnMut(u64, &mut Vec<f64>),
) {
    struct Cursor<'a> {
        walker: PrefixWalker<'a>,
        moments: Vec<ArmMoments>,
        stat: StatValue,
        scores: Vec<f64>,
        per_step: usize,
    }
    let mut cursors: Vec<Cursor> = histories
        .iter()
        .map(|h| Cursor {
            walker: PrefixWalker::new(h),
            moments: vec![ArmMoments::default(); h.k],
            stat: StatValue::default(),
            scores: Vec::new(),
            per_step: 0,
        })
        .collect();
    let mut pooled = Vec::new();
    let mut start = 1u64;
    while start <= horizon {
        let end = (start + T_CHUNK as u64 - 1).min(horizon);
        cursors.par_iter_mut().for_each(|c| {
            c.scores.clear();
            for t in start..=end {
                c.walker.moments_at(t as f64, &mut c.moments);
                spec.evaluate_into(&c.moments, &mut c.stat);
                let before = c.scores.len();
                calibration_scores(spec, tail, &c.stat, &mut c.scores);
                c.per_step = c.scores.len() - before;
            }
        });
        for (offset, t) in (start..=end).enumerate() {
            pooled.clear();
            for c in &cursors {
                let w = c.per_step;
                pooled.extend_from_slice(&c.scores[offset * w..(offset + 1) * w]);
            }
            sink(t, &mut pooled);
        }
        start = end + 1;
    }
}

/// Simulates `replications` null experiments under `arms`, all from streams
/// of `seed`.
pub(crate) fn simulate_null(
    cfg: &AitConfig,
    arms: &ArmVector,
    seed: u64,
) -> Vec<CompressedHistory> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(seed, r as u64, stage::NULL_CALIBRATION);
            run(cfg.mode, arms, cfg.horizon, &cfg.policy, &mut rng)
        })
        .collect()
}

/// Algorithm-induced test correction: calibrates per-step thresholds by
/// simulating the policy with every arm set to the null distribution.
pub fn ait_calibrate(cfg: &AitConfig, null: &NullEstimate, seed: u64) -> Result<CriticalSchedule> {
    ait_calibrate_arms(cfg, &ArmVector::identical(null.kernel, cfg.k)?, seed)
}

/// Like [`ait_calibrate`] for a fully specified null, which need not have
/// identical arms.
pub fn ait_calibrate_arms(
    cfg: &AitConfig,
    arms: &ArmVector,
    seed: u64,
) -> Result<CriticalSchedule> {
    cfg.validate()?;
    if arms.len() != cfg.k {
        return Err(Error::config("null", "arm count must equal K"));
    }
    let histories = simulate_null(cfg, arms, seed);
    Ok(schedule_from_histories(cfg, &histories))
}

pub(crate) fn schedule_from_histories(
    cfg: &AitConfig,
    histories: &[CompressedHistory],
) -> CriticalSchedule {
    let tail = Tail::for_spec(&cfg.spec);
    let mut thresholds = Vec::with_capacity(cfg.horizon as usize);
    scores_by_step(histories, &cfg.spec, tail, cfg.horizon, |_, scores| {
        thresholds.push(empirical_threshold(scores, cfg.alpha));
    });
    CriticalSchedule {
        thresholds,
        tail,
        alpha: cfg.alpha,
        replications: cfg.replications,
    }
}

/// Calibrates several α levels on one set of null simulations.
pub fn ait_calibrate_levels(
    cfg: &AitConfig,
    null: &NullEstimate,
    alphas: &[f64],
    seed: u64,
) -> Result<Vec<CriticalSchedule>> {
    cfg.validate()?;
    let histories = simulate_null(cfg, &ArmVector::identical(null.kernel, cfg.k)?, seed);
    let tail = Tail::for_spec(&cfg.spec);
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); alphas.len()];
    scores_by_step(&histories, &cfg.spec, tail, cfg.horizon, |_, scores| {
        for (i, &a) in alphas.iter().enumerate() {
            out[i].push(empirical_threshold(scores, a));
        }
    });
    Ok(out
        .into_iter()
        .zip(alphas)
        .map(|(thresholds, &alpha)| CriticalSchedule {
            thresholds,
            tail,
            alpha,
            replications: cfg.replications,
        })
        .collect())
}
