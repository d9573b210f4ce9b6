//! Empirical check that the calibrated likelihood-ratio test is the most
//! powerful test for a simple null against a simple alternative.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_stream, stage};
use crate::sim::{run, ArmVector, Policy, RunMode};
use crate::stats::{TestKind, TestSpec};

use super::{quantile_rank, Tail};

/// One row of the power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub test: String,
    pub threshold: f64,
    /// Rejection probability when the statistic equals the threshold.
    pub boundary_weight: f64,
    /// Rejection rate on a fresh set of null replications.
    pub fpr: f64,
    pub power: f64,
}

/// Randomized critical value with exact size `alpha` on `scores`.
///
/// Returns `(q, γ)`: reject when the score exceeds `q`, and with probability
/// `γ` when it equals `q`. Discrete statistics such as the Bernoulli
/// likelihood ratio need the boundary weight to be compared at equal size.
pub fn randomized_threshold(scores: &mut [f64], alpha: f64) -> (f64, f64) {
    scores.sort_unstable_by(f64::total_cmp);
    let n = scores.len();
    let q = scores[quantile_rank(alpha, n) - 1];
    let greater = scores.iter().filter(|&&s| s > q).count();
    let equal = scores.iter().filter(|&&s| s == q).count();
    let gamma = ((alpha * n as f64 - greater as f64) / equal as f64).clamp(0.0, 1.0);
    if q == f64::NEG_INFINITY {
        return (f64::INFINITY, 0.0);
    }
    (q, gamma)
}

fn rejection_rate(scores: &[f64], q: f64, gamma: f64) -> f64 {
    let hits: f64 = scores
        .iter()
        .map(|&s| {
            if s > q {
                1.0
            } else if s == q {
                gamma
            } else {
                0.0
            }
        })
        .sum();
    hits / scores.len() as f64
}

/// Final-step scores of each spec over `replications` runs under `arms`.
fn final_scores(
    arms: &ArmVector,
    policy: &Policy,
    horizon: u64,
    specs: &[TestSpec],
    replications: usize,
    seed: u64,
    stream_stage: u32,
) -> Vec<Vec<f64>> {
    let per_rep: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(seed, r as u64, stream_stage);
            let h = run(RunMode::Exact, arms, horizon, policy, &mut rng);
            let m = h.moments_at(horizon as f64);
            specs
                .iter()
                .map(|s| Tail::for_spec(s).score(s.evaluate(&m).value))
                .collect()
        })
        .collect();
    (0..specs.len())
        .map(|i| per_rep.iter().map(|row| row[i]).collect())
        .collect()
}

/// Calibrates the likelihood-ratio test of `null` against `alt` and every
/// competitor to the same size on simulated null data, then estimates power
/// under `alt`. The first row is the likelihood-ratio test.
pub fn lrt_most_powerful_check(
    null: &ArmVector,
    alt: &ArmVector,
    policy: &Policy,
    horizon: u64,
    alpha: f64,
    replications: usize,
    competitors: &[TestSpec],
    seed: u64,
) -> Result<Vec<PowerRow>> {
    if null.len() != alt.len() || null.kind() != alt.kind() {
        return Err(Error::config(
            "alt",
            "must match the null in size and reward kind",
        ));
    }
    if replications < 2 {
        return Err(Error::config("replications", "must be ≥ 2"));
    }
    policy.validate()?;
    let mut specs = vec![TestSpec::new(TestKind::Lrt {
        null: null.clone(),
        alt: alt.clone(),
    })];
    specs.extend_from_slice(competitors);
    for s in &specs {
        s.validate(null.len())?;
    }
    let calib = final_scores(
        null,
        policy,
        horizon,
        &specs,
        replications,
        seed,
        stage::NULL_CALIBRATION,
    );
    let fresh = final_scores(
        null,
        policy,
        horizon,
        &specs,
        replications,
        seed,
        stage::FPR,
    );
    let power = final_scores(
        alt,
        policy,
        horizon,
        &specs,
        replications,
        seed,
        stage::ALTERNATIVE,
    );
    Ok(specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut c = calib[i].clone();
            let (q, gamma) = randomized_threshold(&mut c, alpha);
            PowerRow {
                test: s.label().to_string(),
                threshold: q,
                boundary_weight: gamma,
                fpr: rejection_rate(&fresh[i], q, gamma),
                power: rejection_rate(&power[i], q, gamma),
            }
        })
        .collect())
}
