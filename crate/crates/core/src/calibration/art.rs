//! Adaptive randomization test.
//!
//! Under the sharp null every arm would have produced the same reward at each
//! step, so the observed reward sequence can be replayed through the policy
//! to resample the allocation. The p-value ranks the observed statistic among
//! the resampled ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{run_exact_from, CompressedHistory, FixedRewards, Policy};
use crate::stats::TestSpec;

use super::Tail;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtOutcome {
    pub p_value: f64,
    pub reject: bool,
    /// Observed statistic, `None` when undefined.
    pub observed: Option<f64>,
}

/// Runs the randomization test on an exact history.
///
/// Ties between resampled and observed statistics are broken uniformly at
/// random, `p = (#greater + U (1 + #equal)) / (M + 1)`, so the test keeps its
/// size when the statistic is discrete. An undefined observed statistic gives
/// `p = 1`.
pub fn art_test<R: Rng + ?Sized>(
    observed: &CompressedHistory,
    spec: &TestSpec,
    policy: &Policy,
    alpha: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<ArtOutcome> {
    if !observed.is_exact() {
        return Err(Error::NotExactHistory(
            observed.entries.iter().map(|e| e.draws).max().unwrap_or(0),
        ));
    }
    if resamples == 0 {
        return Err(Error::config("resamples", "must be ≥ 1"));
    }
    spec.validate(observed.k)?;
    let horizon = observed.entries.len() as u64;
    let tail = Tail::for_spec(spec);
    let stat = spec.evaluate(&observed.moments_at(horizon as f64)).value;
    let Some(_) = stat else {
        return Ok(ArtOutcome {
            p_value: 1.0,
            reject: false,
            observed: None,
        });
    };
    let s_obs = tail.score(stat);
    let rewards: Vec<f64> = observed.entries.iter().map(|e| e.reward_sum).collect();
    let (mut greater, mut equal) = (0usize, 0usize);
    for _ in 0..resamples {
        let (h, _) = run_exact_from(
            FixedRewards(&rewards),
            observed.k,
            observed.kind,
            horizon,
            policy,
            rng,
        );
        let s = tail.score(spec.evaluate(&h.moments_at(horizon as f64)).value);
        if s > s_obs {
            greater += 1;
        } else if s == s_obs {
            equal += 1;
        }
    }
    let u = 1.0 - rng.random::<f64>();
    let p_value = (greater as f64 + u * (1 + equal) as f64) / (resamples + 1) as f64;
    Ok(ArtOutcome {
        p_value,
        reject: p_value <= alpha,
        observed: stat,
    })
}
