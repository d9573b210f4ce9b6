use rand::Rng;
use serde::{Deserialize, Serialize};

use super::history::{CompressedHistory, Entry};
use super::kernel::{ArmVector, RewardKind};
use super::policy::{Policy, PolicyState};

/// Batch shape at a given point of a batched run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSchedule {
    /// Nominal batch size `round(1 + 0.05 t)`.
    pub step_size: u64,
    /// Distinct policy selections in the batch.
    pub n_actions: u64,
    /// Reward draws per selection.
    pub reps_per_action: u64,
}

impl BatchSchedule {
    /// Draws actually taken by the batch, `n_actions * reps_per_action`.
    pub fn draws(&self) -> u64 {
        self.n_actions * self.reps_per_action
    }
}

/// Batch shape after `t` draws. All roundings are half-to-even.
pub fn batch_schedule(t: u64) -> BatchSchedule {
    let step_size = (1.0 + 0.05 * t as f64).round_ties_even().max(1.0);
    let n_actions = step_size.cbrt().round_ties_even().max(1.0);
    let reps = (step_size / n_actions).round_ties_even().max(1.0);
    BatchSchedule {
        step_size: step_size as u64,
        n_actions: n_actions as u64,
        reps_per_action: reps as u64,
    }
}

/// Where rewards come from.
pub trait RewardSource {
    /// Returns `(sum, sum of squares)` of `m` rewards for `arm`, observed at
    /// draw index `t` (0-based, the first of the `m`).
    fn draw<R: Rng + ?Sized>(&mut self, arm: usize, t: u64, m: u32, rng: &mut R) -> (f64, f64);
}

impl RewardSource for &ArmVector {
    fn draw<R: Rng + ?Sized>(&mut self, arm: usize, _t: u64, m: u32, rng: &mut R) -> (f64, f64) {
        self[arm].sample_sums(m, rng)
    }
}

/// A fixed time-indexed reward sequence, served regardless of the arm
/// chosen. Used to resample allocations under the sharp null.
#[derive(Debug, Clone)]
pub struct FixedRewards<'a>(pub &'a [f64]);

impl RewardSource for FixedRewards<'_> {
    fn draw<R: Rng + ?Sized>(&mut self, _arm: usize, t: u64, m: u32, _rng: &mut R) -> (f64, f64) {
        let start = t as usize;
        let slice = &self.0[start..start + m as usize];
        (slice.iter().sum(), slice.iter().map(|r| r * r).sum())
    }
}

/// Fully sequential run: one policy update per draw.
pub fn run_exact<R: Rng + ?Sized>(
    arms: &ArmVector,
    horizon: u64,
    policy: &Policy,
    rng: &mut R,
) -> CompressedHistory {
    run_exact_with_state(arms, horizon, policy, rng).0
}

pub fn run_exact_with_state<R: Rng + ?Sized>(
    arms: &ArmVector,
    horizon: u64,
    policy: &Policy,
    rng: &mut R,
) -> (CompressedHistory, PolicyState) {
    run_exact_from(arms, arms.len(), arms.kind(), horizon, policy, rng)
}

/// Exact run against an arbitrary reward source.
pub fn run_exact_from<S: RewardSource, R: Rng + ?Sized>(
    mut source: S,
    k: usize,
    kind: RewardKind,
    horizon: u64,
    policy: &Policy,
    rng: &mut R,
) -> (CompressedHistory, PolicyState) {
    let mut state = PolicyState::new(k, kind);
    let mut history = CompressedHistory::new(k, kind);
    history.entries.reserve(horizon as usize);
    for t in 0..horizon {
        let arm = policy.select(&state, rng);
        let (r, r2) = source.draw(arm, t, 1, rng);
        state.record(arm, 1, r, r2);
        history.push(Entry {
            arm: arm as u32,
            reward_sum: r,
            reward_sq_sum: r2,
            draws: 1,
        });
    }
    (history, state)
}

/// Batched run: the policy is updated once per batch, batches grow with
/// [`batch_schedule`]. The final batch may overshoot `horizon`.
pub fn run_batched<R: Rng + ?Sized>(
    arms: &ArmVector,
    horizon: u64,
    policy: &Policy,
    rng: &mut R,
) -> CompressedHistory {
    run_batched_with_state(arms, horizon, policy, rng).0
}

pub fn run_batched_with_state<R: Rng + ?Sized>(
    arms: &ArmVector,
    horizon: u64,
    policy: &Policy,
    rng: &mut R,
) -> (CompressedHistory, PolicyState) {
    let k = arms.len();
    let mut state = PolicyState::new(k, arms.kind());
    let mut history = CompressedHistory::new(k, arms.kind());
    let mut source = arms;
    let mut batch: Vec<Entry> = Vec::new();
    while history.horizon_reached < horizon {
        let t = history.horizon_reached;
        let sched = batch_schedule(t);
        let m = sched.reps_per_action as u32;
        batch.clear();
        for i in 0..sched.n_actions {
            let arm = policy.select(&state, rng);
            let (r, r2) = source.draw(arm, t + i * u64::from(m), m, rng);
            batch.push(Entry {
                arm: arm as u32,
                reward_sum: r,
                reward_sq_sum: r2,
                draws: m,
            });
        }
        for e in &batch {
            state.record(e.arm as usize, e.draws, e.reward_sum, e.reward_sq_sum);
            history.push(*e);
        }
    }
    (history, state)
}

/// Which runner to use for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Exact,
    #[default]
    Batched,
}

pub fn run<R: Rng + ?Sized>(
    mode: RunMode,
    arms: &ArmVector,
    horizon: u64,
    policy: &Policy,
    rng: &mut R,
) -> CompressedHistory {
    match mode {
        RunMode::Exact => run_exact(arms, horizon, policy, rng),
        RunMode::Batched => run_batched(arms, horizon, policy, rng),
    }
}
