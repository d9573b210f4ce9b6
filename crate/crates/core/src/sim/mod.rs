//! Reward kernels, bandit policies, and the exact and batched experiment
//! runners.

mod history;
mod kernel;
mod policy;
mod runner;

pub use history::{ArmMoments, CompressedHistory, Entry, PrefixWalker};
pub use kernel::{ArmVector, RewardKernel, RewardKind};
pub(crate) use policy::argmax;
pub use policy::{ArmStats, BetaPrior, NigPrior, Policy, PolicyKind, PolicyState};
pub use runner::{
    batch_schedule, run, run_batched, run_batched_with_state, run_exact, run_exact_from,
    run_exact_with_state, BatchSchedule, FixedRewards, RewardSource, RunMode,
};
