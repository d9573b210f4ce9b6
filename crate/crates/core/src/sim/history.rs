use serde::{Deserialize, Serialize};

use super::kernel::RewardKind;
use super::policy::PolicyState;

/// One aggregated action: `draws` rewards from `arm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub arm: u32,
    pub reward_sum: f64,
    pub reward_sq_sum: f64,
    pub draws: u32,
}

/// Batch-aggregated experiment record. The exact runner produces one entry
/// per step (`draws == 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedHistory {
    pub k: usize,
    pub kind: RewardKind,
    pub entries: Vec<Entry>,
    pub horizon_reached: u64,
}

/// Per-arm sums over a (possibly fractional) prefix of a history.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmMoments {
    pub n: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ArmMoments {
    fn add(&mut self, e: &Entry, weight: f64) {
        self.n += weight * f64::from(e.draws);
        self.sum += weight * e.reward_sum;
        self.sum_sq += weight * e.reward_sq_sum;
    }
}

impl CompressedHistory {
    pub fn new(k: usize, kind: RewardKind) -> Self {
        CompressedHistory {
            k,
            kind,
            entries: Vec::new(),
            horizon_reached: 0,
        }
    }

    pub fn push(&mut self, entry: Entry) {
        self.horizon_reached += u64::from(entry.draws);
        self.entries.push(entry);
    }

    pub fn is_exact(&self) -> bool {
        self.entries.iter().all(|e| e.draws == 1)
    }

    pub fn total_reward(&self) -> f64 {
        self.entries.iter().map(|e| e.reward_sum).sum()
    }

    /// Rebuilds the policy state the runner ended with.
    pub fn replay(&self) -> PolicyState {
        let mut state = PolicyState::new(self.k, self.kind);
        for e in &self.entries {
            state.record(e.arm as usize, e.draws, e.reward_sum, e.reward_sq_sum);
        }
        state
    }

    /// Per-arm moments of the first `t` draws. An entry straddling `t`
    /// contributes proportionally to the fraction of its draws inside the
    /// prefix.
    pub fn moments_at(&self, t: f64) -> Vec<ArmMoments> {
        let mut walker = PrefixWalker::new(self);
        let mut out = vec![ArmMoments::default(); self.k];
        walker.moments_at(t, &mut out);
        out
    }

    /// Cumulative reward of the first `t` draws, with the same proportional
    /// treatment of a straddling entry.
    pub fn reward_at(&self, t: f64) -> f64 {
        self.moments_at(t).iter().map(|m| m.sum).sum()
    }
}

/// Incremental evaluation of prefix moments for non-decreasing `t`.
#[derive(Debug, Clone)]
pub struct PrefixWalker<'a> {
    entries: &'a [Entry],
    complete: Vec<ArmMoments>,
    next: usize,
    consumed: f64,
}

impl<'a> PrefixWalker<'a> {
    pub fn new(history: &'a CompressedHistory) -> Self {
        PrefixWalker {
            entries: &history.entries,
            complete: vec![ArmMoments::default(); history.k],
            next: 0,
            consumed: 0.0,
        }
    }

    /// Writes moments of the first `t` draws into `out`. Calls must use
    /// non-decreasing `t`.
    pub fn moments_at(&mut self, t: f64, out: &mut [ArmMoments]) {
        while let Some(e) = self.entries.get(self.next) {
            let end = self.consumed + f64::from(e.draws);
            if end > t {
                break;
            }
            self.complete[e.arm as usize].add(e, 1.0);
            self.consumed = end;
            self.next += 1;
        }
        out.copy_from_slice(&self.complete);
        if let Some(e) = self.entries.get(self.next) {
            let inside = t - self.consumed;
            if inside > 0.0 {
                out[e.arm as usize].add(e, inside / f64::from(e.draws));
            }
        }
    }
}
