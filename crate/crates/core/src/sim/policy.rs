use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kernel::RewardKind;
use crate::error::{Error, Result};

/// Arm-selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Uniform randomization.
    Uniform,
    Thompson,
    /// Thompson sampling mixed with uniform exploration at rate `epsilon`.
    EpsThompson {
        epsilon: f64,
    },
    EpsGreedy {
        epsilon: f64,
    },
    /// UCB1.
    Ucb,
}

/// Beta prior for Bernoulli Thompson sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        BetaPrior { a: 1.0, b: 1.0 }
    }
}

/// Normal–inverse-gamma prior for Gaussian Thompson sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub mu0: f64,
    pub kappa0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        NigPrior {
            mu0: 0.0,
            kappa0: 0.001,
            alpha0: 0.5,
            beta0: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default)]
    pub beta_prior: BetaPrior,
    #[serde(default)]
    pub gaussian_prior: NigPrior,
}

impl From<PolicyKind> for Policy {
    fn from(kind: PolicyKind) -> Self {
        Policy {
            kind,
            beta_prior: BetaPrior::default(),
            gaussian_prior: NigPrior::default(),
        }
    }
}

/// Sufficient statistics of one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub draws: u64,
    pub reward_sum: f64,
    pub reward_sq_sum: f64,
}

impl ArmStats {
    pub fn mean(&self) -> Option<f64> {
        (self.draws > 0).then(|| self.reward_sum / self.draws as f64)
    }
}

/// What a policy sees: per-arm sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub kind: RewardKind,
    pub arms: Vec<ArmStats>,
    pub total_draws: u64,
}

impl PolicyState {
    pub fn new(k: usize, kind: RewardKind) -> Self {
        PolicyState {
            kind,
            arms: vec![ArmStats::default(); k],
            total_draws: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn record(&mut self, arm: usize, draws: u32, reward_sum: f64, reward_sq_sum: f64) {
        let a = &mut self.arms[arm];
        a.draws += u64::from(draws);
        a.reward_sum += reward_sum;
        a.reward_sq_sum += reward_sq_sum;
        self.total_draws += u64::from(draws);
    }
}

impl Policy {
    pub fn uniform() -> Self {
        PolicyKind::Uniform.into()
    }

    pub fn thompson() -> Self {
        PolicyKind::Thompson.into()
    }

    pub fn eps_thompson(epsilon: f64) -> Self {
        PolicyKind::EpsThompson { epsilon }.into()
    }

    pub fn eps_greedy(epsilon: f64) -> Self {
        PolicyKind::EpsGreedy { epsilon }.into()
    }

    pub fn ucb() -> Self {
        PolicyKind::Ucb.into()
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PolicyKind::EpsThompson { epsilon } | PolicyKind::EpsGreedy { epsilon }
                if !(0.0..=1.0).contains(&epsilon) =>
            {
                Err(Error::config(
                    "policy.epsilon",
                    format!("{epsilon} outside [0, 1]"),
                ))
            }
            _ => {
                let bp = self.beta_prior;
                let np = self.gaussian_prior;
                if !(bp.a > 0.0 && bp.b > 0.0) {
                    return Err(Error::config("policy.beta_prior", "a, b must be > 0"));
                }
                if !(np.kappa0 > 0.0 && np.alpha0 > 0.0 && np.beta0 > 0.0) {
                    return Err(Error::config(
                        "policy.gaussian_prior",
                        "kappa0, alpha0, beta0 must be > 0",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Short label used in tables, e.g. `eps-TS(0.3)`.
    pub fn label(&self) -> String {
        match self.kind {
            PolicyKind::Uniform => "UR".into(),
            PolicyKind::Thompson => "TS".into(),
            PolicyKind::EpsThompson { epsilon } => format!("eps-TS({epsilon})"),
            PolicyKind::EpsGreedy { epsilon } => format!("eps-greedy({epsilon})"),
            PolicyKind::Ucb => "UCB".into(),
        }
    }

    /// Whether the selection never consumes randomness.
    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, PolicyKind::Ucb)
    }

    /// Chooses the next arm. Ties go to the lowest index.
    pub fn select<R: Rng + ?Sized>(&self, state: &PolicyState, rng: &mut R) -> usize {
        let k = state.k();
        match self.kind {
            PolicyKind::Uniform => rng.random_range(0..k),
            PolicyKind::Thompson => self.thompson_choice(state, rng),
            PolicyKind::EpsThompson { epsilon } => {
                if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                    rng.random_range(0..k)
                } else {
                    self.thompson_choice(state, rng)
                }
            }
            PolicyKind::EpsGreedy { epsilon } => {
                if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                    rng.random_range(0..k)
                } else {
                    greedy_choice(state)
                }
            }
            PolicyKind::Ucb => ucb_choice(state),
        }
    }

    fn thompson_choice<R: Rng + ?Sized>(&self, state: &PolicyState, rng: &mut R) -> usize {
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for (i, arm) in state.arms.iter().enumerate() {
            let draw = match state.kind {
                RewardKind::Bernoulli => self.beta_posterior_draw(arm, rng),
                RewardKind::Gaussian => self.nig_posterior_draw(arm, rng),
            };
            if draw > best_draw {
                best_draw = draw;
                best = i;
            }
        }
        best
    }

    fn beta_posterior_draw<R: Rng + ?Sized>(&self, arm: &ArmStats, rng: &mut R) -> f64 {
        let successes = arm.reward_sum.clamp(0.0, arm.draws as f64);
        let failures = arm.draws as f64 - successes;
        Beta::new(self.beta_prior.a + successes, self.beta_prior.b + failures)
            .expect("positive beta parameters")
            .sample(rng)
    }

    fn nig_posterior_draw<R: Rng + ?Sized>(&self, arm: &ArmStats, rng: &mut R) -> f64 {
        let p = self.gaussian_prior;
        let n = arm.draws as f64;
        let (kappa, mu, alpha, beta) = if arm.draws == 0 {
            (p.kappa0, p.mu0, p.alpha0, p.beta0)
        } else {
            let mean = arm.reward_sum / n;
            let ss = (arm.reward_sq_sum - arm.reward_sum * mean).max(0.0);
            let kappa = p.kappa0 + n;
            let mu = (p.kappa0 * p.mu0 + arm.reward_sum) / kappa;
            let alpha = p.alpha0 + 0.5 * n;
            let beta = p.beta0 + 0.5 * ss + p.kappa0 * n * (mean - p.mu0).powi(2) / (2.0 * kappa);
            (kappa, mu, alpha, beta)
        };
        let precision: f64 = Gamma::new(alpha, 1.0 / beta)
            .expect("positive gamma parameters")
            .sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        mu + z / (precision * kappa).sqrt()
    }
}

fn greedy_choice(state: &PolicyState) -> usize {
    if let Some(i) = state.arms.iter().position(|a| a.draws == 0) {
        return i;
    }
    argmax(state.arms.iter().map(|a| a.reward_sum / a.draws as f64))
}

fn ucb_choice(state: &PolicyState) -> usize {
    if let Some(i) = state.arms.iter().position(|a| a.draws == 0) {
        return i;
    }
    let log_t = (state.total_draws as f64).ln();
    argmax(state.arms.iter().map(|a| {
        let n = a.draws as f64;
        a.reward_sum / n + (2.0 * log_t / n).sqrt()
    }))
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn state_with(means: &[(u64, f64)]) -> PolicyState {
        let mut s = PolicyState::new(means.len(), RewardKind::Bernoulli);
        for (i, &(n, m)) in means.iter().enumerate() {
            if n > 0 {
                s.record(i, n as u32, m * n as f64, m * n as f64);
            }
        }
        s
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = derive_stream(1, 0, 0);
        let s = PolicyState::new(2, RewardKind::Bernoulli);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| Policy::uniform().select(&s, &mut rng) == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn ucb_pulls_unpulled_arm_first() {
        let s = state_with(&[(0, 0.0), (3, 0.9)]);
        let mut rng = derive_stream(1, 0, 0);
        assert_eq!(Policy::ucb().select(&s, &mut rng), 0);
        let s = state_with(&[(3, 0.9), (0, 0.0)]);
        assert_eq!(Policy::ucb().select(&s, &mut rng), 1);
    }

    #[test]
    fn ucb_index() {
        // means 0.5 (n=10) vs 0.4 (n=2): bonus for arm 1 dominates.
        let s = state_with(&[(10, 0.5), (2, 0.5)]);
        let mut rng = derive_stream(1, 0, 0);
        assert_eq!(Policy::ucb().select(&s, &mut rng), 1);
    }

    #[test]
    fn greedy_picks_best_mean() {
        let s = state_with(&[(10, 0.9), (10, 0.1)]);
        let mut rng = derive_stream(1, 0, 0);
        for _ in 0..100 {
            assert_eq!(Policy::eps_greedy(0.0).select(&s, &mut rng), 0);
        }
        let tied = state_with(&[(10, 0.5), (10, 0.5)]);
        assert_eq!(Policy::eps_greedy(0.0).select(&tied, &mut rng), 0);
    }

    #[test]
    fn eps_ts_zero_matches_ts_stream() {
        let s = state_with(&[(5, 0.6), (4, 0.5), (7, 0.4)]);
        let mut a = derive_stream(3, 0, 0);
        let mut b = derive_stream(3, 0, 0);
        for _ in 0..500 {
            assert_eq!(
                Policy::eps_thompson(0.0).select(&s, &mut a),
                Policy::thompson().select(&s, &mut b)
            );
        }
    }

    #[test]
    fn eps_ts_one_is_uniform() {
        // chi-square goodness of fit against uniform over 3 arms, 10k draws
        let s = state_with(&[(50, 0.9), (50, 0.1), (50, 0.2)]);
        let mut rng = derive_stream(5, 0, 0);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[Policy::eps_thompson(1.0).select(&s, &mut rng)] += 1;
        }
        let e = 10_000.0 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // chi-square(2) upper 0.001 quantile
        assert!(chi2 < 13.816, "chi2 = {chi2}");
    }

    #[test]
    fn thompson_prefers_better_arm() {
        let s = state_with(&[(100, 0.7), (100, 0.3)]);
        let mut rng = derive_stream(9, 0, 0);
        let zeros = (0..1000)
            .filter(|_| Policy::thompson().select(&s, &mut rng) == 0)
            .count();
        assert!(zeros > 990);

        let mut g = PolicyState::new(2, RewardKind::Gaussian);
        g.record(0, 50, 50.0 * 0.9, 50.0 * (0.81 + 0.01));
        g.record(1, 50, 50.0 * 0.5, 50.0 * (0.25 + 0.01));
        let zeros = (0..1000)
            .filter(|_| Policy::thompson().select(&g, &mut rng) == 0)
            .count();
        assert!(zeros > 990);
    }

    #[test]
    fn epsilon_validation() {
        assert!(Policy::eps_thompson(1.5).validate().is_err());
        assert!(Policy::eps_greedy(0.1).validate().is_ok());
    }
}
