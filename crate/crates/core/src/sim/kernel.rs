use rand::Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Bernoulli,
    Gaussian,
}

/// Reward distribution of a single arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardKernel {
    pub kind: RewardKind,
    pub mean: f64,
    /// Standard deviation. Ignored for Bernoulli kernels.
    #[serde(default)]
    pub scale: f64,
}

impl RewardKernel {
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(
                "mean",
                format!("Bernoulli mean {p} outside [0, 1]"),
            ));
        }
        Ok(RewardKernel {
            kind: RewardKind::Bernoulli,
            mean: p,
            scale: 0.0,
        })
    }

    pub fn gaussian(mean: f64, scale: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::config("mean", "Gaussian mean must be finite"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config(
                "scale",
                format!("Gaussian scale {scale} must be > 0"),
            ));
        }
        Ok(RewardKernel {
            kind: RewardKind::Gaussian,
            mean,
            scale,
        })
    }

    /// Builds a kernel of `kind` with the given mean, reusing `scale` for
    /// Gaussian kernels.
    pub fn with_kind(kind: RewardKind, mean: f64, scale: f64) -> Result<Self> {
        match kind {
            RewardKind::Bernoulli => Self::bernoulli(mean),
            RewardKind::Gaussian => Self::gaussian(mean, scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Self::with_kind(self.kind, self.mean, self.scale).map(|_| ())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            RewardKind::Bernoulli => {
                if rng.random::<f64>() < self.mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.mean + self.scale * z
            }
        }
    }

    /// Draws `m` i.i.d. rewards and returns `(sum, sum of squares)`.
    ///
    /// For `m > 1` the sufficient statistics are sampled directly: a binomial
    /// count for Bernoulli, and for Gaussian the sample sum plus an
    /// independent chi-square within-sum of squares.
    pub fn sample_sums<R: Rng + ?Sized>(&self, m: u32, rng: &mut R) -> (f64, f64) {
        if m == 1 {
            let r = self.sample(rng);
            return (r, r * r);
        }
        let mf = f64::from(m);
        match self.kind {
            RewardKind::Bernoulli => {
                let count = Binomial::new(u64::from(m), self.mean)
                    .expect("validated Bernoulli mean")
                    .sample(rng) as f64;
                (count, count)
            }
            RewardKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                let sum = mf * self.mean + self.scale * mf.sqrt() * z;
                let within: f64 = ChiSquared::new(mf - 1.0).expect("m > 1").sample(rng);
                let sum_sq = self.scale * self.scale * within + sum * sum / mf;
                (sum, sum_sq)
            }
        }
    }

    /// Log-likelihood of the aggregate `(n, sum, sum_sq)` of rewards drawn
    /// from this kernel, dropping terms that do not depend on the kernel.
    pub(crate) fn log_likelihood_moments(&self, n: f64, sum: f64, sum_sq: f64) -> f64 {
        match self.kind {
            RewardKind::Bernoulli => {
                let failures = n - sum;
                xlogy(sum, self.mean) + xlogy(failures, 1.0 - self.mean)
            }
            RewardKind::Gaussian => {
                let var = self.scale * self.scale;
                let sq_dev = sum_sq - 2.0 * self.mean * sum + n * self.mean * self.mean;
                -n * self.scale.ln() - sq_dev / (2.0 * var)
            }
        }
    }

    /// Log density (or mass) of a single reward.
    pub fn log_density(&self, reward: f64) -> f64 {
        match self.kind {
            RewardKind::Bernoulli => {
                if reward == 1.0 {
                    self.mean.ln()
                } else if reward == 0.0 {
                    (1.0 - self.mean).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            RewardKind::Gaussian => {
                let z = (reward - self.mean) / self.scale;
                -0.5 * z * z - self.scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }
}

/// `x * ln(y)` with the convention `0 * ln(0) = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Reward kernels of all arms in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RewardKernel>", into = "Vec<RewardKernel>")]
pub struct ArmVector {
    kernels: Vec<RewardKernel>,
}

impl ArmVector {
    pub fn new(kernels: Vec<RewardKernel>) -> Result<Self> {
        if kernels.len() < 2 {
            return Err(Error::config("arms", "K must be ≥ 2"));
        }
        let kind = kernels[0].kind;
        for k in &kernels {
            k.validate()?;
            if k.kind != kind {
                return Err(Error::config("arms", "all arms must share one reward kind"));
            }
        }
        Ok(ArmVector { kernels })
    }

    pub fn bernoulli(means: &[f64]) -> Result<Self> {
        Self::new(
            means
                .iter()
                .map(|&p| RewardKernel::bernoulli(p))
                .collect::<Result<_>>()?,
        )
    }

    pub fn gaussian(means: &[f64], scale: f64) -> Result<Self> {
        Self::new(
            means
                .iter()
                .map(|&m| RewardKernel::gaussian(m, scale))
                .collect::<Result<_>>()?,
        )
    }

    /// `k` copies of the same kernel, the null configuration.
    pub fn identical(kernel: RewardKernel, k: usize) -> Result<Self> {
        Self::new(vec![kernel; k])
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kind(&self) -> RewardKind {
        self.kernels[0].kind
    }

    pub fn kernels(&self) -> &[RewardKernel] {
        &self.kernels
    }

    pub fn means(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.mean).collect()
    }
}

impl std::ops::Index<usize> for ArmVector {
    type Output = RewardKernel;
    fn index(&self, i: usize) -> &RewardKernel {
        &self.kernels[i]
    }
}

impl TryFrom<Vec<RewardKernel>> for ArmVector {
    type Error = Error;
    fn try_from(v: Vec<RewardKernel>) -> Result<Self> {
        ArmVector::new(v)
    }
}

impl From<ArmVector> for Vec<RewardKernel> {
    fn from(a: ArmVector) -> Self {
        a.kernels
    }
}
