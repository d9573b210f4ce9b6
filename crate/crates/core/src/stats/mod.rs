//! Test statistics computed from compressed histories.
//!
//! Every statistic is a function of per-arm `(n, Σr, Σr²)` only, so exact and
//! batch-compressed histories with equal per-arm sums give equal values.
//! Multi-comparison tests are reduced to a scalar (the minimum over their
//! comparisons) and also report each comparison separately.

mod classical;

use serde::{Deserialize, Serialize};

pub use classical::{classical_threshold, studentized_range_quantile};

use crate::error::{Error, Result};
use crate::sim::{argmax, ArmMoments, ArmVector, CompressedHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    OneSidedRight,
    TwoSided,
}

/// How a multi-comparison test controls its error rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyMode {
    /// The null is rejected only if every comparison rejects; calibration
    /// uses the minimum statistic.
    #[default]
    AllReject,
    /// Each comparison is its own level-α test; calibration pools the
    /// per-comparison statistics, which are exchangeable under the null.
    PerComparison,
}

/// Standard error used by the two-sample statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variance {
    /// Unequal variances: `sqrt(v_a/n_a + v_b/n_b)`.
    #[default]
    Welch,
    /// Pooled variance: `s_p sqrt(1/n_a + 1/n_b)`, the classical Student form.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    /// Two-sample t on `mean[first] - mean[second]`.
    TwoSampleT {
        first: usize,
        second: usize,
        sidedness: Sidedness,
    },
    /// One-sided one-sample t of every arm against a fixed baseline.
    TConstant {
        baseline: f64,
    },
    /// Two-sided two-sample t of every arm against a control arm.
    TControl {
        control: usize,
    },
    Anova,
    /// Standardized gaps between the empirically best arm and every other.
    TukeyBest,
    /// Log likelihood ratio of two fully specified arm vectors.
    Lrt {
        null: ArmVector,
        alt: ArmVector,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    #[serde(flatten)]
    pub kind: TestKind,
    /// Minimum effect d0 a replication must show to count towards power.
    #[serde(default)]
    pub min_effect: f64,
    #[serde(default)]
    pub family: FamilyMode,
    /// Standard error of the two-sample statistics (t-test, T-Control,
    /// Tukey).
    #[serde(default)]
    pub variance: Variance,
}

/// One comparison of a multi-comparison test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub arm: usize,
    /// Reference arm; `None` for a comparison against a fixed baseline.
    pub other: Option<usize>,
    pub stat: Option<f64>,
}

/// Value of a test statistic. `None` means undefined, which never rejects.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatValue {
    pub value: Option<f64>,
    pub comparisons: Vec<Comparison>,
    /// Empirically best arm (Tukey only).
    pub best_arm: Option<usize>,
}

/// Per-arm sample summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n: f64,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

impl ArmSummary {
    pub fn from_moments(m: &ArmMoments) -> Self {
        if m.n <= 0.0 {
            return ArmSummary {
                n: 0.0,
                mean: None,
                variance: None,
            };
        }
        let mean = m.sum / m.n;
        let variance = (m.n >= 2.0).then(|| {
            let dev = m.sum_sq - m.sum * mean;
            // cancellation noise on constant data
            if dev <= 1e-12 * m.sum_sq.abs() {
                0.0
            } else {
                dev / (m.n - 1.0)
            }
        });
        ArmSummary {
            n: m.n,
            mean: Some(mean),
            variance,
        }
    }

    fn defined(&self) -> Option<(f64, f64, f64)> {
        Some((self.n, self.mean?, self.variance?))
    }
}

fn welch(a: &ArmSummary, b: &ArmSummary) -> Option<f64> {
    let (na, ma, va) = a.defined()?;
    let (nb, mb, vb) = b.defined()?;
    let se2 = va / na + vb / nb;
    (se2 > 0.0).then(|| (ma - mb) / se2.sqrt())
}

fn pooled(a: &ArmSummary, b: &ArmSummary) -> Option<f64> {
    let (na, ma, va) = a.defined()?;
    let (nb, mb, vb) = b.defined()?;
    let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    let se2 = sp2 * (1.0 / na + 1.0 / nb);
    (se2 > 0.0).then(|| (ma - mb) / se2.sqrt())
}

fn one_sample(a: &ArmSummary, baseline: f64) -> Option<f64> {
    let (n, m, v) = a.defined()?;
    (v > 0.0).then(|| (m - baseline) / (v / n).sqrt())
}

fn min_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut out = f64::INFINITY;
    let mut any = false;
    for v in values {
        out = out.min(v?);
        any = true;
    }
    any.then_some(out)
}

impl TestSpec {
    pub fn new(kind: TestKind) -> Self {
        TestSpec {
            kind,
            min_effect: 0.0,
            family: FamilyMode::AllReject,
            variance: Variance::Welch,
        }
    }

    pub fn two_sample(sidedness: Sidedness) -> Self {
        Self::new(TestKind::TwoSampleT {
            first: 0,
            second: 1,
            sidedness,
        })
    }

    pub fn with_min_effect(mut self, d0: f64) -> Self {
        self.min_effect = d0;
        self
    }

    pub fn with_family(mut self, family: FamilyMode) -> Self {
        self.family = family;
        self
    }

    pub fn with_variance(mut self, variance: Variance) -> Self {
        self.variance = variance;
        self
    }

    fn two_sample_stat(&self, a: &ArmSummary, b: &ArmSummary) -> Option<f64> {
        match self.variance {
            Variance::Welch => welch(a, b),
            Variance::Pooled => pooled(a, b),
        }
    }

    pub fn sidedness(&self) -> Sidedness {
        match self.kind {
            TestKind::TwoSampleT { sidedness, .. } => sidedness,
            TestKind::TControl { .. } => Sidedness::TwoSided,
            _ => Sidedness::OneSidedRight,
        }
    }

    /// Whether calibration and power are per comparison.
    pub fn per_comparison(&self) -> bool {
        self.family == FamilyMode::PerComparison
            && matches!(
                self.kind,
                TestKind::TConstant { .. } | TestKind::TControl { .. }
            )
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            TestKind::TwoSampleT { .. } => "t-test",
            TestKind::TConstant { .. } => "T-Constant",
            TestKind::TControl { .. } => "T-Control",
            TestKind::Anova => "ANOVA",
            TestKind::TukeyBest => "Tukey",
            TestKind::Lrt { .. } => "LRT",
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.min_effect >= 0.0) {
            return Err(Error::config("test.min_effect", "d0 must be ≥ 0"));
        }
        match &self.kind {
            TestKind::TwoSampleT { first, second, .. } => {
                if first == second || *first >= k || *second >= k {
                    return Err(Error::config("test.arms", "need two distinct arms < K"));
                }
            }
            TestKind::TControl { control } if *control >= k => {
                return Err(Error::config("test.control", "control arm out of range"));
            }
            TestKind::Lrt { null, alt } => {
                if null.len() != k || alt.len() != k || null.kind() != alt.kind() {
                    return Err(Error::config(
                        "test.lrt",
                        "null and alternative must have K arms of one kind",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Evaluates the statistic on per-arm moments, reusing `out`.
    pub fn evaluate_into(&self, moments: &[ArmMoments], out: &mut StatValue) {
        out.comparisons.clear();
        out.best_arm = None;
        out.value = None;
        let summary = |i: usize| ArmSummary::from_moments(&moments[i]);
        match &self.kind {
            TestKind::TwoSampleT { first, second, .. } => {
                let s = self.two_sample_stat(&summary(*first), &summary(*second));
                out.comparisons.push(Comparison {
                    arm: *first,
                    other: Some(*second),
                    stat: s,
                });
                out.value = match self.sidedness() {
                    Sidedness::OneSidedRight => s,
                    Sidedness::TwoSided => s.map(f64::abs),
                };
            }
            TestKind::TConstant { baseline } => {
                for (arm, m) in moments.iter().enumerate() {
                    out.comparisons.push(Comparison {
                        arm,
                        other: None,
                        stat: one_sample(&ArmSummary::from_moments(m), *baseline),
                    });
                }
                out.value = min_defined(out.comparisons.iter().map(|c| c.stat));
            }
            TestKind::TControl { control } => {
                let c = summary(*control);
                for arm in (0..moments.len()).filter(|a| a != control) {
                    out.comparisons.push(Comparison {
                        arm,
                        other: Some(*control),
                        stat: self.two_sample_stat(&summary(arm), &c),
                    });
                }
                out.value = min_defined(out.comparisons.iter().map(|c| c.stat.map(f64::abs)));
            }
            TestKind::Anova => out.value = anova_from_moments(moments),
            TestKind::TukeyBest => {
                let summaries: Vec<ArmSummary> =
                    moments.iter().map(ArmSummary::from_moments).collect();
                if summaries.iter().any(|s| s.variance.is_none()) {
                    return;
                }
                let best = argmax(
                    summaries
                        .iter()
                        .map(|s| s.mean.unwrap_or(f64::NEG_INFINITY)),
                );
                out.best_arm = Some(best);
                for (arm, s) in summaries.iter().enumerate().filter(|(a, _)| *a != best) {
                    out.comparisons.push(Comparison {
                        arm: best,
                        other: Some(arm),
                        stat: self.two_sample_stat(&summaries[best], s),
                    });
                }
                out.value = min_defined(out.comparisons.iter().map(|c| c.stat));
            }
            TestKind::Lrt { null, alt } => {
                let total: f64 = moments.iter().map(|m| m.n).sum();
                if total <= 0.0 {
                    return;
                }
                let llr = lrt_from_moments(null, alt, moments);
                out.value = (!llr.is_nan()).then_some(llr);
            }
        }
    }

    pub fn evaluate(&self, moments: &[ArmMoments]) -> StatValue {
        let mut out = StatValue::default();
        self.evaluate_into(moments, &mut out);
        out
    }

    /// Evaluates the statistic on the first `t` draws of a history.
    pub fn evaluate_history(&self, history: &CompressedHistory, t: u64) -> StatValue {
        self.evaluate(&history.moments_at(t as f64))
    }
}

fn anova_from_moments(moments: &[ArmMoments]) -> Option<f64> {
    let k = moments.len() as f64;
    let summaries: Vec<ArmSummary> = moments.iter().map(ArmSummary::from_moments).collect();
    if summaries.iter().any(|s| s.variance.is_none()) {
        return None;
    }
    let n_total: f64 = summaries.iter().map(|s| s.n).sum();
    if n_total - k <= 0.0 {
        return None;
    }
    let grand = moments.iter().map(|m| m.sum).sum::<f64>() / n_total;
    let between: f64 = summaries
        .iter()
        .map(|s| s.n * (s.mean.unwrap() - grand).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    let within: f64 = summaries
        .iter()
        .map(|s| (s.n - 1.0) * s.variance.unwrap())
        .sum::<f64>()
        / (n_total - k);
    if within == 0.0 {
        return (between > 0.0).then_some(f64::INFINITY);
    }
    Some(between / within)
}

fn lrt_from_moments(null: &ArmVector, alt: &ArmVector, moments: &[ArmMoments]) -> f64 {
    let mut total = 0.0;
    for (i, m) in moments.iter().enumerate() {
        if m.n <= 0.0 {
            continue;
        }
        let l1 = alt[i].log_likelihood_moments(m.n, m.sum, m.sum_sq);
        let l0 = null[i].log_likelihood_moments(m.n, m.sum, m.sum_sq);
        total += l1 - l0;
    }
    total
}

/// Per-arm `(n, mean, variance)` over the first `t` draws.
pub fn arm_summaries(history: &CompressedHistory, t: u64) -> Vec<ArmSummary> {
    history
        .moments_at(t as f64)
        .iter()
        .map(ArmSummary::from_moments)
        .collect()
}

/// Signed Welch statistic of `mean[i] - mean[j]`.
pub fn two_sample_t(history: &CompressedHistory, t: u64, i: usize, j: usize) -> Option<f64> {
    let s = arm_summaries(history, t);
    welch(&s[i], &s[j])
}

pub fn t_constant_stat(history: &CompressedHistory, t: u64, baseline: f64) -> StatValue {
    TestSpec::new(TestKind::TConstant { baseline }).evaluate_history(history, t)
}

pub fn t_control_stat(history: &CompressedHistory, t: u64, control: usize) -> StatValue {
    TestSpec::new(TestKind::TControl { control }).evaluate_history(history, t)
}

pub fn anova_f(history: &CompressedHistory, t: u64) -> Option<f64> {
    anova_from_moments(&history.moments_at(t as f64))
}

pub fn tukey_best_stat(history: &CompressedHistory, t: u64) -> StatValue {
    TestSpec::new(TestKind::TukeyBest).evaluate_history(history, t)
}

/// Log likelihood ratio `log Π p(r|a, alt) / Π p(r|a, null)` over the first
/// `t` draws.
pub fn lrt_stat(
    history: &CompressedHistory,
    t: u64,
    null: &ArmVector,
    alt: &ArmVector,
) -> Result<f64> {
    let moments = history.moments_at(t as f64);
    for (i, m) in moments.iter().enumerate() {
        if m.n > 0.0 && null[i].log_likelihood_moments(m.n, m.sum, m.sum_sq) == f64::NEG_INFINITY {
            return Err(Error::NullSupportViolation);
        }
    }
    Ok(lrt_from_moments(null, alt, &moments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Entry, RewardKind};
    use approx::assert_relative_eq;

    fn history_from(draws: &[(u32, f64)], k: usize) -> CompressedHistory {
        let mut h = CompressedHistory::new(k, RewardKind::Bernoulli);
        for &(arm, r) in draws {
            h.push(Entry {
                arm,
                reward_sum: r,
                reward_sq_sum: r * r,
                draws: 1,
            });
        }
        h
    }

    fn moments(list: &[(f64, f64, f64)]) -> Vec<ArmMoments> {
        list.iter()
            .map(|&(n, sum, sum_sq)| ArmMoments { n, sum, sum_sq })
            .collect()
    }

    #[test]
    fn summaries_from_compressed_entry() {
        let mut h = CompressedHistory::new(2, RewardKind::Bernoulli);
        h.push(Entry {
            arm: 0,
            reward_sum: 3.0,
            reward_sq_sum: 3.0,
            draws: 4,
        });
        let s = arm_summaries(&h, 4);
        assert_eq!(s[0].n, 4.0);
        assert_relative_eq!(s[0].mean.unwrap(), 0.75);
        assert_relative_eq!(s[0].variance.unwrap(), 0.25);
        assert_eq!(s[1].n, 0.0);
        assert!(s[1].mean.is_none() && s[1].variance.is_none());
    }

    #[test]
    fn constant_and_single_draw() {
        let h = history_from(&[(0, 0.7), (0, 0.7), (0, 0.7), (1, 0.3)], 2);
        let s = arm_summaries(&h, 4);
        assert_eq!(s[0].variance, Some(0.0));
        assert_eq!(s[1].variance, None);
    }

    #[test]
    fn welch_reference_value() {
        // arm0 {1,1,0,0}, arm1 {1,0,0,0}; reference value from
        // scipy.stats.ttest_ind(equal_var=False)
        let h = history_from(
            &[
                (0, 1.0),
                (0, 1.0),
                (0, 0.0),
                (0, 0.0),
                (1, 1.0),
                (1, 0.0),
                (1, 0.0),
                (1, 0.0),
            ],
            2,
        );
        let t = two_sample_t(&h, 8, 0, 1).unwrap();
        assert_relative_eq!(t, 0.654_653_670_707_977_1, epsilon = 1e-12);
        assert_relative_eq!(two_sample_t(&h, 8, 1, 0).unwrap(), -t);
        let same = history_from(&[(0, 1.0), (0, 0.0), (1, 1.0), (1, 0.0)], 2);
        assert_eq!(two_sample_t(&same, 4, 0, 1), Some(0.0));
    }

    #[test]
    fn pooled_reference_value() {
        // arm0 {1,1,1,0,0,1}, arm1 {1,0,0,0}; scipy.stats.ttest_ind gives
        // 1.2649110640673518 pooled and 1.2741179785940637 unpooled.
        let mut draws: Vec<(u32, f64)> = [1.0, 1.0, 1.0, 0.0, 0.0, 1.0]
            .iter()
            .map(|&r| (0, r))
            .collect();
        draws.extend([1.0, 0.0, 0.0, 0.0].iter().map(|&r| (1, r)));
        let h = history_from(&draws, 2);
        let m = h.moments_at(10.0);
        let spec = TestSpec::two_sample(Sidedness::OneSidedRight);
        let welch = spec.evaluate(&m).value.unwrap();
        let pooled = spec
            .with_variance(Variance::Pooled)
            .evaluate(&m)
            .value
            .unwrap();
        assert_relative_eq!(pooled, 1.264_911_064_067_351_8, epsilon = 1e-12);
        assert_relative_eq!(welch, 1.274_117_978_594_063_7, epsilon = 1e-12);
    }

    #[test]
    fn welch_zero_variance_rules() {
        // one zero-variance group: still defined
        let m = moments(&[(3.0, 3.0, 3.0), (3.0, 1.0, 1.0)]);
        let spec = TestSpec::two_sample(Sidedness::OneSidedRight);
        assert!(spec.evaluate(&m).value.is_some());
        // both zero: undefined
        let m = moments(&[(3.0, 3.0, 3.0), (3.0, 0.0, 0.0)]);
        assert!(spec.evaluate(&m).value.is_none());
    }

    #[test]
    fn t_constant_min_and_undefined() {
        // Construct arms with one-sample statistics 2.0, 3.0, 1.5 against 0.5
        // using n = 4, variance v: stat = (mean - 0.5) / sqrt(v / 4).
        let arm = |stat: f64| {
            let n = 4.0;
            let v = 0.25;
            let mean = 0.5 + stat * (v / n as f64).sqrt();
            // sum_sq from variance: (sum_sq - n mean^2)/(n-1) = v
            (n, n * mean, v * (n - 1.0) + n * mean * mean)
        };
        let m = moments(&[arm(2.0), arm(3.0), arm(1.5)]);
        let spec = TestSpec::new(TestKind::TConstant { baseline: 0.5 });
        let v = spec.evaluate(&m);
        assert_relative_eq!(v.value.unwrap(), 1.5, epsilon = 1e-12);
        assert_eq!(v.comparisons.len(), 3);
        let at_baseline = moments(&[arm(0.0), arm(0.0)]);
        assert_relative_eq!(
            spec.evaluate(&at_baseline).value.unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let m = moments(&[arm(2.0), (1.0, 1.0, 1.0)]);
        assert!(spec.evaluate(&m).value.is_none());
    }

    #[test]
    fn t_control_uses_min_abs() {
        let h = history_from(
            &[
                (0, 1.0),
                (0, 0.0),
                (0, 1.0),
                (1, 1.0),
                (1, 1.0),
                (1, 0.0),
                (2, 0.0),
                (2, 0.0),
                (2, 1.0),
            ],
            3,
        );
        let v = t_control_stat(&h, 9, 0);
        let t1 = two_sample_t(&h, 9, 1, 0).unwrap();
        let t2 = two_sample_t(&h, 9, 2, 0).unwrap();
        assert_relative_eq!(v.value.unwrap(), t1.abs().min(t2.abs()));
        assert_eq!(v.comparisons[1].stat, Some(t2));

        let two = history_from(
            &[(0, 1.0), (0, 0.0), (0, 0.0), (1, 1.0), (1, 1.0), (1, 0.0)],
            2,
        );
        assert_relative_eq!(
            t_control_stat(&two, 6, 0).value.unwrap(),
            two_sample_t(&two, 6, 1, 0).unwrap().abs()
        );
    }

    #[test]
    fn anova_cases() {
        // equal means, nonzero variance
        let m = moments(&[(4.0, 2.0, 2.0), (4.0, 2.0, 2.0), (4.0, 2.0, 2.0)]);
        assert_eq!(anova_from_moments(&m), Some(0.0));
        // constant data everywhere
        let m = moments(&[(4.0, 4.0, 4.0), (4.0, 4.0, 4.0)]);
        assert_eq!(anova_from_moments(&m), None);
    }

    #[test]
    fn anova_two_groups_is_pooled_t_squared() {
        let m = moments(&[(7.0, 4.1, 3.3), (5.0, 1.2, 0.9)]);
        let s: Vec<ArmSummary> = m.iter().map(ArmSummary::from_moments).collect();
        let (n1, m1, v1) = s[0].defined().unwrap();
        let (n2, m2, v2) = s[1].defined().unwrap();
        let pooled = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0);
        let t = (m1 - m2) / (pooled * (1.0 / n1 + 1.0 / n2)).sqrt();
        assert_relative_eq!(anova_from_moments(&m).unwrap(), t * t, max_relative = 1e-9);
    }

    #[test]
    fn tukey_picks_lowest_index_on_ties() {
        let m = moments(&[(4.0, 3.0, 3.0), (4.0, 3.0, 3.0), (4.0, 1.0, 1.0)]);
        let v = TestSpec::new(TestKind::TukeyBest).evaluate(&m);
        assert_eq!(v.best_arm, Some(0));
        assert_eq!(v.value, Some(0.0));
        let same = moments(&[(4.0, 2.0, 2.0), (4.0, 2.0, 2.0)]);
        assert_eq!(
            TestSpec::new(TestKind::TukeyBest).evaluate(&same).value,
            Some(0.0)
        );
    }

    #[test]
    fn lrt_single_draw_and_identical_hypotheses() {
        let null = ArmVector::bernoulli(&[0.5, 0.5]).unwrap();
        let alt = ArmVector::bernoulli(&[0.6, 0.4]).unwrap();
        let h = history_from(&[(0, 1.0)], 2);
        assert_relative_eq!(
            lrt_stat(&h, 1, &null, &alt).unwrap(),
            1.2f64.ln(),
            epsilon = 1e-14
        );
        let h = history_from(&[(0, 1.0), (1, 0.0), (1, 1.0), (0, 0.0)], 2);
        assert_eq!(lrt_stat(&h, 4, &null, &null).unwrap(), 0.0);
    }

    #[test]
    fn lrt_null_support_violation() {
        let null = ArmVector::bernoulli(&[1.0, 0.5]).unwrap();
        let alt = ArmVector::bernoulli(&[0.6, 0.4]).unwrap();
        let h = history_from(&[(0, 0.0)], 2);
        assert_eq!(
            lrt_stat(&h, 1, &null, &alt),
            Err(Error::NullSupportViolation)
        );
    }

    #[test]
    fn validation() {
        assert!(TestSpec::new(TestKind::TControl { control: 3 })
            .validate(3)
            .is_err());
        assert!(TestSpec::new(TestKind::TwoSampleT {
            first: 1,
            second: 1,
            sidedness: Sidedness::TwoSided
        })
        .validate(2)
        .is_err());
        assert!(TestSpec::new(TestKind::Anova)
            .with_min_effect(-1.0)
            .validate(3)
            .is_err());
    }
}
