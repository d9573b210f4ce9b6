use std::time::Instant;

use rayon::prelude::*;

use super::{Check, Scale, Table, EMPIRICAL_REALIZED_MEANS};
use crate::calibration::{ait_calibrate, fmt_float, AitConfig, NullEstimate};
use crate::error::Result;
use crate::objective::{
    ecp, evaluate_designs_with_progress, post_experiment_eval, recommend,
    sensitivity_sweep_with_progress, DesignPoint, DesignProblem, PolicyFamily,
};
use crate::power::{
    fpr_analysis, power_analysis, power_comparison, Calibration, ComparisonConfig, ComparisonRow,
    PowerConfig, PriorSpec, ThresholdSource,
};
use crate::rng::{derive_seed, derive_stream, stage};
use crate::sim::{run, ArmVector, Policy, RewardKernel, RunMode};
use crate::stats::{FamilyMode, Sidedness, TestKind, TestSpec, Variance};

type Output = (Table, Vec<Check>, Vec<String>);
type Progress<'a> = &'a (dyn Fn(f64) + Sync);

/// Stage tag for sub-seeds of the presets.
const PRESET: u32 = 100;
const ALPHA: f64 = 0.05;

fn f(x: f64) -> String {
    fmt_float(x)
}

fn opt(x: Option<u64>) -> String {
    x.map_or_else(|| "infeasible".into(), |t| t.to_string())
}

fn steps_value(x: Option<u64>) -> f64 {
    x.map_or(f64::NAN, |t| t as f64)
}

/// Two-arm Bernoulli presets use the equal-variance t statistic; the
/// published naive error rates are only reproduced with it.
fn one_sided() -> TestSpec {
    TestSpec::two_sample(Sidedness::OneSidedRight).with_variance(Variance::Pooled)
}

pub(super) fn table1(scale: Scale, seed: u64, progress: Progress) -> Result<Output> {
    const MUS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
    const NAIVE: [f64; 5] = [0.071, 0.086, 0.099, 0.108, 0.132];
    const AIT: [f64; 5] = [0.052, 0.050, 0.050, 0.049, 0.050];
    let n = match scale {
        Scale::Quick => 1_000,
        Scale::Full => 10_000,
    };
    let horizon = 200;
    let policy = Policy::thompson();
    let spec = one_sided();
    let mut table = Table::new(&[
        "mu",
        "naive_fpr",
        "published_naive_fpr",
        "ait_fpr",
        "published_ait_fpr",
    ]);
    let mut checks = Vec::new();
    let mut naive_rates = Vec::new();
    for (i, &mu) in MUS.iter().enumerate() {
        let sub = derive_seed(seed, i as u64, PRESET);
        let arms = ArmVector::bernoulli(&[mu, mu])?;
        let naive = fpr_analysis(
            &arms,
            horizon,
            &policy,
            &spec,
            &ThresholdSource::Classical,
            ALPHA,
            n,
            RunMode::Exact,
            sub,
        )?;
        let cfg = PowerConfig {
            k: 2,
            prior: PriorSpec::fixed_bernoulli(&[mu, mu]),
            horizon,
            policy: policy.clone(),
            spec: spec.clone(),
            alpha: ALPHA,
            replications: n,
            grid_points: 10,
            null_replications: Some(n),
            mode: RunMode::Exact,
            calibration: Calibration::Ait,
        };
        let ait = power_analysis(&cfg, sub ^ 1)?.power_at(horizon);
        table.push(vec![f(mu), f(naive), f(NAIVE[i]), f(ait), f(AIT[i])]);
        checks.push(Check::range(
            "A1",
            format!("AIT FPR at mu={mu}"),
            ait,
            0.04,
            0.06,
            Some(AIT[i]),
        ));
        checks.push(Check::range(
            "A1",
            format!("naive FPR at mu={mu}"),
            naive,
            0.065,
            1.0,
            Some(NAIVE[i]),
        ));
        naive_rates.push(naive);
        progress((i + 1) as f64 / MUS.len() as f64);
    }
    let worst_drop = naive_rates
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most(
        "A1",
        "largest decrease of naive FPR between neighbouring mu",
        worst_drop,
        0.01,
    ));
    let notes = vec![format!(
        "TS, two Bernoulli arms, T={horizon}, one-sided pooled t, N={n}, exact runner"
    )];
    Ok((table, checks, notes))
}

fn comparison_cfg(scale: Scale) -> ComparisonConfig {
    // With M/B null runs per grid point the threshold noise alone moves
    // the power by about 0.02, so full scale calibrates on more.
    let (replications, art_resamples, null_replications) = match scale {
        Scale::Quick => (1_000, 50, None),
        Scale::Full => (10_000, 100, Some(10_000)),
    };
    ComparisonConfig {
        horizon: 200,
        alpha: ALPHA,
        replications,
        art_resamples,
        grid_points: 10,
        null_replications,
    }
}

fn comparison_table(
    rows: &[ComparisonRow],
    published: &[(f64, f64)],
    fprs: Option<&[(f64, f64)]>,
) -> Table {
    let mut header = vec![
        "policy",
        "ait_power",
        "published_ait_power",
        "art_power",
        "published_art_power",
        "ait_fpr",
        "art_fpr",
    ];
    if fprs.is_some() {
        header.extend(["published_ait_fpr", "published_art_fpr"]);
    }
    let mut table = Table::new(&header);
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![
            r.policy.clone(),
            f(r.ait_power),
            f(published[i].0),
            f(r.art_power),
            f(published[i].1),
            f(r.ait_fpr),
            f(r.art_fpr),
        ];
        if let Some(p) = fprs {
            row.extend([f(p[i].0), f(p[i].1)]);
        }
        table.push(row);
    }
    table
}

fn comparison_checks(
    criterion: &str,
    rows: &[ComparisonRow],
    published: &[(f64, f64)],
) -> Vec<Check> {
    let mut checks = Vec::new();
    for (r, &(ait, art)) in rows.iter().zip(published) {
        let p = &r.policy;
        checks.push(Check::near(
            criterion,
            format!("{p} AIT power"),
            r.ait_power,
            ait,
            0.03,
        ));
        if criterion == "A2" {
            checks.push(Check::near(
                criterion,
                format!("{p} ART power"),
                r.art_power,
                art,
                0.03,
            ));
            checks.push(Check::near(
                criterion,
                format!("{p} AIT FPR"),
                r.ait_fpr,
                ALPHA,
                0.01,
            ));
            checks.push(Check::near(
                criterion,
                format!("{p} ART FPR"),
                r.art_fpr,
                ALPHA,
                0.01,
            ));
        }
        checks.push(Check::at_least(
            criterion,
            format!("{p} AIT power minus ART power"),
            r.ait_power - r.art_power,
            0.0,
        ));
    }
    checks
}

pub(super) fn table2(scale: Scale, seed: u64, progress: Progress) -> Result<Output> {
    // (AIT, ART) power and FPR as published.
    const POWER: [(f64, f64); 3] = [(0.520, 0.434), (0.490, 0.443), (0.781, 0.050)];
    const FPR: [(f64, f64); 3] = [(0.053, 0.052), (0.057, 0.057), (0.054, 0.050)];
    let cfg = comparison_cfg(scale);
    let env = ArmVector::bernoulli(&[0.6, 0.4])?;
    let policies = [Policy::thompson(), Policy::eps_greedy(0.1), Policy::ucb()];
    let mut rows = Vec::new();
    for (i, p) in policies.iter().enumerate() {
        rows.extend(power_comparison(
            std::slice::from_ref(p),
            &one_sided(),
            &env,
            &cfg,
            derive_seed(seed, i as u64, PRESET),
        )?);
        progress((i + 1) as f64 / policies.len() as f64);
    }
    let table = comparison_table(&rows, &POWER, Some(&FPR));
    let checks = comparison_checks("A2", &rows, &POWER);
    Ok((table, checks, comparison_notes(&cfg)))
}

fn comparison_notes(cfg: &ComparisonConfig) -> Vec<String> {
    vec![format!(
        "Bernoulli arms (0.6, 0.4), T={}, one-sided pooled t on arm 0 minus arm 1, N={}, ART resamples {}, grid B={}, null runs per grid point {}",
        cfg.horizon,
        cfg.replications,
        cfg.art_resamples,
        cfg.grid_points,
        cfg.null_replications.unwrap_or(cfg.replications / cfg.grid_points)
    )]
}

pub(super) fn appendix_b(scale: Scale, seed: u64, progress: Progress) -> Result<Output> {
    const EPS: [f64; 5] = [0.0, 0.1, 0.2, 0.4, 0.8];
    const POWER: [(f64, f64); 5] = [
        (0.520, 0.434),
        (0.675, 0.607),
        (0.750, 0.704),
        (0.827, 0.810),
        (0.878, 0.871),
    ];
    let cfg = comparison_cfg(scale);
    let env = ArmVector::bernoulli(&[0.6, 0.4])?;
    let mut rows = Vec::new();
    for (i, &eps) in EPS.iter().enumerate() {
        rows.extend(power_comparison(
            &[Policy::eps_thompson(eps)],
            &one_sided(),
            &env,
            &cfg,
            derive_seed(seed, i as u64, PRESET),
        )?);
        progress((i + 1) as f64 / EPS.len() as f64);
    }
    let table = comparison_table(&rows, &POWER, None);
    let mut checks = comparison_checks("A3", &rows, &POWER);
    let worst_drop = rows
        .windows(2)
        .map(|w| w[0].ait_power - w[1].ait_power)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most(
        "A3",
        "largest decrease of AIT power between neighbouring epsilon",
        worst_drop,
        0.02,
    ));
    Ok((table, checks, comparison_notes(&cfg)))
}

pub(super) fn empirical_problem(replications: usize) -> DesignProblem {
    DesignProblem {
        k: 6,
        prior: PriorSpec::GaussianIid {
            mean: 0.81,
            scale: 0.015,
            reward_scale: 0.1,
        },
        spec: TestSpec::new(TestKind::TControl { control: 0 })
            .with_min_effect(0.025)
            .with_family(FamilyMode::PerComparison),
        family: PolicyFamily::EpsThompson,
        phis: (0..=10).map(|i| i as f64 / 10.0).collect(),
        alpha: ALPHA,
        beta_target: 0.2,
        t_max: 6_000,
        replications,
        grid_points: 10,
        null_replications: None,
        mode: RunMode::Batched,
        calibration: Calibration::Ait,
    }
}

/// Rejection rate of a design under identical arms at the prior mean.
fn design_fpr(
    problem: &DesignProblem,
    policy: &Policy,
    horizon: Option<u64>,
    calibration: Calibration,
    seed: u64,
) -> Result<f64> {
    let Some(t) = horizon else {
        return Ok(f64::NAN);
    };
    let t = t.max(2);
    let null = vec![0.81; problem.k];
    let spec = problem.spec.clone().with_min_effect(0.0);
    match calibration {
        Calibration::Classical => fpr_analysis(
            &ArmVector::gaussian(&null, 0.1)?,
            t,
            policy,
            &spec,
            &ThresholdSource::Classical,
            problem.alpha,
            problem.replications,
            problem.mode,
            seed,
        ),
        Calibration::Ait => {
            let cfg = PowerConfig {
                k: problem.k,
                prior: PriorSpec::fixed_gaussian(&null, 0.1),
                horizon: t,
                policy: policy.clone(),
                spec,
                alpha: problem.alpha,
                replications: problem.replications,
                grid_points: problem.grid_points,
                null_replications: problem.null_replications,
                mode: problem.mode,
                calibration,
            };
            Ok(power_analysis(&cfg, seed)?.power_at(t))
        }
    }
}

pub(super) fn table3(scale: Scale, seed: u64, progress: Progress) -> Result<Output> {
    let m = match scale {
        Scale::Quick => 1_000,
        Scale::Full => 10_000,
    };
    let w = 0.01;
    let step_tol = if m >= 10_000 { 0.10 } else { 0.15 };
    let problem = empirical_problem(m);
    let realized = ArmVector::gaussian(&EMPIRICAL_REALIZED_MEANS, 0.1)?;

    let naive_point = |policy: Policy, phi: f64| -> Result<DesignPoint> {
        let cfg = PowerConfig {
            policy,
            calibration: Calibration::Classical,
            ..problem.power_config(phi)
        };
        let curve = power_analysis(&cfg, derive_seed(seed, 0, stage::POLICY_PARAMETER))?;
        let horizon = curve.min_horizon(problem.beta_target);
        Ok(DesignPoint {
            phi,
            horizon,
            mean_reward: curve.mean_reward_at(horizon.unwrap_or(problem.t_max)),
        })
    };
    let ur = naive_point(Policy::uniform(), 1.0)?;
    let ts_naive = naive_point(Policy::thompson(), 0.0)?;
    progress(0.1);

    let eval = evaluate_designs_with_progress(&problem, seed, &|x| progress(0.1 + 0.6 * x))?;
    let ts_ait = eval.points[0];
    let best = recommend(&eval.points, w)?;
    let best_point = DesignPoint {
        phi: best.phi,
        horizon: Some(best.horizon),
        mean_reward: best.mean_reward,
    };

    let post = |policy: &Policy, horizon: Option<u64>, i: u64| -> Result<(f64, f64)> {
        match horizon {
            Some(t) => {
                let e = post_experiment_eval(
                    policy,
                    t,
                    &realized,
                    w,
                    m,
                    problem.mode,
                    derive_seed(seed, i, PRESET),
                )?;
                Ok((e.mean_reward, e.ecp))
            }
            None => Ok((f64::NAN, f64::NAN)),
        }
    };
    let fpr_seed = |i| derive_seed(seed, 10 + i, PRESET);

    struct Row {
        label: String,
        policy: Policy,
        point: DesignPoint,
        calibration: Calibration,
        with_rewards: bool,
        published: [f64; 7],
    }
    let rows = [
        Row {
            label: "UR (naive)".into(),
            policy: Policy::uniform(),
            point: ur,
            calibration: Calibration::Classical,
            with_rewards: true,
            published: [0.050, 906.0, 0.8100, 0.7419, 0.8053, 0.7372, f64::NAN],
        },
        Row {
            label: "TS (naive)".into(),
            policy: Policy::thompson(),
            point: ts_naive,
            calibration: Calibration::Classical,
            with_rewards: false,
            published: [
                0.072,
                2767.0,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                f64::NAN,
            ],
        },
        Row {
            label: "TS (AIT)".into(),
            policy: Policy::eps_thompson(0.0),
            point: ts_ait,
            calibration: Calibration::Ait,
            with_rewards: true,
            published: [0.050, 4186.0, 0.8251, 0.7417, 0.8255, 0.7421, f64::NAN],
        },
        Row {
            label: format!("eps-TS({}) (AIT + opt)", best.phi),
            policy: Policy::eps_thompson(best.phi),
            point: best_point,
            calibration: Calibration::Ait,
            with_rewards: true,
            published: [0.050, 1338.0, 0.8185, 0.7465, 0.8162, 0.7443, 0.3],
        },
    ];

    let mut table = Table::new(&[
        "design",
        "phi",
        "fpr",
        "steps",
        "prior_reward",
        "prior_ecp",
        "post_reward",
        "post_ecp",
        "published_phi",
        "published_fpr",
        "published_steps",
        "published_prior_reward",
        "published_prior_ecp",
        "published_post_reward",
        "published_post_ecp",
    ]);
    let mut measured = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let fpr = design_fpr(
            &problem,
            &r.policy,
            r.point.horizon,
            r.calibration,
            fpr_seed(i as u64),
        )?;
        let (prior_reward, prior_ecp) = if r.with_rewards {
            (
                r.point.mean_reward,
                r.point
                    .horizon
                    .map_or(f64::NAN, |t| ecp(t, r.point.mean_reward, w)),
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        let (post_reward, post_ecp) = if r.with_rewards {
            post(&r.policy, r.point.horizon, i as u64)?
        } else {
            (f64::NAN, f64::NAN)
        };
        let blank = |x: f64| if x.is_nan() { String::new() } else { f(x) };
        let p = &r.published;
        table.push(vec![
            r.label.clone(),
            f(r.point.phi),
            f(fpr),
            opt(r.point.horizon),
            blank(prior_reward),
            blank(prior_ecp),
            blank(post_reward),
            blank(post_ecp),
            blank(p[6]),
            f(p[0]),
            f(p[1]),
            blank(p[2]),
            blank(p[3]),
            blank(p[4]),
            blank(p[5]),
        ]);
        measured.push((fpr, steps_value(r.point.horizon), prior_ecp, post_reward));
        progress(0.7 + 0.3 * (i + 1) as f64 / rows.len() as f64);
    }

    let mut checks = Vec::new();
    for idx in [0usize, 2, 3] {
        let r = &rows[idx];
        let (_, steps, prior_ecp, post_reward) = measured[idx];
        let published = r.published;
        checks.push(Check::range(
            "A5",
            format!("{} steps", r.label),
            steps,
            published[1] * (1.0 - step_tol),
            published[1] * (1.0 + step_tol),
            Some(published[1]),
        ));
        checks.push(Check::near(
            "A5",
            format!("{} prior ECP", r.label),
            prior_ecp,
            published[3],
            0.005,
        ));
        checks.push(Check::near(
            "A5",
            format!("{} post reward", r.label),
            post_reward,
            published[4],
            0.005,
        ));
    }
    checks.push(Check::near(
        "A5",
        "TS (naive) FPR",
        measured[1].0,
        0.072,
        0.012,
    ));

    let notes = vec![
        format!(
            "six Gaussian arms, means ~ N(0.81, 0.015^2), reward sd 0.1, t-test against arm 0 per comparison, d0=0.025, M={m}, w={w}"
        ),
        format!("recommended epsilon {} (published 0.3)", best.phi),
        format!("step tolerance +/-{:.0}% at this M", step_tol * 100.0),
    ];
    Ok((table, checks, notes))
}

fn beta_problem(spec: TestSpec, prior: PriorSpec, replications: usize) -> DesignProblem {
    DesignProblem {
        k: 3,
        prior,
        spec,
        family: PolicyFamily::EpsThompson,
        phis: (0..=10).map(|i| i as f64 / 10.0).collect(),
        alpha: ALPHA,
        beta_target: 0.2,
        t_max: 3_000,
        replications,
        grid_points: 10,
        null_replications: None,
        mode: RunMode::Batched,
        calibration: Calibration::Ait,
    }
}

pub(super) fn table4(scale: Scale, seed: u64, progress: Progress) -> Result<Output> {
    let m = match scale {
        Scale::Quick => 500,
        Scale::Full => 5_000,
    };
    let w = 0.1;
    // Published ECP of UR, TS, eps-TS(0.5), optimized; then the best epsilon.
    let tests: [(&str, TestSpec, [f64; 4], f64); 4] = [
        (
            "ANOVA",
            TestSpec::new(TestKind::Anova),
            [-0.052, -0.079, -0.012, -0.009],
            0.4,
        ),
        (
            "T-Constant",
            TestSpec::new(TestKind::TConstant { baseline: 0.5 }).with_min_effect(0.1),
            [-0.012, 0.075, 0.042, 0.075],
            0.0,
        ),
        (
            "T-Control",
            TestSpec::new(TestKind::TControl { control: 0 }).with_min_effect(0.1),
            [-0.077, -0.163, -0.046, -0.042],
            0.4,
        ),
        (
            "Tukey",
            TestSpec::new(TestKind::TukeyBest).with_min_effect(0.1),
            [-0.112, -0.016, -0.021, 0.012],
            0.2,
        ),
    ];
    let mut table = Table::new(&[
        "test",
        "design",
        "phi",
        "steps",
        "mean_reward",
        "ecp",
        "published_ecp",
        "published_phi",
    ]);
    let mut checks = Vec::new();
    let n = tests.len() as f64;
    for (i, (name, spec, published, best_eps)) in tests.into_iter().enumerate() {
        let problem = beta_problem(spec, PriorSpec::BetaIid { a: 5.0, b: 5.0 }, m);
        let eval =
            evaluate_designs_with_progress(&problem, derive_seed(seed, i as u64, PRESET), &|x| {
                progress((i as f64 + x) / n)
            })?;
        let at = |phi: f64| {
            *eval
                .points
                .iter()
                .find(|p| (p.phi - phi).abs() < 1e-12)
                .expect("phi on the grid")
        };
        let best = recommend(&eval.points, w)?;
        // A fixed design that misses the power target runs to the cap.
        let capped = |p: DesignPoint| ecp(p.horizon.unwrap_or(problem.t_max), p.mean_reward, w);
        let naive = [("UR", at(1.0)), ("TS", at(0.0)), ("eps-TS(0.5)", at(0.5))];
        for ((label, p), pub_ecp) in naive.iter().zip(published) {
            table.push(vec![
                name.into(),
                (*label).into(),
                f(p.phi),
                opt(p.horizon),
                f(p.mean_reward),
                f(capped(*p)),
                f(pub_ecp),
                String::new(),
            ]);
            checks.push(Check::at_least(
                "A6",
                format!("{name}: optimized ECP minus {label} ECP"),
                best.ecp - capped(*p),
                -0.01,
            ));
        }
        table.push(vec![
            name.into(),
            "optimized".into(),
            f(best.phi),
            best.horizon.to_string(),
            f(best.mean_reward),
            f(best.ecp),
            f(published[3]),
            f(best_eps),
        ]);
        checks.push(Check::near(
            "A6",
            format!("{name}: best epsilon"),
            best.phi,
            best_eps,
            0.1,
        ));
    }
    let notes = vec![format!(
        "three Bernoulli arms, means ~ Beta(5, 5), epsilon-TS grid 0..1 step 0.1, w={w}, d0=0.1, M={m}"
    )];
    Ok((table, checks, notes))
}

pub(super) fn table5(scale: Scale, seed: u64, progress: Progress) -> Result<Output> {
    let m = match scale {
        Scale::Quick => 300,
        Scale::Full => 3_000,
    };
    let w = 0.1;
    const LOCATIONS: [f64; 7] = [0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];
    const SCALES: [f64; 7] = [0.09, 0.11, 0.13, 0.15, 0.17, 0.19, 0.21];
    const LOC_MIS: [f64; 7] = [0.047, 0.024, 0.001, 0.000, 0.002, 0.000, 0.001];
    const LOC_RAND: [f64; 7] = [0.083, 0.050, 0.018, 0.017, 0.019, 0.018, 0.019];
    const SCALE_MIS: [f64; 7] = [0.010, 0.004, 0.000, 0.000, 0.003, 0.005, 0.005];
    const SCALE_RAND: [f64; 7] = [0.019, 0.017, 0.016, 0.017, 0.021, 0.025, 0.037];

    // Beta(3.2, 5.9) is the published rounding of the moment match below.
    let design = PriorSpec::beta_from_moments(0.35, 0.15)?;
    let problem = beta_problem(TestSpec::new(TestKind::Anova), design, m);
    let mut grid = Vec::new();
    for &loc in &LOCATIONS {
        grid.push((
            format!("location {loc}"),
            PriorSpec::beta_from_moments(loc, 0.15)?,
        ));
    }
    for &sd in &SCALES {
        grid.push((
            format!("scale {sd}"),
            PriorSpec::beta_from_moments(0.35, sd)?,
        ));
    }
    let rep = sensitivity_sweep_with_progress(&problem, &grid, w, seed, progress)?;
    let (rows, chosen) = (rep.rows, rep.chosen_phi);
    let mut table = Table::new(&[
        "axis",
        "true_value",
        "true_best_phi",
        "mis_opt_loss",
        "published_mis_opt_loss",
        "random_loss",
        "published_random_loss",
    ]);
    let mut checks = Vec::new();
    for (j, r) in rows.iter().enumerate() {
        let (axis, value, mis, rand) = if j < 7 {
            ("location", LOCATIONS[j], LOC_MIS[j], LOC_RAND[j])
        } else {
            ("scale", SCALES[j - 7], SCALE_MIS[j - 7], SCALE_RAND[j - 7])
        };
        table.push(vec![
            axis.into(),
            f(value),
            f(r.true_best_phi),
            f(r.mis_opt_loss),
            f(mis),
            f(r.random_loss),
            f(rand),
        ]);
        checks.push(Check::at_most(
            "A7",
            format!("{}: mis-opt loss minus random loss", r.label),
            r.mis_opt_loss - r.random_loss,
            0.01,
        ));
        let matched = (axis == "location" && value == 0.35) || (axis == "scale" && value == 0.15);
        if matched {
            checks.push(Check::at_most(
                "A7",
                format!("{}: loss at the design prior", r.label),
                r.mis_opt_loss,
                0.005,
            ));
        }
    }
    let notes = vec![
        format!("ANOVA, three Bernoulli arms, design prior Beta(3.19, 5.92), w={w}, M={m}"),
        format!("epsilon chosen under the design prior: {chosen}"),
    ];
    Ok((table, checks, notes))
}

/// Peak resident memory of this process in bytes, where the platform
/// reports it.
fn peak_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

pub(super) fn appendix_f(scale: Scale, seed: u64, progress: Progress) -> Result<Output> {
    let n = match scale {
        Scale::Quick => 1_000,
        Scale::Full => 10_000,
    };
    let horizon = 200;
    let policy = Policy::thompson();
    let arms = ArmVector::bernoulli(&[0.6, 0.4])?;

    let start = Instant::now();
    let timed = PowerConfig {
        k: 2,
        prior: PriorSpec::fixed_bernoulli(&[0.6, 0.4]),
        horizon,
        policy: policy.clone(),
        spec: one_sided(),
        alpha: ALPHA,
        replications: 1_000,
        grid_points: 10,
        null_replications: Some(500),
        mode: RunMode::Batched,
        calibration: Calibration::Ait,
    };
    let timed_power = power_analysis(&timed, derive_seed(seed, 0, PRESET))?.power_at(horizon);
    let seconds = start.elapsed().as_secs_f64();
    progress(0.2);

    // Mean reward per draw and arm-0 share, per runner.
    let summarize = |mode: RunMode, i: u64| -> (f64, f64) {
        let sub = derive_seed(seed, i, PRESET);
        // collect before summing so the float order is independent of threads
        let per_rep: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|m| {
                let mut rng = derive_stream(sub, m as u64, stage::REPLICATION);
                let h = run(mode, &arms, horizon, &policy, &mut rng);
                let moments = h.moments_at(horizon as f64);
                (
                    h.reward_at(horizon as f64) / horizon as f64,
                    moments[0].n / horizon as f64,
                )
            })
            .collect();
        let (reward, share) = per_rep
            .iter()
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        (reward / n as f64, share / n as f64)
    };
    let (rb, sb) = summarize(RunMode::Batched, 1);
    let (re, se) = summarize(RunMode::Exact, 2);
    progress(0.5);

    let ait = |mode| -> Result<f64> {
        let cfg = AitConfig {
            k: 2,
            horizon,
            policy: policy.clone(),
            spec: one_sided(),
            alpha: ALPHA,
            replications: n,
            mode,
        };
        let null = NullEstimate::from_kernel(RewardKernel::bernoulli(0.5)?);
        Ok(ait_calibrate(&cfg, &null, derive_seed(seed, 3, PRESET))?.threshold(horizon))
    };
    let qb = ait(RunMode::Batched)?;
    let qe = ait(RunMode::Exact)?;

    let mut table = Table::new(&["quantity", "batched", "exact", "difference", "tolerance"]);
    let mut push = |name: &str, b: f64, e: f64, tol: f64| {
        table.push(vec![name.into(), f(b), f(e), f(b - e), f(tol)]);
    };
    push("mean_reward", rb, re, 0.002);
    push("share_arm0", sb, se, 0.02);
    push("share_arm1", 1.0 - sb, 1.0 - se, 0.02);
    push("ait_threshold_t200", qb, qe, 0.05);

    let mut checks = vec![
        Check::at_most(
            "A10",
            "|mean reward batched - exact|",
            (rb - re).abs(),
            0.002,
        ),
        Check::at_most(
            "A10",
            "|arm-0 share batched - exact|",
            (sb - se).abs(),
            0.02,
        ),
        Check::at_most(
            "A10",
            "|arm-1 share batched - exact|",
            (sb - se).abs(),
            0.02,
        ),
        Check::at_most(
            "A10",
            "|AIT threshold at T=200 batched - exact|",
            (qb - qe).abs(),
            0.05,
        ),
        Check::at_most(
            "A11",
            "seconds for N=1000, B=10, 500 null runs per grid point",
            seconds,
            10.0,
        ),
    ];
    let mut notes = vec![
        format!("TS, Bernoulli arms (0.6, 0.4), T={horizon}, N={n}"),
        format!(
            "timed power analysis: {seconds:.2} s on {} worker threads, power {timed_power:.3}",
            rayon::current_num_threads()
        ),
    ];
    if let Some(bytes) = peak_memory_bytes() {
        let mb = bytes as f64 / (1024.0 * 1024.0);
        notes.push(format!("peak resident memory {mb:.1} MB"));
        checks.push(Check::at_most(
            "A11",
            "peak resident memory in MB",
            mb,
            200.0,
        ));
    }
    Ok((table, checks, notes))
}
