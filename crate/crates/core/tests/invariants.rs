use bandit_design::calibration::{empirical_threshold, quantile_rank};
use bandit_design::objective::{ecp, recommend, DesignPoint};
use bandit_design::rng::derive_stream;
use bandit_design::sim::{batch_schedule, run, ArmVector, Policy, RunMode};
use proptest::prelude::*;
use rand::Rng;

fn policy_strategy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        Just(Policy::uniform()),
        Just(Policy::thompson()),
        Just(Policy::ucb()),
        (0.0..=1.0f64).prop_map(Policy::eps_thompson),
        (0.0..=1.0f64).prop_map(Policy::eps_greedy),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batch_shape_is_positive_and_near_nominal(t in 0u64..200_000) {
        let s = batch_schedule(t);
        prop_assert!(s.n_actions >= 1 && s.reps_per_action >= 1);
        let draws = s.draws() as f64;
        let nominal = s.step_size as f64;
        // rounding n and m separately costs at most half a batch per factor
        prop_assert!((draws - nominal).abs() <= 0.5 * (s.n_actions + s.reps_per_action) as f64);
    }

    #[test]
    fn histories_account_for_every_draw(
        means in prop::collection::vec(0.0..=1.0f64, 2..5),
        horizon in 1u64..600,
        policy in policy_strategy(),
        batched in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let arms = ArmVector::bernoulli(&means).unwrap();
        let mode = if batched { RunMode::Batched } else { RunMode::Exact };
        let h = run(mode, &arms, horizon, &policy, &mut derive_stream(seed, 0, 0));
        let total: u64 = h.entries.iter().map(|e| u64::from(e.draws)).sum();
        prop_assert_eq!(total, h.horizon_reached);
        prop_assert!(h.horizon_reached >= horizon);
        if !batched {
            prop_assert_eq!(h.horizon_reached, horizon);
            prop_assert!(h.is_exact());
        }
        for e in &h.entries {
            prop_assert!((e.arm as usize) < means.len());
            // Bernoulli rewards: r^2 = r and 0 <= sum <= draws
            prop_assert_eq!(e.reward_sum, e.reward_sq_sum);
            prop_assert!(e.reward_sum >= 0.0 && e.reward_sum <= f64::from(e.draws));
        }
    }

    #[test]
    fn prefix_moments_count_exactly_t_draws(
        horizon in 1u64..800,
        frac in 0.0..=1.0f64,
        seed in any::<u64>(),
    ) {
        let arms = ArmVector::bernoulli(&[0.3, 0.7]).unwrap();
        let h = run(RunMode::Batched, &arms, horizon, &Policy::thompson(), &mut derive_stream(seed, 0, 0));
        let t = (frac * h.horizon_reached as f64).floor();
        let n: f64 = h.moments_at(t).iter().map(|m| m.n).sum();
        prop_assert!((n - t).abs() < 1e-9, "n = {n}, t = {t}");
        prop_assert!(h.reward_at(t) <= t + 1e-9);
    }

    #[test]
    fn threshold_exceedance_is_at_most_alpha(
        mut scores in prop::collection::vec(-1e3..1e3f64, 1..400),
        alpha in 0.001..0.5f64,
    ) {
        let n = scores.len();
        let q = empirical_threshold(&mut scores, alpha);
        let above = scores.iter().filter(|&&s| s > q).count();
        prop_assert!(above as f64 <= alpha * n as f64 + 1e-9);
        prop_assert!(above < n - quantile_rank(alpha, n) + 1);
    }

    #[test]
    fn recommendation_maximizes_the_score(
        raw in prop::collection::vec((prop::option::of(2u64..10_000), 0.0..1.0f64), 1..12),
        w in 0.0..0.2f64,
        shift in -5.0..5.0f64,
    ) {
        let points: Vec<DesignPoint> = raw
            .iter()
            .enumerate()
            .map(|(i, &(horizon, mean_reward))| DesignPoint { phi: i as f64 / 10.0, horizon, mean_reward })
            .collect();
        let Ok(rec) = recommend(&points, w) else {
            prop_assert!(points.iter().all(|p| p.horizon.is_none()));
            return Ok(());
        };
        for d in &rec.feasible_set {
            prop_assert!(rec.ecp >= d.ecp);
            if d.ecp == rec.ecp {
                prop_assert!(rec.phi <= d.phi);
            }
        }
        prop_assert_eq!(rec.ecp, ecp(rec.horizon, rec.mean_reward, w));
        prop_assert_eq!(rec.feasible_set.len() + rec.infeasible.len(), points.len());

        // adding a constant to every reward leaves the choice unchanged
        let shifted: Vec<DesignPoint> = points
            .iter()
            .map(|p| DesignPoint { mean_reward: p.mean_reward + shift, ..*p })
            .collect();
        let rec2 = recommend(&shifted, w).unwrap();
        let near_tie = rec.feasible_set.iter().any(|d| d.phi != rec.phi && (d.ecp - rec.ecp).abs() < 1e-9);
        if !near_tie {
            prop_assert_eq!(rec2.phi, rec.phi);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct(seed in any::<u64>(), rep in any::<u64>(), stage in 0u32..16) {
        let a: [u64; 4] = derive_stream(seed, rep, stage).random();
        let b: [u64; 4] = derive_stream(seed, rep, stage).random();
        let c: [u64; 4] = derive_stream(seed, rep.wrapping_add(1), stage).random();
        let d: [u64; 4] = derive_stream(seed, rep, stage + 1).random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
        prop_assert_ne!(a, d);
    }
}

#[test]
fn batched_and_exact_runs_agree_on_reward() {
    let arms = ArmVector::bernoulli(&[0.45, 0.55]).unwrap();
    let policy = Policy::thompson();
    let reps = 400;
    let mean = |mode| {
        (0..reps)
            .map(|r| {
                let h = run(mode, &arms, 500, &policy, &mut derive_stream(9, r, 0));
                h.reward_at(500.0) / 500.0
            })
            .sum::<f64>()
            / reps as f64
    };
    let (exact, batched) = (mean(RunMode::Exact), mean(RunMode::Batched));
    assert!(
        (exact - batched).abs() < 0.01,
        "exact {exact}, batched {batched}"
    );
}
