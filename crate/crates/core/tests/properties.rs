use proptest::prelude::*;

use tinygroups::bounds::copeland_distortion_from_theta;
use tinygroups::deliberation::{averaging_outcome, exact_pk, random_choice_win_prob, BiasTransform, ModelConfig};
use tinygroups::instances::{copeland_k2_worst_case, line_instance_from_bias_distribution, random_euclidean_instance};
use tinygroups::optimizer::{solve_global, var, BoxProgram, Constraint};
use tinygroups::sampling::{
    empirical_distortion_trials, simulate_estimated_pmatrix, soft_theta_check, SampleMode, SampleRunConfig,
};
use tinygroups::solver_avg::averaging_pk;
use tinygroups::tournament::{build_pmatrix, pipeline_distortion};
use tinygroups::{BiasDistribution, MetricInstance, PkMode};

fn instance(m: usize, n: usize, seed: u64) -> MetricInstance {
    random_euclidean_instance(m, n, seed).unwrap()
}

fn model_strategy() -> impl Strategy<Value = ModelConfig> {
    prop_oneof![
        (2usize..=4).prop_map(ModelConfig::averaging),
        (1usize..=4, 0.0..=1.0f64).prop_map(|(k, b)| ModelConfig::random_choice(k).with_beta(b)),
        (1usize..=3).prop_map(|k| ModelConfig::random_choice(k).with_g(BiasTransform::Sqrt)),
    ]
}

fn distribution_strategy() -> impl Strategy<Value = BiasDistribution> {
    prop::collection::vec((-1.0..=1.0f64, 0.01..1.0f64), 1..=4).prop_map(|raw| {
        let total: f64 = raw.iter().map(|&(_, w)| w).sum();
        BiasDistribution::new(raw.into_iter().map(|(a, w)| (a, w / total)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn biases_lie_in_unit_interval(m in 2usize..6, n in 1usize..8, seed in any::<u64>()) {
        let inst = instance(m, n, seed);
        for w in 0..m {
            for x in 0..m {
                if w != x {
                    for b in inst.biases(w, x).unwrap() {
                        prop_assert!((-1.0..=1.0).contains(&b));
                    }
                }
            }
        }
    }

    #[test]
    fn cost_ratio_bounded_by_mean_bias(m in 2usize..6, n in 1usize..8, seed in any::<u64>()) {
        let inst = instance(m, n, seed);
        for w in 0..m {
            for x in 0..m {
                if w == x {
                    continue;
                }
                let gamma = inst.bias_distribution(w, x).unwrap().mean();
                let ratio = inst.social_cost(w).unwrap() / inst.social_cost(x).unwrap();
                if gamma >= 0.0 && gamma < 1.0 {
                    prop_assert!(ratio <= (1.0 + gamma) / (1.0 - gamma) * (1.0 + 1e-9));
                } else if gamma < 0.0 {
                    prop_assert!(ratio <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn negated_biases_flip_outcomes(b in prop::collection::vec(-1.0..=1.0f64, 1..6), beta in 0.0..=1.0f64) {
        let neg: Vec<f64> = b.iter().map(|v| -v).collect();
        let sum: f64 = b.iter().sum();
        if sum.abs() > 1e-9 {
            prop_assert_ne!(averaging_outcome(&b, true), averaging_outcome(&neg, true));
        }
        if b.iter().any(|&v| v != 0.0) {
            for g in [BiasTransform::Linear, BiasTransform::Sqrt] {
                let p = random_choice_win_prob(&b, g, beta, true);
                let q = random_choice_win_prob(&neg, g, beta, true);
                prop_assert!((p + q - 1.0).abs() < 1e-12, "{} + {}", p, q);
            }
        }
    }

    #[test]
    fn pair_probabilities_are_complementary(n in 1usize..6, seed in any::<u64>(), model in model_strategy()) {
        // continuous locations make exact averaging ties a null event
        let inst = instance(2, n, seed);
        let p = exact_pk(&inst, &model, 0, 1).unwrap().value;
        let q = exact_pk(&inst, &model, 1, 0).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + q - 1.0).abs() < 1e-9, "{} + {}", p, q);
    }

    #[test]
    fn scaling_preserves_everything(m in 2usize..5, n in 1usize..5, seed in any::<u64>(), f in 0.01..100.0f64) {
        let inst = instance(m, n, seed);
        let big = inst.scaled(f);
        let model = ModelConfig::averaging(3);
        let a = pipeline_distortion(&inst, &model, PkMode::Exact).unwrap();
        let b = pipeline_distortion(&big, &model, PkMode::Exact).unwrap();
        prop_assert!(a.pmatrix.max_abs_diff(&b.pmatrix) < 1e-12);
        prop_assert_eq!(a.winner, b.winner);
        prop_assert!((a.distortion - b.distortion).abs() < 1e-9 * a.distortion);
    }

    #[test]
    fn relabeling_permutes_scores(m in 2usize..6, n in 1usize..6, seed in any::<u64>(), rot in 0usize..6) {
        let inst = instance(m, n, seed);
        let perm: Vec<usize> = (0..m).map(|j| (j + rot) % m).collect();
        let moved = inst.permute_candidates(&perm);
        let model = ModelConfig::random_choice(2);
        let a = pipeline_distortion(&inst, &model, PkMode::Exact).unwrap();
        let b = pipeline_distortion(&moved, &model, PkMode::Exact).unwrap();
        for j in 0..m {
            prop_assert_eq!(b.scores[j], a.scores[perm[j]]);
        }
        let best = a.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(b.scores[b.winner], best);
    }

    #[test]
    fn pairs_never_beat_the_pair_constant(dist in distribution_strategy()) {
        if averaging_pk(&dist, 2).unwrap() >= 0.5 {
            prop_assert!(dist.mean() <= 2f64.sqrt() - 1.0 + 1e-9, "mean {}", dist.mean());
        }
    }

    #[test]
    fn line_instances_round_trip(dist in distribution_strategy()) {
        let inst = line_instance_from_bias_distribution(&dist).unwrap();
        let back = inst.bias_distribution(0, 1).unwrap();
        prop_assert_eq!(back.atoms().len(), dist.atoms().len());
        for (a, b) in back.atoms().iter().zip(dist.atoms()) {
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn triples_stay_within_copeland_bound(m in 2usize..5, n in 1usize..6, seed in any::<u64>()) {
        let inst = instance(m, n, seed);
        let out = pipeline_distortion(&inst, &ModelConfig::averaging(3), PkMode::Exact).unwrap();
        prop_assert!(out.distortion <= copeland_distortion_from_theta(0.2530).unwrap());
    }

    #[test]
    fn json_round_trip(m in 2usize..5, n in 1usize..5, seed in any::<u64>()) {
        let inst = instance(m, n, seed);
        let back = MetricInstance::from_json_str(&inst.to_json_string()).unwrap();
        prop_assert_eq!(back.num_candidates(), m);
        for w in 0..m {
            prop_assert!((back.social_cost(w).unwrap() - inst.social_cost(w).unwrap()).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The certified bound dominates every feasible grid point and the
    /// reported point is feasible with value within `tol` of the bound.
    #[test]
    fn optimizer_certificates_hold(
        c in prop::array::uniform5(-2.0..2.0f64),
        r in 0.3..1.5f64,
    ) {
        let (x, y) = (var(0), var(1));
        let obj = c[0] * x.clone() + c[1] * y.clone() + c[2] * x.clone() * y.clone()
            + c[3] * x.clone().pow(2) + c[4] * y.clone().pow(2);
        let prog = BoxProgram::new(vec![("x", -1.0, 1.0), ("y", -1.0, 1.0)], obj.clone())
            .constrain(Constraint::le(x.clone().pow(2) + y.clone().pow(2), r));
        let tol = 1e-6;
        let opt = solve_global(&prog, tol, 200_000).unwrap();
        prop_assert!(opt.is_certified());
        let bound = opt.bound.unwrap();
        let point = opt.point.clone().unwrap();
        prop_assert!(prog.is_feasible(&point, 1e-9));
        prop_assert!(bound - opt.value.unwrap() <= tol + 1e-12);
        for i in 0..=40 {
            for j in 0..=40 {
                let p = [-1.0 + i as f64 / 20.0, -1.0 + j as f64 / 20.0];
                if p[0] * p[0] + p[1] * p[1] <= r {
                    prop_assert!(obj.eval(&p) <= bound + 1e-12);
                }
            }
        }
    }
}

#[test]
fn generous_copeland_target_has_a_positive_case() {
    let r = tinygroups::solver_avg::solve_copeland_k2(2.0, 1e-4, 4_000_000).unwrap();
    assert!(!r.both_negative);
    let positive = [&r.near, &r.far].iter().any(|g| g.is_certified() && g.value.is_some_and(|v| v > 0.0));
    assert!(positive);
}

#[test]
fn sampled_estimates_are_unbiased() {
    let inst = instance(4, 5, 11);
    let model = ModelConfig::random_choice(3);
    let exact = build_pmatrix(&inst, &model, PkMode::Exact).unwrap();
    let runs = 10_000u64;
    let groups = 5u64;
    let mut sum = vec![vec![0.0; 4]; 4];
    for seed in 0..runs {
        let cfg = SampleRunConfig { model, groups, trials: 1, seed, mode: SampleMode::RankingGroups, epsilon: 0.1 };
        let est = simulate_estimated_pmatrix(&inst, &cfg).unwrap();
        for (i, row) in sum.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += est.get(i, j);
            }
        }
    }
    for (i, row) in sum.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i == j {
                continue;
            }
            let p = exact.get(i, j);
            let se = (p * (1.0 - p) / (runs * groups) as f64).sqrt().max(1e-9);
            let mean = v / runs as f64;
            assert!((mean - p).abs() <= 3.0 * se, "pair ({i}, {j}): {mean} vs {p}");
        }
    }
}

#[test]
fn sampled_worst_case_tracks_exact_pipeline() {
    let inst = copeland_k2_worst_case(0.009).unwrap();
    let model = ModelConfig::averaging(2);
    let exact = pipeline_distortion(&inst, &model, PkMode::Exact).unwrap();
    // edges sit about 0.0027 above 1/2, so each needs ~3e5 groups to resolve
    let cfg = SampleRunConfig { model, groups: 400_000, trials: 20, seed: 4, mode: SampleMode::RankingGroups, epsilon: 0.01 };
    let rep = empirical_distortion_trials(&inst, &cfg, PkMode::Exact).unwrap();
    assert!(
        (rep.mean_distortion - exact.distortion).abs() <= 0.1,
        "sampled {} vs exact {}",
        rep.mean_distortion,
        exact.distortion
    );
    let soft = soft_theta_check(&rep, 2f64.sqrt() - 1.0).unwrap();
    assert_eq!(soft.trials_checked, 20);
    assert_eq!(soft.exceeded, 0);
}

#[test]
fn single_trial_matches_direct_simulation() {
    let inst = instance(5, 6, 3);
    let model = ModelConfig::random_choice(2);
    for mode in [SampleMode::RankingGroups, SampleMode::MatchingGroups] {
        let cfg = SampleRunConfig { model, groups: 40, trials: 1, seed: 9, mode, epsilon: 0.1 };
        let est = simulate_estimated_pmatrix(&inst, &cfg).unwrap();
        let rep = empirical_distortion_trials(&inst, &cfg, PkMode::Exact).unwrap();
        assert_eq!(rep.trials.len(), 1);
        assert_eq!(rep.trials[0].max_error, est.max_abs_diff(&rep.reference));
        let again = empirical_distortion_trials(&inst, &cfg, PkMode::Exact).unwrap();
        assert_eq!(rep, again);
    }
}

#[test]
fn matching_mode_needs_random_choice() {
    let inst = instance(3, 3, 1);
    let cfg = SampleRunConfig {
        model: ModelConfig::averaging(3),
        groups: 10,
        trials: 1,
        seed: 0,
        mode: SampleMode::MatchingGroups,
        epsilon: 0.1,
    };
    assert!(simulate_estimated_pmatrix(&inst, &cfg).is_err());
}
