//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if
//! any criterion fails.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use tinygroups::bounds::sample_size_averaging;
use tinygroups::deliberation::{exact_pk, monte_carlo_pk, BiasTransform, ModelConfig};
use tinygroups::instances::{copeland_k2_worst_case, example1_instance, lb1_instance, random_euclidean_instance};
use tinygroups::rng::substream;
use tinygroups::sampling::{empirical_distortion_trials, SampleMode, SampleRunConfig};
use tinygroups::solver_avg::{
    solve_copeland_k2, solve_theta2, solve_theta3, theta_lower_bound_closed_form, theta_upper_bound_closed_form,
    ThetaResult, COPELAND_K2_BUDGET, COPELAND_K2_TOL, PK_FEASIBILITY_SLACK, THETA3_BUDGET, THETA3_TOL,
};
use tinygroups::solver_random::{constraint_lhs, sweep, zeta, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL};
use tinygroups::tournament::{copeland_winner, pipeline_distortion, uncovered_check, PkMode, Tournament};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit_secs: u64) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs as f64, || {
        format!("took {:.1} s, limit {limit_secs} s", elapsed.as_secs_f64())
    })
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn theta2_check(r: &ThetaResult, elapsed: Duration) -> Check {
    let t2 = SQRT_2 - 1.0;
    ensure(r.certified, || "not certified".into())?;
    ensure((r.value - t2).abs() <= 1e-4, || format!("value {} not within 1e-4 of {t2}", r.value))?;
    let x = r.cases[0].certificate.point.clone().ok_or("no incumbent point")?;
    let (p, q) = (x[0], x[1]);
    ensure((p - (1.0 - FRAC_1_SQRT_2)).abs() <= 1e-3, || format!("p = {p}"))?;
    ensure(q <= 1e-3, || format!("q = {q}"))?;
    ensure(r.incumbent_pk >= 0.5 - PK_FEASIBILITY_SLACK, || format!("incumbent p_2 = {}", r.incumbent_pk))?;
    within_time(elapsed, 10)?;
    Ok(format!("value {:.9}, p {p:.6}, q {q:.2e}, {:.2} s", r.value, elapsed.as_secs_f64()))
}

fn criterion2() -> Check {
    let beta = 3.4152;
    let start = Instant::now();
    let r = solve_copeland_k2(beta, COPELAND_K2_TOL, COPELAND_K2_BUDGET).map_err(err)?;
    let elapsed = start.elapsed();
    let delta = 1.0 + beta - (3.0 + SQRT_2);
    ensure(delta <= 4e-3, || format!("distortion slack {delta}"))?;
    for (name, g) in [("near", &r.near), ("far", &r.far)] {
        ensure(g.is_certified(), || format!("{name} case not certified: {:?}", g.status))?;
        ensure(g.bound.is_none_or(|b| b < 0.0), || format!("{name} case bound {:?} not negative", g.bound))?;
    }
    ensure(r.both_negative, || "both_negative flag unset".into())?;
    within_time(elapsed, 300)?;
    Ok(format!(
        "near bound {:.3e}, far bound {:.3e}, distortion <= {:.4}, {:.1} s",
        r.near.bound.unwrap_or(f64::NEG_INFINITY),
        r.far.bound.unwrap_or(f64::NEG_INFINITY),
        1.0 + beta,
        elapsed.as_secs_f64()
    ))
}

fn theta3_check(r: &ThetaResult, elapsed: Duration) -> Check {
    for c in &r.cases {
        let cap = if c.case == 3 { 0.2530 } else { 0.2505 };
        ensure(c.bound() <= cap, || format!("case {} bound {} above {cap}", c.case, c.bound()))?;
    }
    ensure(r.lower >= 0.2499, || format!("incumbent mean {}", r.lower))?;
    ensure(r.incumbent_pk >= 0.5 - PK_FEASIBILITY_SLACK, || format!("incumbent p_3 = {}", r.incumbent_pk))?;
    within_time(elapsed, 1800)?;
    let case3 = r.cases.iter().find(|c| c.case == 3).map_or(f64::NAN, |c| c.bound());
    Ok(format!(
        "max bound {:.5}, case 3 bound {case3:.5}, incumbent {:.4}, all certified: {}, {:.1} s",
        r.value,
        r.lower,
        r.certified,
        elapsed.as_secs_f64()
    ))
}

fn criterion4() -> Check {
    let start = Instant::now();
    let expect = [(2, 3.34, 1.82, 1.41), (3, 2.31, 1.51, 1.25), (4, 1.90, 1.37, 1.18)];
    let mut got = Vec::new();
    for (k, up, det, rand) in expect {
        let z = zeta(k, BiasTransform::Linear, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).map_err(err)?;
        for (name, have, want) in [("upper", z.distortion_upper, up), ("det_lb", z.det_lb, det), ("rand_lb", z.rand_lb, rand)] {
            ensure((have - want).abs() <= 0.01, || format!("k = {k}: {name} {have:.4} vs {want}"))?;
        }
        got.push(format!("k={k}: {:.3}/{:.3}/{:.3}", z.distortion_upper, z.det_lb, z.rand_lb));
    }
    let elapsed = start.elapsed();
    within_time(elapsed, 10)?;
    Ok(format!("{}, {:.2} s", got.join(", "), elapsed.as_secs_f64()))
}

fn criterion5() -> Check {
    let start = Instant::now();
    let lin = sweep(2, 30, BiasTransform::Linear, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).map_err(err)?;
    let d: Vec<f64> = lin.iter().map(|r| r.distortion_upper).collect();
    for w in d.windows(2) {
        ensure(w[1] < w[0], || format!("linear sweep not strictly decreasing: {} then {}", w[0], w[1]))?;
    }
    // k = 30 is the last row, k = 4 the third
    ensure(d[28] < d[2], || format!("k = 30 value {} not below k = 4 value {}", d[28], d[2]))?;
    let sq = sweep(2, 30, BiasTransform::Sqrt, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).map_err(err)?;
    let s: Vec<f64> = sq.iter().map(|r| r.distortion_upper).collect();
    for (i, &v) in s.iter().enumerate() {
        ensure(v >= 2.0, || format!("sqrt sweep k = {} value {v} below 2", i + 2))?;
    }
    for w in s.windows(2) {
        ensure(w[1] < w[0], || format!("sqrt sweep not strictly decreasing: {} then {}", w[0], w[1]))?;
    }
    let elapsed = start.elapsed();
    within_time(elapsed, 30)?;
    Ok(format!(
        "linear {:.3} -> {:.3}, sqrt {:.3} -> {:.3}, {:.1} s",
        d[0],
        d[28],
        s[0],
        s[28],
        elapsed.as_secs_f64()
    ))
}

fn criterion6() -> Check {
    let mut worst_gap: f64 = 0.0;
    for k in 2..=9 {
        let inst = lb1_instance(k).map_err(err)?;
        let pk = exact_pk(&inst, &ModelConfig::averaging(k), 0, 1).map_err(err)?.value;
        ensure(pk >= 0.5 - 1e-12, || format!("k = {k}: p_k = {pk}"))?;
        if k % 2 == 1 {
            ensure((pk - 0.5).abs() <= 1e-12, || format!("k = {k}: p_k = {pk}, expected exactly 1/2"))?;
        }
        let want = if k % 2 == 1 { 1.0 / (k as f64 + 1.0) } else { 2.0 / (3.0 * k as f64) };
        let mean = inst.bias_distribution(0, 1).map_err(err)?.mean();
        ensure((mean - want).abs() <= 1e-12, || format!("k = {k}: mean bias {mean}, expected {want}"))?;
        worst_gap = worst_gap.max((mean - want).abs());
    }
    Ok(format!("k = 2..9, largest mean error {worst_gap:.1e}"))
}

fn criterion7() -> Check {
    let inst = copeland_k2_worst_case(1e-3).map_err(err)?;
    let out = pipeline_distortion(&inst, &ModelConfig::averaging(2), PkMode::Exact).map_err(err)?;
    let target = 3.0 + SQRT_2;
    ensure(out.distortion >= target - 0.05 && out.distortion <= target, || {
        format!("distortion {} outside [{}, {target}]", out.distortion, target - 0.05)
    })?;
    Ok(format!("winner {}, distortion {:.5}", out.winner_id, out.distortion))
}

/// Smallest distortion over the subset candidates, with an oracle check
/// against the direct sum `(2/n + 3 (n-2)/n) / (1 + delta)`.
fn example1_min(n: usize, delta: f64) -> std::result::Result<f64, String> {
    let inst = example1_instance(n, 2, delta).map_err(err)?;
    let oracle = (2.0 / n as f64 + 3.0 * (n - 2) as f64 / n as f64) / (1.0 + delta);
    let mut min = f64::INFINITY;
    for c in 1..inst.num_candidates() {
        let d = inst.distortion_of(c).map_err(err)?;
        ensure((d - oracle).abs() < 1e-12, || format!("n = {n}: distortion {d} vs oracle {oracle}"))?;
        min = min.min(d);
    }
    Ok(min)
}

fn criterion8() -> Check {
    let vals: Vec<f64> = [6, 12, 20].iter().map(|&n| example1_min(n, 0.01)).collect::<std::result::Result<_, _>>()?;
    ensure(vals[2] >= 2.75, || format!("n = 20 minimum distortion {}", vals[2]))?;
    ensure(vals[0] < vals[1] && vals[1] < vals[2], || format!("not increasing in n: {vals:?}"))?;
    ensure(vals[2] < 3.0, || format!("n = 20 value {} at or above 3", vals[2]))?;
    Ok(format!("n = 6, 12, 20: {:.4}, {:.4}, {:.4}", vals[0], vals[1], vals[2]))
}

fn random_tournament(rng: &mut impl Rng, m: usize) -> Tournament {
    let mut beats = vec![vec![false; m]; m];
    let mut half = vec![vec![false; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let u: f64 = rng.random();
            if u < 0.1 {
                half[i][j] = true;
                half[j][i] = true;
                beats[i][j] = true;
                beats[j][i] = true;
            } else if u < 0.55 {
                beats[i][j] = true;
            } else {
                beats[j][i] = true;
            }
        }
    }
    Tournament::from_relation(beats, half)
}

fn criterion9() -> Check {
    let mut rng = substream(0xACCE, 9);
    // Copeland winners are uncovered
    for trial in 0..1000 {
        let m = rng.random_range(2..=12);
        let t = random_tournament(&mut rng, m);
        let w = copeland_winner(&t);
        ensure(uncovered_check(&t, w), || format!("tournament {trial}: winner {w} covered"))?;
    }
    // Monte Carlo against exact enumeration, 4 standard errors
    let trials = 20_000;
    let mut worst_z: f64 = 0.0;
    for i in 0..100u64 {
        let inst = random_euclidean_instance(2 + (i % 3) as usize, 2 + (i % 4) as usize, 1000 + i).map_err(err)?;
        let model = match i % 3 {
            0 => ModelConfig::averaging(3),
            1 => ModelConfig::random_choice(3),
            _ => ModelConfig::random_choice(4).with_g(BiasTransform::Sqrt).with_beta(0.6),
        };
        let exact = exact_pk(&inst, &model, 0, 1).map_err(err)?.value;
        let mc = monte_carlo_pk(&inst, &model, 0, 1, trials, i).map_err(err)?.value;
        let se = (exact * (1.0 - exact) / trials as f64).sqrt().max(1e-12);
        let z = (mc - exact).abs() / se;
        ensure(z <= 4.0, || format!("instance {i}: exact {exact}, estimate {mc}, z = {z:.2}"))?;
        worst_z = worst_z.max(z);
    }
    // cost ratio bounded by the mean bias
    let mut ratio_checks = 0;
    for i in 0..500u64 {
        let inst = random_euclidean_instance(2 + (i % 5) as usize, 1 + (i % 7) as usize, 5000 + i).map_err(err)?;
        let m = inst.num_candidates();
        let w = rng.random_range(0..m);
        let x = (w + rng.random_range(1..m)) % m;
        let gamma = inst.bias_distribution(w, x).map_err(err)?.mean();
        let ratio = inst.social_cost(w).map_err(err)? / inst.social_cost(x).map_err(err)?;
        // a negative mean bias means w is strictly cheaper
        let bound = match gamma {
            g if g >= 1.0 => f64::INFINITY,
            g if g >= 0.0 => (1.0 + g) / (1.0 - g),
            _ => 1.0,
        };
        ensure(ratio <= bound * (1.0 + 1e-9), || format!("draw {i}: ratio {ratio} above {bound}"))?;
        ratio_checks += 1;
    }
    // constraint monotone in omega and alpha, concave in omega
    let h = 0.01;
    for k in 1..=30 {
        for ai in 0..=20 {
            let a = ai as f64 / 20.0;
            let f: Vec<f64> = (0..=100).map(|wi| constraint_lhs(k, a, wi as f64 * h, BiasTransform::Linear, 1.0)).collect();
            for w in f.windows(2) {
                ensure(w[1] >= w[0] - 1e-12, || format!("k = {k}, alpha = {a}: decreasing in omega"))?;
            }
            for w in f.windows(3) {
                ensure(w[2] - 2.0 * w[1] + w[0] <= 1e-12, || format!("k = {k}, alpha = {a}: not concave"))?;
            }
            if ai > 0 {
                for wi in 0..=100 {
                    let om = wi as f64 * h;
                    let lo = constraint_lhs(k, a - 0.05, om, BiasTransform::Linear, 1.0);
                    let hi = constraint_lhs(k, a, om, BiasTransform::Linear, 1.0);
                    ensure(hi >= lo - 1e-12, || format!("k = {k}, omega = {om}: decreasing in alpha"))?;
                }
            }
        }
    }
    Ok(format!("1000 tournaments, 100 estimates (max z {worst_z:.2}), {ratio_checks} ratio draws, lhs grid k <= 30"))
}

fn criterion10() -> Check {
    let start = Instant::now();
    let inst = random_euclidean_instance(5, 8, 2024).map_err(err)?;
    let groups = sample_size_averaging(5, 0.05, 0.1).map_err(err)?;
    let cfg = SampleRunConfig {
        model: ModelConfig::averaging(3),
        groups,
        trials: 200,
        seed: 7,
        mode: SampleMode::RankingGroups,
        epsilon: 0.05,
    };
    let rep = empirical_distortion_trials(&inst, &cfg, PkMode::Exact).map_err(err)?;
    ensure(rep.fraction_within_epsilon >= 0.9, || format!("only {} of trials within 0.05", rep.fraction_within_epsilon))?;
    let elapsed = start.elapsed();
    within_time(elapsed, 120)?;
    Ok(format!(
        "{groups} groups, {:.1}% of 200 trials within 0.05, mean distortion {:.4}, {:.1} s",
        100.0 * rep.fraction_within_epsilon,
        rep.mean_distortion,
        elapsed.as_secs_f64()
    ))
}

fn criterion11(t2: Option<&ThetaResult>, t3: Option<&ThetaResult>) -> Check {
    let mut parts = Vec::new();
    for (k, r) in [(2, t2), (3, t3)] {
        let r = r.ok_or_else(|| format!("theta_{k} solve failed"))?;
        let (lo, hi) = (theta_lower_bound_closed_form(k), theta_upper_bound_closed_form(k));
        ensure(lo <= r.value && r.value <= hi, || format!("k = {k}: {lo} <= {} <= {hi} fails", r.value))?;
        parts.push(format!("{lo:.4} <= {:.5} <= {hi:.4}", r.value));
    }
    let z1 = zeta(1, BiasTransform::Linear, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).map_err(err)?.zeta;
    ensure((z1 - 0.5).abs() <= 1e-6, || format!("zeta_1 = {z1}"))?;
    Ok(format!("{}, zeta_1 = {z1:.8}", parts.join(", ")))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, res: Check| match res {
        Ok(detail) => println!("PASS criterion {n}: {name} ({detail})"),
        Err(e) => {
            failures += 1;
            println!("FAIL criterion {n}: {name} ({e})");
        }
    };

    let start = Instant::now();
    let t2 = solve_theta2(1e-6, 1_000_000);
    let t2_time = start.elapsed();
    report(1, "theta_2 certified", t2.as_ref().map_err(err).and_then(|r| theta2_check(r, t2_time)));
    report(2, "Copeland k=2 case maxima negative", criterion2());
    let start = Instant::now();
    let t3 = solve_theta3(THETA3_TOL, THETA3_BUDGET);
    let t3_time = start.elapsed();
    report(3, "theta_3 case bounds", t3.as_ref().map_err(err).and_then(|r| theta3_check(r, t3_time)));
    report(4, "random-choice table", criterion4());
    report(5, "random-choice sweep trends", criterion5());
    report(6, "lower-bound instances", criterion6());
    report(7, "end-to-end tightness for pairs", criterion7());
    report(8, "favorite-outputting lower bound instance", criterion8());
    report(9, "property suites", criterion9());
    report(10, "finite-sample estimation", criterion10());
    report(11, "consistency chain", criterion11(t2.as_ref().ok(), t3.as_ref().ok()));

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
