//! Worst-case bias programs for the averaging model: the pair program
//! behind `theta_2`, the two Copeland programs for groups of two, the
//! eight case programs bounding `theta_3`, closed-form bounds for general
//! `k`, and a non-certified search over two-point distributions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deliberation::{exact_pk_from_distribution, ModelConfig, ENUMERATION_BUDGET};
use crate::error::{Error, Result};
use crate::instances::lb1_distribution;
use crate::metric::BiasDistribution;
use crate::optimizer::{solve_global, solve_global_with, var, BoxProgram, Constraint, Expr, GlobalOptimum, Interval, SolveOptions};

pub const THETA2_TOL: f64 = 1e-8;
pub const THETA3_TOL: f64 = 1e-4;
pub const THETA3_BUDGET: u64 = 4_000_000;
pub const COPELAND_K2_TOL: f64 = 1e-4;
pub const COPELAND_K2_BUDGET: u64 = 4_000_000;
/// Largest `d(W, X)` considered by the Copeland programs.
pub const COPELAND_B_MAX: f64 = 100.0;
/// Slack for feasibility of incumbent distributions under exact `p_k`.
pub const PK_FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub description: String,
    pub certificate: GlobalOptimum,
}

impl CaseResult {
    /// Upper bound on the case maximum. A case with no feasible point
    /// (all variables nonnegative) contributes nothing above zero.
    pub fn bound(&self) -> f64 {
        self.certificate.bound.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaResult {
    pub k: usize,
    /// Certified upper bound on `theta_k`.
    pub value: f64,
    /// Mean of the best distribution known to be feasible.
    pub lower: f64,
    pub incumbent: BiasDistribution,
    /// Exact `p_k(W, X)` of the incumbent's line realization.
    pub incumbent_pk: f64,
    pub certified: bool,
    pub cases: Vec<CaseResult>,
}

/// Exact probability that `k` i.i.d. draws from `dist` sum to at most 0.
pub fn averaging_pk(dist: &BiasDistribution, k: usize) -> Result<f64> {
    Ok(exact_pk_from_distribution(dist.atoms(), &ModelConfig::averaging(k), ENUMERATION_BUDGET)?.value)
}

/// Distribution on `{-1, 0, 1}` with `P(-1) = p`, `P(0) = q`.
fn ternary(p: f64, q: f64) -> Result<BiasDistribution> {
    let p = p.clamp(0.0, 1.0);
    let q = q.clamp(0.0, 1.0 - p);
    BiasDistribution::new(vec![(-1.0, p), (0.0, q), (1.0, 1.0 - p - q)])
}

/// Pairs of voters, support restricted to `{-1, 0, 1}`:
/// maximize `1 - 2p - q` subject to `(p+q)^2 + 2p(1-p-q) >= 1/2`.
pub fn theta2_program() -> BoxProgram {
    let (p, q) = (var(0), var(1));
    BoxProgram::new(vec![("p", 0.0, 1.0), ("q", 0.0, 1.0)], 1.0 - 2.0 * p.clone() - q.clone())
        .constrain(Constraint::le(p.clone() + q.clone(), 1.0))
        .constrain(Constraint::ge(
            (p.clone() + q.clone()).pow(2) + 2.0 * p.clone() * (1.0 - p - q),
            0.5,
        ))
}

pub fn solve_theta2(tol: f64, budget: u64) -> Result<ThetaResult> {
    let cert = solve_global(&theta2_program(), tol, budget)?;
    let x = cert.point.clone().ok_or_else(|| Error::InvalidProgram("no feasible point found".into()))?;
    let incumbent = ternary(x[0], x[1])?;
    let incumbent_pk = averaging_pk(&incumbent, 2)?;
    Ok(ThetaResult {
        k: 2,
        value: cert.bound.expect("feasible program has a bound"),
        lower: incumbent.mean(),
        certified: cert.is_certified(),
        incumbent,
        incumbent_pk,
        cases: vec![CaseResult { case: 1, description: "support {-1, 0, 1}".into(), certificate: cert }],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopelandCase {
    /// `0 <= B <= 1`
    Near,
    /// `1 <= B <= 100`
    Far,
}

/// Copeland program for groups of two at distortion target `1 + beta`.
/// Variables `B, p, q, r, s`; the fifth mass `t = 1 - p - q - r - s` is
/// eliminated. `a` encloses `(1 + 2/beta) * theta_2`.
pub fn copeland_k2_program(case: CopelandCase, beta: f64, a: Interval) -> BoxProgram {
    let u = Expr::range(Interval::point(2.0).div(Interval::point(beta)));
    let (b, p, q, r, s) = (var(0), var(1), var(2), var(3), var(4));
    let t = 1.0 - p.clone() - q.clone() - r.clone() - s.clone();
    let lead = Expr::range(a) + p.clone() * (u.clone() * (b.clone() + 1.0) - 1.0);
    let tail = t * (u.clone() * (b.clone() + 1.0) + 2.0 * b.clone() + 1.0);
    let (objective, b_range) = match case {
        CopelandCase::Near => (
            lead + q.clone() * (u.clone() * (1.0 - b.clone()) - 1.0)
                - r.clone()
                - s.clone() * (u * (1.0 - b.clone()) + 1.0)
                - tail,
            (0.0, 1.0),
        ),
        CopelandCase::Far => (
            lead + q.clone() * (u.clone() * (b.clone() - 1.0) - 1.0)
                - r.clone() * b.clone()
                - s.clone() * (u * (b.clone() - 1.0) + 2.0 * b - 1.0)
                - tail,
            (1.0, COPELAND_B_MAX),
        ),
    };
    BoxProgram::new(
        vec![("B", b_range.0, b_range.1), ("p", 0.0, 1.0), ("q", 0.0, 1.0), ("r", 0.0, 1.0), ("s", 0.0, 1.0)],
        objective,
    )
    .constrain(Constraint::le(p.clone() + q.clone() + r.clone() + s.clone(), 1.0))
    .constrain(Constraint::le(
        (p.clone() + q.clone()).pow(2) + 2.0 * p * (r.clone() + s) + 2.0 * q * r,
        0.5,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopelandK2Result {
    pub beta: f64,
    /// Certified upper bound on `theta_2` used inside the constant term.
    pub theta2_bound: f64,
    pub a_constant: Interval,
    pub near: GlobalOptimum,
    pub far: GlobalOptimum,
    /// Both case maxima are certified strictly negative, so the Copeland
    /// distortion for pairs is at most `1 + beta`.
    pub both_negative: bool,
}

pub fn solve_copeland_k2(beta: f64, tol: f64, budget: u64) -> Result<CopelandK2Result> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    let theta2 = solve_global(&theta2_program(), THETA2_TOL, 1_000_000)?;
    let theta2_bound = theta2.bound.expect("feasible program has a bound");
    let factor = Interval::point(1.0) + Interval::point(2.0).div(Interval::point(beta));
    let a_constant = factor * Interval::point(theta2_bound);
    let solve = |case| solve_global(&copeland_k2_program(case, beta, a_constant), tol, budget);
    let (near, far) = rayon::join(|| solve(CopelandCase::Near), || solve(CopelandCase::Far));
    let (near, far) = (near?, far?);
    let negative = |g: &GlobalOptimum| g.bound.is_none_or(|b| b < 0.0);
    Ok(CopelandK2Result {
        beta,
        theta2_bound,
        a_constant,
        both_negative: negative(&near) && negative(&far),
        near,
        far,
    })
}

pub const THETA3_CASES: usize = 8;

const THETA: usize = 0;
fn c(i: usize) -> Expr {
    var(i)
}
fn p(i: usize) -> Expr {
    var(3 + i)
}

/// Table description of one case: range of `a_1 + a_2 + a_3` and the
/// probability condition.
pub fn theta3_case_description(case: usize) -> &'static str {
    match case {
        1 => "c3+c2+c1 >= S >= c3+c2; p1 p2 p3 >= 1/2",
        2 => "c3+c2 >= S >= c3+c1; p3 p2 >= 1/2",
        3 => "c3+c1 >= S >= max(c3, c2+c1); p3 p2 + p3 p1 (1-p2) >= 1/2",
        4 => "c3 >= S >= c2+c1; p3 >= 1/2",
        5 => "c2+c1 >= S >= c3; p3 p2 + p3 (1-p2) p1 + (1-p3) p2 p1 >= 1/2",
        6 => "min(c2+c1, c3) >= S >= c2; 1 - (1-p3)(1 - p1 p2) >= 1/2",
        7 => "c2 >= S >= c1; 1 - (1-p3)(1-p2) >= 1/2",
        8 => "c1 >= S; 1 - (1-p3)(1-p2)(1-p1) >= 1/2",
        _ => "unknown case",
    }
}

/// One of the eight programs for three voters. Each `D_i` takes
/// `a_i = theta + c_i p_i` with probability `1 - p_i` and
/// `b_i = a_i - c_i` with probability `p_i`, so its mean is `theta`
/// by construction. Variables: `theta, c1, c2, c3, p1, p2, p3`.
pub fn theta3_case_program(case: usize) -> Result<BoxProgram> {
    if !(1..=THETA3_CASES).contains(&case) {
        return Err(Error::InvalidConfig(format!("case must be in 1..=8, got {case}")));
    }
    let th = var(THETA);
    let mut prog = BoxProgram::new(
        vec![
            ("theta", 0.0, 1.0),
            ("c1", 0.0, 2.0),
            ("c2", 0.0, 2.0),
            ("c3", 0.0, 2.0),
            ("p1", 0.0, 1.0),
            ("p2", 0.0, 1.0),
            ("p3", 0.0, 1.0),
        ],
        th.clone(),
    );
    for i in 1..=3 {
        // a_i <= 1 and b_i >= -1
        prog = prog
            .constrain(Constraint::le(th.clone() + c(i) * p(i), 1.0))
            .constrain(Constraint::ge(th.clone() - c(i) + c(i) * p(i), -1.0));
    }
    prog = prog
        .constrain(Constraint::ge(c(3) - c(2), 0.0))
        .constrain(Constraint::ge(c(2) - c(1), 0.0));
    let s = 3.0 * th + Expr::sum((1..=3).map(|i| c(i) * p(i)));
    let at_most = |e: Expr| Constraint::ge(e - s.clone(), 0.0);
    let at_least = |e: Expr| Constraint::le(e - s.clone(), 0.0);
    let half = |e: Expr| Constraint::ge(e, 0.5);
    let not = |e: Expr| 1.0 - e;
    let range_and_prob: Vec<Constraint> = match case {
        1 => vec![
            at_most(c(3) + c(2) + c(1)),
            at_least(c(3) + c(2)),
            half(p(1) * p(2) * p(3)),
        ],
        2 => vec![at_most(c(3) + c(2)), at_least(c(3) + c(1)), half(p(3) * p(2))],
        3 => vec![
            at_most(c(3) + c(1)),
            at_least(c(3)),
            at_least(c(2) + c(1)),
            half(p(3) * p(2) + p(3) * p(1) * not(p(2))),
        ],
        4 => vec![at_most(c(3)), at_least(c(2) + c(1)), half(p(3))],
        5 => vec![
            at_most(c(2) + c(1)),
            at_least(c(3)),
            half(p(3) * p(2) + p(3) * not(p(2)) * p(1) + not(p(3)) * p(2) * p(1)),
        ],
        6 => vec![
            at_most(c(2) + c(1)),
            at_most(c(3)),
            at_least(c(2)),
            half(1.0 - not(p(3)) * not(p(1) * p(2))),
        ],
        7 => vec![at_most(c(2)), at_least(c(1)), half(1.0 - not(p(3)) * not(p(2)))],
        _ => vec![at_most(c(1)), half(1.0 - not(p(3)) * not(p(2)) * not(p(1)))],
    };
    for k in range_and_prob {
        prog = prog.constrain(k);
    }
    // the three-voter lower-bound distribution in two encodings
    Ok(prog
        .seed(vec![0.25, 1.5, 1.5, 1.5, 0.5, 0.5, 0.5])
        .seed(vec![0.25, 0.0, 0.0, 1.5, 0.0, 0.0, 0.5]))
}

/// Solves one case program. With a `cutoff` (a value attained by a known
/// feasible distribution) the case only has to be shown not to exceed it
/// by more than `tol`.
pub fn solve_theta3_case(case: usize, tol: f64, budget: u64, cutoff: Option<f64>) -> Result<CaseResult> {
    let opts = SolveOptions { tol, max_boxes: budget, audit_limit: 0, cutoff };
    Ok(CaseResult {
        case,
        description: theta3_case_description(case).to_string(),
        certificate: solve_global_with(&theta3_case_program(case)?, &opts)?,
    })
}

/// Solves all eight case programs in parallel against the three-voter
/// lower-bound distribution, whose feasibility is checked by exact
/// enumeration.
pub fn solve_theta3(tol: f64, budget: u64) -> Result<ThetaResult> {
    let incumbent = lb1_distribution(3)?;
    let incumbent_pk = averaging_pk(&incumbent, 3)?;
    if incumbent_pk < 0.5 - PK_FEASIBILITY_SLACK {
        return Err(Error::InvalidInstance(format!("lower-bound distribution has p_3 = {incumbent_pk}")));
    }
    let lower = incumbent.mean();
    let cases: Vec<CaseResult> = (1..=THETA3_CASES)
        .into_par_iter()
        .map(|c| solve_theta3_case(c, tol, budget, Some(lower)))
        .collect::<Result<_>>()?;
    let value = cases.iter().map(CaseResult::bound).fold(lower, f64::max);
    Ok(ThetaResult {
        k: 3,
        value,
        lower,
        certified: cases.iter().all(|c| c.certificate.is_certified()),
        incumbent,
        incumbent_pk,
        cases,
    })
}

/// `min(1/sqrt k, 8.27/k * (1 + 2/k))`.
pub fn theta_upper_bound_closed_form(k: usize) -> f64 {
    let k = k as f64;
    (1.0 / k.sqrt()).min(8.27 / k * (1.0 + 2.0 / k))
}

/// `1/(k+1)` for odd `k`, `2/(3k)` for even `k`.
pub fn theta_lower_bound_closed_form(k: usize) -> f64 {
    crate::instances::lb1_expected_bias(k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicTheta {
    pub k: usize,
    /// Best mean found; a lower bound on `theta_k`, not certified optimal.
    pub value: f64,
    pub distribution: BiasDistribution,
    pub pk: f64,
    pub certified: bool,
}

fn binomial_cdf(j: usize, k: usize, q: f64) -> f64 {
    let mut term = (1.0 - q).powi(k as i32);
    let mut acc = term;
    for i in 0..j {
        term *= (k - i) as f64 / (i + 1) as f64 * q / (1.0 - q);
        acc += term;
    }
    acc
}

/// Searches two-point distributions `{lo, hi}` with `hi` on a grid of the
/// given step. For each count `j` of high draws the largest admissible
/// `lo = -j hi / (k - j)` is used, and the mass on `hi` is the largest
/// keeping `P(at most j high draws) >= 1/2`.
pub fn theta_heuristic(k: usize, step: f64) -> Result<HeuristicTheta> {
    if k < 2 || !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("need k >= 2 and step in (0, 1], got {k}, {step}")));
    }
    let steps = (1.0 / step).round() as usize;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for h in 1..=steps {
        let hi = h as f64 / steps as f64;
        for j in 0..k {
            let lo = -(j as f64) * hi / (k - j) as f64;
            if lo < -1.0 {
                continue;
            }
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if binomial_cdf(j, k, m) >= 0.5 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let mean = a * hi + (1.0 - a) * lo;
            if best.is_none_or(|(m, ..)| mean > m) {
                best = Some((mean, lo, hi, a));
            }
        }
    }
    let (_, lo, hi, q) = best.expect("grid is non-empty");
    let distribution = BiasDistribution::new(vec![(lo, 1.0 - q), (hi, q)])?;
    let pk = averaging_pk(&distribution, k)?;
    Ok(HeuristicTheta { k, value: distribution.mean(), distribution, pk, certified: false })
}
