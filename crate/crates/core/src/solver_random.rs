//! The relaxed program for the Random-Choice model:
//! maximize `(1 - alpha) - alpha * omega` subject to
//! `beta * E_l[l g(omega) / (l g(omega) + k - l)] + (1 - beta) alpha >= 1/2`
//! with `l ~ Binomial(k, alpha)`.
//!
//! For fixed `alpha` the constraint is non-decreasing in `omega`, so the
//! smallest feasible `omega` is found by bisection and `alpha` by a grid
//! followed by golden-section refinement inside the best grid cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{copeland_distortion_from_theta, lower_bounds_from_theta};
use crate::deliberation::{exact_pk_from_distribution, BiasTransform, ModelConfig, ENUMERATION_BUDGET};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA_STEP: f64 = 1e-3;
pub const DEFAULT_OMEGA_TOL: f64 = 1e-9;
/// Constant `c` in `epsilon = c * delta` for the closed-form group size.
pub const DEFAULT_EPSILON_CONSTANT: f64 = 1.0;
/// Largest group size tried by [`group_size_for_epsilon`].
pub const MAX_GROUP_SIZE: usize = 1 << 14;

/// `Binomial(k, alpha)` probabilities, computed in log space.
fn binomial_pmf(k: usize, alpha: f64) -> Vec<f64> {
    if alpha <= 0.0 || alpha >= 1.0 {
        let mut p = vec![0.0; k + 1];
        p[if alpha <= 0.0 { 0 } else { k }] = 1.0;
        return p;
    }
    let (la, lb) = (alpha.ln(), (1.0 - alpha).ln());
    let mut log_choose = 0.0;
    (0..=k)
        .map(|l| {
            if l > 0 {
                log_choose += ((k - l + 1) as f64 / l as f64).ln();
            }
            (log_choose + l as f64 * la + (k - l) as f64 * lb).exp()
        })
        .collect()
}

fn check_params(k: usize, g: BiasTransform, beta: f64) -> Result<()> {
    ModelConfig::random_choice(k).with_g(g).with_beta(beta).validate()
}

fn lhs_with_pmf(pmf: &[f64], alpha: f64, omega: f64, g: BiasTransform, beta: f64) -> f64 {
    let k = pmf.len() - 1;
    let go = g.apply(omega);
    let mut sum = 0.0;
    for (l, &w) in pmf.iter().enumerate().skip(1) {
        // at l = k with g(omega) = 0 the 0/0 term is taken as 0
        let denom = l as f64 * go + (k - l) as f64;
        if denom > 0.0 {
            sum += w * l as f64 * go / denom;
        }
    }
    (beta * sum + (1.0 - beta) * alpha).clamp(0.0, 1.0)
}

/// Left-hand side of the constraint.
pub fn constraint_lhs(k: usize, alpha: f64, omega: f64, g: BiasTransform, beta: f64) -> f64 {
    lhs_with_pmf(&binomial_pmf(k, alpha), alpha, omega, g, beta)
}

fn min_omega_with_pmf(pmf: &[f64], alpha: f64, g: BiasTransform, beta: f64, tol: f64) -> Option<f64> {
    let feasible = |w: f64| lhs_with_pmf(pmf, alpha, w, g, beta) >= 0.5;
    if !feasible(1.0) {
        return None;
    }
    if feasible(0.0) {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Smallest feasible `omega` within `tol`, or `None` when even `omega = 1`
/// violates the constraint.
pub fn min_feasible_omega(k: usize, alpha: f64, g: BiasTransform, beta: f64, tol: f64) -> Result<Option<f64>> {
    check_params(k, g, beta)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("omega tolerance must be positive, got {tol}")));
    }
    Ok(min_omega_with_pmf(&binomial_pmf(k, alpha), alpha, g, beta, tol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaResult {
    pub k: usize,
    pub g: BiasTransform,
    pub beta: f64,
    pub zeta: f64,
    /// Best value on the `alpha` grid alone, before refinement.
    pub zeta_grid: f64,
    pub alpha: f64,
    pub omega: f64,
    pub distortion_upper: f64,
    pub det_lb: f64,
    pub rand_lb: f64,
    pub alpha_step: f64,
    pub omega_tol: f64,
    /// Exact `p_k` of the two-point distribution `{-omega: alpha, 1: 1 - alpha}`,
    /// when small enough to enumerate.
    pub incumbent_pk: Option<f64>,
    /// `max(0, 1/2 - incumbent_pk)`: how far the relaxed optimum is from
    /// being achievable.
    pub relaxation_gap: Option<f64>,
}

impl ZetaResult {
    pub const CSV_HEADER: &'static str = "k,zeta,alpha,omega,distortion_upper,det_lb,rand_lb";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.k, self.zeta, self.alpha, self.omega, self.distortion_upper, self.det_lb, self.rand_lb
        )
    }
}

/// Objective at `alpha` with the smallest feasible `omega`.
fn value_at(k: usize, alpha: f64, g: BiasTransform, beta: f64, tol: f64) -> Option<(f64, f64)> {
    let pmf = binomial_pmf(k, alpha);
    min_omega_with_pmf(&pmf, alpha, g, beta, tol).map(|w| ((1.0 - alpha) - alpha * w, w))
}

pub fn zeta(k: usize, g: BiasTransform, beta: f64, alpha_step: f64, omega_tol: f64) -> Result<ZetaResult> {
    check_params(k, g, beta)?;
    if !(alpha_step > 0.0 && alpha_step <= 1.0) || !(omega_tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha step must lie in (0, 1] and omega tolerance be positive, got {alpha_step}, {omega_tol}"
        )));
    }
    let n = (1.0 / alpha_step).round() as usize;
    let grid: Vec<Option<(f64, f64, f64)>> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let a = (i as f64 * alpha_step).min(1.0);
            value_at(k, a, g, beta, omega_tol).map(|(v, w)| (v, a, w))
        })
        .collect();
    // first strict maximum in grid order, independent of scheduling
    let (zeta_grid, mut alpha, mut omega) = grid
        .iter()
        .flatten()
        .fold(None, |best: Option<(f64, f64, f64)>, &c| match best {
            Some(b) if b.0 >= c.0 => Some(b),
            _ => Some(c),
        })
        .ok_or_else(|| Error::InvalidConfig(format!("no feasible alpha for k = {k}, beta = {beta}")))?;
    let mut best = zeta_grid;

    // golden-section search on the two cells around the grid optimum
    let f = |a: f64| value_at(k, a, g, beta, omega_tol).map_or(f64::NEG_INFINITY, |(v, _)| v);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = ((alpha - alpha_step).max(0.0), (alpha + alpha_step).min(1.0));
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let cand = 0.5 * (lo + hi);
    if let Some((v, w)) = value_at(k, cand, g, beta, omega_tol) {
        if v > best {
            best = v;
            alpha = cand;
            omega = w;
        }
    }

    let atoms: Vec<(f64, f64)> = [(-omega, alpha), (1.0, 1.0 - alpha)].into_iter().filter(|a| a.1 > 0.0).collect();
    let model = ModelConfig::random_choice(k).with_g(g).with_beta(beta);
    let incumbent_pk = exact_pk_from_distribution(&atoms, &model, ENUMERATION_BUDGET).ok().map(|r| r.value);
    let (det_lb, rand_lb) = lower_bounds_from_theta(best)?;
    Ok(ZetaResult {
        k,
        g,
        beta,
        zeta: best,
        zeta_grid,
        alpha,
        omega,
        distortion_upper: copeland_distortion_from_theta(best)?,
        det_lb,
        rand_lb,
        alpha_step,
        omega_tol,
        incumbent_pk,
        relaxation_gap: incumbent_pk.map(|p| (0.5 - p).max(0.0)),
    })
}

/// One row per `k` in `k_min..=k_max`.
pub fn sweep(
    k_min: usize,
    k_max: usize,
    g: BiasTransform,
    beta: f64,
    alpha_step: f64,
    omega_tol: f64,
) -> Result<Vec<ZetaResult>> {
    if k_min < 1 || k_min > k_max {
        return Err(Error::InvalidConfig(format!("need 1 <= k_min <= k_max, got {k_min}..{k_max}")));
    }
    (k_min..=k_max).map(|k| zeta(k, g, beta, alpha_step, omega_tol)).collect()
}

pub fn sweep_csv(rows: &[ZetaResult]) -> String {
    let mut s = String::from(ZetaResult::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGroupSize {
    pub epsilon: f64,
    /// Smallest `k` found whose distortion bound is at most `1 + epsilon`.
    pub k: usize,
    pub distortion_upper: f64,
    /// `4 / delta^2 * ln(2 / delta)` with `delta = epsilon / c`.
    pub closed_form_k: f64,
    pub c: f64,
}

/// Smallest group size with `distortion_upper <= 1 + epsilon` for the
/// linear Random-Choice model, by doubling then bisecting.
pub fn group_size_for_epsilon(epsilon: f64, c: f64, alpha_step: f64, omega_tol: f64) -> Result<EpsilonGroupSize> {
    if !(epsilon > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon and c must be positive, got {epsilon}, {c}")));
    }
    let dist = |k: usize| zeta(k, BiasTransform::Linear, 1.0, alpha_step, omega_tol).map(|z| z.distortion_upper);
    let ok = |k: usize| dist(k).map(|d| d <= 1.0 + epsilon);
    let mut hi = 1;
    while !ok(hi)? {
        if hi >= MAX_GROUP_SIZE {
            return Err(Error::InvalidConfig(format!("no group size up to {MAX_GROUP_SIZE} reaches 1 + {epsilon}")));
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    // invariant: lo fails (or is 0), hi succeeds
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let delta = epsilon / c;
    Ok(EpsilonGroupSize {
        epsilon,
        k: hi,
        distortion_upper: dist(hi)?,
        closed_form_k: 4.0 / (delta * delta) * (2.0 / delta).ln(),
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use BiasTransform::{Linear, Sqrt};

    /// Direct sum with binomial coefficients, as an independent oracle.
    fn lhs_oracle(k: usize, a: f64, w: f64, g: BiasTransform, beta: f64) -> f64 {
        let mut s = 0.0;
        for l in 1..=k {
            let mut c = 1.0;
            for i in 0..l {
                c = c * (k - i) as f64 / (i + 1) as f64;
            }
            let gw = g.apply(w);
            let term = if l == k { if gw > 0.0 { 1.0 } else { 0.0 } } else { l as f64 * gw / (l as f64 * gw + (k - l) as f64) };
            s += c * a.powi(l as i32) * (1.0 - a).powi((k - l) as i32) * term;
        }
        beta * s + (1.0 - beta) * a
    }

    #[test]
    fn lhs_values() {
        assert_eq!(constraint_lhs(1, 1.0, 1.0, Linear, 1.0), 1.0);
        // k = 2, alpha = 1/2, omega = 1: 2 (1/4)(1/2) + 1/4
        assert!((constraint_lhs(2, 0.5, 1.0, Linear, 1.0) - 0.5).abs() < 1e-15);
        assert!((constraint_lhs(7, 0.37, 0.6, Linear, 0.0) - 0.37).abs() < 1e-15);
        for &(k, a, w, g, b) in &[(3, 0.6, 0.3, Linear, 1.0), (5, 0.8, 0.1, Sqrt, 0.7), (12, 0.55, 0.9, Linear, 0.3)] {
            assert!((constraint_lhs(k, a, w, g, b) - lhs_oracle(k, a, w, g, b)).abs() < 1e-12);
        }
        // the 0/0 corner
        assert_eq!(constraint_lhs(4, 1.0, 0.0, Linear, 1.0), 0.0);
    }

    #[test]
    fn min_omega_examples() {
        let w = min_feasible_omega(1, 0.6, Linear, 1.0, 1e-9).unwrap().unwrap();
        assert!(w <= 1e-9);
        assert_eq!(min_feasible_omega(1, 0.4, Linear, 1.0, 1e-9).unwrap(), None);
        assert!(min_feasible_omega(3, 0.5, Linear, 1.0, 0.0).is_err());
    }

    #[test]
    fn zeta_one_is_half() {
        let z = zeta(1, Linear, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).unwrap();
        assert!((z.zeta - 0.5).abs() < 1e-6, "{z:?}");
    }

    #[test]
    fn beta_zero_gives_half() {
        for k in [2, 5, 9] {
            let z = zeta(k, Linear, 0.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).unwrap();
            assert!((z.zeta - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn table_values() {
        let expect = [(2, 3.34, 1.82, 1.41), (3, 2.31, 1.51, 1.25), (4, 1.90, 1.37, 1.18)];
        for (k, up, det, rand) in expect {
            let z = zeta(k, Linear, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).unwrap();
            assert!((z.distortion_upper - up).abs() <= 0.01, "{z:?}");
            assert!((z.det_lb - det).abs() <= 0.01 && (z.rand_lb - rand).abs() <= 0.01, "{z:?}");
            assert!(z.zeta >= z.zeta_grid);
            // the two-point incumbent is exactly feasible
            assert!(z.relaxation_gap.unwrap() < 1e-9, "{z:?}");
        }
    }

    #[test]
    fn refinement_matches_fine_grid() {
        let z = zeta(3, Linear, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).unwrap();
        let fine = zeta(3, Linear, 1.0, 2e-5, DEFAULT_OMEGA_TOL).unwrap();
        assert!((z.zeta - fine.zeta).abs() < 1e-6);
    }

    #[test]
    fn sqrt_three() {
        let z = zeta(3, Sqrt, 1.0, DEFAULT_ALPHA_STEP, DEFAULT_OMEGA_TOL).unwrap();
        assert!(z.distortion_upper <= 2.98 + 0.01, "{z:?}");
    }

    #[test]
    fn group_size_inversion() {
        let r = group_size_for_epsilon(0.905, 1.0, 1e-3, 1e-9).unwrap();
        assert_eq!(r.k, 4);
        assert!(group_size_for_epsilon(10.0, 1.0, 1e-3, 1e-9).unwrap().k <= 2);
        let a = group_size_for_epsilon(0.6, 1.0, 1e-2, 1e-7).unwrap().k;
        let b = group_size_for_epsilon(0.3, 1.0, 1e-2, 1e-7).unwrap().k;
        assert!(b > a);
    }
}
