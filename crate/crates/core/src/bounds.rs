//! Closed-form distortion bounds and sample-size calculators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplier of `ln(pairs / delta) / eps^2` in the Hoeffding sample
/// sizes: two-sided Hoeffding gives `1/2`.
pub const HOEFFDING_SCALE: f64 = 0.5;

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::ThetaOutOfRange(theta))
    }
}

/// `((1 + theta) / (1 - theta))^2`, the Copeland upper bound.
pub fn copeland_distortion_from_theta(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let r = (1.0 + theta) / (1.0 - theta);
    Ok(r * r)
}

/// `(min(3, (1+theta)/(1-theta)), min(2, 1/(1-theta)))` for deterministic
/// and randomized rules.
pub fn lower_bounds_from_theta(theta: f64) -> Result<(f64, f64)> {
    check_theta(theta)?;
    Ok((((1.0 + theta) / (1.0 - theta)).min(3.0), (1.0 / (1.0 - theta)).min(2.0)))
}

fn check_sample_args(m: usize, epsilon: f64, delta: f64) -> Result<()> {
    if m < 2 || !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "need m >= 2 and epsilon, delta in (0, 1), got m = {m}, epsilon = {epsilon}, delta = {delta}"
        )));
    }
    Ok(())
}

/// Groups needed so every ordered pair's estimate is within `epsilon`
/// with probability `1 - delta`, with an explicit Hoeffding constant.
pub fn sample_size_averaging_with(m: usize, epsilon: f64, delta: f64, scale: f64) -> Result<u64> {
    check_sample_args(m, epsilon, delta)?;
    let pairs = (m * (m - 1)) as f64;
    Ok((scale * (pairs / delta).ln() / (epsilon * epsilon)).ceil() as u64)
}

/// `ceil(ln(m (m - 1) / delta) / (2 epsilon^2))`.
pub fn sample_size_averaging(m: usize, epsilon: f64, delta: f64) -> Result<u64> {
    sample_size_averaging_with(m, epsilon, delta, HOEFFDING_SCALE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingSampleSize {
    pub groups_per_matching: u64,
    pub matchings: u64,
    pub total: u64,
}

/// Groups for the matching schedule: each matching is used for the
/// averaging count at failure budget `delta / m`.
pub fn sample_size_random_choice(m: usize, epsilon: f64, delta: f64) -> Result<MatchingSampleSize> {
    check_sample_args(m, epsilon, delta)?;
    let groups_per_matching = sample_size_averaging(m, epsilon, delta / m as f64)?;
    let matchings = if m % 2 == 0 { m - 1 } else { m } as u64;
    Ok(MatchingSampleSize { groups_per_matching, matchings, total: groups_per_matching * matchings })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub copeland_upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub det_lb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rand_lb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub averaging_groups: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_choice_groups: Option<MatchingSampleSize>,
}

/// Distortion bounds for `theta` (or `zeta`, which plays the same role).
pub fn theta_report(theta: f64) -> Result<BoundReport> {
    let (det, rand) = lower_bounds_from_theta(theta)?;
    Ok(BoundReport {
        theta: Some(theta),
        copeland_upper: Some(copeland_distortion_from_theta(theta)?),
        det_lb: Some(det),
        rand_lb: Some(rand),
        ..BoundReport::default()
    })
}

pub fn sample_report(m: usize, epsilon: f64, delta: f64) -> Result<BoundReport> {
    Ok(BoundReport {
        m: Some(m),
        epsilon: Some(epsilon),
        delta: Some(delta),
        averaging_groups: Some(sample_size_averaging(m, epsilon, delta)?),
        random_choice_groups: Some(sample_size_random_choice(m, epsilon, delta)?),
        ..BoundReport::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copeland_bound_values() {
        assert_eq!(copeland_distortion_from_theta(0.0).unwrap(), 1.0);
        let t = 2f64.sqrt() - 1.0;
        assert!((copeland_distortion_from_theta(t).unwrap() - (3.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
        let r: f64 = 1.2522 / 0.7478;
        let d = copeland_distortion_from_theta(0.2522).unwrap();
        assert!((d - r * r).abs() < 1e-12 && d <= 2.81);
        assert!(matches!(copeland_distortion_from_theta(1.0), Err(Error::ThetaOutOfRange(_))));
        assert!(copeland_distortion_from_theta(-0.1).is_err());
    }

    #[test]
    fn lower_bound_values() {
        let (d, r) = lower_bounds_from_theta(0.25).unwrap();
        assert!((d - 5.0 / 3.0).abs() < 1e-12 && (r - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(lower_bounds_from_theta(0.9).unwrap(), (3.0, 2.0));
        let (d, r) = lower_bounds_from_theta(2f64.sqrt() - 1.0).unwrap();
        assert!((d - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((r - 1.0 / (2.0 - 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_below_upper_bound() {
        for i in 0..=900 {
            let t = i as f64 / 1000.0;
            assert!(lower_bounds_from_theta(t).unwrap().0 <= copeland_distortion_from_theta(t).unwrap());
        }
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(sample_size_averaging(2, 0.1, 0.1).unwrap(), 150);
        // halving epsilon quadruples the real-valued count
        let a = sample_size_averaging(10, 0.1, 0.05).unwrap() as f64;
        let b = sample_size_averaging(10, 0.05, 0.05).unwrap() as f64;
        assert!((b / a - 4.0).abs() < 0.05);
        let rc = sample_size_random_choice(4, 0.1, 0.1).unwrap();
        assert_eq!(rc.matchings, 3);
        assert_eq!(rc.groups_per_matching, sample_size_averaging(4, 0.1, 0.025).unwrap());
        assert_eq!(rc.total, 3 * rc.groups_per_matching);
        assert_eq!(sample_size_random_choice(5, 0.1, 0.1).unwrap().matchings, 5);
        assert!(sample_size_averaging(1, 0.1, 0.1).is_err());
        assert!(sample_size_averaging(3, 0.0, 0.1).is_err());
    }
}
