//! Generators for the constructed instances: line realizations of bias
//! distributions, the lower-bound families, the two-candidate-per-side
//! Copeland worst case, the many-candidate example, and random Euclidean
//! instances for property tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{BiasDistribution, Location, MetricInstance};
use crate::rng::substream;

/// Largest candidate count [`example1_instance`] will materialize.
pub const EXAMPLE1_MAX_CANDIDATES: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InstanceFamily {
    LineFromBias { atoms: Vec<(f64, f64)> },
    Lb1 { k: usize },
    Theta2Extremal,
    CopelandK2WorstCase { delta: f64 },
    Example1 { n: usize, k: usize, delta: f64 },
    RandomEuclidean { candidates: usize, locations: usize, seed: u64 },
}

impl InstanceFamily {
    pub fn build(&self) -> Result<MetricInstance> {
        match self {
            InstanceFamily::LineFromBias { atoms } => {
                line_instance_from_bias_distribution(&BiasDistribution::new(atoms.clone())?)
            }
            InstanceFamily::Lb1 { k } => lb1_instance(*k),
            InstanceFamily::Theta2Extremal => theta2_extremal_instance(),
            InstanceFamily::CopelandK2WorstCase { delta } => copeland_k2_worst_case(*delta),
            InstanceFamily::Example1 { n, k, delta } => example1_instance(*n, *k, *delta),
            InstanceFamily::RandomEuclidean { candidates, locations, seed } => {
                random_euclidean_instance(*candidates, *locations, *seed)
            }
        }
    }

    /// Short human-readable note on how the instance is laid out.
    pub fn description(&self) -> String {
        match self {
            InstanceFamily::LineFromBias { .. } => {
                "W at 0, X at 1 on a line; atom a placed at (1+a)/2".into()
            }
            InstanceFamily::Lb1 { k } if k % 2 == 1 => format!(
                "half the mass at X, half at distance 2/{} from W",
                k + 1
            ),
            InstanceFamily::Lb1 { k } => format!("mass 1/2+1/{} at X, the rest at W", 3 * k),
            InstanceFamily::Theta2Extremal => "mass 1/sqrt2 at X, 1-1/sqrt2 at W".into(),
            InstanceFamily::CopelandK2WorstCase { delta } => format!(
                "W, X, Y at spacing 1; voters near X, near Y and a delta-mass near W (delta = {delta}); \
                 pair probabilities sit O(delta) above 1/2 so the 3-cycle is strict"
            ),
            InstanceFamily::Example1 { n, k, delta } => format!(
                "{n} voters at 1+{delta} from c; one candidate per {k}-subset at 1 from its members, 3 from others"
            ),
            InstanceFamily::RandomEuclidean { .. } => "uniform points in the unit square".into(),
        }
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Two candidates `W`, `X` at distance 1 on a line, one location per atom
/// `a` at position `(1 + a) / 2`.
pub fn line_instance_from_bias_distribution(dist: &BiasDistribution) -> Result<MetricInstance> {
    let atoms = dist.atoms();
    let mut pos = vec![0.0, 1.0];
    pos.extend(atoms.iter().map(|&(a, _)| (1.0 + a) / 2.0));
    let locations = atoms
        .iter()
        .enumerate()
        .map(|(i, &(_, p))| Location { id: format!("v{i}"), mass: p })
        .collect();
    MetricInstance::from_fn(vec!["W".into(), "X".into()], locations, |a, b| (pos[a] - pos[b]).abs()).validated()
}

/// Bias distribution whose realization is the lower-bound instance for
/// group size `k`.
pub fn lb1_distribution(k: usize) -> Result<BiasDistribution> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("group size must be at least 2, got {k}")));
    }
    if k % 2 == 1 {
        BiasDistribution::new(vec![(1.0, 0.5), (-1.0 + 2.0 / (k as f64 + 1.0), 0.5)])
    } else {
        let p = 0.5 + 1.0 / (3.0 * k as f64);
        BiasDistribution::new(vec![(1.0, p), (-1.0, 1.0 - p)])
    }
}

pub fn lb1_instance(k: usize) -> Result<MetricInstance> {
    line_instance_from_bias_distribution(&lb1_distribution(k)?)
}

/// `E[D]` of [`lb1_distribution`] in closed form.
pub fn lb1_expected_bias(k: usize) -> f64 {
    if k % 2 == 1 {
        1.0 / (k as f64 + 1.0)
    } else {
        2.0 / (3.0 * k as f64)
    }
}

/// Extremal two-atom distribution for pairs of voters.
pub fn theta2_extremal_distribution() -> BiasDistribution {
    let q = std::f64::consts::FRAC_1_SQRT_2;
    BiasDistribution::new(vec![(1.0, q), (-1.0, 1.0 - q)]).expect("valid distribution")
}

pub fn theta2_extremal_instance() -> Result<MetricInstance> {
    line_instance_from_bias_distribution(&theta2_extremal_distribution())
}

/// Fills every location-to-location distance with the shortest route
/// through a single candidate, then validates the result.
fn complete_through_candidates(
    candidates: Vec<String>,
    locations: Vec<Location>,
    cand: impl Fn(usize, usize) -> f64,
    loc_cand: impl Fn(usize, usize) -> f64,
) -> Result<MetricInstance> {
    let m = candidates.len();
    let n = locations.len();
    let p = m + n;
    let mut table = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            table[a * p + b] = match (a < m, b < m) {
                (true, true) => cand(a, b),
                (false, true) => loc_cand(a - m, b),
                (true, false) => loc_cand(b - m, a),
                (false, false) if a == b => 0.0,
                (false, false) => (0..m)
                    .map(|c| loc_cand(a - m, c) + loc_cand(b - m, c))
                    .fold(f64::INFINITY, f64::min),
            };
        }
    }
    MetricInstance::from_table(candidates, locations, table)?.validated()
}

/// Mass of the voters near `X` plus the delta-mass near `W`.
fn worst_case_split(delta: f64) -> f64 {
    (delta + (delta * delta - 4.0 * delta + 2.0).sqrt()) / 2.0
}

/// Three candidates `W`, `X`, `Y` on a line at spacing 1 where, for pairs
/// of voters under averaging, `X` beats `W`, `W` beats `Y` and `Y` beats
/// `X`, each by `O(delta)`. `W` comes first in declaration order, so it
/// wins the Copeland tie, while `X` is optimal; the distortion tends to
/// `3 + sqrt 2` as `delta` shrinks.
pub fn copeland_k2_worst_case(delta: f64) -> Result<MetricInstance> {
    if !(delta > 0.0 && delta < 0.01) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 0.01), got {delta}")));
    }
    let s = worst_case_split(delta);
    let masses = [s - delta, 1.0 - s, delta];
    // distances to (W, X, Y) for the voters near X, near Y and near W
    let rows = [
        [1.0, delta, 1.0 + delta / 2.0],
        [2.0, 1.0 + delta, delta],
        [delta / 2.0, 1.0 + delta / 2.0, 2.0],
    ];
    let pos: [f64; 3] = [0.0, 1.0, 2.0];
    let locations = ["near_x", "near_y", "near_w"]
        .iter()
        .zip(masses)
        .map(|(id, mass)| Location { id: id.to_string(), mass })
        .collect();
    complete_through_candidates(
        vec!["W".into(), "X".into(), "Y".into()],
        locations,
        |a, b| (pos[a] - pos[b]).abs(),
        |i, c| rows[i][c],
    )
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// `n` voters at `1 + delta` from a common candidate `c`, plus one
/// candidate `c_S` per `k`-subset `S` at distance 1 from the members of
/// `S` and 3 from everyone else. Candidates are pairwise 2 apart.
pub fn example1_instance(n: usize, k: usize, delta: f64) -> Result<MetricInstance> {
    if k < 2 || n < k {
        return Err(Error::InvalidConfig(format!("need n >= k >= 2, got n = {n}, k = {k}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
    }
    let needed = binomial(n as u64, k as u64).saturating_add(1);
    if needed > EXAMPLE1_MAX_CANDIDATES {
        return Err(Error::BudgetExceeded { needed, budget: EXAMPLE1_MAX_CANDIDATES });
    }
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        subsets.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else { break };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    let mut member = vec![vec![false; n]; subsets.len()];
    let mut candidates = vec!["c".to_string()];
    for (s, set) in subsets.iter().enumerate() {
        for &v in set {
            member[s][v] = true;
        }
        let label: Vec<String> = set.iter().map(|v| v.to_string()).collect();
        candidates.push(format!("c_{}", label.join("_")));
    }
    let locations = (0..n).map(|i| Location { id: format!("v{i}"), mass: 1.0 / n as f64 }).collect();
    complete_through_candidates(
        candidates,
        locations,
        |a, b| if a == b { 0.0 } else { 2.0 },
        |i, c| match c {
            0 => 1.0 + delta,
            _ if member[c - 1][i] => 1.0,
            _ => 3.0,
        },
    )
}

/// Candidates and locations drawn uniformly from the unit square, with
/// masses drawn uniformly and normalized. Deterministic in `seed`.
pub fn random_euclidean_instance(candidates: usize, locations: usize, seed: u64) -> Result<MetricInstance> {
    if candidates < 2 || locations == 0 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 candidates and 1 location, got {candidates} and {locations}"
        )));
    }
    let mut rng = substream(seed, 0);
    let pts: Vec<(f64, f64)> = (0..candidates + locations).map(|_| (rng.random(), rng.random())).collect();
    let raw: Vec<f64> = (0..locations).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let locs = raw
        .iter()
        .enumerate()
        .map(|(i, &w)| Location { id: format!("v{i}"), mass: w / total })
        .collect();
    MetricInstance::from_fn(names("c", candidates), locs, |a, b| {
        let (dx, dy) = (pts[a].0 - pts[b].0, pts[a].1 - pts[b].1);
        dx.hypot(dy)
    })
    .validated()
}
