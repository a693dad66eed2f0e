//! The Averaging and Random-Choice deliberation models and the
//! probability `p_k(W, X)` that a random group of size `k` picks `W`.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricInstance;
use crate::rng;

/// Default cap on the number of multisets enumerated by [`exact_pk`].
pub const ENUMERATION_BUDGET: u64 = 2_000_000;

/// Bias sums with `|sum| <= TIE_RELATIVE_TOLERANCE * sum(|bias|)` count as
/// ties, so that exact rational ties survive floating-point rounding.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Averaging,
    RandomChoice,
}

/// Concave, non-decreasing map of `[0, 1]` onto itself with `g(0) = 0`
/// and `g(1) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BiasTransform {
    Linear,
    Sqrt,
    Power(f64),
}

impl BiasTransform {
    pub fn power(exponent: f64) -> Result<Self> {
        if exponent > 0.0 && exponent <= 1.0 {
            Ok(BiasTransform::Power(exponent))
        } else {
            Err(Error::InvalidConfig(format!("power exponent {exponent} must lie in (0, 1]")))
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            BiasTransform::Linear => x,
            BiasTransform::Sqrt => x.sqrt(),
            BiasTransform::Power(e) => x.powf(e),
        }
    }
}

impl fmt::Display for BiasTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BiasTransform::Linear => write!(f, "linear"),
            BiasTransform::Sqrt => write!(f, "sqrt"),
            BiasTransform::Power(e) => write!(f, "pow:{e}"),
        }
    }
}

impl FromStr for BiasTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BiasTransform::Linear),
            "sqrt" => Ok(BiasTransform::Sqrt),
            _ => match s.strip_prefix("pow:") {
                Some(e) => {
                    let e: f64 = e.parse().map_err(|_| Error::InvalidConfig(format!("bad exponent in {s:?}")))?;
                    BiasTransform::power(e)
                }
                None => Err(Error::InvalidConfig(format!("unknown bias transform {s:?}"))),
            },
        }
    }
}

impl TryFrom<String> for BiasTransform {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BiasTransform> for String {
    fn from(g: BiasTransform) -> String {
        g.to_string()
    }
}

fn default_beta() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_g() -> BiasTransform {
    BiasTransform::Linear
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub k: usize,
    #[serde(default = "default_g")]
    pub g: BiasTransform,
    /// Opinion-change weight; only read by the Random-Choice model.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Averaging: a zero bias sum goes to the first-named alternative.
    #[serde(default = "default_true")]
    pub tie_to_first: bool,
    /// Random choice: an all-zero group picks the first alternative
    /// (otherwise each side gets one half).
    #[serde(default = "default_true")]
    pub all_zero_to_first: bool,
}

impl ModelConfig {
    pub fn averaging(k: usize) -> Self {
        ModelConfig {
            variant: Variant::Averaging,
            k,
            g: BiasTransform::Linear,
            beta: 1.0,
            tie_to_first: true,
            all_zero_to_first: true,
        }
    }

    pub fn random_choice(k: usize) -> Self {
        ModelConfig { variant: Variant::RandomChoice, ..ModelConfig::averaging(k) }
    }

    pub fn with_g(self, g: BiasTransform) -> Self {
        ModelConfig { g, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        ModelConfig { beta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("group size k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!("beta = {} outside [0, 1]", self.beta)));
        }
        if let BiasTransform::Power(e) = self.g {
            BiasTransform::power(e)?;
        }
        Ok(())
    }

    /// Probability that a group with these bias counts picks alternative 1.
    fn win_prob_counts(&self, atoms: &[(f64, f64)], counts: &[usize]) -> f64 {
        match self.variant {
            Variant::Averaging => {
                let (sum, scale) = atoms
                    .iter()
                    .zip(counts)
                    .fold((0.0, 0.0), |(s, a), (&(v, _), &c)| (s + c as f64 * v, a + c as f64 * v.abs()));
                if averaging_first_wins(sum, scale, self.tie_to_first) {
                    1.0
                } else {
                    0.0
                }
            }
            Variant::RandomChoice => {
                let mut tally = ChoiceTally::default();
                for (&(v, _), &c) in atoms.iter().zip(counts) {
                    tally.add(v, c as f64, self.g);
                }
                tally.win_prob(self.k as f64, self.beta, self.all_zero_to_first)
            }
        }
    }
}

#[inline]
fn averaging_first_wins(sum: f64, scale: f64, tie_to_first: bool) -> bool {
    if sum.abs() <= TIE_RELATIVE_TOLERANCE * scale {
        tie_to_first
    } else {
        sum < 0.0
    }
}

#[derive(Default)]
struct ChoiceTally {
    a: f64,
    b: f64,
    first: f64,
}

impl ChoiceTally {
    #[inline]
    fn add(&mut self, bias: f64, count: f64, g: BiasTransform) {
        if bias < 0.0 {
            self.a += count * g.apply(-bias);
            self.first += count;
        } else if bias > 0.0 {
            self.b += count * g.apply(bias);
        }
    }

    #[inline]
    fn win_prob(&self, k: f64, beta: f64, all_zero_to_first: bool) -> f64 {
        let total = self.a + self.b;
        let share = if total > 0.0 {
            self.a / total
        } else if all_zero_to_first {
            1.0
        } else {
            0.5
        };
        beta * share + (1.0 - beta) * self.first / k
    }
}

/// Outcome of an Averaging deliberation: `1` if the bias sum is negative,
/// `2` if positive, and ties per `tie_to_first`.
pub fn averaging_outcome(biases: &[f64], tie_to_first: bool) -> u8 {
    let sum: f64 = biases.iter().sum();
    let scale: f64 = biases.iter().map(|b| b.abs()).sum();
    if averaging_first_wins(sum, scale, tie_to_first) {
        1
    } else {
        2
    }
}

/// Probability that a Random-Choice group with these biases picks
/// alternative 1, including the opinion-change mixture weight `beta`.
pub fn random_choice_win_prob(biases: &[f64], g: BiasTransform, beta: f64, all_zero_to_first: bool) -> f64 {
    let mut tally = ChoiceTally::default();
    for &b in biases {
        tally.add(b, 1.0, g);
    }
    tally.win_prob(biases.len() as f64, beta, all_zero_to_first)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PkResult {
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
}

/// Neumaier compensated sum.
#[derive(Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(self) -> f64 {
        self.sum + self.comp
    }
}

fn binomial_table(k: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; k + 1]; k + 1];
    for n in 0..=k {
        t[n][0] = 1.0;
        for r in 1..=n {
            t[n][r] = t[n - 1][r - 1] + if r < n { t[n - 1][r] } else { 0.0 };
        }
    }
    t
}

/// Number of size-`k` multisets over `n` atoms, `C(n + k - 1, k)`.
pub fn multiset_count(n: usize, k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * (n + j - 1) as f64 / j as f64)
}

/// Calls `visit(counts, probability)` for every size-`k` multiset of the
/// atoms, with its multinomial probability under i.i.d. draws.
pub fn for_each_multiset(atoms: &[(f64, f64)], k: usize, mut visit: impl FnMut(&[usize], f64)) {
    let binom = binomial_table(k);
    let mut counts = vec![0usize; atoms.len()];
    fn rec(
        j: usize,
        remaining: usize,
        weight: f64,
        atoms: &[(f64, f64)],
        binom: &[Vec<f64>],
        counts: &mut [usize],
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if j + 1 == atoms.len() {
            counts[j] = remaining;
            visit(counts, weight * atoms[j].1.powi(remaining as i32));
            return;
        }
        for c in 0..=remaining {
            counts[j] = c;
            let w = weight * binom[remaining][c] * atoms[j].1.powi(c as i32);
            rec(j + 1, remaining - c, w, atoms, binom, counts, visit);
        }
    }
    if atoms.is_empty() {
        return;
    }
    rec(0, k, 1.0, atoms, &binom, &mut counts, &mut visit);
}

/// Exact `p_k(W, X)` by enumerating multisets of distinct bias atoms.
pub fn exact_pk(inst: &MetricInstance, model: &ModelConfig, w: usize, x: usize) -> Result<PkResult> {
    exact_pk_with_budget(inst, model, w, x, ENUMERATION_BUDGET)
}

pub fn exact_pk_with_budget(
    inst: &MetricInstance,
    model: &ModelConfig,
    w: usize,
    x: usize,
    budget: u64,
) -> Result<PkResult> {
    model.validate()?;
    let dist = inst.bias_distribution(w, x)?;
    exact_pk_from_distribution(dist.atoms(), model, budget)
}

/// Exact win probability of the first alternative when biases are drawn
/// i.i.d. from `atoms`.
pub fn exact_pk_from_distribution(atoms: &[(f64, f64)], model: &ModelConfig, budget: u64) -> Result<PkResult> {
    let needed = multiset_count(atoms.len(), model.k);
    if needed > budget as f64 {
        return Err(Error::EnumerationBudgetExceeded { needed, budget });
    }
    let mut acc = CompensatedSum::default();
    for_each_multiset(atoms, model.k, |counts, prob| {
        if prob > 0.0 {
            acc.add(prob * model.win_prob_counts(atoms, counts));
        }
    });
    Ok(PkResult { value: acc.value().clamp(0.0, 1.0), stderr: 0.0, method: Method::Exact })
}

/// Monte-Carlo estimate of `p_k(W, X)`; groups are drawn i.i.d. with
/// replacement from the location masses.
pub fn monte_carlo_pk(
    inst: &MetricInstance,
    model: &ModelConfig,
    w: usize,
    x: usize,
    trials: u64,
    seed: u64,
) -> Result<PkResult> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let biases = inst.biases(w, x)?;
    let masses: Vec<f64> = inst.masses().collect();
    let sampler = WeightedIndex::new(&masses).map_err(|e| Error::InvalidInstance(e.to_string()))?;
    let k = model.k;
    let wins = rng::count_successes(trials, seed, |rng, n| {
        let mut group = vec![0.0; k];
        let mut wins = 0;
        for _ in 0..n {
            for slot in group.iter_mut() {
                *slot = biases[sampler.sample(rng)];
            }
            let first = match model.variant {
                Variant::Averaging => averaging_outcome(&group, model.tie_to_first) == 1,
                Variant::RandomChoice => {
                    let p = random_choice_win_prob(&group, model.g, model.beta, model.all_zero_to_first);
                    rng.random::<f64>() < p
                }
            };
            wins += first as u64;
        }
        wins
    });
    let value = wins as f64 / trials as f64;
    Ok(PkResult {
        value,
        stderr: (value * (1.0 - value) / trials as f64).sqrt(),
        method: Method::MonteCarlo { trials, seed },
    })
}
