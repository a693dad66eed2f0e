//! Finite-sample simulation of the deliberation pipeline: sampled groups
//! estimate the pairwise probabilities, Copeland runs on the estimates,
//! and the winner's distortion is recorded over many independent trials.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deliberation::{averaging_outcome, random_choice_win_prob, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::metric::MetricInstance;
use crate::rng::substream;
use crate::tournament::{build_pmatrix, build_tournament, copeland_winner, PMatrix, PkMode};

/// Circle-method schedule: `m - 1` perfect matchings for even `m`, `m`
/// matchings with one bye each for odd `m`. Every pair appears once.
pub fn round_robin_matchings(m: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 candidates, got {m}")));
    }
    // odd m gets a phantom vertex `m`; its partner sits out
    let n = if m % 2 == 0 { m } else { m + 1 };
    let fixed = n - 1;
    let rounds = (0..n - 1)
        .map(|r| {
            let mut round = Vec::with_capacity(n / 2);
            let mut push = |a: usize, b: usize| {
                if a < m && b < m {
                    round.push((a.min(b), a.max(b)));
                }
            };
            push(fixed, r);
            for i in 1..n / 2 {
                push((r + i) % (n - 1), (r + n - 1 - i) % (n - 1));
            }
            round
        })
        .collect();
    Ok(rounds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Each group settles every pair at once.
    RankingGroups,
    /// Each group deliberates only the pairs of one matching.
    MatchingGroups,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRunConfig {
    pub model: ModelConfig,
    /// Total number of groups per trial. In matching mode group `g` uses
    /// matching `g mod (number of matchings)`.
    pub groups: u64,
    pub trials: u64,
    pub seed: u64,
    pub mode: SampleMode,
    /// Error threshold for the reported success fraction.
    pub epsilon: f64,
}

impl SampleRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.groups == 0 || self.trials == 0 {
            return Err(Error::InvalidConfig("groups and trials must be at least 1".into()));
        }
        if self.mode == SampleMode::MatchingGroups && self.model.variant != Variant::RandomChoice {
            return Err(Error::InvalidConfig("matching groups need the random-choice model".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Biases of every location for each unordered pair `(i, j)`, `i < j`.
struct PairBiases {
    m: usize,
    biases: Vec<Vec<f64>>,
}

impl PairBiases {
    fn new(inst: &MetricInstance) -> Result<Self> {
        let m = inst.num_candidates();
        let mut biases = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                biases.push(inst.biases(i, j)?);
            }
        }
        Ok(PairBiases { m, biases })
    }

    fn get(&self, i: usize, j: usize) -> &[f64] {
        // row-major index into the strict upper triangle
        let idx = i * (2 * self.m - i - 1) / 2 + (j - i - 1);
        &self.biases[idx]
    }
}

/// Counts for both orientations of a pair from one group deliberation.
/// A single uniform draw couples the two orientations so the outcomes
/// are complementary whenever the model is.
fn deliberate(model: &ModelConfig, group: &[f64], flipped: &mut Vec<f64>, rng: &mut ChaCha8Rng) -> (bool, bool) {
    flipped.clear();
    flipped.extend(group.iter().map(|b| -b));
    match model.variant {
        Variant::Averaging => (
            averaging_outcome(group, model.tie_to_first) == 1,
            averaging_outcome(flipped, model.tie_to_first) == 1,
        ),
        Variant::RandomChoice => {
            let u: f64 = rng.random();
            let pij = random_choice_win_prob(group, model.g, model.beta, model.all_zero_to_first);
            let pji = random_choice_win_prob(flipped, model.g, model.beta, model.all_zero_to_first);
            (u < pij, 1.0 - u < pji)
        }
    }
}

struct Simulator<'a> {
    cfg: &'a SampleRunConfig,
    pairs: PairBiases,
    sampler: WeightedIndex<f64>,
    matchings: Vec<Vec<(usize, usize)>>,
}

impl<'a> Simulator<'a> {
    fn new(inst: &MetricInstance, cfg: &'a SampleRunConfig) -> Result<Self> {
        cfg.validate()?;
        let masses: Vec<f64> = inst.masses().collect();
        Ok(Simulator {
            cfg,
            pairs: PairBiases::new(inst)?,
            sampler: WeightedIndex::new(&masses).map_err(|e| Error::InvalidInstance(e.to_string()))?,
            matchings: round_robin_matchings(inst.num_candidates())?,
        })
    }

    /// Estimated matrix for one trial, drawn from `substream(seed, trial)`.
    fn run(&self, trial: u64) -> Result<PMatrix> {
        let m = self.pairs.m;
        let k = self.cfg.model.k;
        let mut rng = substream(self.cfg.seed, trial);
        let mut wins = vec![vec![0u64; m]; m];
        let mut obs = vec![vec![0u64; m]; m];
        let mut members = vec![0usize; k];
        let mut group = vec![0.0; k];
        let mut flipped = Vec::with_capacity(k);
        let all_pairs: Vec<(usize, usize)> = self.matchings.iter().flatten().copied().collect();
        for g in 0..self.cfg.groups {
            for slot in members.iter_mut() {
                *slot = self.sampler.sample(&mut rng);
            }
            let pairs = match self.cfg.mode {
                SampleMode::RankingGroups => &all_pairs,
                SampleMode::MatchingGroups => &self.matchings[(g % self.matchings.len() as u64) as usize],
            };
            for &(i, j) in pairs {
                let b = self.pairs.get(i, j);
                for (dst, &loc) in group.iter_mut().zip(&members) {
                    *dst = b[loc];
                }
                let (ij, ji) = deliberate(&self.cfg.model, &group, &mut flipped, &mut rng);
                wins[i][j] += ij as u64;
                wins[j][i] += ji as u64;
                obs[i][j] += 1;
                obs[j][i] += 1;
            }
        }
        let mut p = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    if obs[i][j] == 0 {
                        return Err(Error::NoSamplesForPair(i.min(j), i.max(j)));
                    }
                    p[i][j] = wins[i][j] as f64 / obs[i][j] as f64;
                }
            }
        }
        Ok(PMatrix::new(p))
    }
}

/// One simulated estimate of the pairwise matrix (trial index 0).
pub fn simulate_estimated_pmatrix(inst: &MetricInstance, cfg: &SampleRunConfig) -> Result<PMatrix> {
    Simulator::new(inst, cfg)?.run(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub winner: usize,
    pub distortion: f64,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRunReport {
    pub config: SampleRunConfig,
    /// Matrix the estimates are compared against.
    pub reference: PMatrix,
    /// Winner and distortion of the pipeline run on the reference matrix.
    pub reference_winner: usize,
    pub reference_distortion: f64,
    pub trials: Vec<TrialOutcome>,
    pub mean_distortion: f64,
    pub max_distortion: f64,
    /// Fraction of trials whose largest pairwise error is at most `epsilon`.
    pub fraction_within_epsilon: f64,
}

impl SampleRunReport {
    pub fn trials_csv(&self) -> String {
        let mut s = String::from("trial,winner,distortion,max_error\n");
        for t in &self.trials {
            s.push_str(&format!("{},{},{},{}\n", t.trial, t.winner, t.distortion, t.max_error));
        }
        s
    }
}

/// Runs the configured number of independent trials. The reference matrix
/// is computed with `reference` (exact enumeration when feasible).
pub fn empirical_distortion_trials(
    inst: &MetricInstance,
    cfg: &SampleRunConfig,
    reference: PkMode,
) -> Result<SampleRunReport> {
    let sim = Simulator::new(inst, cfg)?;
    let exact = build_pmatrix(inst, &cfg.model, reference)?;
    let ref_winner = copeland_winner(&build_tournament(&exact, reference.default_tolerance()));
    let trials: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let est = sim.run(trial)?;
            // estimates are compared with 1/2 at face value
            let winner = copeland_winner(&build_tournament(&est, 0.0));
            Ok(TrialOutcome { trial, winner, distortion: inst.distortion_of(winner)?, max_error: est.max_abs_diff(&exact) })
        })
        .collect::<Result<_>>()?;
    let n = trials.len() as f64;
    Ok(SampleRunReport {
        config: *cfg,
        reference_winner: ref_winner,
        reference_distortion: inst.distortion_of(ref_winner)?,
        reference: exact,
        mean_distortion: trials.iter().map(|t| t.distortion).sum::<f64>() / n,
        max_distortion: trials.iter().map(|t| t.distortion).fold(f64::NEG_INFINITY, f64::max),
        fraction_within_epsilon: trials.iter().filter(|t| t.max_error <= cfg.epsilon).count() as f64 / n,
        trials,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftThetaCheck {
    pub theta_hat: f64,
    /// Trials with `theta_hat + 2 * max_error < 1`, where the bound exists.
    pub trials_checked: u64,
    /// Trials whose winner's distortion exceeds the bound.
    pub exceeded: u64,
    /// Largest `distortion - bound` over checked trials.
    pub worst_margin: Option<f64>,
}

/// Compares each trial's distortion with the Copeland bound at
/// `theta_hat + 2 * max_error`. Informational: the bound only applies when
/// the model's theta accounting covers the instance.
pub fn soft_theta_check(report: &SampleRunReport, theta_hat: f64) -> Result<SoftThetaCheck> {
    crate::bounds::copeland_distortion_from_theta(theta_hat)?;
    let mut check = SoftThetaCheck { theta_hat, trials_checked: 0, exceeded: 0, worst_margin: None };
    for t in &report.trials {
        let Ok(bound) = crate::bounds::copeland_distortion_from_theta(theta_hat + 2.0 * t.max_error) else {
            continue;
        };
        let margin = t.distortion - bound;
        check.trials_checked += 1;
        check.exceeded += (margin > 0.0) as u64;
        check.worst_margin = Some(check.worst_margin.map_or(margin, |w: f64| w.max(margin)));
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn matchings_partition_edges() {
        for m in 2..=20 {
            let rounds = round_robin_matchings(m).unwrap();
            assert_eq!(rounds.len(), if m % 2 == 0 { m - 1 } else { m });
            let mut seen = BTreeSet::new();
            for r in &rounds {
                assert_eq!(r.len(), m / 2);
                let mut used = BTreeSet::new();
                for &(a, b) in r {
                    assert!(a < b && b < m);
                    assert!(used.insert(a) && used.insert(b), "shared endpoint in {r:?}");
                    assert!(seen.insert((a, b)), "pair ({a}, {b}) repeated");
                }
            }
            assert_eq!(seen.len(), m * (m - 1) / 2);
        }
        assert!(round_robin_matchings(1).is_err());
    }

    #[test]
    fn odd_byes_once_each() {
        let rounds = round_robin_matchings(5).unwrap();
        for v in 0..5 {
            let byes = rounds.iter().filter(|r| r.iter().all(|&(a, b)| a != v && b != v)).count();
            assert_eq!(byes, 1);
        }
    }
}
