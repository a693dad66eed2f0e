//! Pairwise win-probability matrices, the dominance tournament they
//! induce, and the Copeland rule on top of it.

use serde::{Deserialize, Serialize};

use crate::deliberation::{exact_pk, monte_carlo_pk, ModelConfig};
use crate::error::Result;
use crate::metric::MetricInstance;

/// Dominance tolerance for exactly computed matrices.
pub const EXACT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PkMode {
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

impl PkMode {
    pub fn default_tolerance(self) -> f64 {
        match self {
            PkMode::Exact => EXACT_TOLERANCE,
            PkMode::MonteCarlo { .. } => 0.0,
        }
    }
}

/// `p[i][j]` is the probability that a group deliberating between
/// candidates `i` and `j` picks `i`. The diagonal is unused (zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PMatrix {
    pub m: usize,
    pub p: Vec<Vec<f64>>,
}

impl PMatrix {
    pub fn new(p: Vec<Vec<f64>>) -> Self {
        PMatrix { m: p.len(), p }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i][j]
    }

    /// `row,col,p` lines for every off-diagonal entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,p\n");
        for i in 0..self.m {
            for j in 0..self.m {
                if i != j {
                    out.push_str(&format!("{i},{j},{}\n", self.p[i][j]));
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &PMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                if i != j {
                    worst = worst.max((self.p[i][j] - other.p[i][j]).abs());
                }
            }
        }
        worst
    }
}

/// Dominance relation of a [`PMatrix`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tournament {
    pub m: usize,
    pub beats: Vec<Vec<bool>>,
    pub half_points: Vec<Vec<bool>>,
}

impl Tournament {
    /// Builds a tournament from a strict dominance matrix plus half-point
    /// pairs; used by tests and tools that work on tournaments directly.
    pub fn from_relation(beats: Vec<Vec<bool>>, half_points: Vec<Vec<bool>>) -> Self {
        Tournament { m: beats.len(), beats, half_points }
    }

    /// `a` reaches `b` in one step; half-point pairs count both ways.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        a != b && (self.beats[a][b] || self.half_points[a][b])
    }

    /// Directed edges `(winner, loser)` plus undirected half-point pairs.
    pub fn edge_list(&self) -> String {
        let mut out = String::from("source,target,kind\n");
        for i in 0..self.m {
            for j in 0..self.m {
                if i == j {
                    continue;
                }
                if self.half_points[i][j] {
                    if i < j {
                        out.push_str(&format!("{i},{j},half\n"));
                    }
                } else if self.beats[i][j] {
                    out.push_str(&format!("{i},{j},beats\n"));
                }
            }
        }
        out
    }
}

/// Computes `p_k` for every ordered pair of candidates.
pub fn build_pmatrix(inst: &MetricInstance, model: &ModelConfig, mode: PkMode) -> Result<PMatrix> {
    let m = inst.num_candidates();
    let mut p = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            p[i][j] = match mode {
                PkMode::Exact => exact_pk(inst, model, i, j)?.value,
                PkMode::MonteCarlo { trials, seed } => {
                    // one stream family per ordered pair
                    let pair_seed = seed ^ ((i * m + j) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    monte_carlo_pk(inst, model, i, j, trials, pair_seed)?.value
                }
            };
        }
    }
    Ok(PMatrix { m, p })
}

/// `i` beats `j` when `p[i][j] >= 1/2 - tol`. Pairs within `tol` of one
/// half on both sides are half-point ties. If both or neither side clears
/// the threshold otherwise, the larger probability wins and exact equality
/// becomes a tie, so every pair resolves to exactly one outcome.
pub fn build_tournament(pm: &PMatrix, tol: f64) -> Tournament {
    let m = pm.m;
    let mut beats = vec![vec![false; m]; m];
    let mut half = vec![vec![false; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let (pij, pji) = (pm.p[i][j], pm.p[j][i]);
            if (pij - 0.5).abs() <= tol && (pji - 0.5).abs() <= tol {
                half[i][j] = true;
                half[j][i] = true;
                continue;
            }
            let (bij, bji) = (pij >= 0.5 - tol, pji >= 0.5 - tol);
            match (bij, bji) {
                (true, false) => beats[i][j] = true,
                (false, true) => beats[j][i] = true,
                _ if pij > pji => beats[i][j] = true,
                _ if pji > pij => beats[j][i] = true,
                _ => {
                    half[i][j] = true;
                    half[j][i] = true;
                }
            }
        }
    }
    Tournament { m, beats, half_points: half }
}

/// Copeland scores in half points: a win is worth 2, a tie 1.
fn copeland_half_points(t: &Tournament) -> Vec<u64> {
    let mut s = vec![0u64; t.m];
    for i in 0..t.m {
        for j in 0..t.m {
            if i == j {
                continue;
            }
            if t.half_points[i][j] {
                s[i] += 1;
            } else if t.beats[i][j] {
                s[i] += 2;
            }
        }
    }
    s
}

pub fn copeland_scores(t: &Tournament) -> Vec<f64> {
    copeland_half_points(t).into_iter().map(|s| s as f64 / 2.0).collect()
}

/// Highest Copeland score; ties go to the lowest index.
pub fn copeland_winner(t: &Tournament) -> usize {
    let s = copeland_half_points(t);
    let mut best = 0;
    for (i, &v) in s.iter().enumerate() {
        if v > s[best] {
            best = i;
        }
    }
    best
}

/// Whether `w` reaches every other candidate in at most two steps.
pub fn uncovered_check(t: &Tournament, w: usize) -> bool {
    (0..t.m).all(|x| x == w || t.dominates(w, x) || (0..t.m).any(|y| t.dominates(w, y) && t.dominates(y, x)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub winner: usize,
    pub winner_id: String,
    pub distortion: f64,
    pub scores: Vec<f64>,
    pub pmatrix: PMatrix,
}

/// Copeland winner of the deliberation tournament and its distortion on
/// this instance.
pub fn pipeline_distortion(inst: &MetricInstance, model: &ModelConfig, mode: PkMode) -> Result<PipelineOutcome> {
    let pm = build_pmatrix(inst, model, mode)?;
    let t = build_tournament(&pm, mode.default_tolerance());
    let winner = copeland_winner(&t);
    Ok(PipelineOutcome {
        winner,
        winner_id: inst.candidates()[winner].clone(),
        distortion: inst.distortion_of(winner)?,
        scores: copeland_scores(&t),
        pmatrix: pm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Location;

    fn tournament(m: usize, wins: &[(usize, usize)], halves: &[(usize, usize)]) -> Tournament {
        let mut beats = vec![vec![false; m]; m];
        let mut half = vec![vec![false; m]; m];
        for &(a, b) in wins {
            beats[a][b] = true;
        }
        for &(a, b) in halves {
            half[a][b] = true;
            half[b][a] = true;
        }
        Tournament::from_relation(beats, half)
    }

    #[test]
    fn thresholds() {
        let pm = PMatrix::new(vec![vec![0.0, 0.6], vec![0.4, 0.0]]);
        let t = build_tournament(&pm, 1e-9);
        assert!(t.beats[0][1] && !t.beats[1][0]);

        let pm = PMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
        let t = build_tournament(&pm, 1e-9);
        assert!(t.half_points[0][1] && t.half_points[1][0]);
        assert!(!t.beats[0][1] && !t.beats[1][0]);

        let tol = 1e-3;
        let pm = PMatrix::new(vec![vec![0.0, 0.5 - tol / 2.0], vec![0.45, 0.0]]);
        let t = build_tournament(&pm, tol);
        assert!(t.beats[0][1]);
    }

    #[test]
    fn scores_examples() {
        let cycle = tournament(3, &[(0, 1), (1, 2), (2, 0)], &[]);
        assert_eq!(copeland_scores(&cycle), vec![1.0, 1.0, 1.0]);
        assert_eq!(copeland_winner(&cycle), 0);

        let wins: Vec<_> = (1..4).map(|j| (0, j)).chain([(1, 2), (2, 3), (3, 1)]).collect();
        let dom = tournament(4, &wins, &[]);
        assert_eq!(copeland_scores(&dom)[0], 3.0);
        assert_eq!(copeland_winner(&dom), 0);

        let ties = tournament(3, &[], &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(copeland_scores(&ties), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn uncovered_examples() {
        let transitive = tournament(3, &[(0, 1), (0, 2), (1, 2)], &[]);
        assert!(uncovered_check(&transitive, 0));
        assert!(!uncovered_check(&transitive, 2));
        let pair = tournament(2, &[(1, 0)], &[]);
        assert!(!uncovered_check(&pair, 0));
        assert!(uncovered_check(&pair, 1));
    }

    #[test]
    fn degenerate_instance_matrix() {
        let pos: [f64; 3] = [0.0, 1.0, 0.0];
        let inst = MetricInstance::from_fn(
            vec!["c1".into(), "c2".into()],
            vec![Location { id: "v".into(), mass: 1.0 }],
            |a, b| (pos[a] - pos[b]).abs(),
        );
        let pm = build_pmatrix(&inst, &ModelConfig::averaging(3), PkMode::Exact).unwrap();
        assert_eq!(pm.get(0, 1), 1.0);
        assert_eq!(pm.get(1, 0), 0.0);
        let out = pipeline_distortion(&inst, &ModelConfig::averaging(3), PkMode::Exact);
        // optimum has cost zero
        assert!(out.is_err());
    }

    #[test]
    fn csv_and_edges() {
        let pm = PMatrix::new(vec![vec![0.0, 0.75], vec![0.25, 0.0]]);
        assert_eq!(pm.to_csv(), "row,col,p\n0,1,0.75\n1,0,0.25\n");
        let t = build_tournament(&pm, 0.0);
        assert_eq!(t.edge_list(), "source,target,kind\n0,1,beats\n");
    }
}
