//! A small dense two-phase simplex used only to find Lagrange
//! multipliers. Its floating-point answers are never trusted directly:
//! callers turn the multipliers into bounds with interval arithmetic, so
//! any nonnegative multiplier vector yields a valid result.

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    /// Multipliers for the rows of `A x <= b` at the optimum.
    Optimal(Vec<f64>),
    /// Multipliers of an (approximate) Farkas certificate.
    Infeasible(Vec<f64>),
    /// Pivot limit or numerical trouble.
    Unknown,
}

struct Tableau {
    rows: usize,
    cols: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let pv = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= pv;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.t[r * w + c] -= f * self.t[pr * w + c];
                }
            }
        }
        self.basis[pr] = pc;
    }

    /// Minimizes the objective row with Bland's rule over columns allowed
    /// by `allowed`. Returns `false` on pivot limit or unboundedness.
    fn run(&mut self, allowed: impl Fn(usize) -> bool) -> bool {
        let obj = self.rows;
        for _ in 0..MAX_PIVOTS {
            let Some(pc) = (0..self.cols).find(|&c| allowed(c) && self.at(obj, c) < -PIVOT_EPS) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    if best.is_none_or(|(br, bv)| ratio < bv - 1e-15 || (ratio <= bv + 1e-15 && self.basis[r] < self.basis[br])) {
                        best = Some((r, ratio));
                    }
                }
            }
            let Some((pr, _)) = best else { return false };
            self.pivot(pr, pc);
        }
        false
    }
}

/// Maximize `c . x` subject to `A x <= b` and `lo <= x <= hi`.
pub fn solve(c: &[f64], a: &[Vec<f64>], b: &[f64], lo: &[f64], hi: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    // z = x - lo in [0, hi - lo]; rows: A z <= b - A lo, then z_j <= d_j
    let rows = m + n;
    let mut rhs = Vec::with_capacity(rows);
    for i in 0..m {
        rhs.push(b[i] - a[i].iter().zip(lo).map(|(x, l)| x * l).sum::<f64>());
    }
    for j in 0..n {
        rhs.push(hi[j] - lo[j]);
    }
    let flipped: Vec<bool> = rhs.iter().map(|&r| r < 0.0).collect();
    let n_art = flipped.iter().filter(|&&f| f).count();
    let slack0 = n;
    let art0 = n + rows;
    let cols = n + rows + n_art;
    let w = cols + 1;
    let mut tab = Tableau { rows, cols, t: vec![0.0; (rows + 1) * w], basis: vec![0; rows] };
    let mut next_art = art0;
    for r in 0..rows {
        let sign = if flipped[r] { -1.0 } else { 1.0 };
        for j in 0..n {
            let coef = if r < m { a[r][j] } else if r - m == j { 1.0 } else { 0.0 };
            tab.t[r * w + j] = sign * coef;
        }
        tab.t[r * w + slack0 + r] = sign;
        tab.t[r * w + cols] = sign * rhs[r];
        if flipped[r] {
            tab.t[r * w + next_art] = 1.0;
            tab.basis[r] = next_art;
            next_art += 1;
        } else {
            tab.basis[r] = slack0 + r;
        }
    }
    let obj = rows;
    let duals = |tab: &Tableau| (0..m).map(|i| tab.at(obj, slack0 + i).max(0.0)).collect::<Vec<f64>>();
    if n_art > 0 {
        // phase one: minimize the sum of artificials
        for r in 0..rows {
            if flipped[r] {
                for c in 0..w {
                    let v = tab.t[r * w + c];
                    tab.t[obj * w + c] -= v;
                }
            }
        }
        for c in art0..cols {
            tab.t[obj * w + c] = 0.0;
        }
        if !tab.run(|_| true) {
            return LpOutcome::Unknown;
        }
        if -tab.rhs(obj) > 1e-9 {
            return LpOutcome::Infeasible(duals(&tab));
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..rows {
            if tab.basis[r] >= art0 {
                if let Some(pc) = (0..art0).find(|&c| tab.at(r, c).abs() > PIVOT_EPS) {
                    tab.pivot(r, pc);
                }
            }
        }
    }
    // phase two: minimize -c . z
    for c in 0..w {
        tab.t[obj * w + c] = 0.0;
    }
    for j in 0..n {
        tab.t[obj * w + j] = -c[j];
    }
    for r in 0..rows {
        let bc = tab.basis[r];
        let cost = if bc < n { -c[bc] } else { 0.0 };
        if cost != 0.0 {
            for col in 0..w {
                let v = tab.t[r * w + col];
                tab.t[obj * w + col] -= cost * v;
            }
        }
    }
    if !tab.run(|col| col < art0) {
        return LpOutcome::Unknown;
    }
    LpOutcome::Optimal(duals(&tab))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_optimum_and_duals() {
        // max x + y s.t. x + 2y <= 2, 3x + y <= 3 on [0, 10]^2: optimum at (0.8, 0.6)
        let out = solve(&[1.0, 1.0], &[vec![1.0, 2.0], vec![3.0, 1.0]], &[2.0, 3.0], &[0.0, 0.0], &[10.0, 10.0]);
        let LpOutcome::Optimal(y) = out else { panic!("{out:?}") };
        // duals solve y1 + 3 y2 = 1, 2 y1 + y2 = 1
        assert!((y[0] - 0.4).abs() < 1e-9 && (y[1] - 0.2).abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn negative_rhs_and_infeasible() {
        // x >= 1 written as -x <= -1, maximize -x on [0, 5]: optimum x = 1, dual 1
        let out = solve(&[-1.0], &[vec![-1.0]], &[-1.0], &[0.0], &[5.0]);
        let LpOutcome::Optimal(y) = out else { panic!("{out:?}") };
        assert!((y[0] - 1.0).abs() < 1e-9);
        // x >= 6 on [0, 5]
        let out = solve(&[1.0], &[vec![-1.0]], &[-6.0], &[0.0], &[5.0]);
        let LpOutcome::Infeasible(y) = out else { panic!("{out:?}") };
        assert!(y[0] > 0.0);
    }
}
