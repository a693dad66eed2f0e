//! Certified global maximization of small box-constrained polynomial
//! programs by interval branch and bound.
//!
//! Boxes are explored best-first by objective upper bound. Each box is
//! narrowed by forward-backward constraint propagation, tested for
//! infeasibility with both the natural and the mean-value interval
//! extensions, and bounded by the tightest of the two objective
//! enclosures and a linear relaxation whose multipliers come from a small
//! LP. Feasible midpoints become incumbents and are polished by a
//! projected coordinate search. The search is serial, so a program,
//! tolerance and budget always produce the same result.

pub mod expr;
pub mod interval;
mod lp;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
pub use expr::{cst, var, Expr, Tape};
pub use interval::Interval;

/// Slack allowed when checking an incumbent against its constraints.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_BOXES: u64 = 10_000_000;
/// Programs may not exceed this polynomial degree.
pub const MAX_DEGREE: u32 = 4;
/// Boxes narrower than this (relative to the declared ranges) in every
/// variable are not split further.
const MIN_RELATIVE_WIDTH: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub expr: Expr,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn ge(expr: Expr, rhs: f64) -> Self {
        Constraint { expr, rel: Relation::Ge, rhs }
    }

    pub fn le(expr: Expr, rhs: f64) -> Self {
        Constraint { expr, rel: Relation::Le, rhs }
    }

    fn target(&self) -> Interval {
        match self.rel {
            Relation::Ge => Interval { lo: self.rhs, hi: f64::INFINITY },
            Relation::Le => Interval { lo: f64::NEG_INFINITY, hi: self.rhs },
        }
    }

    /// Whether `value` satisfies the constraint up to `slack`.
    pub fn holds(&self, value: f64, slack: f64) -> bool {
        match self.rel {
            Relation::Ge => value >= self.rhs - slack,
            Relation::Le => value <= self.rhs + slack,
        }
    }
}

/// Maximize `objective` over the box subject to `constraints`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxProgram {
    pub vars: Vec<Variable>,
    pub objective: Expr,
    pub constraints: Vec<Constraint>,
    /// Optional starting points tried as incumbents before the search.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<Vec<f64>>,
}

impl BoxProgram {
    pub fn new(vars: Vec<(&str, f64, f64)>, objective: Expr) -> Self {
        BoxProgram {
            vars: vars
                .into_iter()
                .map(|(n, lo, hi)| Variable { name: n.to_string(), lo, hi })
                .collect(),
            objective,
            constraints: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn constrain(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn seed(mut self, x: Vec<f64>) -> Self {
        self.seeds.push(x);
        self
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProgram(m));
        if self.vars.is_empty() {
            return bad("program has no variables".into());
        }
        for v in &self.vars {
            if !(v.lo.is_finite() && v.hi.is_finite() && v.lo <= v.hi) {
                return bad(format!("variable {} has invalid bounds [{}, {}]", v.name, v.lo, v.hi));
            }
        }
        let n = self.vars.len();
        let exprs = std::iter::once(&self.objective).chain(self.constraints.iter().map(|c| &c.expr));
        for (i, e) in exprs.enumerate() {
            let what = if i == 0 { "objective".to_string() } else { format!("constraint {}", i - 1) };
            if e.max_var().is_some_and(|m| m >= n) {
                return bad(format!("{what} references an undeclared variable"));
            }
            if e.degree() > MAX_DEGREE {
                return bad(format!("{what} has degree {} > {MAX_DEGREE}", e.degree()));
            }
        }
        if let Some(c) = self.constraints.iter().find(|c| !c.rhs.is_finite()) {
            return bad(format!("constraint right-hand side {} is not finite", c.rhs));
        }
        if let Some(s) = self.seeds.iter().find(|s| s.len() != n) {
            return bad(format!("seed has {} coordinates, expected {n}", s.len()));
        }
        if let Some(s) = self.seeds.iter().find(|s| !self.vars.iter().zip(s.iter()).all(|(v, &x)| v.lo <= x && x <= v.hi)) {
            return bad(format!("seed {s:?} lies outside the variable box"));
        }
        Ok(())
    }

    /// Whether `x` lies in the box and meets every constraint up to `slack`.
    pub fn is_feasible(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.vars.len()
            && self.vars.iter().zip(x).all(|(v, &xi)| v.lo <= xi && xi <= v.hi)
            && self.constraints.iter().all(|c| c.holds(c.expr.eval(x), slack))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    /// The gap between bound and incumbent is at most `tol`.
    Certified { tol: f64 },
    BudgetExhausted,
    /// Every box was proven infeasible.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalOptimum {
    pub status: Status,
    pub point: Option<Vec<f64>>,
    pub value: Option<f64>,
    /// Rigorous upper bound on the maximum; absent when infeasible.
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    pub boxes_explored: u64,
    pub tol: f64,
    pub max_boxes: u64,
    /// Value known to be attained elsewhere that boxes had to beat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    /// Boxes discarded as infeasible, kept when auditing is requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pruned_infeasible: Vec<Vec<Interval>>,
}

impl GlobalOptimum {
    pub fn is_certified(&self) -> bool {
        matches!(self.status, Status::Certified { .. })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("optimum serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_boxes: u64,
    /// Keep up to this many infeasible-pruned boxes for auditing.
    pub audit_limit: usize,
    /// A value attained outside this program. Boxes that cannot beat it
    /// are discarded, and the search stops once the bound is within `tol`
    /// of it, so the result certifies `max <= cutoff + tol` only.
    pub cutoff: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: DEFAULT_TOL, max_boxes: DEFAULT_MAX_BOXES, audit_limit: 0, cutoff: None }
    }
}

struct CompiledConstraint {
    tape: Tape,
    grad: Vec<Tape>,
    target: Interval,
    source: Constraint,
}

struct Compiled {
    domain: Vec<Interval>,
    spans: Vec<f64>,
    obj: Tape,
    obj_grad: Vec<Tape>,
    cons: Vec<CompiledConstraint>,
}

fn gradient(e: &Expr, n: usize) -> Vec<Tape> {
    (0..n).map(|v| Tape::compile(&e.derivative(v))).collect()
}

impl Compiled {
    fn new(prog: &BoxProgram) -> Self {
        let n = prog.vars.len();
        Compiled {
            domain: prog.vars.iter().map(|v| Interval::new(v.lo, v.hi)).collect(),
            spans: prog.vars.iter().map(|v| if v.hi > v.lo { v.hi - v.lo } else { 1.0 }).collect(),
            obj: Tape::compile(&prog.objective),
            obj_grad: gradient(&prog.objective, n),
            cons: prog
                .constraints
                .iter()
                .map(|c| CompiledConstraint {
                    tape: Tape::compile(&c.expr),
                    grad: gradient(&c.expr, n),
                    target: c.target(),
                    source: c.clone(),
                })
                .collect(),
        }
    }
}

/// Scratch buffers reused across boxes.
struct Work {
    vals: Vec<Interval>,
    scalars: Vec<f64>,
}

/// Mean-value enclosure `f(m) + sum_i G_i (X_i - m_i)` around the
/// midpoint, intersected with the natural extension.
fn enclose(tape: &Tape, grad: &[Tape], bx: &[Interval], w: &mut Work) -> Interval {
    let natural = tape.forward(bx, &mut w.vals);
    let mid: Vec<Interval> = bx.iter().map(|x| Interval::point(x.mid())).collect();
    let mut mv = tape.forward(&mid, &mut w.vals);
    for (i, g) in grad.iter().enumerate() {
        if bx[i].width() == 0.0 {
            continue;
        }
        let gi = g.forward(bx, &mut w.vals);
        if gi == Interval::point(0.0) {
            continue;
        }
        mv = mv + gi * (bx[i] - mid[i]);
    }
    natural.meet(mv).unwrap_or(natural)
}

fn total_width(bx: &[Interval], spans: &[f64]) -> f64 {
    bx.iter().zip(spans).map(|(x, s)| x.width() / s).sum()
}

/// Forward-backward propagation over all constraints until the box stops
/// shrinking noticeably. `false` means the box holds no feasible point.
fn contract_constraints(c: &Compiled, bx: &mut [Interval], w: &mut Work) -> bool {
    for _ in 0..8 {
        let before = total_width(bx, &c.spans);
        for k in &c.cons {
            k.tape.forward(bx, &mut w.vals);
            if !k.tape.backward(&mut w.vals, k.target, bx) {
                return false;
            }
        }
        let after = total_width(bx, &c.spans);
        if after > 0.9 * before {
            break;
        }
    }
    true
}

/// First-order model `h(x) in g . (x - m) + e` valid over the box, with
/// `g` a float vector and `e` an interval.
struct Linearization {
    g: Vec<f64>,
    e: Interval,
}

fn linearize(tape: &Tape, grad: &[Tape], bx: &[Interval], mid: &[Interval], w: &mut Work) -> Option<Linearization> {
    let mut e = tape.forward(mid, &mut w.vals);
    let mut g = Vec::with_capacity(bx.len());
    for (i, gt) in grad.iter().enumerate() {
        let gi = gt.forward(bx, &mut w.vals);
        if !(gi.lo.is_finite() && gi.hi.is_finite()) {
            return None;
        }
        let c = gi.mid();
        e = e + (gi - Interval::point(c)) * (bx[i] - mid[i]);
        g.push(c);
    }
    (e.lo.is_finite() && e.hi.is_finite()).then_some(Linearization { g, e })
}

enum Relaxation {
    Bound(f64),
    /// No feasible point in the box.
    Empty,
    /// No feasible point at least as good as the incumbent.
    Dominated,
    Unavailable,
}

/// Upper bound from the linear relaxation of the box. Rows are the
/// linearized constraints plus, given an incumbent, the objective cut.
/// Multipliers come from a float LP; the bound itself is recomputed in
/// interval arithmetic and is valid for any nonnegative multipliers.
fn relaxation_bound(c: &Compiled, bx: &[Interval], inc: f64, w: &mut Work) -> Relaxation {
    let n = bx.len();
    let mid: Vec<Interval> = bx.iter().map(|x| Interval::point(x.mid())).collect();
    let Some(obj) = linearize(&c.obj, &c.obj_grad, bx, &mid, w) else {
        return Relaxation::Unavailable;
    };
    // rows a . d <= beta (beta an interval whose upper end is used)
    let mut rows: Vec<(Vec<f64>, Interval)> = Vec::new();
    for k in &c.cons {
        let Some(lin) = linearize(&k.tape, &k.grad, bx, &mid, w) else { continue };
        if k.target.hi.is_finite() {
            rows.push((lin.g.clone(), Interval::point(k.target.hi) - Interval::point(lin.e.lo)));
        }
        if k.target.lo.is_finite() {
            rows.push((lin.g.iter().map(|v| -v).collect(), Interval::point(lin.e.hi) - Interval::point(k.target.lo)));
        }
    }
    if inc.is_finite() {
        rows.push((obj.g.iter().map(|v| -v).collect(), Interval::point(obj.e.hi) - Interval::point(inc)));
    }
    let dbox: Vec<Interval> = bx.iter().zip(&mid).map(|(x, m)| *x - *m).collect();
    let lo: Vec<f64> = bx.iter().zip(&mid).map(|(x, m)| x.lo - m.lo).collect();
    let hi: Vec<f64> = bx.iter().zip(&mid).map(|(x, m)| x.hi - m.lo).collect();
    let a: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.1.hi).collect();
    // sum_k y_k beta_k and sum_k y_k a_k as intervals
    let combine = |y: &[f64]| {
        let mut yb = Interval::point(0.0);
        let mut ya = vec![Interval::point(0.0); n];
        for (k, &yk) in y.iter().enumerate() {
            if yk == 0.0 {
                continue;
            }
            let yk = Interval::point(yk);
            yb = yb + yk * Interval::point(rows[k].1.hi);
            for j in 0..n {
                ya[j] = ya[j] + yk * Interval::point(rows[k].0[j]);
            }
        }
        (yb, ya)
    };
    match lp::solve(&obj.g, &a, &b, &lo, &hi) {
        lp::LpOutcome::Optimal(y) => {
            let (yb, ya) = combine(&y);
            let mut total = Interval::point(obj.e.hi) + yb;
            for j in 0..n {
                total = total + (Interval::point(obj.g[j]) - ya[j]) * dbox[j];
            }
            Relaxation::Bound(total.hi)
        }
        lp::LpOutcome::Infeasible(y) => {
            let (yb, ya) = combine(&y);
            let mut least = Interval::point(0.0);
            for j in 0..n {
                least = least + ya[j] * dbox[j];
            }
            if least.lo > yb.hi {
                let uses_cut = inc.is_finite() && y.last().is_some_and(|&v| v > 0.0);
                if uses_cut {
                    Relaxation::Dominated
                } else {
                    Relaxation::Empty
                }
            } else {
                Relaxation::Unavailable
            }
        }
        lp::LpOutcome::Unknown => Relaxation::Unavailable,
    }
}

fn mean_value_infeasible(c: &Compiled, bx: &[Interval], w: &mut Work) -> bool {
    c.cons.iter().any(|k| enclose(&k.tape, &k.grad, bx, w).meet(k.target).is_none())
}

struct Node {
    ub: f64,
    seq: u64,
    bx: Vec<Interval>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub.total_cmp(&other.ub).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    prog: &'a BoxProgram,
    c: Compiled,
    w: Work,
    heap: BinaryHeap<Node>,
    seq: u64,
    incumbent: Option<(Vec<f64>, f64)>,
    /// Largest bound of boxes too small to split.
    floor: f64,
    audit_limit: usize,
    pruned: Vec<Vec<Interval>>,
    cutoff: f64,
}

impl<'a> Search<'a> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.c.obj.eval(x, &mut self.w.scalars)
    }

    fn feasible(&mut self, x: &[f64]) -> bool {
        let Work { scalars, .. } = &mut self.w;
        self.c
            .cons
            .iter()
            .all(|k| k.source.holds(k.tape.eval(x, scalars), FEASIBILITY_TOLERANCE))
    }

    fn inc_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(_, v)| *v)
    }

    /// Value a box must exceed to matter.
    fn level(&self) -> f64 {
        self.inc_value().max(self.cutoff)
    }

    /// Projected coordinate search from a feasible point.
    fn polish(&mut self, mut x: Vec<f64>, mut fx: f64) -> (Vec<f64>, f64) {
        let mut h = 0.125;
        let mut evals = 0;
        while h > 1e-13 && evals < 4000 {
            let mut improved = false;
            for j in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[j] = (x[j] + dir * h * self.c.spans[j]).clamp(self.c.domain[j].lo, self.c.domain[j].hi);
                    if y[j] == x[j] {
                        continue;
                    }
                    evals += 1;
                    if self.feasible(&y) {
                        let fy = self.value(&y);
                        if fy > fx {
                            x = y;
                            fx = fy;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        (x, fx)
    }

    fn offer(&mut self, x: Vec<f64>) {
        if !self.feasible(&x) {
            return;
        }
        let fx = self.value(&x);
        if fx > self.inc_value() {
            let (x, fx) = self.polish(x, fx);
            self.incumbent = Some((x, fx));
        }
    }

    /// Narrows, bounds and (if still promising) queues a box.
    fn process(&mut self, mut bx: Vec<Interval>) {
        let mut original = (self.pruned.len() < self.audit_limit).then(|| bx.clone());
        if !contract_constraints(&self.c, &mut bx, &mut self.w) || mean_value_infeasible(&self.c, &bx, &mut self.w) {
            if let Some(o) = original {
                self.pruned.push(o);
            }
            return;
        }
        let inc = self.level();
        if inc > f64::NEG_INFINITY {
            // only points at least as good as the incumbent matter
            self.c.obj.forward(&bx, &mut self.w.vals);
            let target = Interval { lo: inc, hi: f64::INFINITY };
            if !self.c.obj.backward(&mut self.w.vals, target, &mut bx) {
                return;
            }
        }
        let mut ub = enclose(&self.c.obj, &self.c.obj_grad, &bx, &mut self.w).hi;
        if ub > inc {
            match relaxation_bound(&self.c, &bx, inc, &mut self.w) {
                Relaxation::Bound(b) => ub = ub.min(b),
                Relaxation::Empty => {
                    if let Some(o) = original.take() {
                        self.pruned.push(o);
                    }
                    return;
                }
                Relaxation::Dominated => return,
                Relaxation::Unavailable => {}
            }
        }
        if ub <= inc {
            return;
        }
        let mid: Vec<f64> = bx.iter().map(|x| x.mid()).collect();
        self.offer(mid);
        if ub <= self.level() {
            return;
        }
        self.seq += 1;
        self.heap.push(Node { ub, seq: self.seq, bx });
    }

    fn branch(&mut self, bx: Vec<Interval>, ub: f64) {
        let (j, rel) = bx
            .iter()
            .zip(&self.c.spans)
            .map(|(x, s)| x.width() / s)
            .enumerate()
            .fold((0, -1.0), |best, (i, r)| if r > best.1 { (i, r) } else { best });
        if rel < MIN_RELATIVE_WIDTH {
            self.floor = self.floor.max(ub);
            return;
        }
        let m = bx[j].mid();
        let mut left = bx.clone();
        let mut right = bx;
        left[j].hi = m;
        right[j].lo = m;
        self.process(left);
        self.process(right);
    }
}

pub fn solve_global(prog: &BoxProgram, tol: f64, max_boxes: u64) -> Result<GlobalOptimum> {
    solve_global_with(prog, &SolveOptions { tol, max_boxes, audit_limit: 0, cutoff: None })
}

pub fn solve_global_with(prog: &BoxProgram, opts: &SolveOptions) -> Result<GlobalOptimum> {
    prog.validate()?;
    if !(opts.tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be nonnegative, got {}", opts.tol)));
    }
    let c = Compiled::new(prog);
    let domain = c.domain.clone();
    let mut s = Search {
        prog,
        c,
        w: Work { vals: Vec::new(), scalars: Vec::new() },
        heap: BinaryHeap::new(),
        seq: 0,
        incumbent: None,
        floor: f64::NEG_INFINITY,
        audit_limit: opts.audit_limit,
        pruned: Vec::new(),
        cutoff: opts.cutoff.unwrap_or(f64::NEG_INFINITY),
    };
    for x in &s.prog.seeds {
        s.offer(x.clone());
    }
    s.process(domain);
    let mut explored = 1u64;
    let status = loop {
        let top = s.heap.peek().map(|n| n.ub).unwrap_or(f64::NEG_INFINITY).max(s.floor);
        let inc = s.level();
        if s.heap.is_empty() && s.incumbent.is_none() && s.floor == f64::NEG_INFINITY && opts.cutoff.is_none() {
            break Status::Infeasible;
        }
        if inc > f64::NEG_INFINITY && top - inc <= opts.tol {
            break Status::Certified { tol: opts.tol };
        }
        if explored >= opts.max_boxes {
            break Status::BudgetExhausted;
        }
        let Some(node) = s.heap.pop() else {
            // only unsplittable boxes remain above the incumbent
            break Status::BudgetExhausted;
        };
        if node.ub <= inc {
            continue;
        }
        explored += 1;
        s.branch(node.bx, node.ub);
    };
    let remaining = s.heap.peek().map(|n| n.ub).unwrap_or(f64::NEG_INFINITY).max(s.floor);
    let (point, value) = match s.incumbent.take() {
        Some((x, v)) => (Some(x), Some(v)),
        None => (None, None),
    };
    let bound = match status {
        Status::Infeasible => None,
        _ => Some(remaining.max(value.unwrap_or(f64::NEG_INFINITY)).max(s.cutoff)),
    };
    Ok(GlobalOptimum {
        status,
        gap: bound.zip(value).map(|(b, v)| b - v),
        point,
        value,
        bound,
        boxes_explored: explored,
        tol: opts.tol,
        max_boxes: opts.max_boxes,
        cutoff: opts.cutoff,
        pruned_infeasible: s.pruned,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub boxes_checked: usize,
    pub points_checked: u64,
    /// Sampled points that satisfied every constraint; a sound search
    /// never produces any.
    pub counterexamples: u64,
}

/// Samples points uniformly from each pruned box and counts those that
/// satisfy every constraint exactly.
pub fn audit_pruned(prog: &BoxProgram, boxes: &[Vec<Interval>], samples_per_box: u64, seed: u64) -> AuditReport {
    let mut counterexamples = 0;
    for (b, bx) in boxes.iter().enumerate() {
        let mut rng = substream(seed, b as u64);
        for _ in 0..samples_per_box {
            let x: Vec<f64> = bx.iter().map(|iv| iv.lo + (iv.hi - iv.lo) * rng.random::<f64>()).collect();
            if prog.is_feasible(&x, 0.0) {
                counterexamples += 1;
            }
        }
    }
    AuditReport {
        boxes_checked: boxes.len(),
        points_checked: boxes.len() as u64 * samples_per_box,
        counterexamples,
    }
}
