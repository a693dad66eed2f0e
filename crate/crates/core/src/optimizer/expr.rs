//! Polynomial expression trees, their symbolic derivatives, and a flat
//! tape form used for interval evaluation and forward-backward
//! constraint contraction.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::interval::Interval;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    /// A constant known only to lie in `[lo, hi]`. Point evaluation uses
    /// the upper end.
    Range(f64, f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

pub fn var(i: usize) -> Expr {
    Expr::Var(i)
}

pub fn cst(c: f64) -> Expr {
    Expr::Const(c)
}

impl Expr {
    pub fn range(iv: Interval) -> Expr {
        if iv.lo == iv.hi {
            Expr::Const(iv.lo)
        } else {
            Expr::Range(iv.lo, iv.hi)
        }
    }

    pub fn pow(self, n: u32) -> Expr {
        Expr::Pow(Box::new(self), n)
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms.into_iter().reduce(|a, b| a + b).unwrap_or(Expr::Const(0.0))
    }

    pub fn product(factors: impl IntoIterator<Item = Expr>) -> Expr {
        factors.into_iter().reduce(|a, b| a * b).unwrap_or(Expr::Const(1.0))
    }

    /// Polynomial degree (an upper bound; no cancellation is detected).
    pub fn degree(&self) -> u32 {
        match self {
            Expr::Const(_) | Expr::Range(..) => 0,
            Expr::Var(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) => a.degree().max(b.degree()),
            Expr::Mul(a, b) => a.degree() + b.degree(),
            Expr::Neg(a) => a.degree(),
            Expr::Pow(a, n) => a.degree() * n,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Range(..) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.max_var().max(b.max_var()),
            Expr::Neg(a) | Expr::Pow(a, _) => a.max_var(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Range(_, hi) => *hi,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Neg(a) => -a.eval(x),
            Expr::Pow(a, n) => a.eval(x).powi(*n as i32),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// Removes additive zeros and multiplicative ones and zeros. No
    /// floating-point folding happens, so the result denotes exactly the
    /// same polynomial.
    pub fn simplified(self) -> Expr {
        match self {
            Expr::Add(a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                if a.is_zero() {
                    b
                } else if b.is_zero() {
                    a
                } else {
                    Expr::Add(Box::new(a), Box::new(b))
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                if b.is_zero() {
                    a
                } else if a.is_zero() {
                    Expr::Neg(Box::new(b)).simplified()
                } else {
                    Expr::Sub(Box::new(a), Box::new(b))
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                if a.is_zero() || b.is_zero() {
                    Expr::Const(0.0)
                } else if a.is_one() {
                    b
                } else if b.is_one() {
                    a
                } else {
                    Expr::Mul(Box::new(a), Box::new(b))
                }
            }
            Expr::Neg(a) => match a.simplified() {
                Expr::Const(c) => Expr::Const(-c),
                Expr::Range(lo, hi) => Expr::Range(-hi, -lo),
                Expr::Neg(inner) => *inner,
                other => Expr::Neg(Box::new(other)),
            },
            Expr::Pow(a, n) => {
                let a = a.simplified();
                match n {
                    0 => Expr::Const(1.0),
                    1 => a,
                    _ if a.is_zero() => Expr::Const(0.0),
                    _ => Expr::Pow(Box::new(a), n),
                }
            }
            leaf => leaf,
        }
    }

    /// Symbolic partial derivative with respect to variable `v`.
    pub fn derivative(&self, v: usize) -> Expr {
        let d = match self {
            Expr::Const(_) | Expr::Range(..) => cst(0.0),
            Expr::Var(i) => cst(if *i == v { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => a.derivative(v) + b.derivative(v),
            Expr::Sub(a, b) => a.derivative(v) - b.derivative(v),
            Expr::Mul(a, b) => a.derivative(v) * (**b).clone() + (**a).clone() * b.derivative(v),
            Expr::Neg(a) => -a.derivative(v),
            Expr::Pow(a, n) => match n {
                0 => cst(0.0),
                _ => cst(*n as f64) * (**a).clone().pow(n - 1) * a.derivative(v),
            },
        };
        d.simplified()
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl $trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$variant(Box::new(self), Box::new(Expr::Const(rhs)))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(Expr::Const(self)), Box::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(Interval),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Pow(usize, u32),
}

/// An expression flattened in post-order; the root is the last slot.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
}

/// `sign(v) * |v|^(1/n)` for odd `n`, nudged by a few ulps towards
/// `dir` (`-1` or `+1`).
fn odd_root(v: f64, n: u32, dir: f64) -> f64 {
    let r = v.abs().powf(1.0 / n as f64).copysign(v);
    let slack = 4.0 * f64::EPSILON * r.abs() + f64::MIN_POSITIVE;
    r + dir * slack
}

impl Tape {
    pub fn compile(e: &Expr) -> Tape {
        fn go(e: &Expr, ops: &mut Vec<Op>) -> usize {
            let op = match e {
                Expr::Const(c) => Op::Const(Interval::point(*c)),
                Expr::Range(lo, hi) => Op::Const(Interval::new(*lo, *hi)),
                Expr::Var(i) => Op::Var(*i),
                Expr::Add(a, b) => Op::Add(go(a, ops), go(b, ops)),
                Expr::Sub(a, b) => Op::Sub(go(a, ops), go(b, ops)),
                Expr::Mul(a, b) => Op::Mul(go(a, ops), go(b, ops)),
                Expr::Neg(a) => Op::Neg(go(a, ops)),
                Expr::Pow(a, n) => Op::Pow(go(a, ops), *n),
            };
            ops.push(op);
            ops.len() - 1
        }
        let mut ops = Vec::new();
        go(e, &mut ops);
        Tape { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Whether the expression is a constant (no variables).
    pub fn is_constant(&self) -> bool {
        !self.ops.iter().any(|op| matches!(op, Op::Var(_)))
    }

    pub fn eval(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c.hi,
                Op::Var(i) => x[i],
                Op::Add(a, b) => scratch[a] + scratch[b],
                Op::Sub(a, b) => scratch[a] - scratch[b],
                Op::Mul(a, b) => scratch[a] * scratch[b],
                Op::Neg(a) => -scratch[a],
                Op::Pow(a, n) => scratch[a].powi(n as i32),
            };
            scratch.push(v);
        }
        *scratch.last().expect("non-empty tape")
    }

    /// Natural interval extension over the box; `vals` receives every
    /// intermediate enclosure.
    pub fn forward(&self, bx: &[Interval], vals: &mut Vec<Interval>) -> Interval {
        vals.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => bx[i],
                Op::Add(a, b) => vals[a] + vals[b],
                Op::Sub(a, b) => vals[a] - vals[b],
                Op::Mul(a, b) => vals[a] * vals[b],
                Op::Neg(a) => -vals[a],
                Op::Pow(a, n) => vals[a].powi(n),
            };
            vals.push(v);
        }
        *vals.last().expect("non-empty tape")
    }

    /// Backward projection after [`Tape::forward`]: restricts the root to
    /// `target` and narrows the box accordingly. Returns `false` when the
    /// box is proven to contain no point meeting the target.
    pub fn backward(&self, vals: &mut [Interval], target: Interval, bx: &mut [Interval]) -> bool {
        let root = self.ops.len() - 1;
        match vals[root].meet(target) {
            Some(v) => vals[root] = v,
            None => return false,
        }
        for i in (0..self.ops.len()).rev() {
            let z = vals[i];
            let ok = match self.ops[i] {
                Op::Const(c) => c.meet(z).is_some(),
                Op::Var(v) => match bx[v].meet(z) {
                    Some(n) => {
                        bx[v] = n;
                        true
                    }
                    None => false,
                },
                Op::Add(a, b) => narrow(vals, a, z - vals[b]) && narrow(vals, b, z - vals[a]),
                Op::Sub(a, b) => narrow(vals, a, z + vals[b]) && narrow(vals, b, vals[a] - z),
                Op::Mul(a, b) => {
                    let ok_a = vals[b].contains_zero() || narrow(vals, a, z.div(vals[b]));
                    ok_a && (vals[a].contains_zero() || narrow(vals, b, z.div(vals[a])))
                }
                Op::Neg(a) => narrow(vals, a, -z),
                Op::Pow(a, n) => narrow_pow(vals, a, z, n),
            };
            if !ok {
                return false;
            }
        }
        true
    }
}

fn narrow(vals: &mut [Interval], i: usize, by: Interval) -> bool {
    match vals[i].meet(by) {
        Some(v) => {
            vals[i] = v;
            true
        }
        None => false,
    }
}

fn narrow_pow(vals: &mut [Interval], a: usize, z: Interval, n: u32) -> bool {
    if n == 0 {
        return z.contains(1.0);
    }
    if n == 1 {
        return narrow(vals, a, z);
    }
    let x = vals[a];
    if n % 2 == 1 {
        let r = Interval { lo: odd_root(z.lo, n, -1.0), hi: odd_root(z.hi, n, 1.0) };
        return narrow(vals, a, r);
    }
    let Some(r) = z.nth_root_nonneg(n) else { return false };
    let pos = x.meet(r);
    let neg = x.meet(-r);
    vals[a] = match (pos, neg) {
        (Some(p), Some(q)) => p.hull(q),
        (Some(p), None) => p,
        (None, Some(q)) => q,
        (None, None) => return false,
    };
    true
}
