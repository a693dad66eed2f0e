//! Closed real intervals with outward rounding.
//!
//! Every arithmetic result is widened by one ulp on each side, which
//! encloses the exact real result of any correctly rounded operation.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    x.next_down()
}

#[inline]
fn up(x: f64) -> f64 {
    x.next_up()
}

/// `a * b` with the interval convention `0 * inf = 0`.
#[inline]
fn bound_mul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Interval {
    pub const ENTIRE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    #[inline]
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    #[inline]
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    #[inline]
    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(self) -> f64 {
        let m = 0.5 * self.lo + 0.5 * self.hi;
        m.clamp(self.lo, self.hi)
    }

    #[inline]
    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    #[inline]
    pub fn contains_zero(self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    /// Intersection, `None` when disjoint.
    #[inline]
    pub fn meet(self, other: Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    #[inline]
    pub fn hull(self, other: Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn sqr(self) -> Interval {
        let (a, b) = (self.lo.abs(), self.hi.abs());
        let hi = up(bound_mul(a.max(b), a.max(b)));
        let lo = if self.contains_zero() { 0.0 } else { down(bound_mul(a.min(b), a.min(b))).max(0.0) };
        Interval { lo, hi }
    }

    pub fn powi(self, n: u32) -> Interval {
        match n {
            0 => Interval::point(1.0),
            1 => self,
            2 => self.sqr(),
            _ if n % 2 == 0 => {
                let mut r = self.sqr();
                for _ in 0..(n / 2 - 1) {
                    r = r * self.sqr();
                }
                r.meet(Interval::new(0.0, f64::INFINITY)).unwrap_or(Interval::point(0.0))
            }
            _ => {
                // odd powers are monotone
                let mut lo = Interval::point(self.lo);
                let mut hi = Interval::point(self.hi);
                for _ in 1..n {
                    lo = lo * Interval::point(self.lo);
                    hi = hi * Interval::point(self.hi);
                }
                Interval { lo: lo.lo, hi: hi.hi }
            }
        }
    }

    /// `self / other` when `0` is not in `other`; otherwise everything.
    pub fn div(self, other: Interval) -> Interval {
        if other.contains_zero() {
            return Interval::ENTIRE;
        }
        let c = [self.lo / other.lo, self.lo / other.hi, self.hi / other.lo, self.hi / other.hi];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in c {
            if v.is_nan() {
                return Interval::ENTIRE;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval { lo: down(lo), hi: up(hi) }
    }

    /// Real `n`-th roots of the values in `self` with the sign of a
    /// nonnegative argument, widened a few ulps for the inexact `powf`.
    pub fn nth_root_nonneg(self, n: u32) -> Option<Interval> {
        if self.hi < 0.0 {
            return None;
        }
        let e = 1.0 / n as f64;
        let lo = self.lo.max(0.0).powf(e);
        let hi = self.hi.powf(e);
        Some(Interval { lo: (lo * (1.0 - 4.0 * f64::EPSILON)).max(0.0), hi: hi * (1.0 + 4.0 * f64::EPSILON) })
    }
}

impl Add for Interval {
    type Output = Interval;
    #[inline]
    fn add(self, o: Interval) -> Interval {
        Interval { lo: down(self.lo + o.lo), hi: up(self.hi + o.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;
    #[inline]
    fn sub(self, o: Interval) -> Interval {
        Interval { lo: down(self.lo - o.hi), hi: up(self.hi - o.lo) }
    }
}

impl Neg for Interval {
    type Output = Interval;
    #[inline]
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    #[inline]
    fn mul(self, o: Interval) -> Interval {
        let c = [
            bound_mul(self.lo, o.lo),
            bound_mul(self.lo, o.hi),
            bound_mul(self.hi, o.lo),
            bound_mul(self.hi, o.hi),
        ];
        let lo = c[0].min(c[1]).min(c[2]).min(c[3]);
        let hi = c[0].max(c[1]).max(c[2]).max(c[3]);
        Interval { lo: down(lo), hi: up(hi) }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
