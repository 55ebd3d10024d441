//! Closed intervals of doubles with outward rounding.
//!
//! Every arithmetic result is widened by one ulp on each side, which encloses
//! the correctly rounded result of `+ - *`. `exp`, `cos` and `sin` are widened by
//! a few ulps plus a small absolute slack to cover libm error.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

const TRIG_SLACK: f64 = 4.0 * f64::EPSILON;

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn outward(lo: f64, hi: f64) -> Self {
        Self {
            lo: lo.next_down(),
            hi: hi.next_up(),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    /// Smallest absolute value over the interval (the mignitude).
    pub fn mig(&self) -> f64 {
        if self.contains_zero() {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    /// Largest absolute value over the interval (the magnitude).
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn split(&self) -> (Self, Self) {
        let m = self.mid();
        (Self::new(self.lo, m), Self::new(m, self.hi))
    }

    pub fn sqr(self) -> Self {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.contains_zero() {
            Self {
                lo: 0.0,
                hi: a.max(b).next_up(),
            }
        } else {
            let lo = a.min(b).next_down().max(0.0);
            Self {
                lo,
                hi: a.max(b).next_up(),
            }
        }
    }

    pub fn scale(self, k: f64) -> Self {
        self * Self::point(k)
    }

    pub fn exp(self) -> Self {
        let lo = self.lo.exp();
        let hi = self.hi.exp();
        Self {
            lo: (lo * (1.0 - TRIG_SLACK)).max(0.0),
            hi: hi * (1.0 + TRIG_SLACK),
        }
    }

    /// Enclosure of `cos` over the interval.
    pub fn cos(self) -> Self {
        trig_enclosure(self, 0.0, f64::cos)
    }

    /// Enclosure of `sin` over the interval; maxima of `sin` sit at `pi/2 + 2 k pi`.
    pub fn sin(self) -> Self {
        trig_enclosure(self, 0.5 * PI, f64::sin)
    }
}

/// Encloses `f` where `f` has maxima at `offset + 2 k pi` and minima at
/// `offset + (2k+1) pi`.
fn trig_enclosure(x: Interval, offset: f64, f: fn(f64) -> f64) -> Interval {
    if !(x.width() < 2.0 * PI) {
        return Interval::new(-1.0, 1.0);
    }
    let (fa, fb) = (f(x.lo), f(x.hi));
    let mut lo = fa.min(fb) - TRIG_SLACK;
    let mut hi = fa.max(fb) + TRIG_SLACK;
    // Extremum indices touched by the interval, with slack so that boundary
    // cases are included rather than missed.
    let slack = 1e-12 * (1.0 + x.lo.abs().max(x.hi.abs()));
    let k_lo = ((x.lo - offset - slack) / PI).ceil() as i64;
    let k_hi = ((x.hi - offset + slack) / PI).floor() as i64;
    for k in k_lo..=k_hi.min(k_lo + 2) {
        if k.rem_euclid(2) == 0 {
            hi = 1.0;
        } else {
            lo = -1.0;
        }
    }
    Interval::new(lo.max(-1.0), hi.min(1.0))
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Self) -> Self {
        Self::outward(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Self) -> Self {
        Self::outward(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Self {
        Self::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Self) -> Self {
        let p = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::outward(lo, hi)
    }
}
