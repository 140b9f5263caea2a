//! Double-double arithmetic: an unevaluated sum `hi + lo` carrying ~32
//! significant digits.
//!
//! Only what the Bessel reflection path needs is implemented: the four
//! operations, `exp`, `ln` and a Stirling-series Gamma.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

pub(crate) const PI: Dd = Dd {
    hi: 3.141_592_653_589_793_116e0,
    lo: 1.224_646_799_147_353_207e-16,
};

const LN_2: Dd = Dd {
    hi: 6.931_471_805_599_452_862e-1,
    lo: 2.319_046_813_846_299_558e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact sum of two doubles.
    pub fn sum(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    pub fn div_f64(self, b: f64) -> Self {
        let q1 = self.hi / b;
        let r = self - Dd::from_f64(b).mul_f64(q1);
        let q2 = r.hi / b;
        let r = r - Dd::from_f64(b).mul_f64(q2);
        let q3 = r.hi / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }

    #[cfg(test)]
    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let q = Dd::from_f64(self.hi.sqrt());
        q + (self - q * q) / (q.mul_f64(2.0))
    }

    fn ldexp(self, e: i32) -> Self {
        let s = 2f64.powi(e);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN_2.hi).round();
        let r = (self - LN_2.mul_f64(k)).ldexp(-10);
        // expm1 of the reduced argument, |r| < 3.4e-4.
        let mut term = r;
        let mut s = r;
        for n in 2..=12 {
            term = (term * r).div_f64(n as f64);
            s = s + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + s)^2 - 1 = 2s + s^2, repeated to undo the 2^-10 scaling.
        for _ in 0..10 {
            s = s.mul_f64(2.0) + s * s;
        }
        (s + Dd::ONE).ldexp(k as i32)
    }

    pub fn ln(self) -> Self {
        debug_assert!(self.hi > 0.0);
        let mut y = Dd::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, y: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, y: Dd) -> Dd {
        self + (-y)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, y: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, y.hi);
        let e = e + (self.hi * y.lo + self.lo * y.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, y: Dd) -> Dd {
        let q1 = self.hi / y.hi;
        let r = self - y.mul_f64(q1);
        let q2 = r.hi / y.hi;
        let r = r - y.mul_f64(q2);
        let q3 = r.hi / y.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

/// Bernoulli numbers B_2 .. B_30 as exact (numerator, denominator) pairs.
const BERNOULLI: [(f64, f64); 15] = [
    (1.0, 6.0),
    (-1.0, 30.0),
    (1.0, 42.0),
    (-1.0, 30.0),
    (5.0, 66.0),
    (-691.0, 2730.0),
    (7.0, 6.0),
    (-3617.0, 510.0),
    (43867.0, 798.0),
    (-174611.0, 330.0),
    (854513.0, 138.0),
    (-236364091.0, 2730.0),
    (8553103.0, 6.0),
    (-23749461029.0, 870.0),
    (8615841276005.0, 14322.0),
];

/// Gamma(x) for any real x that is not a pole.
///
/// The argument is shifted upward to z >= 30 by the recurrence and
/// ln Gamma(z) is taken from the Stirling series with 15 Bernoulli terms;
/// the truncation error there is below 1e-33.
pub(crate) fn gamma(x: f64) -> Dd {
    let mut z = Dd::from_f64(x);
    let mut prod = Dd::ONE;
    while z.hi < 30.0 {
        prod = prod * z;
        z = z + Dd::ONE;
    }
    let ln_z = z.ln();
    let half_ln_2pi = PI.mul_f64(2.0).ln().mul_f64(0.5);
    let mut lg = (z - Dd::from_f64(0.5)) * ln_z - z + half_ln_2pi;
    let z2 = z * z;
    let mut zpow = z;
    for (k, &(num, den)) in BERNOULLI.iter().enumerate() {
        let two_k = 2.0 * (k as f64 + 1.0);
        let coeff = Dd::from_f64(num).div_f64(den * two_k * (two_k - 1.0));
        lg = lg + coeff / zpow;
        zpow = zpow * z2;
    }
    lg.exp() / prod
}
