//! Gamma and modified Bessel functions for the Matérn kernel.
//!
//! `bessel_k` dispatches on the order: half-integer orders use the
//! elementary closed form (upward recurrence from `K_{1/2}`), other
//! non-integer orders go through the reflection formula
//! `K_ν = π/2 · (I_{-ν} − I_ν) / sin(νπ)`. The difference of the two series
//! cancels catastrophically once `z` grows (at z = 20 about 17 digits are
//! lost), so the reflection path sums both series in double-double
//! arithmetic.

mod dd;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use dd::Dd;

/// Truncation control for the `I_ν` power series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub max_terms: usize,
    /// The series stops once the next term falls below this magnitude.
    pub abs_tol: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            max_terms: 64,
            abs_tol: 1e-15,
        }
    }
}

impl SeriesConfig {
    pub fn new(max_terms: usize, abs_tol: f64) -> Result<Self> {
        let cfg = SeriesConfig { max_terms, abs_tol };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.max_terms == 0 {
            return Err(Error::InvalidParameter("max_terms must be at least 1".into()));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "abs_tol must be nonnegative, got {}",
                self.abs_tol
            )));
        }
        Ok(())
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for positive arguments (Lanczos, g = 7).
pub fn gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("gamma requires finite x > 0, got {x}")));
    }
    Ok(gamma_unchecked(x))
}

/// Gamma on the whole real line minus the poles, via reflection below 1/2.
pub(crate) fn gamma_signed(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("gamma of non-finite {x}")));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(Error::Domain(format!("gamma has a pole at {x}")));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    if x == x.floor() && x <= 171.0 {
        // Exact factorials where f64 can hold them.
        let mut acc = 1.0;
        let mut k = 2.0;
        while k < x {
            acc *= k;
            k += 1.0;
        }
        return acc;
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEFFS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

fn is_integer(nu: f64) -> bool {
    nu == nu.floor()
}

/// True when `nu` is an odd multiple of 1/2.
pub fn is_half_integer(nu: f64) -> bool {
    let twice = 2.0 * nu;
    twice == twice.floor() && !is_integer(nu)
}

/// Modified Bessel function of the first kind by its power series,
/// `Σ_k (z/2)^{ν+2k} / (k! Γ(ν+k+1))`.
pub fn bessel_i(nu: f64, z: f64, cfg: SeriesConfig) -> Result<f64> {
    cfg.validate()?;
    if !nu.is_finite() || !z.is_finite() || z < 0.0 {
        return Err(Error::Domain(format!("bessel_i requires finite z >= 0, got nu={nu}, z={z}")));
    }
    if nu < 0.0 && is_integer(nu) {
        return Err(Error::Domain(format!(
            "bessel_i: order {nu} hits a pole of Γ(ν+k+1)"
        )));
    }
    if z == 0.0 {
        return if nu == 0.0 {
            Ok(1.0)
        } else if nu > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Domain(format!("bessel_i: I_{nu}(0) is singular")))
        };
    }
    let half = 0.5 * z;
    let quarter_sq = half * half;
    let mut term = half.powf(nu) / gamma_signed(nu + 1.0)?;
    let mut sum = term;
    for k in 1..cfg.max_terms {
        let kf = k as f64;
        term *= quarter_sq / (kf * (nu + kf));
        if term.abs() < cfg.abs_tol {
            break;
        }
        sum += term;
    }
    Ok(sum)
}

/// Modified Bessel function of the second kind.
///
/// Half-integer orders use the closed form, other non-integer orders the
/// reflection formula. Integer orders are rejected.
pub fn bessel_k(nu: f64, z: f64, cfg: SeriesConfig) -> Result<f64> {
    check_k_args(nu, z)?;
    if is_half_integer(nu) {
        Ok(half_integer_k(nu, z))
    } else {
        reflection_k(nu, z, cfg)
    }
}

/// `K_ν` through the reflection formula regardless of the order's form.
///
/// This is the general route `bessel_k` takes for non-half-integer orders;
/// it is public so both routes can be compared on half-integer orders.
pub fn bessel_k_reflection(nu: f64, z: f64, cfg: SeriesConfig) -> Result<f64> {
    check_k_args(nu, z)?;
    reflection_k(nu, z, cfg)
}

/// `K_ν` for half-integer ν from `K_{1/2}(z) = √(π/2z) e^{-z}` and the
/// recurrence `K_{μ+1} = K_{μ-1} + (2μ/z) K_μ`.
pub fn bessel_k_half_integer(nu: f64, z: f64) -> Result<f64> {
    check_k_args(nu, z)?;
    if !is_half_integer(nu) {
        return Err(Error::Domain(format!("order {nu} is not a half-integer")));
    }
    Ok(half_integer_k(nu, z))
}

fn check_k_args(nu: f64, z: f64) -> Result<()> {
    if !nu.is_finite() {
        return Err(Error::Domain(format!("bessel_k order must be finite, got {nu}")));
    }
    if is_integer(nu) {
        return Err(Error::UnsupportedOrder(nu));
    }
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Domain(format!("bessel_k requires finite z > 0, got {z}")));
    }
    Ok(())
}

fn half_integer_k(nu: f64, z: f64) -> f64 {
    // K_{-ν} = K_ν
    half_integer_k_pair(nu.abs(), z).1
}

/// `(K_{ν-1}(z), K_ν(z))` for half-integer `ν ≥ 1/2` and `z > 0`, unchecked.
/// Both are 0 when `e^{-z}` underflows.
pub(crate) fn half_integer_k_pair(nu: f64, z: f64) -> (f64, f64) {
    let prefactor = (PI / (2.0 * z)).sqrt() * (-z).exp();
    if prefactor == 0.0 {
        return (0.0, 0.0);
    }
    // Scaled values K_μ / prefactor.
    let mut prev = 1.0; // μ = -1/2
    let mut curr = 1.0; // μ = 1/2
    let mut mu = 0.5;
    while mu < nu {
        let next = prev + (2.0 * mu / z) * curr;
        prev = curr;
        curr = next;
        mu += 1.0;
    }
    (prefactor * prev, prefactor * curr)
}

/// Sum of the `I_ν` series in double-double precision.
///
/// Stops on `max_terms` or when the next term no longer changes the sum at
/// double-double resolution.
fn bessel_i_dd(nu: f64, z: f64, max_terms: usize) -> Dd {
    let half = Dd::from_f64(0.5 * z);
    let quarter_sq = half * half;
    let gamma0 = dd::gamma(nu + 1.0);
    let mut term = (half.ln().mul_f64(nu)).exp() / gamma0;
    let mut sum = term;
    for k in 1..max_terms {
        let kf = k as f64;
        let denom = Dd::sum(nu, kf).mul_f64(kf);
        term = term * quarter_sq / denom;
        if term.abs().hi <= 1e-34 * sum.abs().hi {
            break;
        }
        sum = sum + term;
    }
    sum
}

fn reflection_k(nu: f64, z: f64, cfg: SeriesConfig) -> Result<f64> {
    cfg.validate()?;
    let whole = nu.floor();
    let frac = nu - whole;
    // sin(νπ) = (-1)^floor(ν) sin(frac·π); exact ±1 at half-integers.
    let parity = if (whole as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let sin_nu_pi = if frac == 0.5 { parity } else { parity * (PI * frac).sin() };
    let diff = bessel_i_dd(-nu, z, cfg.max_terms) - bessel_i_dd(nu, z, cfg.max_terms);
    let k = (dd::PI.mul_f64(0.5) * diff).to_f64() / sin_nu_pi;
    if !k.is_finite() {
        return Err(Error::Numerical(format!("K_{nu}({z}) overflowed in the reflection formula")));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num::{BigInt, BigRational, ToPrimitive};

    fn cfg() -> SeriesConfig {
        SeriesConfig::default()
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(1.0).unwrap(), 1.0);
        assert_relative_eq!(gamma(0.5).unwrap(), PI.sqrt(), max_relative = 1e-14);
        assert_eq!(gamma(5.0).unwrap(), 24.0);
    }

    #[test]
    fn gamma_rejects_non_positive() {
        assert!(matches!(gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(gamma(-1.5), Err(Error::Domain(_))));
        assert!(matches!(gamma(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(gamma(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_recurrence() {
        for &x in &[0.5, 1.5, 3.3] {
            let lhs = gamma(x + 1.0).unwrap();
            let rhs = x * gamma(x).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn gamma_signed_handles_negative_non_integers() {
        assert_relative_eq!(gamma_signed(-0.5).unwrap(), -2.0 * PI.sqrt(), max_relative = 1e-13);
        assert!(gamma_signed(-2.0).is_err());
    }

    #[test]
    fn bessel_i_trivial_points() {
        assert_eq!(bessel_i(0.0, 0.0, cfg()).unwrap(), 1.0);
        assert_eq!(bessel_i(1.0, 0.0, cfg()).unwrap(), 0.0);
    }

    /// I_0(1) summed exactly over 30 terms of (1/4)^k / (k!)^2.
    #[test]
    fn bessel_i0_at_one_matches_rational_series() {
        let mut sum = BigRational::from_integer(BigInt::from(0));
        let mut fact = BigInt::from(1);
        let quarter = BigRational::new(BigInt::from(1), BigInt::from(4));
        let mut power = BigRational::from_integer(BigInt::from(1));
        for k in 0..30u32 {
            if k > 0 {
                fact *= BigInt::from(k);
                power *= quarter.clone();
            }
            let denom = BigRational::from_integer(fact.clone() * fact.clone());
            sum += power.clone() / denom;
        }
        let oracle = sum.to_f64().unwrap();
        let value = bessel_i(0.0, 1.0, cfg()).unwrap();
        assert_relative_eq!(value, oracle, max_relative = 1e-14);
        assert!((value - 1.266_065_8).abs() < 1e-7);
    }

    #[test]
    fn bessel_i_errors() {
        assert!(matches!(bessel_i(-2.0, 1.0, cfg()), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0.5, -1.0, cfg()), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(-0.5, 0.0, cfg()), Err(Error::Domain(_))));
        assert!(SeriesConfig::new(0, 1e-15).is_err());
        assert!(SeriesConfig::new(4, -1.0).is_err());
    }

    #[test]
    fn bessel_i_nonnegative_for_nonnegative_order() {
        for &nu in &[0.0, 0.3, 1.0, 2.5] {
            for i in 0..50 {
                let z = i as f64 * 0.5;
                assert!(bessel_i(nu, z, cfg()).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn bessel_k_half_integer_examples() {
        assert_relative_eq!(
            bessel_k(0.5, 1.0, cfg()).unwrap(),
            (PI / 2.0).sqrt() * (-1.0f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            bessel_k(0.5, 2.0, cfg()).unwrap(),
            (PI / 4.0).sqrt() * (-2.0f64).exp(),
            max_relative = 1e-15
        );
        assert!((bessel_k(0.5, 1.0, cfg()).unwrap() - 0.461_068_5).abs() < 1e-7);
        assert!((bessel_k(0.5, 2.0, cfg()).unwrap() - 0.119_937_7).abs() < 1e-7);
        // K_{3/2}(z) = √(π/2z) e^{-z} (1 + 1/z)
        let z = 1.7;
        assert_relative_eq!(
            bessel_k(1.5, z, cfg()).unwrap(),
            (PI / (2.0 * z)).sqrt() * (-z).exp() * (1.0 + 1.0 / z),
            max_relative = 1e-15
        );
        assert_eq!(bessel_k(-1.5, z, cfg()).unwrap(), bessel_k(1.5, z, cfg()).unwrap());
    }

    /// The reflection value at ν = 0.3, z = 1 checked against the plain f64
    /// series, which is accurate at small z.
    #[test]
    fn bessel_k_reflection_at_small_argument() {
        let nu = 0.3;
        let i_neg = bessel_i(-nu, 1.0, SeriesConfig::new(64, 1e-18).unwrap()).unwrap();
        let i_pos = bessel_i(nu, 1.0, SeriesConfig::new(64, 1e-18).unwrap()).unwrap();
        let oracle = PI / 2.0 * (i_neg - i_pos) / (nu * PI).sin();
        let value = bessel_k(nu, 1.0, cfg()).unwrap();
        assert_relative_eq!(value, oracle, max_relative = 1e-12);
    }

    #[test]
    fn bessel_k_errors() {
        assert!(matches!(bessel_k(1.0, 1.0, cfg()), Err(Error::UnsupportedOrder(_))));
        assert!(matches!(bessel_k(0.0, 1.0, cfg()), Err(Error::UnsupportedOrder(_))));
        assert!(matches!(bessel_k(0.5, 0.0, cfg()), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(0.5, -3.0, cfg()), Err(Error::Domain(_))));
    }

    #[test]
    fn bessel_k_underflows_to_zero() {
        assert_eq!(bessel_k(0.5, 800.0, cfg()).unwrap(), 0.0);
        assert_eq!(bessel_k(2.5, 1e6, cfg()).unwrap(), 0.0);
    }

    #[test]
    fn bessel_k_strictly_decreasing() {
        for &nu in &[0.3, 0.5, 1.5, 2.5, 1.2] {
            let mut last = f64::INFINITY;
            for i in 1..200 {
                let z = 0.05 * i as f64;
                let k = bessel_k(nu, z, cfg()).unwrap();
                assert!(k > 0.0 && k < last, "nu={nu} z={z}");
                last = k;
            }
        }
    }

    #[test]
    fn reflection_agrees_with_closed_form_on_half_integers() {
        for &nu in &[0.5, 1.5, 2.5] {
            for &z in &[0.01, 0.5, 3.0, 11.0, 20.0] {
                let a = bessel_k_reflection(nu, z, cfg()).unwrap();
                let b = bessel_k_half_integer(nu, z).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }
}
