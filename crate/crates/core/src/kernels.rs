//! Matérn and polynomial base kernels and their weighted sum
//!
//! ```text
//! k(x, y) = Σ_n α_n · σ_n² 2^{1-ν_n}/Γ(ν_n) · z^{ν_n} K_{ν_n}(z),  z = √(2ν_n)‖x-y‖/ℓ_n
//!         + Σ_m β_m · (γ_m⟨x, y⟩ + c_m)^{d_m}
//! ```
//!
//! Every positive quantity is stored as a logarithm. Orders ν and degrees d
//! are structural and never trained.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special_fn::is_half_integer;

pub const PARAMS_VERSION: u32 = 1;

/// Below this distance the Matérn limit σ² is returned instead of the
/// 0·∞ Bessel product.
const MATERN_ZERO_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternComponent {
    pub nu: f64,
    pub log_sigma: f64,
    pub log_ell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyComponent {
    pub degree: u32,
    pub log_gamma: f64,
    pub log_c: f64,
}

impl MaternComponent {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !is_half_integer(self.nu) || self.nu > 50.0 {
            return Err(Error::InvalidParameter(format!(
                "Matérn order must be a positive half-integer, got {}",
                self.nu
            )));
        }
        if !self.log_sigma.is_finite() || !self.log_ell.is_finite() {
            return Err(Error::InvalidParameter("Matérn log-parameters must be finite".into()));
        }
        Ok(())
    }
}

impl PolyComponent {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::InvalidParameter("polynomial degree must be at least 1".into()));
        }
        if !self.log_gamma.is_finite() || !self.log_c.is_finite() {
            return Err(Error::InvalidParameter("polynomial log-parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Structure of the mixture: how many components of each family.
///
/// Matérn component `n` gets ν = [1/2, 3/2, 5/2][n mod 3] and an initial
/// length-scale [1/2, 1, 2][(n / 3) mod 3]; polynomial component `m` has
/// degree `m + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub num_matern: usize,
    pub num_poly: usize,
    pub jitter: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            num_matern: 9,
            num_poly: 9,
            jitter: 1e-6,
        }
    }
}

const NU_CYCLE: [f64; 3] = [0.5, 1.5, 2.5];
const ELL_CYCLE: [f64; 3] = [0.5, 1.0, 2.0];

impl KernelSpec {
    pub fn new(num_matern: usize, num_poly: usize) -> Self {
        KernelSpec {
            num_matern,
            num_poly,
            ..KernelSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_matern + self.num_poly == 0 {
            return Err(Error::InvalidParameter("kernel needs at least one component".into()));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::InvalidParameter(format!("jitter must be finite and >= 0, got {}", self.jitter)));
        }
        Ok(())
    }

    pub fn init_params(&self) -> Result<KernelParams> {
        self.validate()?;
        let weight = (1.0 / (self.num_matern + self.num_poly) as f64).ln();
        let matern = (0..self.num_matern)
            .map(|n| MaternComponent {
                nu: NU_CYCLE[n % 3],
                log_sigma: 0.0,
                log_ell: ELL_CYCLE[(n / 3) % 3].ln(),
            })
            .collect();
        let poly = (0..self.num_poly)
            .map(|m| PolyComponent {
                degree: m as u32 + 1,
                log_gamma: 0.0,
                log_c: 0.0,
            })
            .collect();
        Ok(KernelParams {
            version: PARAMS_VERSION,
            matern,
            poly,
            log_alpha: vec![weight; self.num_matern],
            log_beta: vec![weight; self.num_poly],
            jitter: self.jitter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub version: u32,
    pub matern: Vec<MaternComponent>,
    pub poly: Vec<PolyComponent>,
    pub log_alpha: Vec<f64>,
    pub log_beta: Vec<f64>,
    pub jitter: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.version != PARAMS_VERSION {
            return Err(Error::Version {
                found: self.version,
                expected: PARAMS_VERSION,
            });
        }
        if self.matern.len() + self.poly.len() == 0 {
            return Err(Error::InvalidParameter("kernel needs at least one component".into()));
        }
        if self.log_alpha.len() != self.matern.len() || self.log_beta.len() != self.poly.len() {
            return Err(Error::InvalidParameter(format!(
                "weight counts ({}, {}) do not match component counts ({}, {})",
                self.log_alpha.len(),
                self.log_beta.len(),
                self.matern.len(),
                self.poly.len()
            )));
        }
        for c in &self.matern {
            c.validate()?;
        }
        for c in &self.poly {
            c.validate()?;
        }
        if self.log_alpha.iter().chain(&self.log_beta).any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("log-weights must be finite".into()));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::InvalidParameter(format!("jitter must be finite and >= 0, got {}", self.jitter)));
        }
        Ok(())
    }

    /// Number of trainable scalars: three per component.
    pub fn num_free(&self) -> usize {
        3 * (self.matern.len() + self.poly.len())
    }

    /// Flat layout used by the optimiser:
    /// `[log_sigma_n, log_ell_n]*, [log_gamma_m, log_c_m]*, log_alpha*, log_beta*`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_free());
        for c in &self.matern {
            out.push(c.log_sigma);
            out.push(c.log_ell);
        }
        for c in &self.poly {
            out.push(c.log_gamma);
            out.push(c.log_c);
        }
        out.extend_from_slice(&self.log_alpha);
        out.extend_from_slice(&self.log_beta);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_free(), "flat parameter length");
        let (n, m) = (self.matern.len(), self.poly.len());
        for (i, c) in self.matern.iter_mut().enumerate() {
            c.log_sigma = flat[2 * i];
            c.log_ell = flat[2 * i + 1];
        }
        for (j, c) in self.poly.iter_mut().enumerate() {
            c.log_gamma = flat[2 * n + 2 * j];
            c.log_c = flat[2 * n + 2 * j + 1];
        }
        self.log_alpha.copy_from_slice(&flat[2 * (n + m)..2 * (n + m) + n]);
        self.log_beta.copy_from_slice(&flat[2 * (n + m) + n..]);
    }

    pub fn flat_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.num_free());
        for i in 0..self.matern.len() {
            out.push(format!("matern[{i}].log_sigma"));
            out.push(format!("matern[{i}].log_ell"));
        }
        for j in 0..self.poly.len() {
            out.push(format!("poly[{j}].log_gamma"));
            out.push(format!("poly[{j}].log_c"));
        }
        out.extend((0..self.matern.len()).map(|i| format!("log_alpha[{i}]")));
        out.extend((0..self.poly.len()).map(|j| format!("log_beta[{j}]")));
        out
    }
}

#[derive(Debug, Clone)]
struct PreparedMatern {
    /// α σ²
    amplitude: f64,
    /// √(2ν)/ℓ
    rate: f64,
    /// Correlation is `e^{-z} Σ value[k] z^k` ...
    value: Vec<f64>,
    /// ... and its `∂/∂log ℓ` is `z e^{-z} Σ slope[k] z^k`.
    slope: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct PreparedPoly {
    degree: i32,
    beta: f64,
    gamma: f64,
    c: f64,
}

impl PreparedMatern {
    fn new(comp: &MaternComponent, log_alpha: f64) -> Self {
        // ν = p + 1/2; coefficients from c_0 = 1 and
        // c_{k+1}/c_k = 2(p−k)/((2p−k)(k+1)).
        let p = (comp.nu - 0.5).round() as usize;
        let mut value = vec![1.0; p + 1];
        for k in 0..p {
            value[k + 1] = value[k] * 2.0 * (p - k) as f64 / ((2 * p - k) as f64 * (k + 1) as f64);
        }
        // P − P′, so that d/dz (e^{-z} P) = −e^{-z} (P − P′) and dz/dlog ℓ = −z.
        let slope = (0..=p)
            .map(|k| value[k] - if k < p { (k + 1) as f64 * value[k + 1] } else { 0.0 })
            .collect();
        PreparedMatern {
            amplitude: (log_alpha + 2.0 * comp.log_sigma).exp(),
            rate: (2.0 * comp.nu).sqrt() / comp.log_ell.exp(),
            value,
            slope,
        }
    }

    /// Unit-amplitude correlation and `∂/∂log ℓ` of it.
    #[inline]
    fn correlation(&self, r: f64) -> (f64, f64) {
        if r < MATERN_ZERO_RADIUS {
            return (1.0, 0.0);
        }
        let z = self.rate * r;
        let e = (-z).exp();
        let horner = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &v| acc * z + v);
        (e * horner(&self.value), z * e * horner(&self.slope))
    }
}

impl PreparedPoly {
    fn new(comp: &PolyComponent, log_beta: f64) -> Self {
        PreparedPoly {
            degree: comp.degree as i32,
            beta: log_beta.exp(),
            gamma: comp.log_gamma.exp(),
            c: comp.log_c.exp(),
        }
    }
}

/// Kernel parameters with exponentials and normalising constants evaluated
/// once. Every kernel value in the crate goes through [`PreparedKernel::eval`]
/// so that `k(a, b)` and `k(b, a)` are the same computation.
#[derive(Debug, Clone)]
pub struct PreparedKernel {
    matern: Vec<PreparedMatern>,
    poly: Vec<PreparedPoly>,
    jitter: f64,
}

/// Inner product and Euclidean distance of a pair. Both are computed
/// elementwise, so swapping the arguments gives bitwise identical results.
#[inline]
pub fn pair_geometry(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut dot = 0.0;
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        let d = x - y;
        sq += d * d;
    }
    (dot, sq.sqrt())
}

impl PreparedKernel {
    pub fn new(params: &KernelParams) -> Result<Self> {
        params.validate()?;
        Ok(PreparedKernel {
            matern: params
                .matern
                .iter()
                .zip(&params.log_alpha)
                .map(|(c, &a)| PreparedMatern::new(c, a))
                .collect(),
            poly: params
                .poly
                .iter()
                .zip(&params.log_beta)
                .map(|(c, &b)| PreparedPoly::new(c, b))
                .collect(),
            jitter: params.jitter,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn num_free(&self) -> usize {
        3 * (self.matern.len() + self.poly.len())
    }

    /// Kernel value from the pair geometry (no jitter).
    #[inline]
    pub fn eval(&self, dot: f64, r: f64) -> f64 {
        let mut k = 0.0;
        for m in &self.matern {
            k += m.amplitude * m.correlation(r).0;
        }
        for p in &self.poly {
            k += p.beta * (p.gamma * dot + p.c).powi(p.degree);
        }
        k
    }

    pub fn eval_vectors(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dims(a, b)?;
        let (dot, r) = pair_geometry(a, b);
        Ok(self.eval(dot, r))
    }

    /// Kernel value plus its derivative with respect to every flat
    /// parameter (layout of [`KernelParams::to_flat`]) written into `grad`.
    #[inline]
    pub fn eval_with_grad(&self, dot: f64, r: f64, grad: &mut [f64]) -> f64 {
        let n = self.matern.len();
        let m = self.poly.len();
        let weights = 2 * (n + m);
        let mut k = 0.0;
        for (i, c) in self.matern.iter().enumerate() {
            let (corr, d_log_ell) = c.correlation(r);
            let v = c.amplitude * corr;
            k += v;
            grad[2 * i] = 2.0 * v;
            grad[2 * i + 1] = c.amplitude * d_log_ell;
            grad[weights + i] = v;
        }
        for (j, p) in self.poly.iter().enumerate() {
            let base = p.gamma * dot + p.c;
            let lower = p.beta * base.powi(p.degree - 1);
            let v = lower * base;
            k += v;
            let slope = p.degree as f64 * lower;
            grad[2 * n + 2 * j] = slope * p.gamma * dot;
            grad[2 * n + 2 * j + 1] = slope * p.c;
            grad[weights + n + j] = v;
        }
        k
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// σ² · 2^{1-ν}/Γ(ν) · z^ν K_ν(z) with z = √(2ν) r/ℓ; σ² at r = 0.
pub fn matern_eval(comp: &MaternComponent, r: f64) -> Result<f64> {
    comp.validate()?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("distance must be finite and >= 0, got {r}")));
    }
    let m = PreparedMatern::new(comp, 0.0);
    Ok(m.amplitude * m.correlation(r).0)
}

/// (γ·dot + c)^d
pub fn poly_eval(comp: &PolyComponent, dot: f64) -> Result<f64> {
    comp.validate()?;
    let p = PreparedPoly::new(comp, 0.0);
    Ok((p.gamma * dot + p.c).powi(p.degree))
}

pub fn mk_eval(params: &KernelParams, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    PreparedKernel::new(params)?.eval_vectors(a, b)
}

/// Pairwise inner products and distances of the rows, symmetric by
/// construction.
pub struct PairGeometry {
    pub dot: DMatrix<f64>,
    pub dist: DMatrix<f64>,
}

impl PairGeometry {
    pub fn new<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Shape("Gram matrix of an empty set".into()));
        }
        let d = rows[0].as_ref().len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.as_ref().len() != d) {
            return Err(Error::Shape(format!("row {i} has dimension {}, expected {d}", r.as_ref().len())));
        }
        let mut dot = DMatrix::zeros(n, n);
        let mut dist = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let (p, r) = pair_geometry(rows[i].as_ref(), rows[j].as_ref());
                dot[(i, j)] = p;
                dot[(j, i)] = p;
                dist[(i, j)] = r;
                dist[(j, i)] = r;
            }
        }
        Ok(PairGeometry { dot, dist })
    }

    pub fn len(&self) -> usize {
        self.dot.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gram matrix with `jitter` on the diagonal.
    pub fn gram(&self, kernel: &PreparedKernel, jitter: f64) -> DMatrix<f64> {
        let n = self.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = kernel.eval(self.dot[(i, j)], self.dist[(i, j)]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(j, j)] += jitter;
        }
        k
    }
}

/// K×K Gram matrix of the rows with the parameter jitter on the diagonal.
pub fn gram<R: AsRef<[f64]>>(params: &KernelParams, rows: &[R]) -> Result<DMatrix<f64>> {
    let kernel = PreparedKernel::new(params)?;
    let geometry = PairGeometry::new(rows)?;
    Ok(geometry.gram(&kernel, params.jitter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matern(nu: f64, sigma: f64, ell: f64) -> MaternComponent {
        MaternComponent {
            nu,
            log_sigma: sigma.ln(),
            log_ell: ell.ln(),
        }
    }

    fn poly(degree: u32, gamma: f64, c: f64) -> PolyComponent {
        PolyComponent {
            degree,
            log_gamma: gamma.ln(),
            log_c: c.ln(),
        }
    }

    fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn matern_examples() {
        assert_eq!(matern_eval(&matern(0.5, 1.0, 1.0), 0.0).unwrap(), 1.0);
        assert_relative_eq!(matern_eval(&matern(0.5, 1.0, 1.0), 1.0).unwrap(), (-1f64).exp(), max_relative = 1e-14);
        let s3 = 3f64.sqrt();
        assert_relative_eq!(
            matern_eval(&matern(1.5, 1.0, 1.0), 1.0).unwrap(),
            (1.0 + s3) * (-s3).exp(),
            max_relative = 1e-14
        );
        assert!((matern_eval(&matern(1.5, 1.0, 1.0), 1.0).unwrap() - 0.483_357_7).abs() < 1e-7);
        assert_relative_eq!(matern_eval(&matern(2.5, 3.0, 0.1), 0.0).unwrap(), 9.0, max_relative = 1e-15);
    }

    #[test]
    fn matern_five_halves_closed_form() {
        let c = matern(2.5, 1.3, 0.7);
        for &r in &[1e-6, 0.01, 0.5, 1.0, 3.0, 10.0] {
            let z = 5f64.sqrt() * r / 0.7;
            let expected = 1.69 * (1.0 + z + z * z / 3.0) * (-z).exp();
            assert_relative_eq!(matern_eval(&c, r).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn half_integer_form_matches_bessel_definition() {
        for p in 0..10 {
            let nu = p as f64 + 0.5;
            let c = matern(nu, 1.0, 1.0);
            let norm = 2f64.powf(1.0 - nu) / crate::special_fn::gamma(nu).unwrap();
            for &z in &[0.01, 0.3, 1.0, 2.5, 7.0, 20.0, 60.0] {
                let r = z / (2.0 * nu).sqrt();
                let expected = norm * z.powf(nu) * crate::special_fn::bessel_k_half_integer(nu, z).unwrap();
                assert_relative_eq!(matern_eval(&c, r).unwrap(), expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn matern_is_decreasing_and_underflows_to_zero() {
        let c = matern(1.5, 1.0, 0.5);
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = matern_eval(&c, i as f64 * 0.05).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert_eq!(matern_eval(&c, 1e4).unwrap(), 0.0);
    }

    #[test]
    fn matern_rejects_bad_orders_and_distances() {
        assert!(matern_eval(&matern(1.0, 1.0, 1.0), 1.0).is_err());
        assert!(matern_eval(&matern(0.3, 1.0, 1.0), 1.0).is_err());
        assert!(matern_eval(&matern(0.5, 1.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn poly_examples() {
        assert_eq!(poly_eval(&poly(1, 1.0, 1.0), 0.0).unwrap(), 1.0);
        assert_relative_eq!(poly_eval(&poly(2, 2.0, 1.0), 0.5).unwrap(), 4.0, max_relative = 1e-15);
        assert_relative_eq!(poly_eval(&poly(1, 1.0, 1.0), 0.5).unwrap(), 1.5, max_relative = 1e-15);
        assert!(poly_eval(&poly(0, 1.0, 1.0), 0.5).is_err());
    }

    fn params(matern: Vec<MaternComponent>, poly: Vec<PolyComponent>, alpha: Vec<f64>, beta: Vec<f64>) -> KernelParams {
        KernelParams {
            version: PARAMS_VERSION,
            matern,
            poly,
            log_alpha: alpha.into_iter().map(f64::ln).collect(),
            log_beta: beta.into_iter().map(f64::ln).collect(),
            jitter: 0.0,
        }
    }

    #[test]
    fn mk_eval_examples() {
        // exp(-800) underflows, so the polynomial weight is exactly zero.
        let mut p = params(vec![matern(0.5, 1.5, 1.0)], vec![poly(2, 1.0, 1.0)], vec![1.0], vec![1.0]);
        p.log_beta[0] = -800.0;
        let x = [0.6, 0.8];
        assert_relative_eq!(mk_eval(&p, &x, &x).unwrap(), 2.25, max_relative = 1e-15);

        // Two components valued 0.4 and 0.8, weights 1/2.
        let ell = -1.0 / 0.4f64.ln();
        let p = params(
            vec![matern(0.5, 1.0, ell)],
            vec![poly(1, 1.0, 0.8)],
            vec![0.5],
            vec![0.5],
        );
        assert_relative_eq!(mk_eval(&p, &[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.6, max_relative = 1e-14);
        assert!(matches!(mk_eval(&p, &[1.0], &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    /// Independent 18-term summation with the textbook closed forms.
    #[test]
    fn default_spec_matches_scalar_oracle() {
        let p = KernelSpec::default().init_params().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = unit_vector(&mut rng, 16);
            let b = unit_vector(&mut rng, 16);
            let r = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let mut oracle = 0.0;
            for n in 0..9 {
                let ell = [0.5, 1.0, 2.0][n / 3];
                let z = (2.0 * [0.5, 1.5, 2.5][n % 3] as f64).sqrt() * r / ell;
                let corr = match n % 3 {
                    0 => (-z).exp(),
                    1 => (1.0 + z) * (-z).exp(),
                    _ => (1.0 + z + z * z / 3.0) * (-z).exp(),
                };
                oracle += corr / 18.0;
            }
            for d in 1..=9 {
                oracle += (dot + 1.0).powi(d) / 18.0;
            }
            assert_relative_eq!(mk_eval(&p, &a, &b).unwrap(), oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn gram_examples() {
        let mut p = KernelSpec::default().init_params().unwrap();
        p.jitter = 1e-3;
        let x = vec![vec![0.6, 0.8]];
        let g = gram(&p, &x).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_eq!(g[(0, 0)], mk_eval(&p, &x[0], &x[0]).unwrap() + 1e-3);

        let rows = vec![vec![0.6, 0.8], vec![0.6, 0.8], vec![1.0, 0.0]];
        let g = gram(&p, &rows).unwrap();
        assert_eq!(g[(0, 2)], g[(1, 2)]);
        assert_eq!(g[(0, 1)] + 1e-3, g[(0, 0)]);
        assert_eq!(g[(0, 0)], g[(1, 1)]);
        assert!(matches!(gram::<Vec<f64>>(&p, &[]), Err(Error::Shape(_))));
        assert!(matches!(gram(&p, &[vec![1.0], vec![1.0, 0.0]]), Err(Error::Shape(_))));
    }

    #[test]
    fn gram_is_symmetric_and_psd() {
        let p = KernelSpec::default().init_params().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| unit_vector(&mut rng, 8)).collect();
        let g = gram(&p, &rows).unwrap();
        assert_eq!(g, g.transpose());
        let eig = g.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-8, "min eigenvalue {}", eig.min());
    }

    #[test]
    fn stationary_part_is_translation_invariant() {
        let mut p = KernelSpec::new(9, 0).init_params().unwrap();
        p.log_alpha = vec![0.3; 9];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = unit_vector(&mut rng, 6);
            let b = unit_vector(&mut rng, 6);
            let t: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let at: Vec<f64> = a.iter().zip(&t).map(|(x, y)| x + y).collect();
            let bt: Vec<f64> = b.iter().zip(&t).map(|(x, y)| x + y).collect();
            let k0 = mk_eval(&p, &a, &b).unwrap();
            let k1 = mk_eval(&p, &at, &bt).unwrap();
            assert!((k0 - k1).abs() < 1e-12, "{k0} vs {k1}");
        }
    }

    #[test]
    fn flat_round_trip_and_names() {
        let mut p = KernelSpec::new(2, 3).init_params().unwrap();
        let flat: Vec<f64> = (0..p.num_free()).map(|i| i as f64 / 10.0).collect();
        p.set_flat(&flat);
        assert_eq!(p.to_flat(), flat);
        assert_eq!(p.matern[1].log_ell, 0.3);
        assert_eq!(p.poly[0].log_gamma, 0.4);
        assert_eq!(p.log_beta[2], 1.4);
        let names = p.flat_names();
        assert_eq!(names[3], "matern[1].log_ell");
        assert_eq!(names[14], "log_beta[2]");
    }

    #[test]
    fn analytic_parameter_derivatives_match_finite_differences() {
        let mut p = KernelSpec::new(3, 3).init_params().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let flat: Vec<f64> = p.to_flat().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        p.set_flat(&flat);
        let (dot, r) = (0.3, 0.9);
        let mut grad = vec![0.0; p.num_free()];
        PreparedKernel::new(&p).unwrap().eval_with_grad(dot, r, &mut grad);
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut up = p.clone();
            let mut f = flat.clone();
            f[i] += h;
            up.set_flat(&f);
            let mut down = p.clone();
            f[i] -= 2.0 * h;
            down.set_flat(&f);
            let fd = (PreparedKernel::new(&up).unwrap().eval(dot, r) - PreparedKernel::new(&down).unwrap().eval(dot, r))
                / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn json_field_names() {
        let p = KernelSpec::new(1, 1).init_params().unwrap();
        let v = serde_json::to_value(&p).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["jitter", "log_alpha", "log_beta", "matern", "poly", "version"]);
        assert!(v["matern"][0].get("nu").is_some());
        assert!(v["poly"][0].get("degree").is_some());
        let back: KernelParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
