//! One-vs-rest Gaussian process classifiers with a shared multi-kernel prior,
//! trained by Adam on the Laplace approximation of the negative log marginal
//! likelihood.
//!
//! Each class `c` has a latent GP with constant mean `μ_c` and a Bernoulli
//! likelihood with logistic link. The mode is found by damped Newton in the
//! `a = K⁻¹(f − m)` parameterisation, using only factorisations of the
//! well-conditioned `B = I + W^{1/2} K W^{1/2}`. Gradients of the evidence
//! with respect to every log-parameter and mean are analytic, including the
//! implicit dependence of the mode on the hyperparameters.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_io::EmbeddedExample;
use crate::error::{Error, Result};
use crate::kernels::{KernelParams, KernelSpec, PairGeometry, PreparedKernel};
use crate::linalg::{Cholesky, NotPositiveDefinite};

/// Jitter is multiplied by 10 at most this many times per evaluation.
const MAX_JITTER_ESCALATIONS: usize = 3;
const MAX_STEP_HALVINGS: usize = 20;

/// Logistic function, stable for any finite input.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log σ(t)` for y = 1 and `log(1 − σ(t))` for y = 0.
fn log_bernoulli(y: f64, t: f64) -> f64 {
    if y > 0.5 {
        -softplus(-t)
    } else {
        -softplus(t)
    }
}

/// Posterior-mode latent values, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub f_hat: DMatrix<f64>,
}

/// Sum of Bernoulli log-likelihoods over classes and points.
///
/// `labels_onehot` is u×K with exactly one 1 per column.
pub fn bernoulli_loglik(labels_onehot: &DMatrix<f64>, f: &LatentState) -> Result<f64> {
    if labels_onehot.shape() != f.f_hat.shape() {
        return Err(Error::Shape(format!(
            "labels are {:?} but latent values are {:?}",
            labels_onehot.shape(),
            f.f_hat.shape()
        )));
    }
    for (i, col) in labels_onehot.column_iter().enumerate() {
        if col.iter().any(|&v| v != 0.0 && v != 1.0) || col.sum() != 1.0 {
            return Err(Error::Encoding(format!("column {i} is not one-hot")));
        }
    }
    Ok(labels_onehot
        .iter()
        .zip(f.f_hat.iter())
        .map(|(&y, &t)| log_bernoulli(y, t))
        .sum())
}

/// One-hot u×K encoding of integer labels.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(num_classes, labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::Encoding(format!("label {l} at position {i} >= {num_classes} classes")));
        }
        m[(l, i)] = 1.0;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Stop once `‖∇ log p(y|f) − K⁻¹(f − m)‖∞` falls below this.
    pub tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Laplace mode of one class.
#[derive(Debug, Clone)]
pub struct LaplaceMode {
    pub f_hat: DVector<f64>,
    /// `K⁻¹(f̂ − m)`, which equals `∇ log p(y|f̂)` at the mode.
    pub a: DVector<f64>,
    /// ½ log det(I + W^{1/2} K W^{1/2})
    pub logdet_term: f64,
    pub log_lik: f64,
    pub iterations: usize,
    pub residual: f64,
    sqrt_w: DVector<f64>,
    pi: DVector<f64>,
    chol_b: Cholesky,
}

impl LaplaceMode {
    /// This class's contribution to the negative log evidence.
    pub fn nll(&self, mu: f64) -> f64 {
        let centred = self.f_hat.add_scalar(-mu);
        -self.log_lik + 0.5 * self.a.dot(&centred) + self.logdet_term
    }
}

fn newton_objective(a: &DVector<f64>, f: &DVector<f64>, mu: f64, y: &[f64]) -> (f64, f64) {
    let log_lik: f64 = y.iter().zip(f.iter()).map(|(&y, &t)| log_bernoulli(y, t)).sum();
    let quad = a.iter().zip(f.iter()).map(|(a, f)| a * (f - mu)).sum::<f64>();
    (log_lik - 0.5 * quad, log_lik)
}

type NewtonOutcome = std::result::Result<LaplaceMode, NotPositiveDefinite>;

fn newton(k: &DMatrix<f64>, mu: f64, y: &[f64], start: Option<&DVector<f64>>, cfg: &NewtonConfig) -> Result<NewtonOutcome> {
    let n = y.len();
    let mut a = start.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut f = (k * &a).add_scalar(mu);
    let (mut psi, mut log_lik) = newton_objective(&a, &f, mu, y);
    let mut residual = f64::INFINITY;
    for iter in 0..=cfg.max_iters {
        let pi = f.map(sigmoid);
        let grad = DVector::from_iterator(n, y.iter().zip(pi.iter()).map(|(y, p)| y - p));
        residual = (&grad - &a).amax();
        let w = pi.map(|p| p * (1.0 - p));
        let sqrt_w = w.map(f64::sqrt);
        let mut b = DMatrix::from_fn(n, n, |i, j| sqrt_w[i] * k[(i, j)] * sqrt_w[j]);
        for i in 0..n {
            b[(i, i)] += 1.0;
        }
        let chol_b = match Cholesky::new(b) {
            Ok(c) => c,
            Err(e) => return Ok(Err(e)),
        };
        if !residual.is_finite() {
            return Err(Error::Numerical("non-finite Newton residual".into()));
        }
        // b = W(f − m) + ∇ log p;  a_new = b − W^{1/2} B⁻¹ W^{1/2} K b
        let rhs = DVector::from_fn(n, |i, _| w[i] * (f[i] - mu) + grad[i]);
        let kb = k * &rhs;
        let mut c = sqrt_w.component_mul(&kb);
        c = chol_b.solve(&c);
        let step = rhs - sqrt_w.component_mul(&c) - &a;
        let k_step = k * &step;
        // Predicted objective gain of the full step. With a large kernel a
        // small residual in a can still leave f far from the mode, so both
        // have to be small.
        let gain = 0.5 * (&grad - &a).dot(&k_step);
        if residual < cfg.tol && gain < cfg.tol {
            return Ok(Ok(LaplaceMode {
                logdet_term: chol_b.half_log_det(),
                f_hat: f,
                a,
                log_lik,
                iterations: iter,
                residual,
                sqrt_w,
                pi,
                chol_b,
            }));
        }
        if iter == cfg.max_iters {
            break;
        }

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_STEP_HALVINGS {
            let cand = &a + &step * scale;
            let f_cand = &f + &k_step * scale;
            let (psi_cand, ll_cand) = newton_objective(&cand, &f_cand, mu, y);
            if psi_cand.is_finite() && psi_cand >= psi - 1e-12 * psi.abs().max(1.0) {
                a = cand;
                f = f_cand;
                psi = psi_cand;
                log_lik = ll_cand;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            debug!("Newton step rejected after {MAX_STEP_HALVINGS} halvings at iteration {iter}");
            break;
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_iters,
        residual,
    })
}

/// Mode of `log p(y|f) + log N(f; μ·1, K)` for one class.
///
/// `labels` are 0/1 targets; `k` must already contain any jitter.
pub fn laplace_posterior_mode(k: &DMatrix<f64>, mu: f64, labels: &[f64], cfg: &NewtonConfig) -> Result<LaplaceMode> {
    if k.nrows() != labels.len() || k.ncols() != labels.len() {
        return Err(Error::Shape(format!(
            "kernel is {:?} but there are {} labels",
            k.shape(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Encoding("class targets must be 0 or 1".into()));
    }
    newton(k, mu, labels, None, cfg)?.map_err(|e| {
        Error::Numerical(format!("B = I + W^(1/2) K W^(1/2) is not positive definite (pivot {})", e.pivot))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub newton_max_iters: usize,
    pub newton_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 500,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            newton_max_iters: 100,
            newton_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidParameter("Adam moments must lie in [0, 1) and eps > 0".into()));
        }
        if self.newton_max_iters == 0 || !(self.newton_tol > 0.0) {
            return Err(Error::InvalidParameter("Newton needs max_iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }

    fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            max_iters: self.newton_max_iters,
            tol: self.newton_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub seed: u64,
    pub learning_rate: f64,
}

/// The frozen artefact: kernel parameters, class means and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub params: KernelParams,
    pub mu: Vec<f64>,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub training_meta: TrainingMeta,
}

impl GpModel {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.num_classes < 2 {
            return Err(Error::InvalidParameter(format!("model needs >= 2 classes, has {}", self.num_classes)));
        }
        if self.mu.len() != self.num_classes || self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("class means must be finite, one per class".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<PreparedKernel> {
        PreparedKernel::new(&self.params)
    }
}

/// Negative log evidence, its gradient and the modes behind it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub nll: f64,
    /// Gradient in [`KernelParams::to_flat`] order.
    pub grad_kernel: Vec<f64>,
    pub grad_mu: Vec<f64>,
    pub latent: LatentState,
    /// Jitter actually used, after any escalation.
    pub jitter: f64,
}

/// Training-set state shared across evaluations: pair geometry, class
/// targets and the previous modes used as Newton warm starts.
pub struct Objective {
    geometry: PairGeometry,
    targets: Vec<Vec<f64>>,
    newton: NewtonConfig,
    warm: Vec<Option<DVector<f64>>>,
}

impl Objective {
    pub fn new<R: AsRef<[f64]>>(rows: &[R], labels: &[usize], num_classes: usize, newton: NewtonConfig) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let onehot = one_hot(labels, num_classes)?;
        let targets = (0..num_classes).map(|c| onehot.row(c).iter().copied().collect()).collect();
        Ok(Objective {
            geometry: PairGeometry::new(rows)?,
            targets,
            newton,
            warm: vec![None; num_classes],
        })
    }

    pub fn num_classes(&self) -> usize {
        self.targets.len()
    }

    /// Forgets the warm starts so the next evaluation starts Newton from f = m.
    pub fn reset(&mut self) {
        self.warm.iter_mut().for_each(|w| *w = None);
    }

    pub fn evaluate(&mut self, params: &KernelParams, mu: &[f64], with_grad: bool) -> Result<Evaluation> {
        if mu.len() != self.num_classes() {
            return Err(Error::Shape(format!("{} means for {} classes", mu.len(), self.num_classes())));
        }
        let kernel = PreparedKernel::new(params)?;
        let mut jitter = params.jitter;
        for attempt in 0..=MAX_JITTER_ESCALATIONS {
            let k = self.geometry.gram(&kernel, jitter);
            match self.modes(&k, mu)? {
                Ok(modes) => return Ok(self.assemble(&kernel, &k, mu, modes, jitter, with_grad)),
                Err(e) if attempt < MAX_JITTER_ESCALATIONS => {
                    let next = if jitter > 0.0 { jitter * 10.0 } else { 1e-10 };
                    warn!("Cholesky failed at pivot {}; raising jitter {jitter:e} -> {next:e}", e.pivot);
                    jitter = next;
                }
                Err(e) => {
                    return Err(Error::Numerical(format!(
                        "Cholesky failed at pivot {} after {MAX_JITTER_ESCALATIONS} jitter escalations (jitter {jitter:e})",
                        e.pivot
                    )))
                }
            }
        }
        unreachable!("escalation loop always returns")
    }

    fn modes(&mut self, k: &DMatrix<f64>, mu: &[f64]) -> Result<std::result::Result<Vec<LaplaceMode>, NotPositiveDefinite>> {
        let mut modes = Vec::with_capacity(self.num_classes());
        for c in 0..self.num_classes() {
            match newton(k, mu[c], &self.targets[c], self.warm[c].as_ref(), &self.newton)? {
                Ok(mode) => modes.push(mode),
                Err(e) => return Ok(Err(e)),
            }
        }
        for (w, m) in self.warm.iter_mut().zip(&modes) {
            *w = Some(m.a.clone());
        }
        Ok(Ok(modes))
    }

    fn assemble(
        &self,
        kernel: &PreparedKernel,
        k: &DMatrix<f64>,
        mu: &[f64],
        modes: Vec<LaplaceMode>,
        jitter: f64,
        with_grad: bool,
    ) -> Evaluation {
        let n = self.geometry.len();
        let nll = modes.iter().zip(mu).map(|(m, &mu)| m.nll(mu)).sum();
        let mut latent = DMatrix::zeros(self.num_classes(), n);
        for (c, m) in modes.iter().enumerate() {
            latent.row_mut(c).copy_from(&m.f_hat.transpose());
        }
        let mut eval = Evaluation {
            nll,
            grad_kernel: Vec::new(),
            grad_mu: Vec::new(),
            latent: LatentState { f_hat: latent },
            jitter,
        };
        if !with_grad {
            return eval;
        }

        // d log q / dθ = Σ_il (dK/dθ)_il G_il with
        //   G  = Σ_c ½aaᵀ − ½R + sym(t gᵀ),   R = W^{1/2} B⁻¹ W^{1/2},
        //   s2 = −½ diag((K⁻¹ + W)⁻¹) ∂W/∂f = −½ (1 − diag B⁻¹)(1 − 2π),
        //   t  = (I − RK) s2,  g = ∇log p(f̂) = a.
        // The mean enters through f̂ as well: d log q / dμ_c = Σa + Σt.
        let mut g_mat = DMatrix::<f64>::zeros(n, n);
        let mut grad_mu = Vec::with_capacity(modes.len());
        for m in &modes {
            let b_inv = m.chol_b.inverse();
            let sw = &m.sqrt_w;
            let s2 = DVector::from_fn(n, |i, _| -0.5 * (1.0 - b_inv[(i, i)]) * (1.0 - 2.0 * m.pi[i]));
            let ks2 = k * &s2;
            let r_ks2 = sw.component_mul(&(&b_inv * sw.component_mul(&ks2)));
            let t = &s2 - r_ks2;
            let g = &m.a;
            for l in 0..n {
                for i in l..n {
                    g_mat[(i, l)] += 0.5 * m.a[i] * m.a[l] - 0.5 * sw[i] * b_inv[(i, l)] * sw[l]
                        + 0.5 * (t[i] * g[l] + g[i] * t[l]);
                }
            }
            grad_mu.push(-(m.a.sum() + t.sum()));
        }

        let p = kernel.num_free();
        let mut grad = vec![0.0; p];
        let mut buf = vec![0.0; p];
        for l in 0..n {
            for i in l..n {
                let weight = if i == l { g_mat[(i, l)] } else { 2.0 * g_mat[(i, l)] };
                kernel.eval_with_grad(self.geometry.dot[(i, l)], self.geometry.dist[(i, l)], &mut buf);
                for (acc, d) in grad.iter_mut().zip(&buf) {
                    *acc -= weight * d;
                }
            }
        }
        eval.grad_kernel = grad;
        eval.grad_mu = grad_mu;
        eval
    }
}

/// Laplace-approximated negative log marginal likelihood of `model` on a
/// labelled set, starting Newton from f = m.
pub fn nll<R: AsRef<[f64]>>(model: &GpModel, rows: &[R], labels: &[usize]) -> Result<f64> {
    nll_with(model, rows, labels, NewtonConfig::default())
}

pub fn nll_with<R: AsRef<[f64]>>(model: &GpModel, rows: &[R], labels: &[usize], newton: NewtonConfig) -> Result<f64> {
    let mut obj = Objective::new(rows, labels, model.num_classes, newton)?;
    Ok(obj.evaluate(&model.params, &model.mu, false)?.nll)
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: GpModel,
    /// NLL at the start of every epoch, before that epoch's update.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = cfg.adam_beta1 * self.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            self.v[i] = cfg.adam_beta2 * self.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Trains kernel parameters and class means on a labelled dataset.
///
/// The number of classes is one more than the largest label; at least two
/// distinct labels must be present.
pub fn train(dataset: &[EmbeddedExample], spec: &KernelSpec, cfg: &TrainConfig) -> Result<TrainResult> {
    let rows: Vec<&[f64]> = dataset.iter().map(|e| e.embedding.as_slice()).collect();
    let labels: Vec<usize> = dataset.iter().map(|e| e.label).collect();
    train_rows(&rows, &labels, spec.init_params()?, cfg)
}

/// [`train`] on bare rows, starting from the given parameters.
pub fn train_rows<R: AsRef<[f64]>>(rows: &[R], labels: &[usize], init: KernelParams, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    init.validate()?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; num_classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Training("training needs at least two distinct classes".into()));
    }
    let embed_dim = rows[0].as_ref().len();
    let mut objective = Objective::new(rows, labels, num_classes, cfg.newton())?;

    let mut params = init;
    let mut mu = vec![0.0; num_classes];
    let kernel_len = params.num_free();
    let mut theta: Vec<f64> = params.to_flat().into_iter().chain(mu.iter().copied()).collect();
    let mut adam = Adam::new(theta.len());
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let eval = objective.evaluate(&params, &mu, true)?;
        let grad: Vec<f64> = eval.grad_kernel.iter().chain(&eval.grad_mu).copied().collect();
        if !eval.nll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let names = params.flat_names();
            let bad: Vec<String> = grad
                .iter()
                .enumerate()
                .filter(|(_, g)| !g.is_finite())
                .map(|(i, _)| names.get(i).cloned().unwrap_or_else(|| format!("mu[{}]", i - kernel_len)))
                .collect();
            return Err(Error::Training(format!(
                "epoch {epoch}: loss {} with non-finite gradient entries {bad:?}",
                eval.nll
            )));
        }
        trace.push(eval.nll);
        if epoch % 50 == 0 {
            info!("epoch {epoch}: nll {:.6}", eval.nll);
        }
        params.jitter = eval.jitter;
        adam.step(&mut theta, &grad, cfg);
        params.set_flat(&theta[..kernel_len]);
        mu.copy_from_slice(&theta[kernel_len..]);
    }

    let final_eval = objective.evaluate(&params, &mu, false)?;
    params.jitter = final_eval.jitter;
    Ok(TrainResult {
        model: GpModel {
            params,
            mu,
            num_classes,
            embed_dim,
            training_meta: TrainingMeta {
                epochs: cfg.epochs,
                final_loss: final_eval.nll,
                seed: cfg.seed,
                learning_rate: cfg.learning_rate,
            },
        },
        loss_trace: trace,
    })
}

/// Laplace posterior of a frozen model on a labelled set, for class scores.
///
/// This is a diagnostic: the retrieval pipeline only uses the kernel.
pub struct PosteriorScores {
    kernel: PreparedKernel,
    rows: Vec<Vec<f64>>,
    mu: Vec<f64>,
    a: Vec<DVector<f64>>,
}

impl PosteriorScores {
    pub fn fit<R: AsRef<[f64]>>(model: &GpModel, rows: &[R], labels: &[usize]) -> Result<Self> {
        let kernel = model.kernel()?;
        let mut obj = Objective::new(rows, labels, model.num_classes, NewtonConfig::default())?;
        obj.evaluate(&model.params, &model.mu, false)?;
        Ok(PosteriorScores {
            kernel,
            rows: rows.iter().map(|r| r.as_ref().to_vec()).collect(),
            mu: model.mu.clone(),
            a: obj.warm.into_iter().map(|w| w.expect("evaluated")).collect(),
        })
    }

    /// σ(μ_c + k_*ᵀ a_c) for every class.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let kx: Vec<f64> = self
            .rows
            .iter()
            .map(|r| self.kernel.eval_vectors(x, r))
            .collect::<Result<_>>()?;
        Ok(self
            .a
            .iter()
            .zip(&self.mu)
            .map(|(a, mu)| sigmoid(mu + a.iter().zip(&kx).map(|(a, k)| a * k).sum::<f64>()))
            .collect())
    }
}
