//! Kernel similarity, the induced Hilbert-space distance, and exact top-S
//! retrieval over a fixed corpus.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data_io::EmbeddedExample;
use crate::error::{Error, Result};
use crate::gp_train::GpModel;
use crate::kernels::PreparedKernel;

fn check_dim(model: &GpModel, x: &[f64]) -> Result<()> {
    if x.len() != model.embed_dim {
        return Err(Error::Shape(format!(
            "vector has dimension {} but the model expects {}",
            x.len(),
            model.embed_dim
        )));
    }
    Ok(())
}

/// k(a, b) under the frozen model.
pub fn similarity(model: &GpModel, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(model, a)?;
    check_dim(model, b)?;
    model.kernel()?.eval_vectors(a, b)
}

/// k(a,a) + k(b,b) − 2k(a,b), clamped at 0 against rounding.
pub fn squared_distance(model: &GpModel, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(model, a)?;
    check_dim(model, b)?;
    let kernel = model.kernel()?;
    Ok(induced_squared_distance(&kernel, a, b))
}

/// [`squared_distance`] with a prepared kernel; dimensions are not checked.
pub fn induced_squared_distance(kernel: &PreparedKernel, a: &[f64], b: &[f64]) -> f64 {
    let kaa = kernel.eval_vectors(a, a).unwrap_or(f64::NAN);
    let kbb = kernel.eval_vectors(b, b).unwrap_or(f64::NAN);
    let kab = kernel.eval_vectors(a, b).unwrap_or(f64::NAN);
    ((kaa + kbb) - 2.0 * kab).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    pub score: f64,
}

/// Score descending, then id ascending.
pub fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// The `s` best entries under [`rank_order`], best first.
pub fn top_s_of(mut candidates: Vec<Neighbor>, s: usize) -> Result<Vec<Neighbor>> {
    if s == 0 || s > candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "S must lie in 1..={}, got {s}",
            candidates.len()
        )));
    }
    if s < candidates.len() {
        candidates.select_nth_unstable_by(s - 1, rank_order);
        candidates.truncate(s);
    }
    candidates.sort_by(rank_order);
    Ok(candidates)
}

/// A frozen model over a fixed candidate corpus.
pub struct SimilarityIndex {
    model: GpModel,
    kernel: PreparedKernel,
    corpus: Vec<EmbeddedExample>,
}

impl SimilarityIndex {
    pub fn new(model: GpModel, corpus: Vec<EmbeddedExample>) -> Result<Self> {
        model.validate()?;
        if corpus.is_empty() {
            return Err(Error::Shape("similarity index over an empty corpus".into()));
        }
        for ex in &corpus {
            check_dim(&model, &ex.embedding)?;
        }
        let kernel = model.kernel()?;
        Ok(SimilarityIndex { model, kernel, corpus })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn corpus(&self) -> &[EmbeddedExample] {
        &self.corpus
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    /// k(x0, x_i) for every corpus item, in corpus order.
    pub fn scores(&self, x0: &[f64]) -> Result<Vec<Neighbor>> {
        check_dim(&self.model, x0)?;
        self.corpus
            .iter()
            .map(|ex| {
                Ok(Neighbor {
                    id: ex.id,
                    score: self.kernel.eval_vectors(x0, &ex.embedding)?,
                })
            })
            .collect()
    }

    pub fn top_s(&self, x0: &[f64], s: usize) -> Result<Vec<Neighbor>> {
        top_s_of(self.scores(x0)?, s)
    }

    /// (min, max) of k(x, x) over the corpus. Equal values make similarity
    /// and induced-distance rankings coincide.
    pub fn self_kernel_range(&self) -> (f64, f64) {
        self.corpus.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), ex| {
            let v = self.kernel.eval_vectors(&ex.embedding, &ex.embedding).unwrap_or(f64::NAN);
            (lo.min(v), hi.max(v))
        })
    }
}
