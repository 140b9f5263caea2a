//! Task-aware semantic similarity from a multi-kernel Gaussian process.
//!
//! A weighted mixture of Matérn and polynomial kernels is fitted to labelled
//! sentence embeddings by minimising a Laplace-approximated negative log
//! marginal likelihood of one-vs-rest Bernoulli Gaussian process classifiers.
//! The frozen kernel then serves as a similarity score for selecting
//! in-context demonstrations, next to Random, BM25 and cosine baselines.
//!
//! Module map:
//!
//! * [`special_fn`]: Gamma and modified Bessel functions.
//! * [`kernels`]: Matérn / polynomial components and Gram assembly.
//! * [`gp_train`]: Laplace evidence, analytic gradients and Adam training.
//! * [`metric`]: kernel similarity, induced distance and top-S retrieval.
//! * [`coreset`]: balanced importance-weighted coreset.
//! * [`baselines`]: Random, BM25 and cosine selectors.
//! * [`icl`]: prompt templates, LLM clients, label parsing and evaluation.
//! * [`data_io`]: dataset ingestion and model persistence.

pub mod baselines;
pub mod coreset;
pub mod data_io;
pub mod error;
pub mod gp_train;
pub mod icl;
pub mod kernels;
pub mod linalg;
pub mod metric;
pub mod seed;
pub mod special_fn;

pub use data_io::{DatasetManifest, EmbeddedExample};
pub use error::{Error, ErrorKind, Result};
pub use gp_train::{GpModel, TrainConfig};
pub use kernels::{KernelParams, KernelSpec};
