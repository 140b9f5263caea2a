//! Command-line options and the TOML config file.
//!
//! Every option is optional on both sides; a value given as a flag wins over
//! the config file, which wins over the built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::UsageError;

/// `self.field = self.field.or(other.field)` for each listed field.
macro_rules! overlay {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn overlay(self, file: Option<$ty>) -> $ty {
                match file {
                    None => self,
                    Some(file) => $ty {
                        $($field: self.$field.or(file.$field),)*
                    },
                }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataArgs {
    /// JSON-lines dataset file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Manifest describing the dataset file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Size of the annotated pool sampled from the dataset [default: 1000,
    /// or the whole dataset if smaller].
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Separate JSON-lines file of queries (default: dataset rows outside
    /// the pool).
    #[arg(long, requires = "queries_manifest")]
    pub queries: Option<PathBuf>,
    #[arg(long, requires = "queries")]
    pub queries_manifest: Option<PathBuf>,
    /// Cap on the number of queries, sampled with the run seed.
    #[arg(long)]
    pub max_queries: Option<usize>,
}

overlay!(DataArgs {
    data,
    manifest,
    pool_size,
    queries,
    queries_manifest,
    max_queries
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelArgs {
    /// Number of Matérn components N [default: 9].
    #[arg(long)]
    pub num_matern: Option<usize>,
    /// Number of polynomial components M [default: 9].
    #[arg(long)]
    pub num_poly: Option<usize>,
    /// Diagonal jitter [default: 1e-6].
    #[arg(long)]
    pub jitter: Option<f64>,
}

overlay!(KernelArgs {
    num_matern,
    num_poly,
    jitter
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Adam learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training epochs [default: 500].
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub newton_max_iters: Option<usize>,
}

overlay!(TrainArgs {
    lr,
    epochs,
    newton_tol,
    newton_max_iters
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Random,
    Bm25,
    Cosine,
    Mkgp,
}

impl From<StrategyArg> for mkgp::icl::Strategy {
    fn from(s: StrategyArg) -> Self {
        use mkgp::icl::Strategy;
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Bm25 => Strategy::Bm25,
            StrategyArg::Cosine => Strategy::Cosine,
            StrategyArg::Mkgp => Strategy::Mkgp,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    /// Demonstrations per prompt S [default: 10].
    #[arg(long)]
    pub shots: Option<usize>,
    /// Per-class coreset cap λ_B [default: 100].
    #[arg(long)]
    pub lambda_b: Option<usize>,
    /// BM25 term-frequency saturation [default: 1.5].
    #[arg(long)]
    pub bm25_k1: Option<f64>,
    /// BM25 length normalisation [default: 0.75].
    #[arg(long)]
    pub bm25_b: Option<f64>,
}

overlay!(SelectArgs {
    shots,
    lambda_b,
    bm25_k1,
    bm25_b
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClientKind {
    /// OpenAI-compatible chat-completions endpoint.
    Http,
    /// Offline stand-in: echoes the first demonstration's label, or writes
    /// one template description per label for rationale prompts.
    Mock,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientArgs {
    /// Backend for rationale generation [default: http].
    #[arg(long, value_enum)]
    pub rationale_client: Option<ClientKind>,
    /// Backend for in-context classification [default: http].
    #[arg(long, value_enum)]
    pub icl_client: Option<ClientKind>,
    #[arg(long)]
    pub rationale_model: Option<String>,
    #[arg(long)]
    pub icl_model: Option<String>,
    /// Base URL of the chat-completions API [default: https://api.openai.com/v1].
    #[arg(long)]
    pub base_url: Option<String>,
    /// Environment variable holding the API key [default: OPENAI_API_KEY].
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Concurrent classification requests [default: 4].
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Serve every completion from this recorded log instead of a backend.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Phrase for the prompt's target slot [default: from the manifest].
    #[arg(long)]
    pub target: Option<String>,
}

overlay!(ClientArgs {
    rationale_client,
    icl_client,
    rationale_model,
    icl_model,
    base_url,
    api_key_env,
    timeout_secs,
    max_attempts,
    max_tokens,
    parallelism,
    replay,
    target
});

/// Contents of `--config FILE`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub strategy: Option<Vec<StrategyArg>>,
    pub data: Option<DataArgs>,
    pub kernel: Option<KernelArgs>,
    pub train: Option<TrainArgs>,
    pub select: Option<SelectArgs>,
    pub client: Option<ClientArgs>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }
}
