//! End-to-end evaluation: coreset, rationales, retrieval, prompting,
//! completion, parsing and per-strategy aggregation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{CompletionRequest, GenerationSettings, LlmClient};
use super::eval::{PredictionRecord, StrategyReport};
use super::parse::{parse_label, ParsedLabel};
use super::prompt::{render_icl_prompt, render_rationale_prompt, IclInputs, Rationales, Shot, DEFAULT_TARGET};
use crate::baselines::{cosine_scores, random_scores, Bm25Index, Bm25Params};
use crate::coreset::{build_coreset, CoresetConfig};
use crate::data_io::EmbeddedExample;
use crate::error::{Error, Result};
use crate::gp_train::GpModel;
use crate::kernels::KernelSpec;
use crate::metric::{top_s_of, Neighbor, SimilarityIndex};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Bm25,
    Cosine,
    Mkgp,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Random, Strategy::Bm25, Strategy::Cosine, Strategy::Mkgp];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Bm25 => "bm25",
            Strategy::Cosine => "cosine",
            Strategy::Mkgp => "mkgp",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown strategy '{s}' (expected random, bm25, cosine or mkgp)"))
    }
}

/// All four selectors over one candidate pool.
pub struct Retriever<'a> {
    candidates: &'a [EmbeddedExample],
    ids: Vec<u64>,
    bm25: Bm25Index,
    mkgp: Option<SimilarityIndex>,
    seed: u64,
}

impl<'a> Retriever<'a> {
    /// `model` is required only for [`Strategy::Mkgp`].
    pub fn new(candidates: &'a [EmbeddedExample], model: Option<&GpModel>, bm25: Bm25Params, seed: u64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("retrieval needs a non-empty candidate pool".into()));
        }
        let ids: Vec<u64> = candidates.iter().map(|e| e.id).collect();
        let texts: Vec<&str> = candidates.iter().map(|e| e.text.as_str()).collect();
        let mkgp = model
            .map(|m| SimilarityIndex::new(m.clone(), candidates.to_vec()))
            .transpose()?;
        Ok(Retriever {
            candidates,
            bm25: Bm25Index::new(&ids, &texts, bm25)?,
            ids,
            mkgp,
            seed,
        })
    }

    pub fn candidates(&self) -> &[EmbeddedExample] {
        self.candidates
    }

    pub fn retrieve(&self, strategy: Strategy, query: &EmbeddedExample, s: usize) -> Result<Vec<Neighbor>> {
        let scores = match strategy {
            Strategy::Random => random_scores(&self.ids, seed::derive_indexed(self.seed, "random-retrieval", query.id)),
            Strategy::Bm25 => self.bm25.scores(&query.text),
            Strategy::Cosine => {
                let emb: Vec<&[f64]> = self.candidates.iter().map(|e| e.embedding.as_slice()).collect();
                cosine_scores(&self.ids, &emb, &query.embedding)?
            }
            Strategy::Mkgp => self
                .mkgp
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("mkgp retrieval needs a trained model".into()))?
                .scores(&query.embedding)?,
        };
        top_s_of(scores, s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Demonstrations per prompt.
    pub shots: usize,
    pub strategies: Vec<Strategy>,
    pub coreset: CoresetConfig,
    pub bm25: Bm25Params,
    pub seed: u64,
    /// Maximum concurrent ICL requests.
    pub parallelism: usize,
    pub target: String,
    pub rationale_settings: GenerationSettings,
    pub icl_settings: GenerationSettings,
    /// Rationales are read from here when present and written otherwise.
    pub rationale_cache: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            shots: 10,
            strategies: Strategy::ALL.to_vec(),
            coreset: CoresetConfig::default(),
            bm25: Bm25Params::default(),
            seed: 0,
            parallelism: 4,
            target: DEFAULT_TARGET.to_string(),
            rationale_settings: GenerationSettings::default(),
            icl_settings: GenerationSettings::default(),
            rationale_cache: None,
        }
    }
}

pub struct Clients<'a> {
    pub rationale: &'a dyn LlmClient,
    pub icl: &'a dyn LlmClient,
}

pub struct PipelineInputs<'a> {
    pub candidates: &'a [EmbeddedExample],
    pub queries: &'a [EmbeddedExample],
    pub label_list: &'a [String],
    pub model: Option<&'a GpModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub rationales: Rationales,
    pub coreset_ids: Vec<u64>,
    pub reports: Vec<StrategyReport>,
    pub records: Vec<(Strategy, Vec<PredictionRecord>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RationaleCache {
    request_hash: String,
    model: String,
    text: String,
}

fn shot<'a>(ex: &'a EmbeddedExample, label_list: &'a [String]) -> Shot<'a> {
    Shot {
        id: ex.id,
        text: &ex.text,
        label: &label_list[ex.label],
    }
}

/// Builds the coreset, then obtains rationales from the cache or the client.
pub fn generate_rationales(
    candidates: &[EmbeddedExample],
    label_list: &[String],
    client: &dyn LlmClient,
    cfg: &PipelineConfig,
) -> Result<(Rationales, Vec<u64>)> {
    let coreset = build_coreset(candidates, &cfg.coreset)?;
    let shots: Vec<Shot> = coreset.members.iter().map(|e| shot(e, label_list)).collect();
    let prompt = render_rationale_prompt(&shots, label_list)?;
    let request = CompletionRequest::new(client.model(), prompt.text, cfg.rationale_settings.clone());
    let hash = request.hash();

    if let Some(path) = &cfg.rationale_cache {
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let cached: RationaleCache = serde_json::from_str(&text)?;
            if cached.request_hash == hash {
                info!("using cached rationales from {}", path.display());
                return Ok((Rationales::new(cached.text)?, prompt.source_ids));
            }
            warn!("rationale cache {} was built from a different prompt; regenerating", path.display());
        }
    }

    let text = client.complete(&request)?;
    let rationales = Rationales::new(text)?;
    let missing = rationales.missing_labels(label_list);
    if !missing.is_empty() {
        warn!("rationales do not start a line with labels {missing:?}");
    }
    if let Some(path) = &cfg.rationale_cache {
        let cache = RationaleCache {
            request_hash: hash,
            model: client.model().to_string(),
            text: rationales.text.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&cache)? + "\n").map_err(|e| Error::io(path, e))?;
    }
    Ok((rationales, prompt.source_ids))
}

fn classify(
    retriever: &Retriever<'_>,
    strategy: Strategy,
    query: &EmbeddedExample,
    inputs: &PipelineInputs<'_>,
    rationales: &Rationales,
    client: &dyn LlmClient,
    cfg: &PipelineConfig,
) -> Result<PredictionRecord> {
    let neighbors = retriever.retrieve(strategy, query, cfg.shots)?;
    let by_id: std::collections::HashMap<u64, &EmbeddedExample> =
        inputs.candidates.iter().map(|e| (e.id, e)).collect();
    let demos: Vec<Shot> = neighbors.iter().map(|n| shot(by_id[&n.id], inputs.label_list)).collect();
    let prompt = render_icl_prompt(&IclInputs {
        query_id: query.id,
        query_text: &query.text,
        rationales,
        demonstrations: &demos,
        label_list: inputs.label_list,
        target: &cfg.target,
        expected_shots: cfg.shots,
    })?;
    let request = CompletionRequest::new(client.model(), prompt.text, cfg.icl_settings.clone());
    let (completion, parsed, client_error) = match client.complete(&request) {
        Ok(text) => {
            let parsed = parse_label(&text, inputs.label_list);
            (Some(text), parsed, None)
        }
        Err(e) => {
            warn!("query {} ({strategy}): {e}", query.id);
            (None, ParsedLabel::Failure, Some(e.to_string()))
        }
    };
    Ok(PredictionRecord {
        query_id: query.id,
        gold: query.label,
        completion,
        parsed,
        client_error,
        demonstration_ids: prompt.source_ids,
    })
}

/// Runs every configured strategy over the same queries.
///
/// Client failures on individual queries are recorded and counted as parse
/// failures; a failure to obtain rationales aborts the run.
pub fn run_pipeline(inputs: &PipelineInputs<'_>, clients: &Clients<'_>, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    if inputs.queries.is_empty() {
        return Err(Error::InvalidParameter("no queries to evaluate".into()));
    }
    if cfg.shots == 0 || cfg.shots > inputs.candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "S = {} must lie in 1..={}",
            cfg.shots,
            inputs.candidates.len()
        )));
    }
    let (rationales, coreset_ids) = generate_rationales(inputs.candidates, inputs.label_list, clients.rationale, cfg)?;
    let retriever = Retriever::new(inputs.candidates, inputs.model, cfg.bm25, cfg.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    let mut records = Vec::new();
    let mut reports = Vec::new();
    for &strategy in &cfg.strategies {
        let mut recs: Vec<PredictionRecord> = pool.install(|| {
            inputs
                .queries
                .par_iter()
                .map(|q| classify(&retriever, strategy, q, inputs, &rationales, clients.icl, cfg))
                .collect::<Result<_>>()
        })?;
        recs.sort_by_key(|r| r.query_id);
        let report = StrategyReport::from_records(strategy.name(), &recs, inputs.label_list)?;
        info!(
            "{strategy}: accuracy {:.4}, weighted F1 {:.4}, parse failures {:.4}",
            report.accuracy, report.weighted_f1, report.parse_failure_rate
        );
        reports.push(report);
        records.push((strategy, recs));
    }
    Ok(PipelineOutput {
        rationales,
        coreset_ids,
        reports,
        records,
    })
}

/// Kernel variants compared by the ablation: Matérn only, polynomial only,
/// and the full mixture, all sharing `base`'s component counts and jitter.
pub fn ablation_specs(base: &KernelSpec) -> Vec<(&'static str, KernelSpec)> {
    vec![
        (
            "matern_only",
            KernelSpec {
                num_poly: 0,
                ..*base
            },
        ),
        (
            "poly_only",
            KernelSpec {
                num_matern: 0,
                ..*base
            },
        ),
        ("combined", *base),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icl::client::{ClientError, EchoFirstDemonstration, FixedResponse, Recording, Replay, TemplateRationales};

    fn labels() -> Vec<String> {
        vec!["neg".into(), "pos".into()]
    }

    fn ex(id: u64, label: usize, text: &str, embedding: Vec<f64>) -> EmbeddedExample {
        EmbeddedExample {
            id,
            text: text.into(),
            label,
            embedding,
        }
    }

    fn fixture() -> (Vec<EmbeddedExample>, Vec<EmbeddedExample>) {
        let mut cands = Vec::new();
        for i in 0..6 {
            let t = i as f64 * 0.01;
            cands.push(ex(i, 0, "awful bad", vec![1.0, t]));
            cands.push(ex(100 + i, 1, "great good", vec![-1.0, t]));
        }
        let queries = vec![ex(1000, 0, "bad", vec![0.9, 0.0]), ex(1001, 1, "good", vec![-0.9, 0.1])];
        (cands, queries)
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("knn".parse::<Strategy>().is_err());
    }

    #[test]
    fn echo_mock_on_separable_fixture() {
        let (cands, queries) = fixture();
        let ls = labels();
        let inputs = PipelineInputs {
            candidates: &cands,
            queries: &queries,
            label_list: &ls,
            model: None,
        };
        let cfg = PipelineConfig {
            shots: 3,
            strategies: vec![Strategy::Cosine, Strategy::Bm25, Strategy::Random],
            ..PipelineConfig::default()
        };
        let clients = Clients {
            rationale: &TemplateRationales,
            icl: &EchoFirstDemonstration,
        };
        let out = run_pipeline(&inputs, &clients, &cfg).unwrap();
        assert_eq!(out.reports.len(), 3);
        assert_eq!(out.reports[0].accuracy, 1.0);
        assert_eq!(out.reports[1].accuracy, 1.0);
        assert!(out.rationales.missing_labels(&ls).is_empty());
        for (_, recs) in &out.records {
            assert_eq!(recs.iter().map(|r| r.query_id).collect::<Vec<_>>(), vec![1000, 1001]);
            assert!(recs.iter().all(|r| r.demonstration_ids.len() == 3));
        }
    }

    #[test]
    fn mkgp_needs_a_model() {
        let (cands, queries) = fixture();
        let ls = labels();
        let inputs = PipelineInputs {
            candidates: &cands,
            queries: &queries,
            label_list: &ls,
            model: None,
        };
        let cfg = PipelineConfig {
            shots: 2,
            strategies: vec![Strategy::Mkgp],
            ..PipelineConfig::default()
        };
        let clients = Clients {
            rationale: &TemplateRationales,
            icl: &EchoFirstDemonstration,
        };
        assert!(run_pipeline(&inputs, &clients, &cfg).is_err());
    }

    #[test]
    fn unparseable_completions_are_counted() {
        let (cands, queries) = fixture();
        let ls = labels();
        let inputs = PipelineInputs {
            candidates: &cands,
            queries: &queries,
            label_list: &ls,
            model: None,
        };
        let cfg = PipelineConfig {
            shots: 2,
            strategies: vec![Strategy::Cosine],
            ..PipelineConfig::default()
        };
        let fixed = FixedResponse { text: "no idea".into() };
        let clients = Clients {
            rationale: &TemplateRationales,
            icl: &fixed,
        };
        let out = run_pipeline(&inputs, &clients, &cfg).unwrap();
        assert_eq!(out.reports[0].parse_failure_rate, 1.0);
        assert_eq!(out.reports[0].accuracy, 0.0);
    }

    #[test]
    fn rationales_are_cached_and_replay_reproduces_report() {
        let dir = tempfile::tempdir().unwrap();
        let (cands, queries) = fixture();
        let ls = labels();
        let inputs = PipelineInputs {
            candidates: &cands,
            queries: &queries,
            label_list: &ls,
            model: None,
        };
        let cfg = PipelineConfig {
            shots: 3,
            strategies: vec![Strategy::Random, Strategy::Cosine],
            rationale_cache: Some(dir.path().join("rationales.json")),
            ..PipelineConfig::default()
        };
        let log = dir.path().join("llm.jsonl");
        let rationale = Recording::new(TemplateRationales, "rationale", &log).unwrap();
        let icl = Recording::new(EchoFirstDemonstration, "icl", &log).unwrap();
        let first = run_pipeline(
            &inputs,
            &Clients {
                rationale: &rationale,
                icl: &icl,
            },
            &cfg,
        )
        .unwrap();
        drop((rationale, icl));
        assert!(dir.path().join("rationales.json").exists());

        // A rationale client that always fails proves the cache is used.
        struct Unreachable;
        impl LlmClient for Unreachable {
            fn model(&self) -> &str {
                TemplateRationales.model()
            }
            fn complete(&self, _: &CompletionRequest) -> std::result::Result<String, ClientError> {
                Err(ClientError::Transport("offline".into()))
            }
        }
        let replay = Replay::from_log(&log, Some("icl")).unwrap();
        let second = run_pipeline(
            &inputs,
            &Clients {
                rationale: &Unreachable,
                icl: &replay,
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(first.reports, second.reports);
        assert_eq!(first.records, second.records);
    }

    #[test]
    fn ablation_variants() {
        let v = ablation_specs(&KernelSpec::default());
        assert_eq!(v[0].1.num_poly, 0);
        assert_eq!(v[1].1.num_matern, 0);
        assert_eq!(v[2].1, KernelSpec::default());
    }
}
