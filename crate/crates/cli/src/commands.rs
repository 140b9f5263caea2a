use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use mkgp::baselines::Bm25Params;
use mkgp::coreset::{build_coreset, CoresetConfig};
use mkgp::data_io::{self, Dataset};
use mkgp::gp_train::{self, TrainResult};
use mkgp::icl::client::{
    EchoFirstDemonstration, HttpClient, HttpClientConfig, Recording, Replay, RetryPolicy, TemplateRationales,
};
use mkgp::icl::pipeline::{ablation_specs, generate_rationales, Clients, PipelineConfig, PipelineInputs, Retriever};
use mkgp::icl::prompt::DEFAULT_TARGET;
use mkgp::icl::{GenerationSettings, LlmClient, PredictionRecord, Strategy, StrategyReport};
use mkgp::{seed, EmbeddedExample, GpModel, KernelSpec, TrainConfig};

use crate::config::{ClientArgs, ClientKind, DataArgs, FileConfig, KernelArgs, SelectArgs, StrategyArg, TrainArgs};
use crate::{Cli, CliError, Command, UsageError};

const DEFAULT_POOL: usize = 1000;
const LLM_LOG: &str = "llm_log.jsonl";

struct Ctx {
    seed: u64,
    out: PathBuf,
    file: FileConfig,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn model_path(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.file.model.clone()).unwrap_or_else(|| self.path("model.json"))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli
            .output_dir
            .clone()
            .or_else(|| file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("mkgp-out")),
        file,
    };
    let f = ctx.file.clone();
    match cli.command {
        Command::Train { data, kernel, train } => {
            let data = data.overlay(f.data);
            let split = load_split(&ctx, &data, false)?;
            prepare_output(&ctx)?;
            cmd_train(&ctx, &split, &kernel.overlay(f.kernel), &train.overlay(f.train))
        }
        Command::Retrieve {
            data,
            select,
            model,
            strategy,
        } => {
            let data = data.overlay(f.data);
            let split = load_split(&ctx, &data, true)?;
            let strategy = match (strategy, f.strategy.as_deref()) {
                (Some(s), _) => s,
                (None, Some([s])) => *s,
                (None, Some(_)) => return Err(UsageError("retrieve takes a single strategy".into()).into()),
                (None, None) => StrategyArg::Mkgp,
            };
            prepare_output(&ctx)?;
            cmd_retrieve(&ctx, &split, &select.overlay(f.select), model, strategy.into())
        }
        Command::Coreset { data, select } => {
            let split = load_split(&ctx, &data.overlay(f.data), false)?;
            prepare_output(&ctx)?;
            cmd_coreset(&ctx, &split, &select.overlay(f.select))
        }
        Command::Rationales { data, select, client } => {
            let split = load_split(&ctx, &data.overlay(f.data), false)?;
            prepare_output(&ctx)?;
            cmd_rationales(&ctx, &split, &select.overlay(f.select), &client.overlay(f.client))
        }
        Command::Evaluate {
            data,
            select,
            client,
            model,
            strategy,
        } => {
            let split = load_split(&ctx, &data.overlay(f.data), true)?;
            let strategies: Vec<Strategy> = match strategy.or(f.strategy) {
                Some(list) if list.is_empty() => return Err(UsageError("no strategy selected".into()).into()),
                Some(list) => dedup(list.into_iter().map(Strategy::from)),
                None => Strategy::ALL.to_vec(),
            };
            prepare_output(&ctx)?;
            cmd_evaluate(
                &ctx,
                &split,
                &select.overlay(f.select),
                &client.overlay(f.client),
                model,
                strategies,
            )
        }
        Command::Ablate {
            data,
            kernel,
            train,
            select,
            client,
        } => {
            let split = load_split(&ctx, &data.overlay(f.data), true)?;
            prepare_output(&ctx)?;
            cmd_ablate(
                &ctx,
                &split,
                &kernel.overlay(f.kernel),
                &train.overlay(f.train),
                &select.overlay(f.select),
                &client.overlay(f.client),
            )
        }
    }
}

fn dedup(items: impl Iterator<Item = Strategy>) -> Vec<Strategy> {
    let mut seen = HashSet::new();
    items.filter(|s| seen.insert(*s)).collect()
}

fn prepare_output(ctx: &Ctx) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.out).map_err(|e| mkgp::Error::io(&ctx.out, e))?;
    Ok(())
}

/// The annotated pool (retrieval candidates and training set) and the
/// queries classified against it.
struct Split {
    dataset: Dataset,
    pool: Vec<EmbeddedExample>,
    queries: Vec<EmbeddedExample>,
}

impl Split {
    fn label_list(&self) -> &[String] {
        &self.dataset.manifest.label_list
    }
}

fn required(value: &Option<PathBuf>, flag: &str) -> Result<PathBuf, UsageError> {
    value
        .clone()
        .ok_or_else(|| UsageError(format!("--{flag} is required (as a flag or in the config file)")))
}

fn load_split(ctx: &Ctx, args: &DataArgs, with_queries: bool) -> Result<Split, CliError> {
    let data = required(&args.data, "data")?;
    let manifest = required(&args.manifest, "manifest")?;
    let dataset = data_io::load_dataset(&data, &manifest)?;
    let total = dataset.examples.len();
    let pool_size = args.pool_size.unwrap_or(DEFAULT_POOL.min(total));
    let mut pool = data_io::sample_annotated_pool(&dataset.examples, pool_size, seed::derive(ctx.seed, "pool"))?;
    pool.sort_by_key(|e| e.id);
    info!("annotated pool: {} of {total} examples", pool.len());

    let mut queries = Vec::new();
    if with_queries {
        queries = match (&args.queries, &args.queries_manifest) {
            (Some(q), Some(qm)) => {
                let qs = data_io::load_dataset(q, qm)?;
                if qs.manifest.label_list != dataset.manifest.label_list {
                    return Err(mkgp::Error::Schema(format!(
                        "query label list {:?} differs from the dataset's {:?}",
                        qs.manifest.label_list, dataset.manifest.label_list
                    ))
                    .into());
                }
                qs.examples
            }
            _ => {
                let in_pool: HashSet<u64> = pool.iter().map(|e| e.id).collect();
                dataset.examples.iter().filter(|e| !in_pool.contains(&e.id)).cloned().collect()
            }
        };
        if let Some(max) = args.max_queries {
            if max < queries.len() {
                queries = data_io::sample_annotated_pool(&queries, max, seed::derive(ctx.seed, "queries"))?;
            }
        }
        queries.sort_by_key(|e| e.id);
        if queries.is_empty() {
            return Err(UsageError(
                "no queries: the pool covers the whole dataset; lower --pool-size or pass --queries".into(),
            )
            .into());
        }
        info!("{} queries", queries.len());
    }
    Ok(Split { dataset, pool, queries })
}

fn create(path: &Path) -> Result<BufWriter<File>, mkgp::Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| mkgp::Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| mkgp::Error::io(path, e))?))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), mkgp::Error> {
    let mut out = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n").map_err(|e| mkgp::Error::io(path, e))?;
    }
    out.flush().map_err(|e| mkgp::Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), mkgp::Error> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| mkgp::Error::io(path, e))
}

fn kernel_spec(args: &KernelArgs) -> Result<KernelSpec, mkgp::Error> {
    let defaults = KernelSpec::default();
    let spec = KernelSpec {
        num_matern: args.num_matern.unwrap_or(defaults.num_matern),
        num_poly: args.num_poly.unwrap_or(defaults.num_poly),
        jitter: args.jitter.unwrap_or(defaults.jitter),
    };
    spec.validate()?;
    Ok(spec)
}

fn train_config(ctx: &Ctx, args: &TrainArgs) -> Result<TrainConfig, mkgp::Error> {
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        newton_tol: args.newton_tol.unwrap_or(defaults.newton_tol),
        newton_max_iters: args.newton_max_iters.unwrap_or(defaults.newton_max_iters),
        seed: ctx.seed,
        ..defaults
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_and_save(split: &Split, spec: &KernelSpec, cfg: &TrainConfig, dir: &Path) -> Result<TrainResult, mkgp::Error> {
    info!(
        "training N={} M={} for {} epochs at lr {}",
        spec.num_matern, spec.num_poly, cfg.epochs, cfg.learning_rate
    );
    let result = gp_train::train(&split.pool, spec, cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| mkgp::Error::io(dir, e))?;
    data_io::save_model(&result.model, &dir.join("model.json"))?;
    let trace = dir.join("loss_trace.csv");
    let mut out = create(&trace)?;
    let io = |e| mkgp::Error::io(&trace, e);
    writeln!(out, "epoch,loss").map_err(io)?;
    for (epoch, loss) in result.loss_trace.iter().enumerate() {
        writeln!(out, "{},{loss}", epoch + 1).map_err(io)?;
    }
    out.flush().map_err(io)?;
    info!("final NLL {}", result.model.training_meta.final_loss);
    Ok(result)
}

fn cmd_train(ctx: &Ctx, split: &Split, kernel: &KernelArgs, train: &TrainArgs) -> Result<(), CliError> {
    let spec = kernel_spec(kernel)?;
    let cfg = train_config(ctx, train)?;
    train_and_save(split, &spec, &cfg, &ctx.out)?;
    Ok(())
}

fn shots(select: &SelectArgs) -> usize {
    select.shots.unwrap_or(10)
}

fn bm25(select: &SelectArgs) -> Bm25Params {
    let d = Bm25Params::default();
    Bm25Params {
        k1: select.bm25_k1.unwrap_or(d.k1),
        b: select.bm25_b.unwrap_or(d.b),
    }
}

fn coreset_config(ctx: &Ctx, select: &SelectArgs) -> CoresetConfig {
    CoresetConfig {
        lambda_b: select.lambda_b.unwrap_or(CoresetConfig::default().lambda_b),
        seed: seed::derive(ctx.seed, "coreset"),
    }
}

fn load_model_for(path: &Path, split: &Split) -> Result<GpModel, mkgp::Error> {
    let model = data_io::load_model(path)?;
    if model.embed_dim != split.dataset.manifest.embed_dim {
        return Err(mkgp::Error::Shape(format!(
            "model {} expects dimension {} but the dataset has {}",
            path.display(),
            model.embed_dim,
            split.dataset.manifest.embed_dim
        )));
    }
    Ok(model)
}

#[derive(Serialize)]
struct NeighborOut {
    id: u64,
    score: f64,
    label: usize,
}

#[derive(Serialize)]
struct RetrievalOut {
    query_id: u64,
    neighbors: Vec<NeighborOut>,
}

fn cmd_retrieve(
    ctx: &Ctx,
    split: &Split,
    select: &SelectArgs,
    model: Option<PathBuf>,
    strategy: Strategy,
) -> Result<(), CliError> {
    let model = match strategy {
        Strategy::Mkgp => Some(load_model_for(&ctx.model_path(model), split)?),
        _ => None,
    };
    let retriever = Retriever::new(&split.pool, model.as_ref(), bm25(select), seed::derive(ctx.seed, "retrieval"))?;
    let labels: HashMap<u64, usize> = split.pool.iter().map(|e| (e.id, e.label)).collect();
    let s = shots(select);
    let rows = split
        .queries
        .iter()
        .map(|q| {
            let neighbors = retriever
                .retrieve(strategy, q, s)?
                .into_iter()
                .map(|n| NeighborOut {
                    id: n.id,
                    score: n.score,
                    label: labels[&n.id],
                })
                .collect();
            Ok(RetrievalOut {
                query_id: q.id,
                neighbors,
            })
        })
        .collect::<Result<Vec<_>, mkgp::Error>>()?;
    let path = ctx.path(&format!("retrieve-{strategy}.jsonl"));
    write_jsonl(&path, rows)?;
    info!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct CoresetOut<'a> {
    id: u64,
    text: &'a str,
    label: usize,
}

fn cmd_coreset(ctx: &Ctx, split: &Split, select: &SelectArgs) -> Result<(), CliError> {
    let coreset = build_coreset(&split.pool, &coreset_config(ctx, select))?;
    let path = ctx.path("coreset.jsonl");
    write_jsonl(
        &path,
        coreset.members.iter().map(|e| CoresetOut {
            id: e.id,
            text: &e.text,
            label: e.label,
        }),
    )?;
    info!("wrote {} coreset examples to {}", coreset.members.len(), path.display());
    Ok(())
}

struct ClientPair {
    rationale: Box<dyn LlmClient>,
    icl: Box<dyn LlmClient>,
}

impl ClientPair {
    fn as_clients(&self) -> Clients<'_> {
        Clients {
            rationale: self.rationale.as_ref(),
            icl: self.icl.as_ref(),
        }
    }
}

fn build_client(
    args: &ClientArgs,
    slot: &str,
    kind: Option<ClientKind>,
    model: &Option<String>,
) -> Result<Box<dyn LlmClient>, CliError> {
    if let Some(log) = &args.replay {
        return Ok(Box::new(Replay::from_log(log, Some(slot)).map_err(mkgp::Error::from)?));
    }
    Ok(match kind.unwrap_or(ClientKind::Http) {
        ClientKind::Mock if slot == "rationale" => Box::new(TemplateRationales),
        ClientKind::Mock => Box::new(EchoFirstDemonstration),
        ClientKind::Http => {
            let model = model
                .clone()
                .ok_or_else(|| UsageError(format!("--{slot}-model is required with the http client")))?;
            let config = HttpClientConfig {
                base_url: args.base_url.clone().unwrap_or_else(|| "https://api.openai.com/v1".into()),
                model,
                api_key_env: args.api_key_env.clone().unwrap_or_else(|| "OPENAI_API_KEY".into()),
                timeout_secs: args.timeout_secs.unwrap_or(60),
                retry: RetryPolicy {
                    max_attempts: args.max_attempts.unwrap_or(RetryPolicy::default().max_attempts),
                    ..RetryPolicy::default()
                },
            };
            Box::new(HttpClient::new(config, false).map_err(mkgp::Error::from)?)
        }
    })
}

/// The client for one slot, recording every exchange unless replaying.
fn slot_client(ctx: &Ctx, args: &ClientArgs, slot: &str) -> Result<Box<dyn LlmClient>, CliError> {
    let inner = match slot {
        "rationale" => build_client(args, slot, args.rationale_client, &args.rationale_model)?,
        _ => build_client(args, slot, args.icl_client, &args.icl_model)?,
    };
    if args.replay.is_some() {
        return Ok(inner);
    }
    let log = ctx.path(LLM_LOG);
    let recording = Recording::new(inner, slot, &log).map_err(|e| mkgp::Error::io(&log, e))?;
    Ok(Box::new(recording))
}

fn build_clients(ctx: &Ctx, args: &ClientArgs) -> Result<ClientPair, CliError> {
    Ok(ClientPair {
        rationale: slot_client(ctx, args, "rationale")?,
        icl: slot_client(ctx, args, "icl")?,
    })
}

fn pipeline_config(ctx: &Ctx, split: &Split, select: &SelectArgs, client: &ClientArgs, strategies: Vec<Strategy>) -> PipelineConfig {
    let settings = GenerationSettings {
        temperature: 0.0,
        max_tokens: client.max_tokens,
    };
    PipelineConfig {
        shots: shots(select),
        strategies,
        coreset: coreset_config(ctx, select),
        bm25: bm25(select),
        seed: seed::derive(ctx.seed, "retrieval"),
        parallelism: client.parallelism.unwrap_or(4),
        target: client
            .target
            .clone()
            .or_else(|| split.dataset.manifest.target.clone())
            .unwrap_or_else(|| DEFAULT_TARGET.to_string()),
        rationale_settings: settings.clone(),
        icl_settings: settings,
        rationale_cache: Some(ctx.path("rationales.json")),
    }
}

fn cmd_rationales(ctx: &Ctx, split: &Split, select: &SelectArgs, client: &ClientArgs) -> Result<(), CliError> {
    let rationale_client = slot_client(ctx, client, "rationale")?;
    let cfg = pipeline_config(ctx, split, select, client, Vec::new());
    let (rationales, coreset_ids) = generate_rationales(&split.pool, split.label_list(), rationale_client.as_ref(), &cfg)?;
    let path = ctx.path("rationales.txt");
    std::fs::write(&path, rationales.text.clone() + "\n").map_err(|e| mkgp::Error::io(&path, e))?;
    info!("rationales from {} coreset examples written to {}", coreset_ids.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    strategy: Strategy,
    query_id: u64,
    gold: &'a str,
    predicted: Option<&'a str>,
    completion: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    client_error: Option<&'a str>,
    demonstration_ids: &'a [u64],
}

fn prediction_rows<'a>(
    strategy: Strategy,
    records: &'a [PredictionRecord],
    labels: &'a [String],
) -> impl Iterator<Item = PredictionOut<'a>> {
    records.iter().map(move |r| PredictionOut {
        strategy,
        query_id: r.query_id,
        gold: &labels[r.gold],
        predicted: r.parsed.index().map(|i| labels[i].as_str()),
        completion: r.completion.as_deref(),
        client_error: r.client_error.as_deref(),
        demonstration_ids: &r.demonstration_ids,
    })
}

#[derive(Serialize)]
struct EvaluationOut<'a> {
    dataset: &'a str,
    seed: u64,
    shots: usize,
    num_candidates: usize,
    query_ids: Vec<u64>,
    reports: &'a [StrategyReport],
}

fn cmd_evaluate(
    ctx: &Ctx,
    split: &Split,
    select: &SelectArgs,
    client: &ClientArgs,
    model: Option<PathBuf>,
    strategies: Vec<Strategy>,
) -> Result<(), CliError> {
    let model = if strategies.contains(&Strategy::Mkgp) {
        Some(load_model_for(&ctx.model_path(model), split)?)
    } else {
        None
    };
    let clients = build_clients(ctx, client)?;
    let cfg = pipeline_config(ctx, split, select, client, strategies);
    let inputs = PipelineInputs {
        candidates: &split.pool,
        queries: &split.queries,
        label_list: split.label_list(),
        model: model.as_ref(),
    };
    let output = mkgp::icl::run_pipeline(&inputs, &clients.as_clients(), &cfg)?;
    write_jsonl(
        &ctx.path("predictions.jsonl"),
        output
            .records
            .iter()
            .flat_map(|(s, recs)| prediction_rows(*s, recs, split.label_list())),
    )?;
    let report = EvaluationOut {
        dataset: &split.dataset.manifest.name,
        seed: ctx.seed,
        shots: cfg.shots,
        num_candidates: split.pool.len(),
        query_ids: split.queries.iter().map(|q| q.id).collect(),
        reports: &output.reports,
    };
    let path = ctx.path("report.json");
    write_json(&path, &report)?;
    for r in &output.reports {
        println!(
            "{:<7} accuracy {:.4}  weighted-F1 {:.4}  parse failures {:.4}",
            r.strategy, r.accuracy, r.weighted_f1, r.parse_failure_rate
        );
    }
    info!("report written to {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct VariantOut {
    variant: &'static str,
    num_matern: usize,
    num_poly: usize,
    final_loss: f64,
    /// Share of queries whose top-ranked candidate carries the gold label.
    top1_label_match: f64,
    report: StrategyReport,
}

fn cmd_ablate(
    ctx: &Ctx,
    split: &Split,
    kernel: &KernelArgs,
    train: &TrainArgs,
    select: &SelectArgs,
    client: &ClientArgs,
) -> Result<(), CliError> {
    let base = kernel_spec(kernel)?;
    let train_cfg = train_config(ctx, train)?;
    let clients = build_clients(ctx, client)?;
    let cfg = pipeline_config(ctx, split, select, client, vec![Strategy::Mkgp]);
    let mut variants = Vec::new();
    for (name, spec) in ablation_specs(&base) {
        let dir = ctx.path("ablation").join(name);
        let trained = train_and_save(split, &spec, &train_cfg, &dir)?;
        let model = trained.model;

        let retriever = Retriever::new(&split.pool, Some(&model), cfg.bm25, cfg.seed)?;
        let labels: HashMap<u64, usize> = split.pool.iter().map(|e| (e.id, e.label)).collect();
        let mut hits = 0usize;
        for q in &split.queries {
            let top = retriever.retrieve(Strategy::Mkgp, q, 1)?;
            hits += usize::from(labels[&top[0].id] == q.label);
        }

        let inputs = PipelineInputs {
            candidates: &split.pool,
            queries: &split.queries,
            label_list: split.label_list(),
            model: Some(&model),
        };
        let mut output = mkgp::icl::run_pipeline(&inputs, &clients.as_clients(), &cfg)?;
        let (_, records) = output.records.remove(0);
        write_jsonl(
            &dir.join("predictions.jsonl"),
            prediction_rows(Strategy::Mkgp, &records, split.label_list()),
        )?;
        let mut report = output.reports.remove(0);
        report.strategy = format!("mkgp:{name}");
        println!(
            "{name:<12} top-1 label match {:.4}  accuracy {:.4}  weighted-F1 {:.4}",
            hits as f64 / split.queries.len() as f64,
            report.accuracy,
            report.weighted_f1
        );
        variants.push(VariantOut {
            variant: name,
            num_matern: spec.num_matern,
            num_poly: spec.num_poly,
            final_loss: model.training_meta.final_loss,
            top1_label_match: hits as f64 / split.queries.len() as f64,
            report,
        });
    }
    write_json(
        &ctx.path("ablation.json"),
        &serde_json::json!({
            "dataset": split.dataset.manifest.name,
            "seed": ctx.seed,
            "shots": cfg.shots,
            "query_ids": split.queries.iter().map(|q| q.id).collect::<Vec<_>>(),
            "variants": variants,
        }),
    )?;
    Ok(())
}
