use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ltr_explain::baselines::{sample_background, RankBy, ShapConfig};
use ltr_explain::data::{read_letor_file, split_queries, QuerySelector};
use ltr_explain::harness::{
    effect_of_k, generate_synthetic, k_table, run_experiment, sanity_ndcg, ExperimentConfig, GeneratorKind,
    ModelSpec, SyntheticSpec, DEFAULT_K_VALUES,
};
use ltr_explain::oracle::{brute_force_optimal, submodularity_ratio, OracleResult, SubmodularityProbe};
use ltr_explain::rankers::{ModelDump, PairwiseConfig, TreeConfig};
use ltr_explain::{Dataset, EpsilonMode, Error, ExplainConfig, MaskPolicy, Method, Ranker};

/// Feature-subset explanations for learning-to-rank models.
#[derive(Parser)]
#[command(name = "ltr-explain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an in-repo model and save it as JSON.
    Train(TrainArgs),
    /// Explain test queries and write a JSON Lines report.
    Explain(ExplainArgs),
    /// Mean NDCG@10 of a model on the test split.
    Evaluate(EvalArgs),
    /// Brute-force the most valid k-subset per query.
    Oracle(OracleArgs),
    /// Write a synthetic LETOR dataset with a planted model.
    Synthetic(SyntheticArgs),
    /// Mean validity per method over several explanation sizes.
    EffectOfK(EffectArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Training data (LETOR, optionally .gz).
    #[arg(long)]
    train: Option<PathBuf>,
    /// linear | pairwise | gbdt | external:CMD
    #[arg(long, default_value = "linear")]
    model: String,
    /// Load a model saved by `train` instead of training one.
    #[arg(long)]
    load: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Test data (LETOR, optionally .gz).
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated: random, shap1, shap5, greedy, greedy-cover, greedy-cover-eps
    #[arg(long, default_value = "greedy-cover-eps", value_delimiter = ',')]
    method: Vec<String>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Concordant pairs sampled per query.
    #[arg(long, default_value_t = 50)]
    pairs: usize,
    /// zero | mean | FLOAT
    #[arg(long, default_value = "mean")]
    epsilon: String,
    /// zero | mean
    #[arg(long, default_value = "zero")]
    mask_policy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Greedy restarts from the best first-round features.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    /// all | sample:N
    #[arg(long, default_value = "all")]
    queries: String,
    #[arg(long, default_value_t = 200)]
    shap_samples: usize,
    #[arg(long, default_value_t = 500)]
    shap_background: usize,
    /// abs | signed
    #[arg(long, default_value = "abs")]
    shap_rank_by: String,
    /// Record wall time per explanation (reports are then not reproducible).
    #[arg(long)]
    timings: bool,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Also report NDCG@10 on this split.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1_000_000)]
    budget: u128,
    #[arg(long, default_value = "zero")]
    mask_policy: String,
    #[arg(long, default_value = "all")]
    queries: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also probe the submodularity ratio over these 1-based feature ids.
    #[arg(long, value_delimiter = ',')]
    probe: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SyntheticArgs {
    /// linear | interaction | duplicated-columns
    #[arg(long, default_value = "linear")]
    generator: String,
    #[arg(long, default_value_t = 50)]
    n_queries: usize,
    #[arg(long, default_value_t = 10)]
    docs: usize,
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// Planted feature ids, 1-based.
    #[arg(long, value_delimiter = ',', default_value = "3,6,8")]
    planted: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LETOR output path.
    #[arg(long)]
    out: PathBuf,
    /// Where to save the ground-truth model (loadable with --load).
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct EffectArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_VALUES)]
    k_values: Vec<usize>,
}

/// `Config` exits with status 1, `Runtime` with 2.
enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::UnknownQid(_) => Failure::Config(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Config(msg.into()))
}

fn existing(path: &Path) -> CliResult<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        config(format!("no such file: {}", path.display()))
    }
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    Ok(read_letor_file(existing(path)?)?)
}

fn model_spec(args: &ModelArgs, seed: u64) -> CliResult<ModelSpec> {
    if let Some(cmd) = args.model.strip_prefix("external:") {
        if cmd.trim().is_empty() {
            return config("external: needs a command");
        }
        return Ok(ModelSpec::External(cmd.to_string()));
    }
    Ok(match args.model.as_str() {
        "linear" => ModelSpec::Linear { l2: args.l2 },
        "pairwise" => ModelSpec::Pairwise(PairwiseConfig {
            epochs: args.epochs,
            learning_rate: args.learning_rate,
            seed,
            ..Default::default()
        }),
        "gbdt" => ModelSpec::Gbdt(TreeConfig { n_trees: args.trees, max_depth: args.depth, seed, ..Default::default() }),
        other => return config(format!("unknown model {:?}", other)),
    })
}

fn build_model(args: &ModelArgs, train: Option<&Dataset>, feature_count: usize, seed: u64) -> CliResult<Box<dyn Ranker>> {
    if let Some(path) = &args.load {
        return Ok(ModelDump::load(existing(path)?)?.into_ranker());
    }
    let spec = model_spec(args, seed)?;
    if train.is_none() && !matches!(spec, ModelSpec::External(_)) {
        return config("--train or --load is required for in-repo models");
    }
    Ok(spec.build(train, Some(feature_count))?)
}

fn mask_policy(name: &str, train: Option<&Dataset>, test: &Dataset) -> CliResult<MaskPolicy> {
    match name {
        "zero" => Ok(MaskPolicy::Zero),
        "mean" => Ok(MaskPolicy::background_mean(train.unwrap_or(test))),
        other => config(format!("unknown mask policy {:?}", other)),
    }
}

fn epsilon(text: &str) -> CliResult<EpsilonMode> {
    match text {
        "zero" => Ok(EpsilonMode::Zero),
        "mean" => Ok(EpsilonMode::Mean),
        t => match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(EpsilonMode::Fixed(v)),
            _ => config(format!("--epsilon must be zero, mean or a number, got {:?}", t)),
        },
    }
}

fn selector(text: &str, seed: u64) -> CliResult<QuerySelector> {
    if text == "all" {
        return Ok(QuerySelector::All);
    }
    match text.strip_prefix("sample:").map(str::parse::<usize>) {
        Some(Ok(size)) => Ok(QuerySelector::Sample { size, seed }),
        _ => config(format!("--queries must be all or sample:N, got {:?}", text)),
    }
}

fn output(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Prepared {
    test: Dataset,
    model: Box<dyn Ranker>,
    background: Option<Vec<Vec<f64>>>,
    config: ExperimentConfig,
}

fn prepare(run: &RunArgs) -> CliResult<Prepared> {
    let methods = run
        .method
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let eps = epsilon(&run.epsilon)?;
    let rank_by = match run.shap_rank_by.as_str() {
        "abs" => RankBy::Abs,
        "signed" => RankBy::Signed,
        other => return config(format!("unknown --shap-rank-by {:?}", other)),
    };
    let queries = selector(&run.queries, run.seed)?;
    model_spec(&run.model, run.seed)?;

    let test = load_data(&run.test)?;
    let train = run.model.train.as_deref().map(load_data).transpose()?;
    let policy = mask_policy(&run.mask_policy, train.as_ref(), &test)?;
    let model = build_model(&run.model, train.as_ref(), test.feature_count, run.seed)?;
    let needs_background = methods.iter().any(|m| matches!(m, Method::Shap1 | Method::Shap5));
    let background = if needs_background {
        Some(sample_background(train.as_ref().unwrap_or(&test), run.shap_background, run.seed)?)
    } else {
        None
    };
    let config = ExperimentConfig {
        methods,
        explain: ExplainConfig {
            k: run.k,
            pair_sample_size: run.pairs,
            epsilon: eps,
            seed: run.seed,
            n_seeds: run.seeds,
            mask_policy: policy,
        },
        shap: ShapConfig { n_samples: run.shap_samples, background_size: run.shap_background, rank_by, ..Default::default() },
        queries,
        seed: run.seed,
        timings: run.timings,
    };
    Ok(Prepared { test, model, background, config })
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let seed = args.seed.unwrap_or(0);
    let spec = model_spec(&args.model, seed)?;
    if matches!(spec, ModelSpec::External(_)) {
        return config("external models cannot be trained here");
    }
    let Some(train_path) = &args.model.train else {
        return config("--train is required");
    };
    let train = load_data(train_path)?;
    let dump = spec.train(&train)?;
    dump.save(&args.out)?;
    if let Some(test) = &args.test {
        let test = load_data(test)?;
        let summary = sanity_ndcg(&dump.into_ranker(), &test)?;
        println!("{}", serde_json::to_string(&summary).map_err(Error::from)?);
    }
    Ok(())
}

fn cmd_explain(args: &ExplainArgs) -> CliResult<()> {
    let p = prepare(&args.run)?;
    let report = run_experiment(&p.model, &p.test, p.background.as_deref(), &p.config)?;
    let mut out = output(&args.run.out)?;
    report.write_jsonl(&mut out)?;
    out.flush()?;
    for s in &report.aggregate.methods {
        eprintln!(
            "{:<17} queries={} validity={:.4} completeness={:.4}",
            s.method.name(),
            s.queries,
            s.mean_validity,
            s.mean_completeness
        );
    }
    for t in &report.aggregate.sign_tests {
        eprintln!("sign test {} vs {}: {}-{} ({} ties) p={:.4}", t.a, t.b, t.wins_a, t.wins_b, t.ties, t.p_value);
    }
    if report.aggregate.skipped_queries > 0 {
        eprintln!("skipped {} single-document queries", report.aggregate.skipped_queries);
    }
    Ok(())
}

fn cmd_evaluate(args: &EvalArgs) -> CliResult<()> {
    model_spec(&args.model, 0)?;
    let test = load_data(&args.test)?;
    let train = args.model.train.as_deref().map(load_data).transpose()?;
    let model = build_model(&args.model, train.as_ref(), test.feature_count, 0)?;
    let summary = sanity_ndcg(&model, &test)?;
    println!("{}", serde_json::to_string(&summary).map_err(Error::from)?);
    Ok(())
}

/// Oracle output with 1-based feature ids throughout.
#[derive(Serialize)]
struct OracleLine<'a> {
    qid: &'a str,
    #[serde(flatten)]
    result: OracleResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe: Option<SubmodularityProbe>,
}

fn one_based(ids: &[usize]) -> Vec<usize> {
    ids.iter().map(|f| f + 1).collect()
}

fn cmd_oracle(args: &OracleArgs) -> CliResult<()> {
    model_spec(&args.model, args.seed)?;
    let queries = selector(&args.queries, args.seed)?;
    let probe: Option<Vec<usize>> = match &args.probe {
        Some(ids) if ids.contains(&0) => return config("--probe takes 1-based feature ids"),
        Some(ids) => Some(ids.iter().map(|f| f - 1).collect()),
        None => None,
    };
    let test = load_data(&args.test)?;
    let train = args.model.train.as_deref().map(load_data).transpose()?;
    let policy = mask_policy(&args.mask_policy, train.as_ref(), &test)?;
    let model = build_model(&args.model, train.as_ref(), test.feature_count, args.seed)?;
    let test = split_queries(&test, &queries)?;
    let mut out = output(&args.out)?;
    for q in test.queries.iter().filter(|q| q.docs.len() >= 2) {
        let result = brute_force_optimal(&model, q, args.k, &policy, args.budget).map_err(|e| e.in_query(&q.qid))?;
        let probe = match &probe {
            Some(u) => {
                let mut p = submodularity_ratio(&model, q, u, args.k, &policy).map_err(|e| e.in_query(&q.qid))?;
                p.witness = p.witness.map(|(l, s)| (one_based(&l), one_based(&s)));
                Some(p)
            }
            None => None,
        };
        let line = OracleLine {
            qid: &q.qid,
            result: OracleResult { best_subset: one_based(&result.best_subset), ..result },
            probe,
        };
        serde_json::to_writer(&mut out, &line).map_err(Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_synthetic(args: &SyntheticArgs) -> CliResult<()> {
    let generator: GeneratorKind = args.generator.parse()?;
    if args.planted.contains(&0) {
        return config("--planted takes 1-based feature ids");
    }
    let spec = SyntheticSpec {
        n_queries: args.n_queries,
        docs_per_query: args.docs,
        feature_count: args.features,
        planted: args.planted.iter().map(|f| f - 1).collect(),
        generator,
        noise: args.noise,
        seed: args.seed,
    };
    let (data, model) = generate_synthetic(&spec)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    data.write_letor(&mut out)?;
    out.flush()?;
    if let Some(path) = &args.model_out {
        ModelDump::Planted(model).save(path)?;
    }
    Ok(())
}

fn cmd_effect_of_k(args: &EffectArgs) -> CliResult<()> {
    let p = prepare(&args.run)?;
    let rows = effect_of_k(&p.model, &p.test, p.background.as_deref(), &p.config, &args.k_values)?;
    let mut out = output(&args.run.out)?;
    out.write_all(k_table(&rows).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Synthetic(a) => cmd_synthetic(a),
        Command::EffectOfK(a) => cmd_effect_of_k(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", e);
            ExitCode::from(2)
        }
    }
}
