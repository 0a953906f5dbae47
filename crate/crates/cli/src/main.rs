use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use slicematch::corpus::{dataset_name, load_corpus};
use slicematch::embedding::DEFAULT_DIMENSION;
use slicematch::evaluation::{evaluate, slice_length_study, EvalConfig};
use slicematch::report::{emit_report, ratio_csv, study_csv, Configuration, ReportFormat};
use slicematch::{
    build_index, load_index, save_index, to_bpmn_xml, EmbeddingProvider, HashEmbedder, Index, Mode, RemoteEmbedder,
};
use slicematch_service::api::new_request_id;
use slicematch_service::server::answer_request;
use slicematch_service::{
    load_test, standard_workloads, synth, AppState, LoadTestConfig, RecommendRequestBody, RecommendResponseBody,
    ServiceConfig, ThinkTime,
};

/// Next-element recommendations for process models built from slices of
/// existing models.
#[derive(Debug, Parser)]
#[command(name = "slicematch", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Slice and embed a directory of BPMN files into an index file.
    BuildIndex(BuildIndexArgs),
    /// Recommend next elements for one element of a BPMN file.
    Recommend(RecommendArgs),
    /// Leave-one-out evaluation of slicing against the random baseline.
    Evaluate(EvaluateArgs),
    /// Evaluate the slicing recommender at several slice lengths.
    Study(StudyArgs),
    /// Serve recommendations over HTTP.
    Serve(ServeArgs),
    /// Drive a running service with simulated users.
    Loadtest(LoadtestArgs),
    /// Write a synthetic corpus of BPMN workflows.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    WithGateways,
    TasksOnly,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::WithGateways => Mode::WithGateways,
            ModeArg::TasksOnly => Mode::TasksOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Args)]
struct ProviderArgs {
    /// Remote encoder endpoint; the built-in hash embedder is used when absent.
    #[arg(long, env = "PROVIDER_URL")]
    provider_url: Option<String>,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_DIMENSION)]
    dim: usize,
}

impl ProviderArgs {
    fn provider(&self) -> Result<Box<dyn EmbeddingProvider>, Failure> {
        if self.dim == 0 {
            return Err(Failure::usage("--dim must be positive"));
        }
        Ok(match &self.provider_url {
            Some(url) => Box::new(RemoteEmbedder::new(url.clone(), self.dim)),
            None => Box::new(HashEmbedder::new(self.dim)),
        })
    }
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    /// Directory of .bpmn/.xml files, searched recursively.
    #[arg(long)]
    corpus: PathBuf,
    /// Slice length.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Slice over all elements or over tasks only (gateways contracted).
    #[arg(long, value_enum, default_value_t = ModeArg::WithGateways)]
    mode: ModeArg,
    /// Output index file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    /// Index file.
    #[arg(long)]
    index: PathBuf,
    /// BPMN file holding the model under construction.
    #[arg(long)]
    bpmn: PathBuf,
    /// Id of the element to continue from.
    #[arg(long)]
    task: String,
    /// Number of recommendations.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Leave out gateways and end events.
    #[arg(long, default_value_t = false)]
    filtered: bool,
    /// Remote encoder endpoint; must match the one the index was built with.
    #[arg(long, env = "PROVIDER_URL")]
    provider_url: Option<String>,
    /// Print the HTTP response body instead of a table.
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of .bpmn/.xml files, searched recursively.
    #[arg(long)]
    corpus: PathBuf,
    /// Number of recommendations scored per state.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Slice over all elements or over tasks only (gateways contracted).
    #[arg(long, value_enum, default_value_t = ModeArg::WithGateways)]
    mode: ModeArg,
    /// Leave out gateways and end events from candidates and ground truth.
    #[arg(long, default_value_t = false)]
    filtered: bool,
    /// Dataset name in reports (defaults to the corpus directory name).
    #[arg(long)]
    dataset: Option<String>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Slice length.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Report both the all-elements and the filtered configuration.
    #[arg(long, default_value_t = false, conflicts_with = "filtered")]
    both: bool,
    /// Repetitions of the random baseline.
    #[arg(long, default_value_t = 30)]
    runs: usize,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write slicing/random mean ratios as CSV.
    #[arg(long)]
    ratios: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Slice lengths to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    lengths: Vec<usize>,
    /// CSV file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Index file; give one per mode. Comma-separated in the environment.
    #[arg(long = "index", env = "INDEX_PATH", value_delimiter = ',', required = true)]
    index: Vec<PathBuf>,
    /// Listen address.
    #[arg(long, env = "BIND_ADDR", default_value = "127.0.0.1:8080")]
    bind: String,
    /// Remote encoder endpoint; must match the one the indexes were built with.
    #[arg(long, env = "PROVIDER_URL")]
    provider_url: Option<String>,
    /// Recommendations per request when the request does not say.
    #[arg(long, env = "K_DEFAULT", default_value_t = 3)]
    k_default: usize,
    /// Append one JSON line per request to this file.
    #[arg(long)]
    request_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LoadtestArgs {
    /// Base URL of the service.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    target: String,
    /// Concurrent simulated users.
    #[arg(long, default_value_t = 10)]
    users: usize,
    /// Requests to complete across all users.
    #[arg(long, default_value_t = 10_000)]
    requests: usize,
    /// Skip the 1-5 s think time between a user's requests.
    #[arg(long, default_value_t = false)]
    no_think: bool,
    /// Seed of workload generation and user behavior.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slice length of the served index, used to pick query elements.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_s: u64,
    /// Print the result as JSON.
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Number of workflows.
    #[arg(long, default_value_t = 40)]
    count: usize,
    /// Smallest workflow, in elements.
    #[arg(long, default_value_t = 5)]
    min_size: usize,
    /// Largest workflow, in elements.
    #[arg(long, default_value_t = 25)]
    max_size: usize,
    /// Chance of a gateway block wherever one fits.
    #[arg(long, default_value_t = 0.4)]
    gateway_share: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// An error with a stable machine-readable code.
#[derive(Debug)]
struct Failure {
    code: String,
    message: String,
    usage: bool,
}

impl Failure {
    fn new(code: &str, message: impl fmt::Display) -> Self {
        Failure {
            code: code.to_string(),
            message: message.to_string(),
            usage: false,
        }
    }

    fn usage(message: impl fmt::Display) -> Self {
        Failure {
            usage: true,
            ..Failure::new("usage", message)
        }
    }
}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::new(e.code(), &e)
            }
        }
    )*};
}

coded!(
    slicematch::IndexError,
    slicematch::corpus::CorpusError,
    slicematch::evaluation::EvalError,
    slicematch_service::ServiceError,
    slicematch_service::LoadTestError
);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io_failure", e)
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, bytes)?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn build_index_cmd(args: BuildIndexArgs) -> Result<(), Failure> {
    if args.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let provider = args.provider.provider()?;
    let corpus = load_corpus(&args.corpus)?;
    let started = Instant::now();
    let index: Index = build_index(&corpus, args.n, provider.as_ref(), args.mode.into())?;
    save_index(&index, &args.out)?;
    eprintln!(
        "indexed {} slices from {} processes in {:.1}s -> {}",
        index.len(),
        corpus.len(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn recommend_cmd(args: RecommendArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let index: Index = load_index(&args.index)?;
    let mode = index.meta.mode;
    let dimension = index.meta.embedder.dimension;
    let provider: Arc<dyn EmbeddingProvider> = match &args.provider_url {
        Some(url) => Arc::new(RemoteEmbedder::new(url.clone(), dimension)),
        None => Arc::new(HashEmbedder::new(dimension)),
    };
    let state = AppState::new(vec![index], provider, args.k)?;
    let body = RecommendRequestBody {
        bpmn_xml: fs::read_to_string(&args.bpmn)?,
        task_id: args.task.clone(),
        user_id: "cli".into(),
        k: Some(args.k),
        filtered: Some(args.filtered),
        mode: Some(mode),
    };
    let recs = answer_request(&state, &body).map_err(|e| Failure::new(e.code, e.message))?;
    if args.json {
        let resp = RecommendResponseBody {
            recommendations: recs,
            request_id: new_request_id(),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        println!("{}", serde_json::to_string_pretty(&resp).expect("response serializes"));
        return Ok(());
    }
    if recs.is_empty() {
        println!("no recommendation for `{}`", args.task);
        return Ok(());
    }
    println!("{:<4} {:<7} {:<20} {:<36} matched slice", "#", "score", "type", "label");
    for (i, r) in recs.iter().enumerate() {
        println!(
            "{:<4} {:<7.4} {:<20} {:<36} {} [{}]",
            i + 1,
            r.score,
            r.element_type.display_name(),
            r.label.as_deref().unwrap_or("-"),
            r.explanation.matched_slice_text,
            r.explanation.source_process_id
        );
    }
    Ok(())
}

fn eval_setup(args: &EvalArgs) -> Result<(String, Vec<slicematch::ProcessGraph>, Box<dyn EmbeddingProvider>), Failure> {
    if args.k == 0 {
        return Err(Failure::usage("--k must be at least 1"));
    }
    let provider = args.provider.provider()?;
    let corpus = load_corpus(&args.corpus)?;
    let dataset = args.dataset.clone().unwrap_or_else(|| dataset_name(&args.corpus));
    Ok((dataset, corpus, provider))
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), Failure> {
    let (dataset, corpus, provider) = eval_setup(&args.eval)?;
    let base = EvalConfig {
        slice_length: args.n,
        k: args.eval.k,
        filtered: args.eval.filtered,
        mode: args.eval.mode.into(),
        runs_for_random: args.runs,
        seed: args.seed,
    };
    base.validate()?;
    let configurations = if args.both {
        vec![Configuration::AllElements, Configuration::Filtered]
    } else {
        vec![base.configuration()]
    };
    let report = evaluate(&dataset, &corpus, &base, &configurations, provider.as_ref())?;
    write_output(args.out.as_deref(), &emit_report(&report, args.format.into()))?;
    if let Some(path) = &args.ratios {
        write_output(Some(path), &ratio_csv(&report))?;
    }
    Ok(())
}

fn study_cmd(args: StudyArgs) -> Result<(), Failure> {
    let (dataset, corpus, provider) = eval_setup(&args.eval)?;
    if args.lengths.is_empty() || args.lengths.contains(&0) {
        return Err(Failure::usage("--lengths must list positive slice lengths"));
    }
    let base = EvalConfig {
        k: args.eval.k,
        filtered: args.eval.filtered,
        mode: args.eval.mode.into(),
        ..EvalConfig::default()
    };
    let rows = slice_length_study(&dataset, &corpus, &args.lengths, &base, provider.as_ref())?;
    for r in rows.iter().filter(|r| r.is_empty()) {
        eprintln!("slice length {}: no state could be scored", r.slice_length);
    }
    let pairs: Vec<_> = rows.into_iter().map(|r| (r.slice_length, r.row)).collect();
    write_output(args.out.as_deref(), &study_csv(&pairs))
}

async fn serve_cmd(args: ServeArgs) -> Result<(), Failure> {
    let config = ServiceConfig {
        index_paths: args.index,
        bind_addr: args.bind,
        provider_url: args.provider_url,
        k_default: args.k_default,
        request_log: args.request_log,
    };
    slicematch_service::serve(config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

async fn loadtest_cmd(args: LoadtestArgs) -> Result<(), Failure> {
    let config = LoadTestConfig {
        target_url: args.target,
        users: args.users,
        total_requests: args.requests,
        think: if args.no_think { ThinkTime::None } else { ThinkTime::standard() },
        seed: args.seed,
        request_timeout: Duration::from_secs(args.timeout_s),
    };
    let workloads = standard_workloads(args.n, args.seed);
    let r = load_test(&config, &workloads).await?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&r).expect("result serializes"));
    } else {
        println!("users          {}", r.users);
        println!("requests       {}", r.requests);
        println!("avg rps        {:.1}", r.avg_rps);
        println!(
            "response ms    avg {:.1}  min {:.1}  max {:.1}  p90 {:.1}",
            r.response_ms.avg, r.response_ms.min, r.response_ms.max, r.response_ms.p90
        );
        println!("failure rate   {:.4}% ({} of {})", r.failure_rate * 100.0, r.failures, r.requests);
    }
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<(), Failure> {
    if args.min_size < 3 || args.max_size < args.min_size {
        return Err(Failure::usage("sizes must satisfy 3 <= --min-size <= --max-size"));
    }
    if !(0.0..=1.0).contains(&args.gateway_share) {
        return Err(Failure::usage("--gateway-share must lie in [0, 1]"));
    }
    fs::create_dir_all(&args.out)?;
    let corpus = synth::corpus(args.count, args.min_size..=args.max_size, args.gateway_share, args.seed);
    for g in &corpus {
        let path = args.out.join(format!("{}.bpmn", g.process_id()));
        fs::write(path, to_bpmn_xml(std::slice::from_ref(g)))?;
    }
    eprintln!("wrote {} workflows to {}", corpus.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::BuildIndex(a) => build_index_cmd(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Study(a) => study_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Serve(a) => runtime()?.block_on(serve_cmd(a)),
        Command::Loadtest(a) => runtime()?.block_on(loadtest_cmd(a)),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}
