use std::path::{Path, PathBuf};
use std::process::ExitCode;

use axm_core::attacks::{craft_adversarial_set, AdversarialSet, AttackConfig};
use axm_core::experiments::report::{self, output_paths, Report};
use axm_core::experiments::{
    characterize_noise, confidence_cdf, conv_similarity, error_metrics, similarity_fixture, transferability,
    whitebox_distortion, with_workers, NoiseSummary, OperandRange, WhiteboxConfig,
};
use axm_core::nn::{
    load_mnist, load_weights, save_weights, train_sgd_with, ApproxScope, Arithmetic, Dataset, Model, ModelSpec, Split,
    TrainConfig, Weights,
};
use axm_core::{Backend, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

/// Approximate floating-point multiplier emulation and robustness experiments.
#[derive(Debug, Parser)]
#[command(name = "axm", version)]
struct Cli {
    /// Worker threads for sample-parallel stages (outputs do not depend on it)
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scalar multiplier characterization
    #[command(subcommand)]
    Mul(MulCommand),
    /// Model training and evaluation
    #[command(subcommand)]
    Nn(NnCommand),
    /// Convolution experiments
    #[command(subcommand)]
    Conv(ConvCommand),
    /// Adversarial example crafting and evaluation
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Robustness reports over a dataset
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
enum MulCommand {
    /// Per-sample error of a backend against exact products (CSV + JSON summary)
    Characterize(SamplingArgs),
    /// MRED and NMED of a backend (JSON)
    Metrics(SamplingArgs),
}

#[derive(Debug, Subcommand)]
enum NnCommand {
    /// Train with minibatch SGD and exact arithmetic, writing an AXTF weight archive
    Train(TrainArgs),
    /// Test accuracy under one or more backends (JSON)
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
enum ConvCommand {
    /// Convolution output versus patch/kernel similarity on a fixed kernel (CSV + JSON)
    Similarity(SimilarityArgs),
}

#[derive(Debug, Subcommand)]
enum AttackCommand {
    /// Craft FGSM or PGD examples against a backend, writing an AXTF adversarial set
    Craft(CraftArgs),
    /// Success and transfer rates of an adversarial set on other backends (CSV + JSON)
    Transfer(TransferArgs),
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Confidence CDF per backend over commonly correct samples (CSV + JSON)
    Confidence(ConfidenceArgs),
    /// Distortion at first PGD success along an epsilon schedule (CSV + JSON)
    Whitebox(WhiteboxArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    /// Approximate convolution products only
    Conv,
    /// Approximate convolution and dense products
    All,
}

impl From<ScopeArg> for ApproxScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Conv => ApproxScope::ConvOnly,
            ScopeArg::All => ApproxScope::AllMultiplies,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Fgsm,
    Pgd,
}

fn parse_backend(s: &str) -> std::result::Result<Backend, String> {
    s.parse::<Backend>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct SamplingArgs {
    /// Multiplier backend: exact, exact-fpm, ama5, ama5:<a>,<b>,<cin> or bf16
    #[arg(long, value_parser = parse_backend)]
    backend: Backend,
    /// Number of random operand pairs
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Operand interval [LO, HI), shared by both operands
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.0, 1.0], allow_negative_numbers = true)]
    range: Vec<f32>,
    /// Run seed
    #[arg(long, env = "AXM_SEED")]
    seed: u64,
    /// Output path; a directory receives <experiment>-seed<seed>.{csv,json}
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model spec JSON (defaults to the built-in LeNet-5 layout)
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory with MNIST IDX files (plain or .gz)
    #[arg(long)]
    data: PathBuf,
    /// Dataset split
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Use only the first N samples of the split
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct BackendsArgs {
    /// Backends to compare (repeatable)
    #[arg(long = "backend", value_parser = parse_backend, default_values = ["exact", "ama5"])]
    backends: Vec<Backend>,
    /// Which layers use the backend
    #[arg(long, value_enum, default_value = "conv")]
    scope: ScopeArg,
}

impl BackendsArgs {
    fn arithmetic(&self) -> Vec<Arithmetic> {
        self.backends
            .iter()
            .map(|&b| Arithmetic::new(b, self.scope.into()))
            .collect()
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory with MNIST IDX files (plain or .gz)
    #[arg(long)]
    data: PathBuf,
    /// Train on the first N training samples
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    limit: usize,
    /// Passes over the training subset
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// SGD learning rate
    #[arg(long, default_value_t = 0.05)]
    lr: f32,
    /// Minibatch size in samples
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Seed for initialization and shuffling
    #[arg(long, env = "AXM_SEED")]
    seed: u64,
    /// Weight archive to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// AXTF weight archive
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    backends: BackendsArgs,
    /// JSON report path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimilarityArgs {
    /// Multiplier backend compared against exact
    #[arg(long, value_parser = parse_backend, default_value = "ama5")]
    backend: Backend,
    /// Output path; a directory receives conv-similarity.{csv,json}
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CraftArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// AXTF weight archive
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Attack method
    #[arg(long, value_enum, default_value = "fgsm")]
    method: MethodArg,
    /// L-infinity budget in pixel units (pixels lie in [0, 1])
    #[arg(long, default_value_t = 0.2)]
    epsilon: f32,
    /// PGD step size in pixel units (defaults to epsilon / 4)
    #[arg(long)]
    alpha: Option<f32>,
    /// PGD iterations
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Attack the first N samples the target backend classifies correctly
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Backend whose predictions select and judge samples
    #[arg(long, value_parser = parse_backend, default_value = "exact")]
    backend: Backend,
    /// Which layers use the backend
    #[arg(long, value_enum, default_value = "conv")]
    scope: ScopeArg,
    /// Keep only examples that fool the target backend
    #[arg(long)]
    only_successful: bool,
    /// Adversarial set archive to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// AXTF weight archive
    #[arg(long)]
    weights: PathBuf,
    /// Adversarial set archive
    #[arg(long)]
    adv: PathBuf,
    /// Backend the set was crafted against
    #[arg(long, value_parser = parse_backend, default_value = "exact")]
    source: Backend,
    #[command(flatten)]
    backends: BackendsArgs,
    /// Output path; a directory receives attack-transfer.{csv,json}
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConfidenceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// AXTF weight archive
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    backends: BackendsArgs,
    /// Output path; a directory receives report-confidence.{csv,json}
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WhiteboxArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// AXTF weight archive
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    backends: BackendsArgs,
    /// Samples to attack, taken in order among those every backend gets right
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Epsilon schedule in pixel units, increasing (defaults to 0.02, 0.04, ..., 0.5)
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f32>>,
    /// PGD iterations per budget
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// PGD step as a fraction of the current budget
    #[arg(long, default_value_t = 0.25)]
    alpha_fraction: f32,
    /// Output path; a directory receives report-whitebox.{csv,json}
    #[arg(long)]
    out: PathBuf,
}

/// Process exit codes.
mod exit {
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const MISSING_FILE: u8 = 3;
    pub const INVARIANT: u8 = 4;
    pub const FORMAT: u8 = 5;
}

fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            (exit::MISSING_FILE, "missing-file")
        }
        Error::Io { .. } => (exit::OTHER, "io"),
        Error::Format { .. } | Error::ModelSpec(_) | Error::Csv(_) => (exit::FORMAT, "format"),
        Error::InvalidConfig(_) => (exit::USAGE, "usage"),
        _ => (exit::INVARIANT, "invariant"),
    }
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("axm: error[{kind}]: {one_line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // clap spreads one message over several lines before the usage block
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty() && !l.starts_with("Usage:"))
                .collect();
            return fail(exit::USAGE, "usage", message.join(" ").trim_start_matches("error: "));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let workers = cli.workers;
    match with_workers(workers, move || run(cli.command)).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            fail(code, kind, &e.to_string())
        }
    }
}

type Result<T> = axm_core::Result<T>;

fn missing(path: &Path, what: &str) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(missing(path, what))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(missing(path, what))
    }
}

/// The directory an output file will be written into must already exist.
fn require_out(path: &Path) -> Result<()> {
    if path.is_dir() {
        return Ok(());
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => require_dir(p, "output directory"),
        _ => Ok(()),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn check_model_path(m: &ModelArgs) -> Result<()> {
    match &m.model {
        Some(p) => require_file(p, "model spec"),
        None => Ok(()),
    }
}

fn load_spec(m: &ModelArgs) -> Result<ModelSpec> {
    match &m.model {
        Some(p) => ModelSpec::load(p),
        None => Ok(ModelSpec::lenet()),
    }
}

fn model_name(m: &ModelArgs) -> String {
    m.model
        .as_deref()
        .map(file_name)
        .unwrap_or_else(|| "lenet (built-in)".into())
}

fn load_model(m: &ModelArgs, weights: &Path) -> Result<Model> {
    let spec = load_spec(m)?;
    let w = load_weights(weights, &spec)?;
    Model::new(spec, w)
}

fn check_data(d: &DataArgs) -> Result<()> {
    require_dir(&d.data, "data directory")?;
    axm_core::nn::idx::mnist_paths(&d.data, d.split.into()).map(|_| ())
}

fn load_data(d: &DataArgs) -> Result<Dataset> {
    let ds = load_mnist(&d.data, d.split.into(), d.limit)?;
    info!("loaded {} samples from {}", ds.len(), d.data.display());
    Ok(ds)
}

fn data_echo(d: &DataArgs) -> serde_json::Value {
    json!({
        "split": match d.split { SplitArg::Train => "train", SplitArg::Test => "test" },
        "limit": d.limit,
    })
}

fn labels(arith: &[Arithmetic]) -> Vec<String> {
    arith.iter().map(|a| a.label()).collect()
}

fn range(args: &SamplingArgs) -> Result<OperandRange> {
    OperandRange::new(args.range[0], args.range[1])
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Mul(MulCommand::Characterize(a)) => mul_characterize(a),
        Command::Mul(MulCommand::Metrics(a)) => mul_metrics(a),
        Command::Nn(NnCommand::Train(a)) => nn_train(a),
        Command::Nn(NnCommand::Eval(a)) => nn_eval(a),
        Command::Conv(ConvCommand::Similarity(a)) => conv_sim(a),
        Command::Attack(AttackCommand::Craft(a)) => attack_craft(a),
        Command::Attack(AttackCommand::Transfer(a)) => attack_transfer(a),
        Command::Report(ReportCommand::Confidence(a)) => report_confidence(a),
        Command::Report(ReportCommand::Whitebox(a)) => report_whitebox(a),
    }
}

fn sampling_echo(a: &SamplingArgs, r: OperandRange) -> serde_json::Value {
    json!({ "backend": a.backend.name(), "samples": a.samples, "range": [r.lo, r.hi] })
}

fn mul_characterize(a: SamplingArgs) -> Result<()> {
    require_out(&a.out)?;
    let r = range(&a)?;
    let samples = characterize_noise(a.backend, a.samples, r, a.seed)?;
    let summary = NoiseSummary::from_samples(&samples)?;
    let (json_path, csv_path) = output_paths(&a.out, "mul-characterize", Some(a.seed));
    report::noise_table(&samples).write(&csv_path)?;
    Report::new("mul-characterize", Some(a.seed), sampling_echo(&a, r), summary).write(&json_path)?;
    info!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn mul_metrics(a: SamplingArgs) -> Result<()> {
    require_out(&a.out)?;
    let r = range(&a)?;
    let metrics = error_metrics(a.backend, a.samples, r, a.seed)?;
    let (json_path, _) = output_paths(&a.out, "mul-metrics", Some(a.seed));
    Report::new("mul-metrics", Some(a.seed), sampling_echo(&a, r), metrics).write(&json_path)?;
    info!("MRED {} NMED {}", metrics.mred, metrics.nmed);
    Ok(())
}

fn nn_train(a: TrainArgs) -> Result<()> {
    check_model_path(&a.model)?;
    require_dir(&a.data, "data directory")?;
    axm_core::nn::idx::mnist_paths(&a.data, Split::Train)?;
    require_out(&a.out)?;
    let spec = load_spec(&a.model)?;
    spec.validate()?;
    let ds = load_mnist(&a.data, Split::Train, Some(a.limit))?;
    let cfg = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch: a.batch,
        seed: a.seed,
    };
    info!("training on {} samples: {cfg:?}", ds.len());
    let w = train_sgd_with(&spec, Weights::init(&spec, a.seed), &ds, cfg, |s| {
        info!("epoch {} mean loss {:.5}", s.epoch + 1, s.mean_loss)
    })?;
    save_weights(&w, &a.out)?;
    info!("wrote {}", a.out.display());
    Ok(())
}

fn nn_eval(a: EvalArgs) -> Result<()> {
    check_model_path(&a.model)?;
    require_file(&a.weights, "weights")?;
    check_data(&a.data)?;
    require_out(&a.out)?;
    let model = load_model(&a.model, &a.weights)?;
    let ds = load_data(&a.data)?;
    let arith = a.backends.arithmetic();
    let mut rows = Vec::new();
    for &ar in &arith {
        let acc = model.accuracy(&ds, ar)?;
        info!("{}: accuracy {acc}", ar.label());
        rows.push(json!({ "backend": ar.label(), "accuracy": acc }));
    }
    let config = json!({
        "model": model_name(&a.model),
        "weights": file_name(&a.weights),
        "data": data_echo(&a.data),
        "backends": labels(&arith),
    });
    let summary = json!({ "samples": ds.len(), "results": rows });
    let (json_path, _) = output_paths(&a.out, "nn-eval", None);
    Report::new("nn-eval", None, config, summary).write(&json_path)
}

fn conv_sim(a: SimilarityArgs) -> Result<()> {
    require_out(&a.out)?;
    let (kernel, patches) = similarity_fixture();
    let rows = conv_similarity(&kernel, &patches, a.backend)?;
    let nondecreasing = rows.windows(2).filter(|w| w[1].gap >= w[0].gap).count();
    let (json_path, csv_path) = output_paths(&a.out, "conv-similarity", None);
    report::similarity_table(&rows).write(&csv_path)?;
    let summary = json!({
        "patches": rows.len(),
        "approx_at_least_exact": rows.iter().filter(|r| r.approx >= r.exact).count(),
        "nondecreasing_gap_steps": nondecreasing,
        "rows": rows,
    });
    Report::new("conv-similarity", None, json!({ "backend": a.backend.name() }), summary).write(&json_path)
}

fn attack_craft(a: CraftArgs) -> Result<()> {
    check_model_path(&a.model)?;
    require_file(&a.weights, "weights")?;
    check_data(&a.data)?;
    require_out(&a.out)?;
    let cfg = match a.method {
        MethodArg::Fgsm => AttackConfig::fgsm(a.epsilon)?,
        MethodArg::Pgd => AttackConfig::pgd(a.epsilon, a.alpha.unwrap_or(a.epsilon / 4.0), a.iters)?,
    };
    let model = load_model(&a.model, &a.weights)?;
    let ds = load_data(&a.data)?;
    let target = Arithmetic::new(a.backend, a.scope.into());
    let set = craft_adversarial_set(&model, &ds, target, &cfg, a.samples, a.only_successful)?;
    info!(
        "{} examples crafted with {:?} at epsilon {}",
        set.len(),
        cfg.method,
        cfg.epsilon
    );
    set.save(&a.out)
}

fn attack_transfer(a: TransferArgs) -> Result<()> {
    check_model_path(&a.model)?;
    require_file(&a.weights, "weights")?;
    require_file(&a.adv, "adversarial set")?;
    require_out(&a.out)?;
    let model = load_model(&a.model, &a.weights)?;
    let adv = AdversarialSet::load(&a.adv)?;
    let targets = a.backends.arithmetic();
    let source = Arithmetic::new(a.source, a.backends.scope.into());
    let rep = transferability(&model, &adv, source, &targets)?;
    let (json_path, csv_path) = output_paths(&a.out, "attack-transfer", None);
    report::transfer_table(&rep).write(&csv_path)?;
    let config = json!({
        "model": model_name(&a.model),
        "weights": file_name(&a.weights),
        "adv": file_name(&a.adv),
        "source": source.label(),
        "backends": labels(&targets),
    });
    Report::new("attack-transfer", None, config, rep).write(&json_path)
}

fn report_confidence(a: ConfidenceArgs) -> Result<()> {
    check_model_path(&a.model)?;
    require_file(&a.weights, "weights")?;
    check_data(&a.data)?;
    require_out(&a.out)?;
    let model = load_model(&a.model, &a.weights)?;
    let ds = load_data(&a.data)?;
    let arith = a.backends.arithmetic();
    let rep = confidence_cdf(&model, &ds, &arith)?;
    let (json_path, csv_path) = output_paths(&a.out, "report-confidence", None);
    report::confidence_table(&rep).write(&csv_path)?;
    let config = json!({
        "model": model_name(&a.model),
        "weights": file_name(&a.weights),
        "data": data_echo(&a.data),
        "backends": labels(&arith),
    });
    Report::new("report-confidence", None, config, rep).write(&json_path)
}

fn report_whitebox(a: WhiteboxArgs) -> Result<()> {
    check_model_path(&a.model)?;
    require_file(&a.weights, "weights")?;
    check_data(&a.data)?;
    require_out(&a.out)?;
    let model = load_model(&a.model, &a.weights)?;
    let ds = load_data(&a.data)?;
    let arith = a.backends.arithmetic();
    let mut cfg = WhiteboxConfig {
        alpha_fraction: a.alpha_fraction,
        iterations: a.iters,
        samples: a.samples,
        ..WhiteboxConfig::default()
    };
    if let Some(s) = a.schedule {
        cfg.schedule = s;
    }
    let rep = whitebox_distortion(&model, &ds, &arith, &cfg)?;
    let (json_path, csv_path) = output_paths(&a.out, "report-whitebox", None);
    report::whitebox_table(&rep).write(&csv_path)?;
    let config = json!({
        "model": model_name(&a.model),
        "weights": file_name(&a.weights),
        "data": data_echo(&a.data),
        "backends": labels(&arith),
    });
    Report::new("report-whitebox", None, config, rep).write(&json_path)
}
