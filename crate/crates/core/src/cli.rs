//! The `dialingle` command line.
//!
//! Exit codes: 0 ok, 1 validation, 2 I/O, 3 server. Every subcommand is
//! non-interactive; machine-readable output is line-delimited JSON.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::api::{self, AppState};
use crate::classifier::{
    evaluate, split_train_test, train, Budget, ClassifierError, Dataset, ModelConfig, TrainedModel,
};
use crate::config::{Config, ConfigError};
use crate::corpus::{RegistryFile, Store, StoreError};
use crate::game::{Engine, EngineConfig, GameError, RetrainMode, Training};
use crate::geo::DivisionFile;
use crate::selection::Tier;
use crate::sim::{simulate_with, HttpTransport, RouterTransport, SimConfig, SimError};
use crate::synth::SyntheticFamily;
use crate::text::SystemClock;

#[derive(Debug, Parser)]
#[command(name = "dialingle", version, about = "Dialect data collection game: corpus, classifier and server tooling")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "DIALINGLE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Data directory; overrides the config file.
    #[arg(long, global = true, env = "DIALINGLE_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register a family and load its seed corpus.
    Ingest(IngestArgs),
    /// Train (or autotune) the family's model and save it.
    Train(TrainArgs),
    /// Train on 80% and report F1 on the held-out 20%.
    Eval(EvalArgs),
    /// Score every group and write the difficulty report.
    Rescore(RescoreArgs),
    /// Run the HTTP server.
    Serve,
    /// Play quiz rounds with simulated speakers through the API.
    Simulate(SimulateArgs),
    /// Write one of the bundled synthetic families to disk.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub registry: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub divisions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub autotune: bool,
    /// Autotune wall-clock budget in seconds.
    #[arg(long, default_value_t = 30)]
    pub budget: u64,
    #[arg(long, default_value_t = 2_097_152)]
    pub max_bytes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RescoreArgs {
    #[arg(long)]
    pub family: String,
    /// Report path; defaults to `<data>/reports/<family>-difficulty.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long, default_value_t = 200)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.9)]
    pub confirm_accuracy: f64,
    /// Base URL of a running server; without it the API runs in-process.
    #[arg(long)]
    pub server: Option<String>,
    /// In-process only: start from a fresh in-memory copy of the bundled
    /// synthetic family instead of the data directory.
    #[arg(long)]
    pub scratch: bool,
    /// Seed groups for `--scratch`.
    #[arg(long, default_value_t = 300)]
    pub groups: usize,
    /// Seed of the synthetic family (lexicon and corpus).
    #[arg(long, default_value_t = 0)]
    pub synth_seed: u64,
    /// Held-out sentences per dialect for the F1 measurements.
    #[arg(long, default_value_t = 100)]
    pub holdout: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `tri`, `octo` or `duo`.
    #[arg(long)]
    pub family: String,
    #[arg(long, default_value_t = 300)]
    pub groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn server(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Io(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        Self::validation(format!("{}: {e}", e.code()))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match &e {
            SimError::Api { status, .. } if *status < 500 => Self::validation(e.to_string()),
            SimError::FamilyMissing(_) => Self::validation(e.to_string()),
            _ => Self::server(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

/// Entry point for the binary: parses `std::env::args`, prints to the
/// standard streams and returns the exit code.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_from(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_from(
    args: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    init_tracing(matches!(cli.command, Command::Serve));
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn init_tracing(verbose: bool) {
    let default = if verbose { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(d) = cli.data_dir {
        config.data_dir = d;
    }
    match cli.command {
        Command::Ingest(a) => ingest(&config, a, out),
        Command::Train(a) => train_cmd(&config, a, out),
        Command::Eval(a) => eval_cmd(&config, a, out),
        Command::Rescore(a) => rescore(&config, a, out),
        Command::Serve => serve(&config),
        Command::Simulate(a) => simulate_cmd(&config, a, out),
        Command::Synth(a) => synth(a, out),
    }
}

fn open_store(config: &Config) -> Result<Arc<Store>, CliError> {
    Ok(Arc::new(Store::open(&config.data_dir, Arc::new(SystemClock))?))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| CliError::io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn ingest(config: &Config, a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let registry: RegistryFile = read_json(&a.registry)?;
    if registry.family.family_id != a.family {
        return Err(CliError::validation(format!(
            "registry describes family {}, not {}",
            registry.family.family_id, a.family
        )));
    }
    let divisions: Option<DivisionFile> = a.divisions.as_deref().map(read_json).transpose()?;
    let store = open_store(config)?;
    store.register_family(registry, divisions)?;
    let groups = store.ingest_corpus(&a.corpus, &a.family)?;
    let labels = store.snapshot(&a.family)?.labels().len();
    writeln!(out, "groups: {groups}, labels: {labels}")?;
    Ok(())
}

fn fixed_engine(store: Arc<Store>, training: Training, seed: u64) -> Engine {
    Engine::new(
        store,
        EngineConfig { retrain_mode: RetrainMode::Manual, training, seed: Some(seed), ..EngineConfig::default() },
    )
}

fn train_cmd(config: &Config, a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = open_store(config)?;
    let training = if a.autotune {
        Training::Autotune { budget: Budget::WallClock(Duration::from_secs(a.budget)), max_bytes: a.max_bytes }
    } else {
        Training::Fixed(ModelConfig { seed: a.seed, ..ModelConfig::default() })
    };
    let engine = fixed_engine(store, training, a.seed);
    let outcome = engine.retrain(&a.family)?;
    emit(out, &outcome)
}

fn eval_cmd(config: &Config, a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = open_store(config)?;
    let view = store.snapshot(&a.family)?;
    let data = Dataset::from_view(&view);
    if data.observed_labels().len() < 2 {
        return Err(ClassifierError::SingleClassCorpus.into());
    }
    let saved = config.data_dir.join("models").join(format!("{}.dlg", a.family));
    let model_config = match TrainedModel::load(&saved) {
        Ok(m) => ModelConfig { seed: a.seed, ..m.config().clone() },
        Err(_) => ModelConfig { seed: a.seed, ..ModelConfig::default() },
    };
    let split = split_train_test(&data.items, 0.8, a.seed);
    let model = train(&split.train, &data.label_index, &model_config)?;
    let report = evaluate(&model, &split.test)?.with_split_seed(a.seed);
    if a.json {
        return emit(out, &report);
    }
    writeln!(out, "micro_f1 {:.4}", report.micro_f1)?;
    writeln!(out, "macro_f1 {:.4}", report.macro_f1)?;
    writeln!(out, "{:<24} {:>9} {:>9} {:>9} {:>8}", "label", "precision", "recall", "f1", "support")?;
    for (label, s) in &report.per_class {
        writeln!(out, "{label:<24} {:>9.4} {:>9.4} {:>9.4} {:>8}", s.precision, s.recall, s.f1, s.support)?;
    }
    Ok(())
}

fn rescore(config: &Config, a: RescoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = open_store(config)?;
    let engine = fixed_engine(store, Training::Fixed(ModelConfig { seed: a.seed, ..ModelConfig::default() }), a.seed);
    let table = engine.tier_table(&a.family)?;
    let path = a
        .out
        .unwrap_or_else(|| config.data_dir.join("reports").join(format!("{}-difficulty.jsonl", a.family)));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    for r in &table.records {
        serde_json::to_writer(&mut buf, r).map_err(|e| CliError::io(e.to_string()))?;
        buf.push(b'\n');
    }
    std::fs::write(&path, buf)?;
    let counts = table.counts();
    let n = |t| counts.get(&t).copied().unwrap_or(0);
    writeln!(
        out,
        "EASY: {}, NORMAL: {}, HARD: {} -> {}",
        n(Tier::Easy),
        n(Tier::Normal),
        n(Tier::Hard),
        path.display()
    )?;
    Ok(())
}

fn serve(config: &Config) -> Result<(), CliError> {
    let store = open_store(config)?;
    let engine = Engine::new(store, config.engine_config());
    engine.warm_up()?;
    let runtime = tokio::runtime::Runtime::new()?;
    let state = AppState { engine, async_retrain: config.async_retrain };
    runtime
        .block_on(api::serve(state, config.listen, &config.cors_origins))
        .map_err(|e| CliError::server(format!("server failed: {e}")))
}

fn simulate_cmd(config: &Config, a: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let reference = SyntheticFamily::by_name(&a.family, 0, a.synth_seed)
        .ok_or_else(|| CliError::validation(format!("no simulated speakers for family {}", a.family)))?;
    let sim = SimConfig {
        family_id: a.family.clone(),
        rounds: a.rounds,
        seed: a.seed,
        confirm_accuracy: a.confirm_accuracy,
        speakers: reference.speakers.clone(),
        holdout: reference.holdout(a.holdout, a.seed),
    };
    let mut log_err = None;
    let mut on_round = |r: &crate::sim::RoundLog| {
        if log_err.is_none() {
            log_err = emit(out, r).err();
        }
    };
    let report = match &a.server {
        Some(url) => simulate_with(&mut HttpTransport::new(url.clone()), &sim, &mut on_round)?,
        None => {
            let store = if a.scratch {
                let fam = SyntheticFamily::by_name(&a.family, a.groups, a.synth_seed).expect("checked above");
                let store = Arc::new(Store::in_memory(Arc::new(SystemClock)));
                store.register_family(fam.registry.clone(), Some(fam.divisions.clone()))?;
                let mut lines = Vec::new();
                for r in &fam.records {
                    serde_json::to_writer(&mut lines, r).map_err(|e| CliError::io(e.to_string()))?;
                    lines.push(b'\n');
                }
                store.ingest_reader(&lines[..], &a.family)?;
                store
            } else {
                open_store(config)?
            };
            let engine = Engine::new(
                store,
                EngineConfig {
                    retrain_mode: RetrainMode::Inline,
                    seed: Some(a.seed),
                    ..config.engine_config()
                },
            );
            let router = api::router(AppState { engine, async_retrain: false }, &[]);
            simulate_with(&mut RouterTransport::new(router), &sim, &mut on_round)?
        }
    };
    if let Some(e) = log_err {
        return Err(e);
    }
    emit(out, &serde_json::json!({ "summary": report.summary }))
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fam = SyntheticFamily::by_name(&a.family, a.groups, a.seed)
        .ok_or_else(|| CliError::validation(format!("unknown synthetic family {} (tri, octo, duo)", a.family)))?;
    let files = fam.write_to(&a.out)?;
    writeln!(
        out,
        "--family {} --registry {} --corpus {} --divisions {}",
        a.family,
        files.registry.display(),
        files.corpus.display(),
        files.divisions.display()
    )?;
    Ok(())
}
