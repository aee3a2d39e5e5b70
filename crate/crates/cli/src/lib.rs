//! `nle` command-line driver. Every subcommand reads the same JSON experiment
//! config; flags override config fields, which override built-in defaults.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.
//! Failures print one JSON line `{"error": kind, "message": ...}` on stderr.

pub mod config;
pub mod summary;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nle_core::codebook::Method;
use nle_core::pipeline::{
    self, AdaptMethod, Provenance, UncoveredPolicy,
};
use nle_core::seed::{stage_seed, Stage};
use nle_core::synth;
use nle_core::{CentroidTrainConfig, Codebook, Dataset, Network, TrainConfig};
use serde_json::json;

pub use config::{ExperimentConfig, Paths, TaskConfig};
pub use summary::{relative_reduction, render_summary, Summary};

pub const GIT_DESCRIBE: &str = env!("NLE_GIT_DESCRIBE");

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    /// Single-line JSON description.
    pub fn to_line(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        json!({ "error": kind, "message": message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

impl From<nle_core::Error> for CliError {
    fn from(e: nle_core::Error) -> Self {
        match e {
            nle_core::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "nle", version = GIT_DESCRIBE)]
#[command(about = "Neural label embedding domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    data_dir: Option<PathBuf>,

    #[arg(long)]
    model_dir: Option<PathBuf>,

    #[arg(long)]
    report_dir: Option<PathBuf>,

    /// Substitute one-hot rows for classes the source data never covered
    #[arg(long)]
    allow_uncovered: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Centroid {
    L2,
    Kl,
    Skl,
}

impl From<Centroid> for Method {
    fn from(c: Centroid) -> Self {
        match c {
            Centroid::L2 => Method::L2,
            Centroid::Kl => Method::Kl,
            Centroid::Skl => Method::Skl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample source, adaptation and test sets into the data directory
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the source model on source.csv
    TrainSource {
        #[command(flatten)]
        common: Common,
    },
    /// Build a codebook from the source model and source data
    Distill {
        #[command(flatten)]
        common: Common,

        #[arg(long, value_enum)]
        method: Centroid,
    },
    /// Adapt the source model to adapt.csv
    Adapt {
        #[command(flatten)]
        common: Common,

        /// one_hot, nle_l2, nle_kl, nle_skl or ts
        #[arg(long)]
        method: AdaptMethod,
    },
    /// Score a model on a dataset
    Evaluate {
        #[command(flatten)]
        common: Common,

        /// Model JSON (default: <model_dir>/source.json)
        #[arg(long)]
        model: Option<PathBuf>,

        /// Dataset CSV (default: <data_dir>/test.csv)
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run every method over several seeds and write reports
    Compare {
        #[command(flatten)]
        common: Common,

        /// Comma-separated method list
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<AdaptMethod>>,

        #[arg(long)]
        num_seeds: Option<usize>,

        /// Worker threads across seeds (0 = all cores)
        #[arg(long)]
        threads: Option<usize>,

        /// Add wall-clock times to the reports (breaks byte-identical reruns)
        #[arg(long)]
        record_wall_time: bool,
    },
    /// Check a config; optionally print it with flags applied
    ValidateConfig {
        #[command(flatten)]
        common: Common,

        /// Print the effective config as JSON
        #[arg(long)]
        dump: bool,
    },
}

/// Parses `argv` (program name first), runs the command, and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { common } => generate(&load(&common, |_| {})?),
        Command::TrainSource { common } => train_source(&load(&common, |_| {})?),
        Command::Distill { common, method } => distill(&load(&common, |_| {})?, method.into()),
        Command::Adapt { common, method } => adapt(&load(&common, |_| {})?, method),
        Command::Evaluate { common, model, data } => {
            let cfg = load(&common, |_| {})?;
            let model = model.unwrap_or_else(|| cfg.paths.model_dir.join(SOURCE_MODEL));
            let data = data.unwrap_or_else(|| cfg.paths.data_dir.join(TEST_CSV));
            evaluate(&cfg, &model, &data)
        }
        Command::Compare {
            common,
            methods,
            num_seeds,
            threads,
            record_wall_time,
        } => {
            let cfg = load(&common, |cfg| {
                if let Some(m) = methods {
                    cfg.methods = m;
                }
                if let Some(n) = num_seeds {
                    cfg.num_seeds = n;
                }
                if let Some(t) = threads {
                    cfg.threads = t;
                }
                cfg.record_wall_time |= record_wall_time;
            })?;
            compare(&cfg)
        }
        Command::ValidateConfig { common, dump } => {
            let cfg = load(&common, |_| {})?;
            if dump {
                println!("{}", cfg.to_json());
            } else {
                println!("{}", json!({ "ok": true, "config_hash": cfg.hash() }));
            }
            Ok(())
        }
    }
}

const SOURCE_CSV: &str = "source.csv";
const ADAPT_CSV: &str = "adapt.csv";
const TEST_CSV: &str = "test.csv";
const TASK_JSON: &str = "task.json";
const SOURCE_MODEL: &str = "source.json";

/// Config file (or defaults), then flags, then validation. Warnings go to
/// stderr.
fn load(common: &Common, extra: impl FnOnce(&mut ExperimentConfig)) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &common.data_dir {
        cfg.paths.data_dir = d.clone();
    }
    if let Some(d) = &common.model_dir {
        cfg.paths.model_dir = d.clone();
    }
    if let Some(d) = &common.report_dir {
        cfg.paths.report_dir = d.clone();
    }
    if common.allow_uncovered {
        cfg.uncovered = UncoveredPolicy::OneHotFallback;
    }
    extra(&mut cfg);
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

fn read_dataset(cfg: &ExperimentConfig, file: &str, tag: &str) -> Result<Dataset, CliError> {
    let classes = cfg.task.resolve()?.num_classes;
    let path = cfg.paths.data_dir.join(file);
    Dataset::read_csv(&path, classes, tag)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_network(path: &Path) -> Result<Network, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(Network::from_json(&text)?)
}

fn write_text(dir: &Path, file: &str, text: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(file);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn codebook_file(method: Method) -> String {
    format!("codebook_{}.json", method.name())
}

fn generate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let task = cfg.task.resolve()?.with_seed(stage_seed(cfg.seed, Stage::Data));
    let data = synth::generate(&task)?;
    let dir = &cfg.paths.data_dir;
    std::fs::create_dir_all(dir)?;
    data.source.write_csv(dir.join(SOURCE_CSV))?;
    data.target_adapt.write_csv(dir.join(ADAPT_CSV))?;
    data.target_test.write_csv(dir.join(TEST_CSV))?;
    let sidecar = serde_json::to_string_pretty(&task).expect("spec serializes");
    write_text(dir, TASK_JSON, &sidecar)?;
    println!(
        "{}",
        json!({
            "source": data.source.len(),
            "adapt": data.target_adapt.len(),
            "test": data.target_test.len(),
            "data_dir": dir,
        })
    );
    Ok(())
}

fn train_source(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let source = read_dataset(cfg, SOURCE_CSV, "source")?;
    let dims = cfg
        .architecture
        .layer_dims(source.feature_dim(), source.num_classes());
    let init = Network::new(&dims, cfg.architecture.activation, stage_seed(cfg.seed, Stage::SourceInit))?;
    let train_cfg = seeded(&cfg.source_train, stage_seed(cfg.seed, Stage::SourceTrain));
    let out = pipeline::train_source(&init, &source, &train_cfg)?;
    let path = write_text(&cfg.paths.model_dir, SOURCE_MODEL, &out.network.to_json()?)?;
    println!(
        "{}",
        json!({
            "model": path,
            "epochs": out.epochs,
            "converged": out.converged,
            "final_loss": out.loss_curve.last(),
        })
    );
    Ok(())
}

fn distill(cfg: &ExperimentConfig, method: Method) -> Result<(), CliError> {
    let source = read_dataset(cfg, SOURCE_CSV, "source")?;
    let net = read_network(&cfg.paths.model_dir.join(SOURCE_MODEL))?;
    let centroid = CentroidTrainConfig {
        seed: stage_seed(cfg.seed, Stage::Centroids),
        ..cfg.centroid.clone()
    };
    let cb = pipeline::distill(&net, &source, method, &centroid)?;
    let path = write_text(&cfg.paths.model_dir, &codebook_file(method), &cb.to_json()?)?;
    println!(
        "{}",
        json!({ "codebook": path, "absent_classes": cb.absent_classes() })
    );
    Ok(())
}

fn adapt(cfg: &ExperimentConfig, method: AdaptMethod) -> Result<(), CliError> {
    let target = read_dataset(cfg, ADAPT_CSV, "target")?;
    let source = read_network(&cfg.paths.model_dir.join(SOURCE_MODEL))?;
    let train_cfg = seeded(&cfg.adapt_train, stage_seed(cfg.seed, Stage::Adapt));
    let outcome = match method {
        AdaptMethod::Unadapted => {
            return Err(CliError::Config(
                "unadapted is the source model; nothing to adapt".into(),
            ))
        }
        AdaptMethod::OneHot => pipeline::retrain_one_hot(&source, &target, &train_cfg)?,
        AdaptMethod::NleL2 | AdaptMethod::NleKl | AdaptMethod::NleSkl => {
            let cb_method = method.codebook_method().expect("nle method");
            let path = cfg.paths.model_dir.join(codebook_file(cb_method));
            let text = std::fs::read_to_string(&path).map_err(|e| {
                CliError::Runtime(format!("{}: {e} (run distill first)", path.display()))
            })?;
            let mut cb = Codebook::from_json(&text)?;
            if cfg.uncovered == UncoveredPolicy::OneHotFallback {
                cb = cb.with_one_hot_fallback();
            }
            pipeline::adapt_nle(&source, &target, &cb, &train_cfg)?.training
        }
        AdaptMethod::Ts => {
            // Files on disk are unpaired, so T/S draws its own paired set.
            let task = cfg
                .task
                .resolve()?
                .with_seed(stage_seed(cfg.seed, Stage::TeacherStudent));
            let paired = synth::generate_paired(&task)?;
            pipeline::ts_learn(
                &source,
                &source,
                &paired.source_features,
                paired.target.features(),
                &train_cfg,
            )?
            .training
        }
    };
    let path = write_text(
        &cfg.paths.model_dir,
        &format!("{}.json", method.name()),
        &outcome.network.to_json()?,
    )?;
    println!(
        "{}",
        json!({
            "model": path,
            "method": method.name(),
            "epochs": outcome.epochs,
            "converged": outcome.converged,
            "final_loss": outcome.loss_curve.last(),
        })
    );
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, model: &Path, data: &Path) -> Result<(), CliError> {
    let net = read_network(model)?;
    let classes = cfg.task.resolve()?.num_classes;
    let ds = Dataset::read_csv(data, classes, "eval")
        .map_err(|e| CliError::Runtime(format!("{}: {e}", data.display())))?;
    let eval = pipeline::evaluate(&net, &ds)?;
    println!(
        "{}",
        json!({
            "model": model,
            "data": data,
            "errors": eval.errors,
            "n_eval": eval.n_eval,
            "error_rate": eval.error_rate,
        })
    );
    Ok(())
}

fn compare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let result = pipeline::compare(&cfg.methods, &spec)?;
    let provenance = Provenance {
        git_describe: GIT_DESCRIBE.to_string(),
        config_hash: cfg.hash(),
    };
    let dir = &cfg.paths.report_dir;
    pipeline::write_report_files(dir, "compare", &result.reports, &result.summaries, Some(&provenance))?;
    let summary = render_summary(&result.reports)?;
    let header = format!(
        "# git {} config {}\n",
        provenance.git_describe, provenance.config_hash
    );
    write_text(dir, "summary.csv", &summary.csv)?;
    write_text(dir, "summary.txt", &format!("{header}{}", summary.text))?;
    print!("{header}{}", summary.text);
    Ok(())
}
