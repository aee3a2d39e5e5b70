use std::path::{Path, PathBuf};

use nle_core::codebook::CentroidTrainConfig;
use nle_core::nn::TrainConfig;
use nle_core::pipeline::{AdaptMethod, Architecture, ExperimentSpec, UncoveredPolicy};
use nle_core::synth::DomainShiftSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Class inventory of the full-scale acoustic model (one output per senone).
pub const SENONE_INVENTORY: usize = 9404;
/// Above this many classes the default sizes stop being desk scale.
pub const DESK_SCALE_MAX_CLASSES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
        }
    }
}

/// Either a registered task name or a full generator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskConfig {
    Named(String),
    Spec(DomainShiftSpec),
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Named("default".into())
    }
}

impl TaskConfig {
    pub fn resolve(&self) -> Result<DomainShiftSpec, CliError> {
        match self {
            TaskConfig::Named(name) if name == "default" => Ok(DomainShiftSpec::default_task()),
            TaskConfig::Named(name) => Err(CliError::Config(format!(
                "unknown task {name:?}; registered tasks: default"
            ))),
            TaskConfig::Spec(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub task: TaskConfig,
    pub architecture: Architecture,
    pub source_train: TrainConfig,
    pub adapt_train: TrainConfig,
    pub centroid: CentroidTrainConfig,
    pub methods: Vec<AdaptMethod>,
    pub num_seeds: usize,
    pub seed: u64,
    pub uncovered: UncoveredPolicy,
    pub record_wall_time: bool,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let spec = ExperimentSpec::default();
        Self {
            paths: Paths::default(),
            task: TaskConfig::default(),
            architecture: spec.architecture,
            source_train: spec.source_train,
            adapt_train: spec.adapt_train,
            centroid: spec.centroid,
            methods: AdaptMethod::ALL.to_vec(),
            num_seeds: spec.num_seeds,
            seed: spec.master_seed,
            uncovered: spec.uncovered,
            record_wall_time: spec.record_wall_time,
            threads: spec.threads,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            for p in [
                &mut cfg.paths.data_dir,
                &mut cfg.paths.model_dir,
                &mut cfg.paths.report_dir,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<ExperimentSpec, CliError> {
        Ok(ExperimentSpec {
            task: self.task.resolve()?,
            architecture: self.architecture.clone(),
            source_train: self.source_train.clone(),
            adapt_train: self.adapt_train.clone(),
            centroid: self.centroid.clone(),
            num_seeds: self.num_seeds,
            master_seed: self.seed,
            uncovered: self.uncovered,
            record_wall_time: self.record_wall_time,
            threads: self.threads,
        })
    }

    /// Checks the config and returns warnings that do not block a run.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let spec = self.spec()?;
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".into()));
        }
        for (name, dir) in [
            ("data_dir", &self.paths.data_dir),
            ("model_dir", &self.paths.model_dir),
            ("report_dir", &self.paths.report_dir),
        ] {
            check_dir(name, dir)?;
        }

        let mut warnings = Vec::new();
        let classes = spec.task.num_classes;
        if classes == SENONE_INVENTORY {
            warnings.push(format!(
                "num_classes = {classes} matches the full-scale senone inventory \
                 but exceeds desk-scale defaults (<= {DESK_SCALE_MAX_CLASSES})"
            ));
        } else if classes > DESK_SCALE_MAX_CLASSES {
            warnings.push(format!(
                "num_classes = {classes} exceeds desk-scale defaults (<= {DESK_SCALE_MAX_CLASSES})"
            ));
        }
        if let Some(&narrowest) = self.architecture.hidden.iter().min() {
            if narrowest < classes {
                warnings.push(format!(
                    "narrowest hidden layer ({narrowest}) is smaller than the class count ({classes})"
                ));
            }
        }
        Ok(warnings)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

/// A directory is resolvable if it exists, or if its parent does so it can
/// be created.
fn check_dir(name: &str, dir: &Path) -> Result<(), CliError> {
    if dir.as_os_str().is_empty() {
        return Err(CliError::Config(format!("{name} is empty")));
    }
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::Config(format!(
                "{name} {} is not a directory",
                dir.display()
            )));
        }
        return Ok(());
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(CliError::Config(format!(
            "{name} {} cannot be created: {} does not exist",
            dir.display(),
            parent.display()
        )));
    }
    Ok(())
}
