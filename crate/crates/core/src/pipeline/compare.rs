use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codebook::{CentroidTrainConfig, Codebook, Method};
use crate::nn::{Activation, Network, Optimizer, TrainConfig};
use crate::seed::{stage_seed, Stage};
use crate::synth::{self, DomainShiftSpec};
use crate::{Error, Result};

use super::{
    adapt_nle, distill, evaluate, retrain_one_hot, train_source, ts_learn, RunReport,
    UncoveredPolicy,
};

/// A row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMethod {
    /// Source model applied to target data as is.
    Unadapted,
    /// Retrained on target data with one-hot labels.
    OneHot,
    NleL2,
    NleKl,
    NleSkl,
    /// Teacher-student learning on paired frames.
    Ts,
}

impl AdaptMethod {
    pub const ALL: [AdaptMethod; 6] = [
        AdaptMethod::Unadapted,
        AdaptMethod::OneHot,
        AdaptMethod::NleL2,
        AdaptMethod::NleKl,
        AdaptMethod::NleSkl,
        AdaptMethod::Ts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdaptMethod::Unadapted => "unadapted",
            AdaptMethod::OneHot => "one_hot",
            AdaptMethod::NleL2 => "nle_l2",
            AdaptMethod::NleKl => "nle_kl",
            AdaptMethod::NleSkl => "nle_skl",
            AdaptMethod::Ts => "ts",
        }
    }

    /// Codebook distance for the NLE variants.
    pub fn codebook_method(self) -> Option<Method> {
        match self {
            AdaptMethod::NleL2 => Some(Method::L2),
            AdaptMethod::NleKl => Some(Method::Kl),
            AdaptMethod::NleSkl => Some(Method::Skl),
            _ => None,
        }
    }
}

impl fmt::Display for AdaptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdaptMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Hidden layer sizes and activation; input and output sizes come from the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn layer_dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend_from_slice(&self.hidden);
        dims.push(classes);
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub task: DomainShiftSpec,
    pub architecture: Architecture,
    pub source_train: TrainConfig,
    pub adapt_train: TrainConfig,
    pub centroid: CentroidTrainConfig,
    pub num_seeds: usize,
    /// Run `i` uses master seed `master_seed + i`; every stage derives its
    /// own seed from that.
    pub master_seed: u64,
    pub uncovered: UncoveredPolicy,
    /// Wall-clock times vary run to run; leave off for byte-identical reports.
    pub record_wall_time: bool,
    /// Worker threads across seeds; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            task: DomainShiftSpec::default_task(),
            architecture: Architecture::default(),
            source_train: TrainConfig {
                optimizer: Optimizer::Adam,
                learning_rate: 1e-3,
                batch_size: 64,
                max_epochs: 30,
                convergence_tol: 1e-6,
                seed: 0,
            },
            adapt_train: TrainConfig {
                optimizer: Optimizer::Adam,
                learning_rate: 1e-2,
                batch_size: 32,
                max_epochs: 50,
                convergence_tol: 1e-6,
                seed: 0,
            },
            centroid: CentroidTrainConfig::default(),
            num_seeds: 10,
            master_seed: 0,
            uncovered: UncoveredPolicy::Error,
            record_wall_time: false,
            threads: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.source_train.validate()?;
        self.adapt_train.validate()?;
        self.centroid.validate()?;
        if self.architecture.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer sizes must be positive".into()));
        }
        if self.num_seeds == 0 {
            return Err(Error::InvalidConfig("num_seeds must be positive".into()));
        }
        Ok(())
    }
}

/// Mean and spread of one method across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub mean_error: f64,
    /// Sample standard deviation across seeds (zero for a single run).
    pub std_error: f64,
    pub mean_epochs: f64,
    pub mean_wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    /// Grouped by method in request order, then by seed.
    pub reports: Vec<RunReport>,
    /// One per method, in request order.
    pub summaries: Vec<MethodSummary>,
}

/// Runs every requested method on `spec.num_seeds` independent draws of the
/// task. Within a seed all methods share the data, the source model and the
/// adaptation shuffle order.
pub fn compare(methods: &[AdaptMethod], spec: &ExperimentSpec) -> Result<CompareResult> {
    if methods.is_empty() {
        return Ok(CompareResult {
            reports: Vec::new(),
            summaries: Vec::new(),
        });
    }
    spec.validate()?;

    let n = spec.num_seeds;
    let threads = match spec.threads {
        0 => std::thread::available_parallelism().map_or(1, |p| p.get()),
        t => t,
    }
    .min(n);

    let slots: Mutex<Vec<Option<Result<Vec<RunReport>>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = run_seed(methods, spec, spec.master_seed.wrapping_add(i as u64));
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let mut per_seed = Vec::with_capacity(n);
    for slot in slots.into_inner().unwrap() {
        per_seed.push(slot.expect("every seed ran")?);
    }

    let mut reports = Vec::with_capacity(n * methods.len());
    let mut summaries = Vec::with_capacity(methods.len());
    for (k, method) in methods.iter().enumerate() {
        let rows: Vec<RunReport> = per_seed.iter().map(|r| r[k].clone()).collect();
        summaries.push(summarize(method.name(), &rows));
        reports.extend(rows);
    }
    Ok(CompareResult { reports, summaries })
}

fn summarize(method: &str, rows: &[RunReport]) -> MethodSummary {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.error_rate).sum::<f64>() / n;
    let var = if rows.len() > 1 {
        rows.iter().map(|r| (r.error_rate - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mean_wall_time_s = rows
        .iter()
        .map(|r| r.wall_time_s)
        .sum::<Option<f64>>()
        .map(|t| t / n);
    MethodSummary {
        method: method.to_string(),
        runs: rows.len(),
        mean_error: mean,
        std_error: var.sqrt(),
        mean_epochs: rows.iter().map(|r| r.epochs as f64).sum::<f64>() / n,
        mean_wall_time_s,
    }
}

fn run_seed(methods: &[AdaptMethod], spec: &ExperimentSpec, seed: u64) -> Result<Vec<RunReport>> {
    let task = spec.task.clone().with_seed(stage_seed(seed, Stage::Data));
    let data = synth::generate(&task)?;
    let dims = spec
        .architecture
        .layer_dims(task.feature_dim, task.num_classes);
    let init = Network::new(&dims, spec.architecture.activation, stage_seed(seed, Stage::SourceInit))?;
    let source_cfg = TrainConfig {
        seed: stage_seed(seed, Stage::SourceTrain),
        ..spec.source_train.clone()
    };
    let source = train_source(&init, &data.source, &source_cfg)?.network;
    let adapt_cfg = TrainConfig {
        seed: stage_seed(seed, Stage::Adapt),
        ..spec.adapt_train.clone()
    };
    let centroid_cfg = CentroidTrainConfig {
        seed: stage_seed(seed, Stage::Centroids),
        ..spec.centroid.clone()
    };

    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        let (network, epochs, loss_curve) = match method {
            AdaptMethod::Unadapted => (source.clone(), 0, Vec::new()),
            AdaptMethod::OneHot => {
                let out = retrain_one_hot(&source, &data.target_adapt, &adapt_cfg)?;
                (out.network, out.epochs, out.loss_curve)
            }
            AdaptMethod::NleL2 | AdaptMethod::NleKl | AdaptMethod::NleSkl => {
                let cb_method = method.codebook_method().unwrap();
                let cb = distill(&source, &data.source, cb_method, &centroid_cfg)?;
                let cb = apply_policy(cb, spec.uncovered);
                let out = adapt_nle(&source, &data.target_adapt, &cb, &adapt_cfg)?.training;
                (out.network, out.epochs, out.loss_curve)
            }
            AdaptMethod::Ts => {
                let pair_task = task.clone().with_seed(stage_seed(seed, Stage::TeacherStudent));
                let paired = synth::generate_paired(&pair_task)?;
                let out = ts_learn(
                    &source,
                    &source,
                    &paired.source_features,
                    paired.target.features(),
                    &adapt_cfg,
                )?
                .training;
                (out.network, out.epochs, out.loss_curve)
            }
        };
        let eval = evaluate(&network, &data.target_test)?;
        let wall = start.elapsed().as_secs_f64();
        reports.push(RunReport {
            method: method.name().to_string(),
            seed,
            error_rate: eval.error_rate,
            errors: eval.errors,
            n_eval: eval.n_eval,
            epochs,
            loss_curve,
            wall_time_s: spec.record_wall_time.then_some(wall),
        });
    }
    Ok(reports)
}

fn apply_policy(cb: Codebook, policy: UncoveredPolicy) -> Codebook {
    match policy {
        UncoveredPolicy::Error => cb,
        UncoveredPolicy::OneHotFallback => cb.with_one_hot_fallback(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::default();
        spec.task.source_frames_per_class = 40;
        spec.task.adapt_frames_per_class = 10;
        spec.task.test_frames_per_class = 10;
        spec.architecture.hidden = vec![8];
        spec.source_train.max_epochs = 3;
        spec.adapt_train.max_epochs = 2;
        spec.num_seeds = 2;
        spec
    }

    #[test]
    fn empty_method_list_gives_empty_result() {
        let r = compare(&[], &tiny_spec()).unwrap();
        assert!(r.reports.is_empty() && r.summaries.is_empty());
    }

    #[test]
    fn reports_follow_request_order() {
        let methods = [AdaptMethod::NleSkl, AdaptMethod::Unadapted, AdaptMethod::OneHot];
        let r = compare(&methods, &tiny_spec()).unwrap();
        let names: Vec<&str> = r.reports.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["nle_skl", "nle_skl", "unadapted", "unadapted", "one_hot", "one_hot"]);
        let summary_names: Vec<&str> = r.summaries.iter().map(|s| s.method.as_str()).collect();
        assert_eq!(summary_names, ["nle_skl", "unadapted", "one_hot"]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let methods = [AdaptMethod::OneHot, AdaptMethod::NleL2];
        let mut spec = tiny_spec();
        spec.num_seeds = 3;
        spec.threads = 1;
        let serial = compare(&methods, &spec).unwrap();
        spec.threads = 3;
        assert_eq!(compare(&methods, &spec).unwrap(), serial);
    }

    #[test]
    fn method_names_parse() {
        for m in AdaptMethod::ALL {
            assert_eq!(m.name().parse::<AdaptMethod>().unwrap(), m);
        }
        assert!(matches!("kld".parse::<AdaptMethod>(), Err(Error::UnknownMethod(_))));
    }
}
