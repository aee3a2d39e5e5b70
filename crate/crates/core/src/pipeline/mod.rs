//! End-to-end adaptation: train a source model, distill it into a codebook,
//! adapt a target model against the codebook's soft targets, and score it.

mod compare;
mod report;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codebook::{self, Codebook, CentroidTrainConfig, Method, Objective};
use crate::data::Dataset;
use crate::matrix::Matrix;
use crate::nn::{self, Network, OutputBatch, TrainConfig, TrainOutcome};
use crate::{Error, Result};

pub use compare::{compare, AdaptMethod, Architecture, CompareResult, ExperimentSpec, MethodSummary};
pub use report::{write_csv, write_json, write_report_files, Provenance, RunReport, CSV_HEADER};

/// What to do when target labels have no l-vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncoveredPolicy {
    #[default]
    Error,
    /// Substitute floored one-hot rows for absent classes.
    OneHotFallback,
}

/// Trains the source model on one-hot labels.
pub fn train_source(init: &Network, train: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let counts = train.class_counts();
    if counts.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::InvalidConfig(
            "source data must cover at least two classes".into(),
        ));
    }
    check_model_fits(init, train)?;
    let targets = OutputBatch::one_hot(train.labels(), train.num_classes())?;
    nn::train(init, train.features(), &targets, cfg)
}

fn check_model_fits(net: &Network, data: &Dataset) -> Result<()> {
    if net.output_dim() != data.num_classes() || net.input_dim() != data.feature_dim() {
        return Err(Error::Shape(format!(
            "network maps {} -> {} but data has {} features and {} classes",
            net.input_dim(),
            net.output_dim(),
            data.feature_dim(),
            data.num_classes()
        )));
    }
    Ok(())
}

/// Learns the l-vector codebook from one forward pass of the source data.
///
/// L2 uses the posteriors directly; KL and SKL start from the per-class mean
/// of the pre-softmax logits and descend from there.
pub fn distill(
    source: &Network,
    src: &Dataset,
    method: Method,
    cfg: &CentroidTrainConfig,
) -> Result<Codebook> {
    check_model_fits(source, src)?;
    let (outputs, logits) = source.forward_with_logits(src.features())?;
    match method {
        Method::L2 => codebook::learn_l2(&outputs, src.labels()),
        Method::Kl | Method::Skl => {
            let init = codebook::init_logits(&logits, src.labels())?;
            let objective = if method == Method::Kl {
                Objective::Kl
            } else {
                Objective::Skl
            };
            Ok(codebook::fit_centroids(objective, &outputs, src.labels(), &init, cfg)?.codebook)
        }
        Method::OneHot => Err(Error::InvalidConfig(
            "one_hot codebooks are built directly, not distilled".into(),
        )),
    }
}

/// One soft-target row per label, looked up in the codebook. Fails with every
/// uncovered label listed before anything is copied.
pub fn soft_targets(cb: &Codebook, labels: &[usize]) -> Result<OutputBatch> {
    let mut missing: Vec<usize> = labels
        .iter()
        .copied()
        .filter(|&y| !cb.is_present(y))
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::MissingEmbedding { classes: missing });
    }
    let c = cb.num_classes();
    let mut data = Vec::with_capacity(labels.len() * c);
    for &y in labels {
        data.extend_from_slice(cb.lookup(y)?);
    }
    Ok(OutputBatch::new_unchecked(Matrix::from_vec(labels.len(), c, data)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NleOutcome {
    pub training: TrainOutcome,
    /// Seconds spent building the soft-target matrix by codebook lookup.
    pub lookup_s: f64,
}

/// Trains `init` on target data with l-vectors as soft targets.
pub fn adapt_nle(
    init: &Network,
    tgt: &Dataset,
    cb: &Codebook,
    cfg: &TrainConfig,
) -> Result<NleOutcome> {
    check_model_fits(init, tgt)?;
    if cb.num_classes() != tgt.num_classes() {
        return Err(Error::Shape(format!(
            "codebook has {} classes, target data has {}",
            cb.num_classes(),
            tgt.num_classes()
        )));
    }
    let start = Instant::now();
    let targets = soft_targets(cb, tgt.labels())?;
    let lookup_s = start.elapsed().as_secs_f64();
    let training = nn::train(init, tgt.features(), &targets, cfg)?;
    Ok(NleOutcome { training, lookup_s })
}

/// Baseline: retrains `init` on target data with exact one-hot labels.
pub fn retrain_one_hot(init: &Network, tgt: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_model_fits(init, tgt)?;
    let targets = OutputBatch::one_hot(tgt.labels(), tgt.num_classes())?;
    nn::train(init, tgt.features(), &targets, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsOutcome {
    pub training: TrainOutcome,
    /// Seconds for one teacher forward pass over the paired source frames,
    /// the per-epoch cost that codebook lookup replaces.
    pub teacher_forward_s: f64,
}

/// Teacher-student learning on frame-aligned data: the student sees target
/// row `n` and is trained towards the teacher's posterior on source row `n`.
/// Pure teacher posteriors, no interpolation with hard labels.
pub fn ts_learn(
    teacher: &Network,
    student_init: &Network,
    source_features: &Matrix,
    target_features: &Matrix,
    cfg: &TrainConfig,
) -> Result<TsOutcome> {
    if source_features.rows() != target_features.rows() {
        return Err(Error::Pairing {
            source_rows: source_features.rows(),
            target_rows: target_features.rows(),
        });
    }
    if teacher.output_dim() != student_init.output_dim() {
        return Err(Error::Shape("teacher and student disagree on classes".into()));
    }
    let start = Instant::now();
    let targets = teacher.forward(source_features)?;
    let teacher_forward_s = start.elapsed().as_secs_f64();
    let training = nn::train(student_init, target_features, &targets, cfg)?;
    Ok(TsOutcome {
        training,
        teacher_forward_s,
    })
}

/// Classification result of a model on a labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub errors: usize,
    pub n_eval: usize,
    pub error_rate: f64,
    #[serde(skip)]
    pub decisions: Vec<usize>,
}

/// Error rate by argmax over posteriors, ties to the lowest class index.
pub fn evaluate(net: &Network, eval: &Dataset) -> Result<Evaluation> {
    check_model_fits(net, eval)?;
    let decisions = net.predict(eval.features())?;
    let errors = decisions
        .iter()
        .zip(eval.labels())
        .filter(|(p, y)| p != y)
        .count();
    Ok(Evaluation {
        errors,
        n_eval: eval.len(),
        error_rate: errors as f64 / eval.len() as f64,
        decisions,
    })
}
