//! Centroid learners for the three distances.
//!
//! Both divergence objectives decompose over classes, and for one class they
//! depend on the source outputs only through three per-class means:
//! `mean(o)`, `mean(ln o)` and `mean(o ln o)`. Those are collected once, so
//! each descent epoch costs `O(|C|)` per class regardless of frame count.
//!
//! With `e = softmax(z)`, `a_i = ln e_i - mean(ln o_i)` and
//! `S = sum_i e_i a_i`:
//!
//! ```text
//! KL : L(z) = S                                      dL/dz_j = e_j (a_j - S)
//! SKL: L(z) = S - sum_i mean(o_i) ln e_i + sum_i mean(o_i ln o_i)
//!      dL/dz_j = e_j (a_j - S) - mean(o_j) + e_j sum_i mean(o_i)
//! ```

use serde::{Deserialize, Serialize};

use crate::matrix::{log_sum_exp, softmax, Matrix};
use crate::nn::OutputBatch;
use crate::{floored_ln, relative_change, Error, Result};

use super::{ensure_positive, Codebook, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentroidTrainConfig {
    pub learning_rate: f64,
    /// Zero exports the initial logits unchanged.
    pub max_epochs: usize,
    pub convergence_tol: f64,
    /// Full-batch descent draws no random numbers; carried for provenance.
    pub seed: u64,
}

impl Default for CentroidTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_epochs: 2000,
            convergence_tol: 1e-9,
            seed: 0,
        }
    }
}

impl CentroidTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "centroid learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "centroid convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Pre-softmax logits `z_c` from which the KL / SKL l-vectors are exported.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitTable {
    z: Matrix,
    defined: Vec<bool>,
}

impl LogitTable {
    pub fn new(z: Matrix, defined: Vec<bool>) -> Result<Self> {
        if z.rows() != z.cols() || defined.len() != z.rows() {
            return Err(Error::Shape(format!(
                "logit table must be |C|x|C| with |C| flags, got {}x{} and {}",
                z.rows(),
                z.cols(),
                defined.len()
            )));
        }
        Ok(Self { z, defined })
    }

    pub fn num_classes(&self) -> usize {
        self.z.rows()
    }

    pub fn row(&self, class: usize) -> Option<&[f64]> {
        self.defined[class].then(|| self.z.row(class))
    }

    pub fn is_defined(&self, class: usize) -> bool {
        self.defined[class]
    }

    /// `softmax(z_c)` for every defined class.
    pub fn export(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.num_classes())
            .map(|c| {
                self.row(c).map(|z| {
                    let mut e = softmax(z);
                    ensure_positive(&mut e);
                    e
                })
            })
            .collect()
    }
}

/// Per-class sufficient statistics of the source outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub count: usize,
    pub mean_prob: Vec<f64>,
    pub mean_log_prob: Vec<f64>,
    pub mean_prob_log_prob: Vec<f64>,
}

fn check_labels(labels: &[usize], rows: usize, num_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape(format!(
            "{} labels for {rows} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::Shape(format!(
            "label {bad} is out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// Accumulates per-class sums in row order, then divides by the count.
pub fn class_statistics(outputs: &OutputBatch, labels: &[usize]) -> Result<Vec<ClassStats>> {
    let c = outputs.num_classes();
    check_labels(labels, outputs.rows(), c)?;
    let mut stats: Vec<ClassStats> = (0..c)
        .map(|_| ClassStats {
            count: 0,
            mean_prob: vec![0.0; c],
            mean_log_prob: vec![0.0; c],
            mean_prob_log_prob: vec![0.0; c],
        })
        .collect();
    for (n, &y) in labels.iter().enumerate() {
        let s = &mut stats[y];
        s.count += 1;
        for (i, &o) in outputs.row(n).iter().enumerate() {
            let lo = floored_ln(o);
            s.mean_prob[i] += o;
            s.mean_log_prob[i] += lo;
            s.mean_prob_log_prob[i] += o * lo;
        }
    }
    for s in stats.iter_mut().filter(|s| s.count > 0) {
        let n = s.count as f64;
        for v in s
            .mean_prob
            .iter_mut()
            .chain(s.mean_log_prob.iter_mut())
            .chain(s.mean_prob_log_prob.iter_mut())
        {
            *v /= n;
        }
    }
    Ok(stats)
}

/// L2 centroids: the arithmetic mean of each class's output rows.
///
/// Sums run in row order and are divided by the class count once, so the
/// result is reproducible bit for bit.
pub fn learn_l2(outputs: &OutputBatch, labels: &[usize]) -> Result<Codebook> {
    let c = outputs.num_classes();
    check_labels(labels, outputs.rows(), c)?;
    let mut sums = vec![vec![0.0; c]; c];
    let mut coverage = vec![0usize; c];
    for (n, &y) in labels.iter().enumerate() {
        coverage[y] += 1;
        for (acc, &o) in sums[y].iter_mut().zip(outputs.row(n)) {
            *acc += o;
        }
    }
    let rows = sums
        .into_iter()
        .zip(&coverage)
        .map(|(mut row, &count)| {
            (count > 0).then(|| {
                let n = count as f64;
                for v in row.iter_mut() {
                    *v /= n;
                }
                ensure_positive(&mut row);
                row
            })
        })
        .collect();
    Codebook::new(Method::L2, coverage, rows)
}

/// `z_c` = mean of the pre-softmax rows labelled `c`.
pub fn init_logits(pre_softmax: &Matrix, labels: &[usize]) -> Result<LogitTable> {
    let c = pre_softmax.cols();
    check_labels(labels, pre_softmax.rows(), c)?;
    let mut z = Matrix::zeros(c, c);
    let mut counts = vec![0usize; c];
    for (n, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (acc, &v) in z.row_mut(y).iter_mut().zip(pre_softmax.row(n)) {
            *acc += v;
        }
    }
    for (class, &count) in counts.iter().enumerate() {
        if count > 0 {
            let n = count as f64;
            for v in z.row_mut(class) {
                *v /= n;
            }
        }
    }
    LogitTable::new(z, counts.iter().map(|&n| n > 0).collect())
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| v - lse).collect()
}

/// Divergence minimized by descent-fitted centroids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Kl,
    Skl,
}

impl Objective {
    pub fn method(self) -> Method {
        match self {
            Objective::Kl => Method::Kl,
            Objective::Skl => Method::Skl,
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.method().name())
    }
}

/// Mean divergence between `softmax(z)` and one class's outputs, evaluated
/// from its statistics.
pub fn centroid_objective(objective: Objective, z: &[f64], stats: &ClassStats) -> f64 {
    let log_e = log_softmax(z);
    let mut s = 0.0;
    for (i, &le) in log_e.iter().enumerate() {
        s += le.exp() * (le - stats.mean_log_prob[i]);
    }
    match objective {
        Objective::Kl => s,
        Objective::Skl => {
            let mut extra = 0.0;
            for (i, &le) in log_e.iter().enumerate() {
                extra += stats.mean_prob_log_prob[i] - stats.mean_prob[i] * le;
            }
            s + extra
        }
    }
}

/// Gradient of [`centroid_objective`] with respect to `z`.
pub fn centroid_gradient(objective: Objective, z: &[f64], stats: &ClassStats) -> Vec<f64> {
    let log_e = log_softmax(z);
    let e: Vec<f64> = log_e.iter().map(|v| v.exp()).collect();
    let a: Vec<f64> = log_e
        .iter()
        .zip(&stats.mean_log_prob)
        .map(|(le, ml)| le - ml)
        .collect();
    let s: f64 = e.iter().zip(&a).map(|(ei, ai)| ei * ai).sum();
    let mut g: Vec<f64> = e.iter().zip(&a).map(|(ei, ai)| ei * (ai - s)).collect();
    if objective == Objective::Skl {
        let mass: f64 = stats.mean_prob.iter().sum();
        for ((gj, ej), oj) in g.iter_mut().zip(&e).zip(&stats.mean_prob) {
            *gj += ej * mass - oj;
        }
    }
    g
}

/// Result of a gradient-descent centroid fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidFit {
    pub codebook: Codebook,
    pub logits: LogitTable,
    /// Per-class objective before descent (index 0) and after each epoch.
    pub class_curves: Vec<Vec<f64>>,
    /// Frame-weighted mean objective per epoch across all classes; classes
    /// that stopped early hold their final value.
    pub loss_curve: Vec<f64>,
}

/// Fits KL or SKL centroids by full-batch gradient descent on the logits,
/// one class at a time. Source outputs stay fixed.
pub fn fit_centroids(
    objective: Objective,
    outputs: &OutputBatch,
    labels: &[usize],
    init: &LogitTable,
    cfg: &CentroidTrainConfig,
) -> Result<CentroidFit> {
    cfg.validate()?;
    let c = outputs.num_classes();
    if init.num_classes() != c {
        return Err(Error::Shape(format!(
            "logit table has {} classes, outputs have {c}",
            init.num_classes()
        )));
    }
    let stats = class_statistics(outputs, labels)?;
    let missing: Vec<usize> = (0..c)
        .filter(|&k| stats[k].count > 0 && !init.is_defined(k))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbedding { classes: missing });
    }

    let mut z = Matrix::zeros(c, c);
    let mut defined = vec![false; c];
    let mut class_curves = vec![Vec::new(); c];
    for (k, s) in stats.iter().enumerate() {
        if s.count == 0 {
            continue;
        }
        let (zk, curve) = descend(objective, init.row(k).unwrap(), s, cfg)?;
        z.row_mut(k).copy_from_slice(&zk);
        defined[k] = true;
        class_curves[k] = curve;
    }

    let total: usize = stats.iter().map(|s| s.count).sum();
    let longest = class_curves.iter().map(Vec::len).max().unwrap_or(0);
    let loss_curve = (0..longest)
        .map(|t| {
            class_curves
                .iter()
                .zip(&stats)
                .filter(|(curve, _)| !curve.is_empty())
                .map(|(curve, s)| s.count as f64 * curve[t.min(curve.len() - 1)])
                .sum::<f64>()
                / total as f64
        })
        .collect();

    let logits = LogitTable::new(z, defined)?;
    let coverage = stats.iter().map(|s| s.count).collect();
    let codebook = Codebook::new(objective.method(), coverage, logits.export())?;
    Ok(CentroidFit {
        codebook,
        logits,
        class_curves,
        loss_curve,
    })
}

fn descend(
    objective: Objective,
    init: &[f64],
    stats: &ClassStats,
    cfg: &CentroidTrainConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut z = init.to_vec();
    let mut loss = centroid_objective(objective, &z, stats);
    let mut curve = vec![loss];
    for epoch in 1..=cfg.max_epochs {
        let g = centroid_gradient(objective, &z, stats);
        for (zi, gi) in z.iter_mut().zip(&g) {
            *zi -= cfg.learning_rate * gi;
        }
        let next = centroid_objective(objective, &z, stats);
        if !next.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                reason: format!("{objective} centroid objective became {next}"),
            });
        }
        curve.push(next);
        let change = relative_change(loss, next);
        loss = next;
        if change < cfg.convergence_tol {
            break;
        }
    }
    Ok((z, curve))
}

/// KL centroids, descending from `init`.
///
/// The minimizer over the simplex is the normalized geometric mean
/// `e_i ∝ exp(mean ln o_i)`. When `init` holds mean pre-softmax logits of the
/// same model, `softmax(init)` already equals it (log-softmax differs from
/// the logits by a per-row constant), so descent only confirms it.
pub fn learn_kl(
    outputs: &OutputBatch,
    labels: &[usize],
    init: &LogitTable,
    cfg: &CentroidTrainConfig,
) -> Result<Codebook> {
    Ok(fit_centroids(Objective::Kl, outputs, labels, init, cfg)?.codebook)
}

/// Symmetric-KL centroids, descending from `init`. There is no closed form.
pub fn learn_skl(
    outputs: &OutputBatch,
    labels: &[usize],
    init: &LogitTable,
    cfg: &CentroidTrainConfig,
) -> Result<Codebook> {
    Ok(fit_centroids(Objective::Skl, outputs, labels, init, cfg)?.codebook)
}
