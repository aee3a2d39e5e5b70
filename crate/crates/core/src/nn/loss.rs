use crate::matrix::{log_sum_exp, Matrix};
use crate::{floored_ln, Error, Result, PROB_FLOOR, SIMPLEX_TOL};

use super::OutputBatch;

/// Checks that every row is a probability vector: no negative or
/// non-finite entries and a sum within [`SIMPLEX_TOL`] of one.
pub fn validate_simplex_rows(m: &Matrix) -> Result<()> {
    for (i, row) in m.iter_rows().enumerate() {
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NumericDomain(format!(
                "row {i} has entry {v} outside [0, 1]"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NumericDomain(format!(
                "row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Mean soft-target cross-entropy `-(1/N) sum_n sum_i t[n,i] ln o[n,i]`,
/// with outputs clamped to [`PROB_FLOOR`] inside the log.
pub fn soft_cross_entropy(outputs: &OutputBatch, targets: &OutputBatch) -> Result<f64> {
    let (o, t) = (outputs.matrix(), targets.matrix());
    if o.rows() != t.rows() || o.cols() != t.cols() {
        return Err(Error::Shape(format!(
            "outputs are {}x{} but targets are {}x{}",
            o.rows(),
            o.cols(),
            t.rows(),
            t.cols()
        )));
    }
    if o.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if let Some(v) = o.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::NumericDomain(format!("output entry {v} is not a probability")));
    }
    let mut total = 0.0;
    for (orow, trow) in o.iter_rows().zip(t.iter_rows()) {
        total += row_cross_entropy(orow, trow);
    }
    Ok(total / o.rows() as f64)
}

#[inline]
fn row_cross_entropy(o: &[f64], t: &[f64]) -> f64 {
    -t.iter().zip(o).map(|(&ti, &oi)| ti * floored_ln(oi)).sum::<f64>()
}

/// Shannon entropy in nats; `0 ln 0` counts as zero.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Cross-entropy of one sample computed from its logits, using the clamped
/// log-softmax so it agrees with [`soft_cross_entropy`] on the posteriors.
#[inline]
pub(crate) fn logit_cross_entropy(logits: &[f64], target: &[f64]) -> f64 {
    let lse = log_sum_exp(logits);
    let floor = PROB_FLOOR.ln();
    -target
        .iter()
        .zip(logits)
        .map(|(&t, &z)| t * (z - lse).max(floor))
        .sum::<f64>()
}

/// `dL/dlogits` for one sample: `o * sum(t) - t`.
#[inline]
pub(crate) fn logit_gradient(probs: &[f64], target: &[f64], out: &mut [f64]) {
    let mass: f64 = target.iter().sum();
    for ((g, &p), &t) in out.iter_mut().zip(probs).zip(target) {
        *g = p * mass - t;
    }
}
