//! Divergences between probability vectors. Natural log, with both
//! arguments clamped to [`crate::PROB_FLOOR`] inside the logarithm.

use crate::{floored_ln, Error, Result};

fn check_lengths(e: &[f64], o: &[f64]) -> Result<()> {
    if e.len() != o.len() {
        return Err(Error::Shape(format!(
            "vectors have lengths {} and {}",
            e.len(),
            o.len()
        )));
    }
    Ok(())
}

/// `KL(e || o) = sum_i e_i ln(e_i / o_i)`.
pub fn kl_divergence(e: &[f64], o: &[f64]) -> Result<f64> {
    check_lengths(e, o)?;
    Ok(e
        .iter()
        .zip(o)
        .map(|(&ei, &oi)| ei * (floored_ln(ei) - floored_ln(oi)))
        .sum())
}

/// `SKL(e, o) = sum_i (e_i - o_i) ln(e_i / o_i) = KL(e || o) + KL(o || e)`.
pub fn skl_divergence(e: &[f64], o: &[f64]) -> Result<f64> {
    check_lengths(e, o)?;
    Ok(e
        .iter()
        .zip(o)
        .map(|(&ei, &oi)| (ei - oi) * (floored_ln(ei) - floored_ln(oi)))
        .sum())
}

/// Squared Euclidean distance.
pub fn squared_l2(e: &[f64], o: &[f64]) -> Result<f64> {
    check_lengths(e, o)?;
    Ok(e.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum())
}
