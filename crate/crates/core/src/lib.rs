//! Neural label embeddings for unpaired domain adaptation.
//!
//! A source-domain classifier is distilled into a codebook of per-class
//! probability vectors ("l-vectors"), each a centroid of the classifier's
//! output distributions for frames of that class under L2, KL or symmetric KL
//! distance. A target-domain classifier is then trained with those l-vectors
//! as soft targets in place of one-hot labels. Source and target data never
//! need to be paired frame by frame.
//!
//! Layout:
//!
//! - [`nn`]: dense softmax classifier, soft-target cross-entropy, training,
//!   gradient verification.
//! - [`codebook`]: divergences and the L2 / KL / SKL centroid learners.
//! - [`synth`]: seeded Gaussian source/target tasks with a controllable shift.
//! - [`pipeline`]: the end-to-end adaptation procedure and method comparison.

pub mod codebook;
pub mod data;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use codebook::{Codebook, CentroidTrainConfig, LogitTable, Method};
pub use data::Dataset;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{Activation, Network, Optimizer, OutputBatch, TrainConfig, TrainOutcome};
pub use synth::{DomainShiftSpec, Shift};

/// Lower clamp applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on row sums for anything that must lie on the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[inline]
pub(crate) fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `|prev - cur| / |prev|`, zero when the two are equal.
pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    if prev == cur {
        0.0
    } else {
        (prev - cur).abs() / prev.abs()
    }
}
