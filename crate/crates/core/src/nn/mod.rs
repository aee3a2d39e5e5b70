//! Dense feedforward softmax classifier.
//!
//! Shapes: features are `N x D` row-major, outputs are `N x C` posterior rows.
//! Layer weights are row-major `(out_dim, in_dim)`.

mod gradcheck;
mod loss;
mod network;
mod train;

pub use gradcheck::gradient_check;
pub use loss::{entropy, soft_cross_entropy, validate_simplex_rows};
pub use network::{Activation, Dense, Gradients, Network};
pub use train::{train, Optimizer, TrainConfig, TrainOutcome};

use crate::matrix::Matrix;
use crate::Result;

/// A batch of rows on the probability simplex: model posteriors or soft targets.
///
/// Rows sum to one within [`crate::SIMPLEX_TOL`] and have no negative
/// entries. Zero entries are allowed so that exact one-hot targets fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBatch(Matrix);

impl OutputBatch {
    pub fn new(rows: Matrix) -> Result<Self> {
        validate_simplex_rows(&rows)?;
        Ok(Self(rows))
    }

    pub(crate) fn new_unchecked(rows: Matrix) -> Self {
        Self(rows)
    }

    /// Exact one-hot rows for the given labels.
    pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut m = Matrix::zeros(labels.len(), num_classes);
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(crate::Error::Shape(format!(
                    "label {y} at row {i} is out of range for {num_classes} classes"
                )));
            }
            m.row_mut(i)[y] = 1.0;
        }
        Ok(Self(m))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Argmax of every row, ties going to the lowest class index.
    pub fn decisions(&self) -> Vec<usize> {
        self.0.iter_rows().map(crate::matrix::argmax).collect()
    }
}
