//! The l-vector codebook: one probability vector per class, summarizing the
//! source model's output distributions for frames of that class.

mod divergence;
mod learn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, PROB_FLOOR, SIMPLEX_TOL};

pub use divergence::{kl_divergence, skl_divergence, squared_l2};
pub use learn::{
    centroid_gradient, centroid_objective, class_statistics, fit_centroids, init_logits,
    learn_kl, learn_l2, learn_skl, CentroidFit, CentroidTrainConfig, ClassStats, LogitTable,
    Objective,
};

/// Distance under which an l-vector is the centroid of its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    L2,
    Kl,
    Skl,
    /// Floored one-hot rows; a degenerate codebook equivalent to hard labels.
    OneHot,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::L2 => "l2",
            Method::Kl => "kl",
            Method::Skl => "skl",
            Method::OneHot => "one_hot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Method::L2),
            "kl" => Ok(Method::Kl),
            "skl" => Ok(Method::Skl),
            "one_hot" => Ok(Method::OneHot),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// `|C|` l-vectors, one per class. Rows of classes that never appeared in
/// the source data are absent rather than invented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodebookFile", into = "CodebookFile")]
pub struct Codebook {
    num_classes: usize,
    method: Method,
    coverage: Vec<usize>,
    rows: Vec<Option<Vec<f64>>>,
}

impl Codebook {
    /// Builds a codebook, validating every present row against the simplex
    /// constraint: strictly positive entries summing to one.
    pub fn new(method: Method, coverage: Vec<usize>, rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        let num_classes = rows.len();
        if coverage.len() != num_classes {
            return Err(Error::Shape(format!(
                "{} coverage counts for {num_classes} rows",
                coverage.len()
            )));
        }
        for (c, row) in rows.iter().enumerate() {
            if let Some(row) = row {
                validate_row(c, row, num_classes)?;
            }
        }
        Ok(Self {
            num_classes,
            method,
            coverage,
            rows,
        })
    }

    /// Every row is `1 - (|C|-1) * floor` on its own class and the
    /// probability floor elsewhere.
    pub fn floored_one_hot(num_classes: usize) -> Self {
        let rows = (0..num_classes)
            .map(|c| Some(floored_one_hot_row(c, num_classes)))
            .collect();
        Self {
            num_classes,
            method: Method::OneHot,
            coverage: vec![0; num_classes],
            rows,
        }
    }

    /// Copy with every absent row replaced by its floored one-hot row.
    pub fn with_one_hot_fallback(&self) -> Self {
        let mut out = self.clone();
        for (c, row) in out.rows.iter_mut().enumerate() {
            if row.is_none() {
                *row = Some(floored_one_hot_row(c, self.num_classes));
            }
        }
        out
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn method(&self) -> Method {
        self.method
    }

    /// Number of source frames that contributed to each row.
    #[inline]
    pub fn coverage(&self) -> &[usize] {
        &self.coverage
    }

    pub fn is_present(&self, class: usize) -> bool {
        self.rows.get(class).is_some_and(|r| r.is_some())
    }

    /// Classes with no l-vector.
    pub fn absent_classes(&self) -> Vec<usize> {
        (0..self.num_classes).filter(|&c| !self.is_present(c)).collect()
    }

    /// The l-vector of `class`.
    pub fn lookup(&self, class: usize) -> Result<&[f64]> {
        match self.rows.get(class) {
            Some(Some(row)) => Ok(row),
            _ => Err(Error::MissingEmbedding {
                classes: vec![class],
            }),
        }
    }

    pub fn rows(&self) -> &[Option<Vec<f64>>] {
        &self.rows
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a codebook and re-validates every row.
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn floored_one_hot_row(class: usize, num_classes: usize) -> Vec<f64> {
    let mut row = vec![PROB_FLOOR; num_classes];
    row[class] = 1.0 - (num_classes - 1) as f64 * PROB_FLOOR;
    row
}

fn validate_row(class: usize, row: &[f64], num_classes: usize) -> Result<()> {
    if row.len() != num_classes {
        return Err(Error::Shape(format!(
            "row {class} has {} entries, expected {num_classes}",
            row.len()
        )));
    }
    if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::NumericDomain(format!(
            "row {class} has non-positive entry {v}"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NumericDomain(format!("row {class} sums to {sum}")));
    }
    Ok(())
}

/// Restores strict positivity after underflow: clamps to the probability
/// floor and renormalizes. Rows that are already positive are untouched.
pub(crate) fn ensure_positive(row: &mut [f64]) {
    if row.iter().all(|&v| v > 0.0) {
        return;
    }
    for v in row.iter_mut() {
        *v = v.max(PROB_FLOOR);
    }
    let s: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= s;
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookFile {
    num_classes: usize,
    method: Method,
    coverage: Vec<usize>,
    rows: Vec<Option<Vec<f64>>>,
}

impl From<Codebook> for CodebookFile {
    fn from(cb: Codebook) -> Self {
        Self {
            num_classes: cb.num_classes,
            method: cb.method,
            coverage: cb.coverage,
            rows: cb.rows,
        }
    }
}

impl TryFrom<CodebookFile> for Codebook {
    type Error = Error;

    fn try_from(f: CodebookFile) -> Result<Self> {
        if f.rows.len() != f.num_classes {
            return Err(Error::Shape(format!(
                "num_classes is {} but {} rows are stored",
                f.num_classes,
                f.rows.len()
            )));
        }
        Codebook::new(f.method, f.coverage, f.rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floored_one_hot_rows_are_on_the_simplex() {
        let cb = Codebook::floored_one_hot(10);
        for c in 0..10 {
            let row = cb.lookup(c).unwrap();
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(row.iter().all(|&v| v > 0.0));
            assert_eq!(crate::matrix::argmax(row), c);
        }
    }

    #[test]
    fn lookup_errors_name_the_class() {
        let cb = Codebook::new(Method::L2, vec![2, 0], vec![Some(vec![0.7, 0.3]), None]).unwrap();
        assert_eq!(cb.lookup(0).unwrap(), &[0.7, 0.3]);
        match cb.lookup(1) {
            Err(Error::MissingEmbedding { classes }) => assert_eq!(classes, vec![1]),
            other => panic!("{other:?}"),
        }
        assert!(cb.lookup(2).is_err());
        assert!(cb.lookup(2).unwrap_err().to_string().contains('2'));
        assert_eq!(cb.absent_classes(), vec![1]);
        let filled = cb.with_one_hot_fallback();
        assert_eq!(filled.lookup(1).unwrap()[1], 1.0 - PROB_FLOOR);
    }

    #[test]
    fn json_round_trip_and_revalidation() {
        let cb = Codebook::new(
            Method::Skl,
            vec![3, 0, 1],
            vec![Some(vec![0.2, 0.3, 0.5]), None, Some(vec![0.1, 0.1, 0.8])],
        )
        .unwrap();
        let back = Codebook::from_json(&cb.to_json().unwrap()).unwrap();
        assert_eq!(back, cb);

        let bad = r#"{"num_classes":2,"method":"kl","coverage":[1,1],"rows":[[0.5,0.6],[0.5,0.5]]}"#;
        assert!(Codebook::from_json(bad).is_err());
        let zero = r#"{"num_classes":2,"method":"kl","coverage":[1,1],"rows":[[1.0,0.0],[0.5,0.5]]}"#;
        assert!(Codebook::from_json(zero).is_err());
    }

    #[test]
    fn ensure_positive_repairs_underflow_only() {
        let mut ok = vec![0.25, 0.75];
        ensure_positive(&mut ok);
        assert_eq!(ok, vec![0.25, 0.75]);
        let mut under = vec![1.0, 0.0];
        ensure_positive(&mut under);
        assert!(under[1] > 0.0);
        assert!((under.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::L2, Method::Kl, Method::Skl, Method::OneHot] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("cosine".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }
}
