//! Labelled feature frames from one domain.

use std::path::Path;

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    domain_tag: String,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        domain_tag: impl Into<String>,
    ) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Shape("a dataset needs at least one frame".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} frames",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Shape(format!(
                "label {bad} is out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            domain_tag: domain_tag.into(),
        })
    }

    #[inline]
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn domain_tag(&self) -> &str {
        &self.domain_tag
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Frames per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Same frames reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(order),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            domain_tag: self.domain_tag.clone(),
        }
    }

    /// Writes `f0,...,f{D-1},label` rows with a header line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.feature_dim()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (row, &y) in self.features.iter_rows().zip(&self.labels) {
            record.clear();
            // Display for f64 prints the shortest string that parses back exactly
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(y.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(
        path: impl AsRef<Path>,
        num_classes: usize,
        domain_tag: impl Into<String>,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        let well_formed = header.len() >= 2
            && header.get(dim) == Some("label")
            && (0..dim).all(|j| header.get(j) == Some(format!("f{j}").as_str()));
        if !well_formed {
            return Err(Error::Shape(format!(
                "expected header f0..f{{D-1}},label, got {header:?}"
            )));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::Shape(format!(
                    "record {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    dim + 1
                )));
            }
            for field in rec.iter().take(dim) {
                data.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::Shape(format!("record {}: bad feature `{field}`: {e}", line + 1))
                })?);
            }
            let label = rec[dim].trim();
            labels.push(label.parse::<usize>().map_err(|e| {
                Error::Shape(format!("record {}: bad label `{label}`: {e}", line + 1))
            })?);
        }
        let features = Matrix::from_vec(labels.len(), dim, data)?;
        Dataset::new(features, labels, num_classes, domain_tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let x = Matrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-300, 12345.678901234567]]).unwrap();
        let d = Dataset::new(x, vec![1, 0], 2, "source").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("f0,f1,label\n"));
        assert_eq!(Dataset::read_csv(&path, 2, "source").unwrap(), d);
    }

    #[test]
    fn invalid_datasets_are_rejected() {
        assert!(Dataset::new(Matrix::zeros(0, 2), vec![], 2, "x").is_err());
        assert!(Dataset::new(Matrix::zeros(1, 2), vec![2], 2, "x").is_err());
        assert!(Dataset::new(Matrix::zeros(2, 2), vec![0], 2, "x").is_err());
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,0\n").unwrap();
        assert!(Dataset::read_csv(&path, 2, "x").is_err());
    }
}
