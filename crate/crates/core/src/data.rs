//! Labeled feature matrices shared by every stage.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Class id of a sample; `None` marks an unlabeled sample.
pub type Label = Option<usize>;

/// One domain's samples (rows) with a label-or-unlabeled mark per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: DMatrix<f64>,
    pub labels: Vec<Label>,
}

impl FeatureSet {
    pub fn new(features: DMatrix<f64>, labels: Vec<Label>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::LengthMismatch(features.nrows(), labels.len()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(FeatureSet { features, labels })
    }

    pub fn unlabeled(features: DMatrix<f64>) -> Self {
        let labels = vec![None; features.nrows()];
        FeatureSet { features, labels }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes implied by the largest label present.
    pub fn class_count(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Rows carrying a label, in order, with their labels.
    pub fn labeled(&self) -> (DMatrix<f64>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i].is_some()).collect();
        let labels = idx.iter().map(|&i| self.labels[i].unwrap()).collect();
        (select_rows(&self.features, &idx), labels)
    }

    pub fn subset(&self, rows: &[usize]) -> FeatureSet {
        FeatureSet {
            features: select_rows(&self.features, rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Sorted list of distinct labels present.
    pub fn class_set(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.labels.iter().flatten().copied().collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// K domains to be aligned together.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBundle {
    pub domains: Vec<FeatureSet>,
    pub class_count: usize,
}

impl DomainBundle {
    pub fn new(domains: Vec<FeatureSet>, class_count: usize) -> Result<Self> {
        for d in &domains {
            if let Some(bad) = d.labels.iter().flatten().find(|&&l| l >= class_count) {
                return Err(Error::BadConfig(format!(
                    "label {bad} outside [0, {class_count})"
                )));
            }
        }
        Ok(DomainBundle {
            domains,
            class_count,
        })
    }

    pub fn total_samples(&self) -> usize {
        self.domains.iter().map(FeatureSet::len).sum()
    }

    /// Labels of all domains stacked in domain order.
    pub fn stacked_labels(&self) -> Vec<Label> {
        self.domains
            .iter()
            .flat_map(|d| d.labels.iter().copied())
            .collect()
    }
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Stack matrices with equal column counts vertically.
pub fn vstack(parts: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    if let Some(p) = parts.iter().find(|p| p.ncols() != cols) {
        return Err(Error::DimensionMismatch {
            expected: cols,
            got: p.ncols(),
        });
    }
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.nrows()).copy_from(*p);
        at += p.nrows();
    }
    Ok(out)
}
