//! Multiclass RBF support vector machine (one-vs-one, majority vote).

mod cv;
pub mod smo;

use nalgebra::DMatrix;

use crate::data::select_rows;
use crate::error::{Error, Result};
use crate::linalg::row_sq_dist;
use smo::{solve_dual, SubKernel};

pub use cv::{default_c_grid, default_gamma_grid, grid_search_cv, stratified_folds, GridResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            gamma: 1.0,
            tolerance: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::BadConfig("SVM C and gamma must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::BadConfig("SVM tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// `exp(-γ‖a − b‖²)` over all row pairs.
pub fn rbf_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| (-gamma * row_sq_dist(a, i, b, j)).exp())
}

/// Binary machine separating `positive` (+1) from `negative` (−1).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub support: DMatrix<f64>,
    /// `α_i y_i` per support vector.
    pub coef: Vec<f64>,
    /// Added to the kernel expansion (`−ρ`).
    pub bias: f64,
}

impl BinaryMachine {
    pub fn decision(&self, x: &DMatrix<f64>, row: usize, gamma: f64) -> f64 {
        let mut f = self.bias;
        for (s, &a) in self.coef.iter().enumerate() {
            f += a * (-gamma * row_sq_dist(&self.support, s, x, row)).exp();
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Sorted class ids.
    pub classes: Vec<usize>,
    pub config: SvmConfig,
    /// One per class pair `(classes[a], classes[b])`, `a < b`, in order.
    pub machines: Vec<BinaryMachine>,
    pub dim: usize,
}

/// Solves one pair problem on a precomputed kernel and keeps the support
/// vectors as row indices into `kernel`.
pub(crate) struct PairFit {
    pub rows: Vec<usize>,
    pub coef: Vec<f64>,
    pub bias: f64,
}

pub(crate) fn fit_pair(
    kernel: &DMatrix<f64>,
    idx: &[usize],
    y: &[f64],
    config: &SvmConfig,
) -> Result<PairFit> {
    let sub = SubKernel { kernel, idx };
    let sol = solve_dual(&sub, y, config.c, config.tolerance, config.max_iter)?;
    let mut rows = Vec::new();
    let mut coef = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            rows.push(idx[t]);
            coef.push(a * y[t]);
        }
    }
    Ok(PairFit {
        rows,
        coef,
        bias: -sol.rho,
    })
}

/// Sorted distinct labels and, per class, the row indices carrying it.
pub(crate) fn class_index(labels: &[usize]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let members = classes
        .iter()
        .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    (classes, members)
}

/// Trains every pair machine over the rows `subset` of a precomputed kernel.
pub(crate) fn fit_ovo(
    kernel: &DMatrix<f64>,
    labels: &[usize],
    subset: &[usize],
    config: &SvmConfig,
) -> Result<(Vec<usize>, Vec<(usize, usize, PairFit)>)> {
    let sub_labels: Vec<usize> = subset.iter().map(|&i| labels[i]).collect();
    let (classes, members) = class_index(&sub_labels);
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let mut fits = Vec::new();
    for a in 0..classes.len() {
        for b in (a + 1)..classes.len() {
            let mut idx: Vec<usize> = members[a].iter().map(|&i| subset[i]).collect();
            let n_pos = idx.len();
            idx.extend(members[b].iter().map(|&i| subset[i]));
            let y: Vec<f64> = (0..idx.len()).map(|t| if t < n_pos { 1.0 } else { -1.0 }).collect();
            fits.push((classes[a], classes[b], fit_pair(kernel, &idx, &y, config)?));
        }
    }
    Ok((classes, fits))
}

/// Votes of `(positive, negative, decision)` triples; ties go to the lowest class id.
pub fn vote(classes: &[usize], decisions: impl Iterator<Item = (usize, usize, f64)>) -> usize {
    let mut votes = vec![0usize; classes.len()];
    let pos_of = |c: usize| classes.iter().position(|&k| k == c).unwrap();
    for (p, n, f) in decisions {
        if f > 0.0 {
            votes[pos_of(p)] += 1;
        } else {
            votes[pos_of(n)] += 1;
        }
    }
    let mut best = 0;
    for k in 1..votes.len() {
        if votes[k] > votes[best] {
            best = k;
        }
    }
    classes[best]
}

pub fn svm_train(features: &DMatrix<f64>, labels: &[usize], config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    if features.nrows() != labels.len() {
        return Err(Error::LengthMismatch(features.nrows(), labels.len()));
    }
    crate::linalg::check_finite(features)?;
    let kernel = rbf_kernel(features, features, config.gamma);
    let all: Vec<usize> = (0..labels.len()).collect();
    let (classes, fits) = fit_ovo(&kernel, labels, &all, config)?;
    let machines = fits
        .into_iter()
        .map(|(positive, negative, fit)| BinaryMachine {
            positive,
            negative,
            support: select_rows(features, &fit.rows),
            coef: fit.coef,
            bias: fit.bias,
        })
        .collect();
    Ok(SvmModel {
        classes,
        config: *config,
        machines,
        dim: features.ncols(),
    })
}

/// Pairwise decision values, one column per machine.
pub fn svm_decision_values(model: &SvmModel, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if features.ncols() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: features.ncols(),
        });
    }
    Ok(DMatrix::from_fn(features.nrows(), model.machines.len(), |i, m| {
        model.machines[m].decision(features, i, model.config.gamma)
    }))
}

pub fn svm_predict(model: &SvmModel, features: &DMatrix<f64>) -> Result<Vec<usize>> {
    let dec = svm_decision_values(model, features)?;
    Ok((0..features.nrows())
        .map(|i| {
            vote(
                &model.classes,
                model
                    .machines
                    .iter()
                    .enumerate()
                    .map(|(m, mach)| (mach.positive, mach.negative, dec[(i, m)])),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_separate() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        for c in [1.0, 10.0] {
            let cfg = SvmConfig { c, gamma: 0.5, ..Default::default() };
            let m = svm_train(&x, &[3, 7], &cfg).unwrap();
            assert_eq!(svm_predict(&m, &x).unwrap(), vec![3, 7]);
        }
    }

    #[test]
    fn xor_with_rbf() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let y = [0, 0, 1, 1];
        let cfg = SvmConfig { c: 10.0, gamma: 1.0, ..Default::default() };
        let m = svm_train(&x, &y, &cfg).unwrap();
        assert_eq!(svm_predict(&m, &x).unwrap(), y.to_vec());
    }

    #[test]
    fn three_way_tie_goes_to_lowest_class() {
        // 0 beats 1, 1 beats 2, 2 beats 0
        let classes = [0, 1, 2];
        let dec = [(0, 1, 1.0), (0, 2, -1.0), (1, 2, 1.0)];
        assert_eq!(vote(&classes, dec.into_iter()), 0);
    }

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            svm_train(&x, &[1, 1], &SvmConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn dimension_checked_at_predict() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let m = svm_train(&x, &[0, 1], &SvmConfig::default()).unwrap();
        assert!(svm_predict(&m, &DMatrix::zeros(1, 2)).is_err());
    }
}
