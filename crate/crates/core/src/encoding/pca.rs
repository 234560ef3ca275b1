use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, sym_eigen_ascending};

/// Principal-component projection retaining a share of the total variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `p × d`, orthonormal rows, ordered by descending eigenvalue.
    pub components: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    pub retained_fraction: f64,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn project(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        pca_project(self, features)
    }

    /// Maps projected rows back into the input space.
    pub fn reconstruct(&self, projected: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = projected * &self.components;
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        out
    }
}

/// Population covariance (1/N) of the rows of `x`, with the column means.
pub fn covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / n);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n;
    (mean, cov)
}

/// Fits PCA keeping the smallest number of components whose cumulative
/// eigenvalue share strictly exceeds `retained_fraction`.
pub fn pca_fit(features: &DMatrix<f64>, retained_fraction: f64) -> Result<PcaModel> {
    if !(retained_fraction > 0.0 && retained_fraction <= 1.0) {
        return Err(Error::BadConfig(format!(
            "retained fraction {retained_fraction} outside (0, 1]"
        )));
    }
    if features.nrows() < 2 {
        return Err(Error::TooFewSamples("PCA needs at least two rows".into()));
    }
    check_finite(features)?;
    let (mean, cov) = covariance(features);
    if cov.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("covariance is all-zero".into()));
    }
    let (vals, vecs) = sym_eigen_ascending(&cov)?;
    let d = vals.len();
    let desc: Vec<usize> = (0..d).rev().collect();
    let eig: Vec<f64> = desc.iter().map(|&i| vals[i].max(0.0)).collect();
    let total: f64 = eig.iter().sum();

    let mut p = d;
    let mut acc = 0.0;
    for (k, &e) in eig.iter().enumerate() {
        acc += e;
        if acc / total > retained_fraction {
            p = k + 1;
            break;
        }
    }

    let components = DMatrix::from_fn(p, d, |r, c| vecs[(c, desc[r])]);
    Ok(PcaModel {
        mean,
        components,
        eigenvalues: DVector::from_iterator(p, eig.into_iter().take(p)),
        retained_fraction,
    })
}

pub fn pca_project(model: &PcaModel, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if features.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: features.ncols(),
        });
    }
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= model.mean.transpose();
    }
    Ok(centered * model.components.transpose())
}
