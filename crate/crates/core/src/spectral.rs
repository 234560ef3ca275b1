//! Kernels, similarity graphs, graph Laplacians and a symmetric-definite
//! generalized eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::linalg::{check_finite, fix_sign, median, row_sq_dist, sym_eigen_ascending, symmetric_within};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-‖a-b‖² / (2·bandwidth²))`
    Rbf { bandwidth: f64 },
    Linear,
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KernelSpec::Rbf { bandwidth })
        } else {
            Err(Error::BadConfig(format!("rbf bandwidth {bandwidth} must be positive")))
        }
    }

    pub fn eval_rows(&self, a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
        match *self {
            KernelSpec::Rbf { bandwidth } => {
                (-row_sq_dist(a, i, b, j) / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Linear => (0..a.ncols()).map(|c| a[(i, c)] * b[(j, c)]).sum(),
        }
    }
}

/// Half the median pairwise Euclidean distance between rows.
pub fn median_bandwidth(samples: &DMatrix<f64>) -> Result<f64> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples("bandwidth needs at least two samples".into()));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(row_sq_dist(samples, i, samples, j).sqrt());
        }
    }
    let med = median(&mut d);
    if med <= 0.0 {
        return Err(Error::DegenerateData("median pairwise distance is zero".into()));
    }
    Ok(0.5 * med)
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn gram(a: &DMatrix<f64>, b: &DMatrix<f64>, spec: KernelSpec) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    Ok(match spec {
        KernelSpec::Linear => a * b.transpose(),
        KernelSpec::Rbf { .. } => DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| spec.eval_rows(a, i, b, j)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetrization {
    /// Edge when either endpoint lists the other among its k nearest.
    #[default]
    Union,
    /// Edge only when both do.
    Mutual,
}

/// k nearest neighbours of every row (self excluded), nearer first, lower
/// index winning ties.
pub fn knn_lists(samples: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = samples.nrows();
    (0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (row_sq_dist(samples, i, samples, j), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Topology weights `exp(-‖x_i - x_j‖²)` on the kNN graph, zero elsewhere.
pub fn knn_topology_weights(
    samples: &DMatrix<f64>,
    k: usize,
    mode: Symmetrization,
) -> Result<DMatrix<f64>> {
    let n = samples.nrows();
    if k == 0 || k >= n {
        return Err(Error::BadConfig(format!("knn k={k} must be in 1..{n}")));
    }
    let lists = knn_lists(samples, k);
    let mut adj = vec![vec![false; n]; n];
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            adj[i][j] = true;
        }
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let edge = match mode {
                Symmetrization::Union => adj[i][j] || adj[j][i],
                Symmetrization::Mutual => adj[i][j] && adj[j][i],
            };
            if edge && i != j {
                w[(i, j)] = (-row_sq_dist(samples, i, samples, j)).exp();
            }
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRelation {
    SameClass,
    DifferentClass,
}

/// 0/1 weights between labeled samples; unlabeled samples stay isolated.
pub fn label_weights(labels: &[Label], mode: LabelRelation) -> DMatrix<f64> {
    let n = labels.len();
    DMatrix::from_fn(n, n, |i, j| match (i != j, labels[i], labels[j]) {
        (true, Some(a), Some(b)) => {
            let hit = match mode {
                LabelRelation::SameClass => a == b,
                LabelRelation::DifferentClass => a != b,
            };
            if hit {
                1.0
            } else {
                0.0
            }
        }
        _ => 0.0,
    })
}

/// Unnormalized Laplacian `diag(row sums) - W`.
pub fn laplacian(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !symmetric_within(w, 1e-12) {
        return Err(Error::AsymmetricInput);
    }
    let n = w.nrows();
    let mut l = -w.clone();
    for i in 0..n {
        l[(i, i)] += w.row(i).sum();
    }
    Ok(l)
}

/// Topology, same-class and different-class Laplacians over the stacked samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianTriple {
    pub topology: DMatrix<f64>,
    pub similarity: DMatrix<f64>,
    pub dissimilarity: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Gevd {
    /// Ascending.
    pub values: DVector<f64>,
    /// One eigenvector per column, `vᵀ(B + ridge·I)v = 1`.
    pub vectors: DMatrix<f64>,
    pub ridge: f64,
}

/// `1e-6 · trace(B) / size`.
pub fn default_ridge(b: &DMatrix<f64>) -> f64 {
    let n = b.nrows().max(1) as f64;
    1e-6 * b.trace().max(0.0) / n
}

/// Full solution of `A v = λ (B + ridge·I) v` for symmetric `A` and
/// symmetric positive-definite `B + ridge·I`, eigenvalues ascending.
pub fn solve_gevd_full(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<Gevd> {
    let size = a.nrows();
    if a.ncols() != size || b.nrows() != size || b.ncols() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            got: b.nrows(),
        });
    }
    if !(ridge >= 0.0) {
        return Err(Error::BadConfig("ridge must be non-negative".into()));
    }
    check_finite(a)?;
    check_finite(b)?;
    let mut rhs = (b + b.transpose()) * 0.5;
    for i in 0..size {
        rhs[(i, i)] += ridge;
    }
    let chol = rhs.clone().cholesky().ok_or(Error::SingularPencil)?;
    let l = chol.l();
    let sym_a = (a + a.transpose()) * 0.5;
    // C = L⁻¹ A L⁻ᵀ
    let y = l
        .solve_lower_triangular(&sym_a)
        .ok_or(Error::SingularPencil)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::SingularPencil)?;
    let (values, w) = sym_eigen_ascending(&c)?;
    let mut vectors = l
        .transpose()
        .solve_upper_triangular(&w)
        .ok_or(Error::SingularPencil)?;
    for k in 0..size {
        let mut col: Vec<f64> = vectors.column(k).iter().copied().collect();
        fix_sign(&mut col);
        vectors.set_column(k, &DVector::from_vec(col));
    }

    Ok(Gevd {
        values,
        vectors,
        ridge,
    })
}

/// The `n` algebraically smallest eigenpairs of `A v = λ (B + ridge·I) v`.
pub fn solve_gevd(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize, ridge: f64) -> Result<Gevd> {
    if n > a.nrows() {
        return Err(Error::BadConfig(format!(
            "requested {n} eigenpairs of a {0}×{0} pencil",
            a.nrows()
        )));
    }
    let full = solve_gevd_full(a, b, ridge)?;
    let cols: Vec<usize> = (0..n).collect();
    check_residuals(a, b, &full, &cols)?;
    Ok(full.select(&cols))
}

impl Gevd {
    /// Keeps the listed eigenpairs, in the given order.
    pub fn select(&self, cols: &[usize]) -> Gevd {
        Gevd {
            values: DVector::from_iterator(cols.len(), cols.iter().map(|&k| self.values[k])),
            vectors: self.vectors.select_columns(cols),
            ridge: self.ridge,
        }
    }
}

/// Residual `‖A v − λ(B + ridge·I) v‖` of each eigenpair.
pub fn gevd_residuals(a: &DMatrix<f64>, b: &DMatrix<f64>, g: &Gevd) -> Vec<f64> {
    let mut rhs = b.clone();
    for i in 0..rhs.nrows() {
        rhs[(i, i)] += g.ridge;
    }
    (0..g.values.len())
        .map(|k| {
            let v = g.vectors.column(k);
            (a * v - &rhs * v * g.values[k]).norm()
        })
        .collect()
}

/// Fails with `NonConvergence` unless every listed pair satisfies
/// `‖A v − λ(B + ridge·I) v‖ ≤ 1e-6·(‖A‖_F + |λ|·‖B‖_F)`.
pub fn check_residuals(a: &DMatrix<f64>, b: &DMatrix<f64>, g: &Gevd, cols: &[usize]) -> Result<()> {
    let sub = g.select(cols);
    let (a_norm, b_norm) = (a.norm(), b.norm());
    for (k, r) in gevd_residuals(a, b, &sub).into_iter().enumerate() {
        let bound = 1e-6 * (a_norm + sub.values[k].abs() * b_norm);
        if !(r <= bound) {
            return Err(Error::NonConvergence(format!(
                "generalized eigenpair {} residual {r:e} above {bound:e}",
                cols[k]
            )));
        }
    }
    Ok(())
}
