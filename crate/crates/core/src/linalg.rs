//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean distance between row `i` of `a` and row `j` of `b`.
pub fn row_sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        s += d * d;
    }
    s
}

pub fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

/// Flip `v` so its largest-magnitude entry is positive (first one on ties).
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending and
/// eigenvectors (columns) sign-normalized.
pub fn sym_eigen_ascending(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::NonConvergence("symmetric eigendecomposition".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        fix_sign(&mut col);
        vectors.set_column(k, &DVector::from_vec(col));
    }
    Ok((values, vectors))
}

pub fn symmetric_within(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    if m.ncols() != n {
        return false;
    }
    let scale = m.amax().max(1.0);
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

/// Median of a non-empty slice; even counts average the two central values.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_rule_prefers_first_on_ties() {
        let mut v = vec![-1.0, 1.0];
        fix_sign(&mut v);
        assert_eq!(v, vec![1.0, -1.0]);
        let mut v = vec![0.1, -3.0, 2.0];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 3.0, -2.0]);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn eigen_sorted_ascending() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let (vals, vecs) = sym_eigen_ascending(&m).unwrap();
        assert_eq!(vals.as_slice(), &[1.0, 3.0]);
        assert!((vecs[(1, 0)] - 1.0).abs() < 1e-12);
    }
}
