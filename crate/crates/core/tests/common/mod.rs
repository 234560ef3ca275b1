//! Independent reference routines for the integration tests.
#![allow(dead_code)]

pub mod oracle;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = random_matrix(n, n, rng);
    (&m + m.transpose()) * 0.5
}

/// `XᵀX + shift·I` for a random `X`.
pub fn random_spd(n: usize, shift: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let x = random_matrix(n + 2, n, rng);
    let mut b = x.transpose() * x;
    for i in 0..n {
        b[(i, i)] += shift;
    }
    b
}

/// Cyclic Jacobi rotations. Returns eigenvalues ascending and the matching
/// eigenvectors as columns.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r][order[c]]);
    (values, vectors)
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Projects `z` onto `{0 ≤ α ≤ c, yᵀα = 0}` by bisection on the multiplier.
fn project_box_hyperplane(z: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { z.iter().zip(y).map(|(&zi, &yi)| (zi - nu * yi).clamp(0.0, c)).collect() };
    let g = |nu: f64| -> f64 { at(nu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on `½ αᵀQα − eᵀα` over the SVM dual
/// feasible set. Returns the minimizer's objective.
pub fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64, iters: usize) -> f64 {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let lip = (0..n).map(|i| (0..n).map(|j| q[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lip;
    let objective = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * a[j] * q[(i, j)];
            }
        }
        0.5 * s - a.iter().sum::<f64>()
    };
    let mut x = vec![0.0; n];
    let mut yk = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q[(i, j)] * yk[j]).sum::<f64>() - 1.0)
            .collect();
        let z: Vec<f64> = (0..n).map(|i| yk[i] - step * grad[i]).collect();
        let next = project_box_hyperplane(&z, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        yk = (0..n)
            .map(|i| next[i] + (t - 1.0) / t_next * (next[i] - x[i]))
            .collect();
        if objective(&next) > objective(&x) {
            // restart momentum
            yk = next.clone();
            t = 1.0;
        } else {
            t = t_next;
        }
        x = next;
    }
    objective(&x)
}

/// Sum over classes of the trace of the within-class covariance.
pub fn within_class_variance(x: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut total = 0.0;
    for c in classes {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let n = rows.len() as f64;
        for j in 0..x.ncols() {
            let mean = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
            total += rows.iter().map(|&i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / n;
        }
    }
    total
}
