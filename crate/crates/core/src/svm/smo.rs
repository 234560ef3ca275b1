//! SMO for the C-SVC dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  0 ≤ α_i ≤ C,  yᵀα = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! The first index of each working pair is the maximal KKT violator; the
//! second is chosen by second-order gain among the violators on the other
//! side. Ties go to the lower index.

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// Kernel entries addressed by position in the training subset.
pub trait KernelRows {
    fn len(&self) -> usize;
    fn at(&self, i: usize, j: usize) -> f64;
}

/// Dense view of a precomputed kernel matrix restricted to `idx`.
pub struct SubKernel<'a> {
    pub kernel: &'a nalgebra::DMatrix<f64>,
    pub idx: &'a [usize],
}

impl KernelRows for SubKernel<'_> {
    fn len(&self) -> usize {
        self.idx.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.kernel[(self.idx[i], self.idx[j])]
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `Σ α_i y_i K(x_i, x) − rho`.
    pub rho: f64,
    /// `½ αᵀQα − eᵀα` at the solution.
    pub objective: f64,
    pub iterations: usize,
}

pub fn solve_dual(
    k: &impl KernelRows,
    y: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution> {
    let n = k.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k.at(i, j);
    let diag: Vec<f64> = (0..n).map(|i| k.at(i, i)).collect();
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        // i: argmax over I_up of -y_t G_t
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for t in 0..n {
            if low(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v < gmin {
                    gmin = v;
                }
                if i != usize::MAX {
                    let b = gmax - v;
                    if b > 0.0 {
                        let mut a = diag[i] + diag[t] - 2.0 * k.at(i, t);
                        if a <= 0.0 {
                            a = TAU;
                        }
                        let gain = -(b * b) / a;
                        if gain < best_gain {
                            best_gain = gain;
                            j = t;
                        }
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence(format!(
                "SMO reached {max_iter} iterations (gap {:e})",
                gmax - gmin
            )));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qii = diag[i];
        let qjj = diag[j];
        let qij = q(i, j);
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // snap values within rounding of the box onto it
    for a in alpha.iter_mut() {
        if *a < c * 1e-12 {
            *a = 0.0;
        } else if *a > c * (1.0 - 1e-12) {
            *a = c;
        }
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    let objective = 0.5 * (0..n).map(|t| alpha[t] * (grad[t] - 1.0)).sum::<f64>();
    Ok(DualSolution {
        alpha,
        rho,
        objective,
        iterations,
    })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    }
}

/// `½ αᵀQα − eᵀα` computed directly.
pub fn dual_objective(k: &impl KernelRows, y: &[f64], alpha: &[f64]) -> f64 {
    let n = k.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k.at(i, j);
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}
