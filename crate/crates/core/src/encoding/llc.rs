use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::codebook::{Codebook, DescriptorSet};
use crate::error::{Error, Result};
use crate::linalg::{check_finite, row_sq_dist};

pub const DEFAULT_LLC_REG: f64 = 1e-4;

/// Locality-constrained linear coding: each descriptor becomes an affine
/// combination of its `num_bases` nearest codewords. Output is `m × B`.
pub fn llc_encode(
    set: &DescriptorSet,
    codebook: &Codebook,
    num_bases: usize,
    reg: f64,
) -> Result<DMatrix<f64>> {
    let x = &set.descriptors;
    let b = &codebook.bases;
    if num_bases == 0 || num_bases > b.nrows() {
        return Err(Error::BadConfig(format!(
            "num_bases {num_bases} must be in 1..={}",
            b.nrows()
        )));
    }
    if reg <= 0.0 {
        return Err(Error::BadConfig("LLC regularizer must be positive".into()));
    }
    if x.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: b.ncols(),
            got: x.ncols(),
        });
    }
    check_finite(x)?;

    let mut codes = DMatrix::zeros(x.nrows(), b.nrows());
    for i in 0..x.nrows() {
        let idx = nearest_bases(x, i, b, num_bases);
        let w = local_weights(x, i, b, &idx, reg)?;
        for (&j, &wj) in idx.iter().zip(w.iter()) {
            codes[(i, j)] = wj;
        }
    }
    Ok(codes)
}

/// Indices of the `k` nearest codewords to row `i`, nearer first, lower
/// index winning ties.
pub fn nearest_bases(x: &DMatrix<f64>, i: usize, bases: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..bases.nrows())
        .map(|j| (row_sq_dist(x, i, bases, j), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

fn local_weights(
    x: &DMatrix<f64>,
    i: usize,
    bases: &DMatrix<f64>,
    idx: &[usize],
    reg: f64,
) -> Result<DVector<f64>> {
    let k = idx.len();
    let d = x.ncols();
    // shifted bases: z_j = b_j - x
    let z = DMatrix::from_fn(k, d, |r, c| bases[(idx[r], c)] - x[(i, c)]);
    let mut gram = &z * z.transpose();
    let trace = gram.trace();
    let shift = if trace > 0.0 { reg * trace } else { reg };
    for r in 0..k {
        gram[(r, r)] += shift;
    }
    let ones = DVector::from_element(k, 1.0);
    let w = gram
        .cholesky()
        .map(|c| c.solve(&ones))
        .ok_or_else(|| Error::NonConvergence("LLC local system not positive definite".into()))?;
    let s = w.sum();
    Ok(w / s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Max,
    Sum,
    Mean,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Pooling::Max),
            "sum" => Ok(Pooling::Sum),
            "mean" => Ok(Pooling::Mean),
            other => Err(Error::BadConfig(format!("unknown pooling '{other}'"))),
        }
    }
}

/// Pools an `m × B` code matrix into one `B`-vector.
pub fn pool_codes(codes: &DMatrix<f64>, mode: Pooling) -> Result<DVector<f64>> {
    let m = codes.nrows();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    let out = DVector::from_fn(codes.ncols(), |j, _| {
        let col = codes.column(j);
        match mode {
            Pooling::Max => col.max(),
            Pooling::Sum => col.sum(),
            Pooling::Mean => col.sum() / m as f64,
        }
    });
    Ok(out)
}

/// Codes and pools each video into one feature row.
pub fn encode_videos(
    sets: &[DescriptorSet],
    codebook: &Codebook,
    num_bases: usize,
    reg: f64,
    pooling: Pooling,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(sets.len(), codebook.size());
    for (r, set) in sets.iter().enumerate() {
        let codes = llc_encode(set, codebook, num_bases, reg)?;
        let pooled = pool_codes(&codes, pooling)?;
        out.set_row(r, &pooled.transpose());
    }
    Ok(out)
}
