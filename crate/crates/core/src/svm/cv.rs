use log::debug;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{class_index, fit_ovo, rbf_kernel, vote, SvmConfig};
use crate::error::{Error, Result};

/// `2^-5, 2^-3, …, 2^15`
pub fn default_c_grid() -> Vec<f64> {
    (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect()
}

/// `2^-15, 2^-13, …, 2^3`
pub fn default_gamma_grid() -> Vec<f64> {
    (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect()
}

/// Fold id per row; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::BadConfig("cross-validation needs at least 2 folds".into()));
    }
    let (classes, members) = class_index(labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0;
    for (c, rows) in classes.iter().zip(members) {
        if rows.len() < folds {
            return Err(Error::TooFewSamples(format!(
                "class {c} has {} samples for {folds} folds",
                rows.len()
            )));
        }
        let mut rows = rows;
        rows.shuffle(&mut rng);
        for r in rows {
            fold_of[r] = next % folds;
            next += 1;
        }
    }
    Ok(fold_of)
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub config: SvmConfig,
    pub accuracy: f64,
    /// `(C, γ, mean fold accuracy)` for every cell; `NaN` when a fold
    /// failed to train.
    pub table: Vec<(f64, f64, f64)>,
}

/// Mean fold accuracy of one `(C, γ)` cell over a precomputed kernel.
pub fn cv_accuracy(
    kernel: &DMatrix<f64>,
    labels: &[usize],
    fold_of: &[usize],
    folds: usize,
    config: &SvmConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
        let (classes, fits) = fit_ovo(kernel, labels, &train, config)?;
        let mut hit = 0usize;
        for &t in &test {
            let pred = vote(
                &classes,
                fits.iter().map(|(p, n, fit)| {
                    let mut d = fit.bias;
                    for (&r, &a) in fit.rows.iter().zip(&fit.coef) {
                        d += a * kernel[(r, t)];
                    }
                    (*p, *n, d)
                }),
            );
            if pred == labels[t] {
                hit += 1;
            }
        }
        total += hit as f64 / test.len() as f64;
    }
    Ok(total / folds as f64)
}

/// Picks `(C, γ)` maximizing mean stratified k-fold accuracy; ties go to
/// the smaller C, then the smaller γ.
pub fn grid_search_cv(
    features: &DMatrix<f64>,
    labels: &[usize],
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
    base: &SvmConfig,
) -> Result<GridResult> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::BadConfig("empty SVM parameter grid".into()));
    }
    if features.nrows() != labels.len() {
        return Err(Error::LengthMismatch(features.nrows(), labels.len()));
    }
    let fold_of = stratified_folds(labels, folds, seed)?;
    let mut cs = c_grid.to_vec();
    let mut gammas = gamma_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    gammas.sort_by(f64::total_cmp);

    let mut scores = vec![vec![f64::NAN; gammas.len()]; cs.len()];
    for (gi, &gamma) in gammas.iter().enumerate() {
        let kernel = rbf_kernel(features, features, gamma);
        for (ci, &c) in cs.iter().enumerate() {
            let cfg = SvmConfig { c, gamma, ..*base };
            cfg.validate()?;
            match cv_accuracy(&kernel, labels, &fold_of, folds, &cfg) {
                Ok(acc) => scores[ci][gi] = acc,
                Err(Error::NonConvergence(msg)) => debug!("C={c} γ={gamma} skipped: {msg}"),
                Err(e) => return Err(e),
            }
        }
    }

    let mut best: Option<(usize, usize)> = None;
    let mut table = Vec::with_capacity(cs.len() * gammas.len());
    for ci in 0..cs.len() {
        for gi in 0..gammas.len() {
            let s = scores[ci][gi];
            table.push((cs[ci], gammas[gi], s));
            if s.is_nan() {
                continue;
            }
            if best.is_none_or(|(bc, bg)| s > scores[bc][bg]) {
                best = Some((ci, gi));
            }
        }
    }
    let (bc, bg) = best.ok_or_else(|| Error::NonConvergence("no grid cell converged".into()))?;
    Ok(GridResult {
        config: SvmConfig {
            c: cs[bc],
            gamma: gammas[bg],
            ..*base
        },
        accuracy: scores[bc][bg],
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let c = default_c_grid();
        assert_eq!(c.len(), 11);
        assert_eq!(c[0], 2f64.powi(-5));
        assert_eq!(*c.last().unwrap(), 2f64.powi(15));
        let g = default_gamma_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(*g.last().unwrap(), 8.0);
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let f = stratified_folds(&labels, 5, 4).unwrap();
        for fold in 0..5 {
            for c in 0..3 {
                let n = (0..30).filter(|&i| f[i] == fold && labels[i] == c).count();
                assert_eq!(n, 2);
            }
        }
        assert_eq!(f, stratified_folds(&labels, 5, 4).unwrap());
        assert!(matches!(
            stratified_folds(&[0, 0, 1], 2, 0),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn ties_pick_smallest_cell() {
        // trivially separable: every cell scores 1.0
        let x = DMatrix::from_row_slice(8, 1, &[0.0, 0.1, 0.2, 0.3, 10.0, 10.1, 10.2, 10.3]);
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let r = grid_search_cv(&x, &y, &[10.0, 1.0], &[0.5, 0.1], 2, 0, &SvmConfig::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.config.c, r.config.gamma), (1.0, 0.1));
        let one = grid_search_cv(&x, &y, &[3.0], &[0.2], 2, 0, &SvmConfig::default()).unwrap();
        assert_eq!((one.config.c, one.config.gamma), (3.0, 0.2));
    }
}
