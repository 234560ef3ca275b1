//! Oracle comparisons shared by the oracle tests and the acceptance report.
//! Each check returns a description of the first violation.

use cdfag::age::{age_gradient, age_loss, AgeModel};
use cdfag::bench::{generate, SynthSpec};
use cdfag::data::DomainBundle;
use cdfag::encoding::{llc_encode, pca_fit, Codebook, DescriptorSet};
use cdfag::kema::{kema_fit, kema_pencil, KemaConfig};
use cdfag::spectral::{default_ridge, solve_gevd, solve_gevd_full};
use cdfag::svm::rbf_kernel;
use cdfag::svm::smo::{dual_objective, solve_dual, SubKernel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::*;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn residual_ok(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64, lambda: f64, v: &DVector<f64>) -> (f64, f64) {
    let n = a.nrows();
    let shifted = b + DMatrix::identity(n, n) * ridge;
    let r = (a * v - &shifted * v * lambda).norm();
    let bound = 1e-6 * (a.norm() + lambda.abs() * b.norm());
    (r, bound)
}

pub fn gevd_residuals_within_bound_on_random_pencils() -> Check {
    let mut rng = rng(11);
    for trial in 0..20 {
        let n = 6 + trial % 10;
        let a = random_symmetric(n, &mut rng);
        // rank-deficient right side, made definite by the ridge
        let x = random_matrix(n / 2, n, &mut rng);
        let b = x.transpose() * x;
        let ridge = default_ridge(&b).max(1e-3);
        let g = solve_gevd(&a, &b, n / 2, ridge).unwrap();
        for k in 0..g.values.len() {
            let v = g.vectors.column(k).into_owned();
            let (r, bound) = residual_ok(&a, &b, ridge, g.values[k], &v);
            ensure!(r <= bound, "trial {trial} pair {k}: residual {r:e} > {bound:e}");
        }
    }
    Ok(())
}

pub fn gevd_residuals_within_bound_on_alignment_pencil() -> Check {
    let spec = SynthSpec {
        samples_per_class: 8,
        ..SynthSpec::default()
    };
    let b = generate(&spec).unwrap();
    let bundle = DomainBundle::new(b.domains, b.class_count).unwrap();
    let config = KemaConfig {
        latent_dim: 10,
        knn_k: 5,
        ..KemaConfig::default()
    };
    let pencil = kema_pencil(&bundle, &config).unwrap();
    let model = kema_fit(&bundle, &config).unwrap();
    let ridge = default_ridge(&pencil.right);
    let alphas = model.stacked_alphas();
    for k in 0..model.latent_dim() {
        let v = alphas.column(k).into_owned();
        let (r, bound) = residual_ok(&pencil.left, &pencil.right, ridge, model.eigenvalues[k], &v);
        ensure!(r <= bound, "pair {k}: residual {r:e} > {bound:e}");
    }
    Ok(())
}

pub fn gevd_eigenvalues_match_whitened_oracle() -> Check {
    let mut rng = rng(12);
    for trial in 0..25 {
        let a = random_symmetric(8, &mut rng);
        let b = random_spd(8, 0.5, &mut rng);
        let g = solve_gevd_full(&a, &b, 0.0).unwrap();

        let (bv, bq) = jacobi_eigen(&b);
        let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(8, bv.iter().map(|l| 1.0 / l.sqrt())));
        let w = &bq * inv_sqrt * bq.transpose();
        let m = &w * &a * &w;
        let (expected, _) = jacobi_eigen(&((&m + m.transpose()) * 0.5));
        for k in 0..8 {
            ensure!(
                (g.values[k] - expected[k]).abs() <= 1e-8,
                "trial {trial} eigenvalue {k}: {} vs {}",
                g.values[k],
                expected[k]
            );
        }
    }
    Ok(())
}

fn perturbed(model: &AgeModel, which: usize, idx: usize, h: f64) -> AgeModel {
    let mut m = model.clone();
    match which {
        0 => m.w1.as_mut_slice()[idx] += h,
        1 => m.b1.as_mut_slice()[idx] += h,
        2 => m.w2.as_mut_slice()[idx] += h,
        _ => m.b2.as_mut_slice()[idx] += h,
    }
    m
}

pub fn encoder_gradient_matches_central_differences() -> Check {
    let mut rng = rng(13);
    for &(l, hdim, n) in &[(4usize, 3usize, 6usize), (5, 5, 9), (3, 7, 4)] {
        let model = AgeModel {
            w1: random_matrix(hdim, l, &mut rng),
            b1: DVector::from_fn(hdim, |_, _| rng.gen_range(-1.0..1.0)),
            w2: random_matrix(l, hdim, &mut rng),
            b2: DVector::from_fn(l, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let x = DMatrix::from_fn(n, l, |_, _| rng.gen_range(0.1..0.9));
        let t = DMatrix::from_fn(n, l, |_, _| rng.gen_range(0.1..0.9));
        let (grad, loss) = age_gradient(&model, &x, &t);
        ensure!((loss - age_loss(&model, &x, &t)).abs() < 1e-15, "loss mismatch");

        let h = 1e-5;
        let blocks = [
            grad.w1.as_slice().to_vec(),
            grad.b1.as_slice().to_vec(),
            grad.w2.as_slice().to_vec(),
            grad.b2.as_slice().to_vec(),
        ];
        for (which, g) in blocks.iter().enumerate() {
            for (idx, &analytic) in g.iter().enumerate() {
                let up = age_loss(&perturbed(&model, which, idx, h), &x, &t);
                let down = age_loss(&perturbed(&model, which, idx, -h), &x, &t);
                let fd = (up - down) / (2.0 * h);
                let scale = analytic.abs().max(fd.abs()).max(1e-6);
                ensure!(
                    (analytic - fd).abs() <= 1e-4 * scale,
                    "block {which} entry {idx}: analytic {analytic:e} vs fd {fd:e}"
                );
            }
        }
    }
    Ok(())
}

fn two_blobs(n: usize, overlap: f64, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = rng(seed);
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = DMatrix::from_fn(n, 2, |i, _| y[i] * overlap + rng.gen_range(-1.0..1.0));
    (x, y)
}

pub fn smo_objective_matches_projected_gradient_oracle() -> Check {
    for (seed, n, c, gamma) in [(1u64, 20usize, 1.0, 0.5), (2, 30, 10.0, 1.0), (3, 40, 0.5, 2.0), (4, 36, 100.0, 0.3)] {
        let (x, y) = two_blobs(n, 0.4, seed);
        let k = rbf_kernel(&x, &x, gamma);
        let idx: Vec<usize> = (0..n).collect();
        let sub = SubKernel { kernel: &k, idx: &idx };
        let sol = solve_dual(&sub, &y, c, 1e-6, 1_000_000).unwrap();
        let direct = dual_objective(&sub, &y, &sol.alpha);
        ensure!((direct - sol.objective).abs() <= 1e-9 * direct.abs().max(1.0), "objective bookkeeping {direct} vs {}", sol.objective);

        let oracle = qp_oracle(&k, &y, c, 20_000);
        let rel = (sol.objective - oracle).abs() / oracle.abs();
        ensure!(rel <= 1e-4, "n={n} C={c}: smo {} vs oracle {oracle} (rel {rel:e})", sol.objective);
    }
    Ok(())
}

pub fn llc_codes_match_constrained_least_squares() -> Check {
    let mut rng = rng(14);
    let bases = random_matrix(12, 5, &mut rng);
    let x = random_matrix(15, 5, &mut rng);
    let reg = 1e-4;
    let k = 4;
    let codes = llc_encode(
        &DescriptorSet {
            video_id: "v".into(),
            descriptors: x.clone(),
        },
        &Codebook { bases: bases.clone() },
        k,
        reg,
    )
    .unwrap();
    for i in 0..x.nrows() {
        let xi = x.row(i).transpose();
        let mut order: Vec<(f64, usize)> = (0..12)
            .map(|j| ((bases.row(j).transpose() - &xi).norm_squared(), j))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let idx: Vec<usize> = order.iter().take(k).map(|p| p.1).collect();
        let bk = DMatrix::from_fn(k, 5, |r, c| bases[(idx[r], c)]);
        let lambda = reg * idx.iter().map(|&j| (bases.row(j).transpose() - &xi).norm_squared()).sum::<f64>();

        // KKT system of min ‖x − Bkᵀw‖² + λ‖w‖² subject to Σw = 1
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let g = &bk * bk.transpose();
        for r in 0..k {
            for c in 0..k {
                kkt[(r, c)] = 2.0 * g[(r, c)];
            }
            kkt[(r, r)] += 2.0 * lambda;
            kkt[(r, k)] = 1.0;
            kkt[(k, r)] = 1.0;
        }
        let bx = &bk * &xi;
        let mut rhs: Vec<f64> = (0..k).map(|r| 2.0 * bx[r]).collect();
        rhs.push(1.0);
        let sol = gauss_solve(&kkt, &rhs);

        for j in 0..12 {
            let expected = idx.iter().position(|&b| b == j).map_or(0.0, |p| sol[p]);
            ensure!(
                (codes[(i, j)] - expected).abs() <= 1e-8,
                "row {i} basis {j}: {} vs {expected}",
                codes[(i, j)]
            );
        }
    }
    Ok(())
}

pub fn pca_matches_dense_covariance_eigendecomposition() -> Check {
    let mut rng = rng(15);
    let scales = [5.0, 3.0, 2.0, 1.0, 0.5, 0.2];
    let x = DMatrix::from_fn(60, 6, |_, j| scales[j] * rng.gen_range(-1.0..1.0) + j as f64);
    let model = pca_fit(&x, 1.0).unwrap();
    assert_eq!(model.output_dim(), 6);

    let n = x.nrows() as f64;
    let mean: Vec<f64> = (0..6).map(|j| x.column(j).sum() / n).collect();
    let cov = DMatrix::from_fn(6, 6, |a, b| {
        (0..x.nrows()).map(|i| (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b])).sum::<f64>() / n
    });
    let (vals, vecs) = jacobi_eigen(&cov);
    for r in 0..6 {
        let k = 5 - r;
        ensure!((model.eigenvalues[r] - vals[k]).abs() <= 1e-8, "eigenvalue {r}");
        let comp = model.components.row(r).transpose();
        let oracle = vecs.column(k).into_owned();
        let sign = if comp.dot(&oracle) < 0.0 { -1.0 } else { 1.0 };
        ensure!((comp - oracle * sign).amax() <= 1e-8, "eigenvector {r}");
    }
    Ok(())
}
