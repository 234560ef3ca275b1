//! Structural invariants, as property tests where inputs can be drawn freely.

mod common;

use cdfag::age::{age_generalize, AgeModel};
use cdfag::bench::{generate, split_bundle, SynthSpec};
use cdfag::data::{DomainBundle, FeatureSet};
use cdfag::encoding::{llc_encode, nearest_bases, pca_fit, Codebook, DescriptorSet};
use cdfag::kema::{build_laplacians, kema_diagnostics, kema_fit, kema_pencil, KemaConfig, KernelChoice};
use cdfag::spectral::{gram, median_bandwidth, solve_gevd, solve_gevd_full, KernelSpec, Symmetrization};
use cdfag::svm::rbf_kernel;
use cdfag::svm::smo::{solve_dual, SubKernel};
use cdfag::{train_pipeline, PipelineConfig};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn labeled_set(rows: usize, cols: usize, classes: usize) -> impl Strategy<Value = FeatureSet> {
    (matrix(rows, cols), prop::collection::vec(prop::option::weighted(0.7, 0..classes), rows))
        .prop_map(|(x, labels)| FeatureSet::new(x, labels).unwrap())
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    jacobi_eigen(m).0[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplacians_have_zero_row_sums_and_are_psd(
        a in labeled_set(9, 3, 3),
        b in labeled_set(7, 2, 3),
        k in 1usize..6,
        mutual in any::<bool>(),
    ) {
        let bundle = DomainBundle::new(vec![a, b], 3).unwrap();
        let mode = if mutual { Symmetrization::Mutual } else { Symmetrization::Union };
        let lap = build_laplacians(&bundle, k, mode).unwrap();
        for l in [&lap.topology, &lap.similarity, &lap.dissimilarity] {
            for i in 0..l.nrows() {
                prop_assert!(l.row(i).sum().abs() <= 1e-8);
            }
            prop_assert!(min_eigenvalue(l) >= -1e-8);
        }
    }

    #[test]
    fn rbf_gram_is_bounded_symmetric_psd(x in matrix(12, 3)) {
        let spec = KernelSpec::rbf(median_bandwidth(&x).unwrap()).unwrap();
        let g = gram(&x, &x, spec).unwrap();
        for v in g.iter() {
            prop_assert!(*v > 0.0 && *v <= 1.0);
        }
        prop_assert!((&g - g.transpose()).amax() <= 1e-12);
        prop_assert!(min_eigenvalue(&g) >= -1e-10);
    }

    #[test]
    fn gevd_values_ascending(seed in any::<u64>(), n in 2usize..10) {
        let mut r = rng(seed);
        let a = random_symmetric(n, &mut r);
        let b = random_spd(n, 0.1, &mut r);
        let g = solve_gevd(&a, &b, n, 0.0).unwrap();
        for k in 1..n {
            prop_assert!(g.values[k - 1] <= g.values[k]);
        }
    }

    #[test]
    fn llc_rows_sum_to_one_on_nearest_bases(
        x in matrix(6, 4),
        bases in matrix(9, 4),
        num in 1usize..6,
    ) {
        let set = DescriptorSet { video_id: "v".into(), descriptors: x.clone() };
        let codes = llc_encode(&set, &Codebook { bases: bases.clone() }, num, 1e-4).unwrap();
        for i in 0..x.nrows() {
            prop_assert!((codes.row(i).sum() - 1.0).abs() <= 1e-10);
            let support: Vec<usize> = (0..9).filter(|&j| codes[(i, j)] != 0.0).collect();
            prop_assert!(support.len() <= num);
            let mut nearest = nearest_bases(&x, i, &bases, num);
            nearest.sort_unstable();
            for j in &support {
                prop_assert!(nearest.contains(j));
            }
            // independent nearest-codeword check
            let mut d: Vec<(f64, usize)> = (0..9)
                .map(|j| ((bases.row(j) - x.row(i)).norm_squared(), j))
                .collect();
            d.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            let mut brute: Vec<usize> = d.iter().take(num).map(|p| p.1).collect();
            brute.sort_unstable();
            prop_assert_eq!(&nearest, &brute);
        }
    }

    #[test]
    fn pca_components_orthonormal_and_scores_decorrelated(x in matrix(20, 5)) {
        let model = pca_fit(&x, 0.999).unwrap();
        let c = &model.components;
        let gram = c * c.transpose();
        prop_assert!((gram - DMatrix::identity(c.nrows(), c.nrows())).amax() <= 1e-8);
        let z = model.project(&x).unwrap();
        let n = z.nrows() as f64;
        let cov = z.transpose() * &z / n;
        for i in 0..cov.nrows() {
            for j in 0..cov.ncols() {
                if i != j {
                    prop_assert!(cov[(i, j)].abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn encoder_outputs_lie_strictly_inside_unit_interval(
        seed in any::<u64>(),
        x in prop::collection::vec(0.1f64..0.9, 15),
    ) {
        let mut r = rng(seed);
        let model = AgeModel {
            w1: random_matrix(4, 3, &mut r) * 3.0,
            b1: DVector::from_fn(4, |_, _| r.gen_range(-3.0..3.0)),
            w2: random_matrix(3, 4, &mut r) * 3.0,
            b2: DVector::from_fn(3, |_, _| r.gen_range(-3.0..3.0)),
        };
        let out = age_generalize(&model, &DMatrix::from_row_slice(5, 3, &x)).unwrap();
        for v in out.iter() {
            prop_assert!(*v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn smo_meets_kkt_and_constraints(seed in any::<u64>(), n in 6usize..30, c in 0.1f64..20.0) {
        let mut r = rng(seed);
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = DMatrix::from_fn(n, 2, |i, _| 0.3 * y[i] + r.gen_range(-1.0..1.0));
        let k = rbf_kernel(&x, &x, 1.0);
        let idx: Vec<usize> = (0..n).collect();
        let sub = SubKernel { kernel: &k, idx: &idx };
        let tol = 1e-3;
        let sol = solve_dual(&sub, &y, c, tol, 1_000_000).unwrap();
        let a = &sol.alpha;

        let eq: f64 = a.iter().zip(&y).map(|(ai, yi)| ai * yi).sum();
        prop_assert!(eq.abs() <= 1e-8);
        for &ai in a {
            prop_assert!((-1e-8..=c + 1e-8).contains(&ai));
        }
        // margins y_i f(x_i) with f = Σ α_j y_j K_ij − ρ
        for i in 0..n {
            let f: f64 = (0..n).map(|j| a[j] * y[j] * k[(i, j)]).sum::<f64>() - sol.rho;
            let m = y[i] * f;
            if a[i] <= 0.0 {
                prop_assert!(m >= 1.0 - tol, "free-at-zero margin {m}");
            } else if a[i] >= c {
                prop_assert!(m <= 1.0 + tol, "at-bound margin {m}");
            } else {
                prop_assert!((m - 1.0).abs() <= tol, "interior margin {m}");
            }
        }

        // no random feasible point does better
        for _ in 0..1000 {
            let mut z: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..c)).collect();
            let pos: f64 = (0..n).filter(|&i| y[i] > 0.0).map(|i| z[i]).sum();
            let neg: f64 = (0..n).filter(|&i| y[i] < 0.0).map(|i| z[i]).sum();
            // shrink the heavier side so that yᵀz = 0
            let (side, ratio) = if pos > neg { (1.0, neg / pos) } else { (-1.0, pos / neg) };
            for i in 0..n {
                if y[i] == side {
                    z[i] *= ratio;
                }
            }
            let obj = |v: &[f64]| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += v[i] * v[j] * y[i] * y[j] * k[(i, j)];
                    }
                }
                0.5 * s - v.iter().sum::<f64>()
            };
            prop_assert!(sol.objective <= obj(&z) + 1e-9);
        }
    }
}

fn synthetic_bundle(per_class: usize, seed: u64) -> DomainBundle {
    let b = generate(&SynthSpec {
        samples_per_class: per_class,
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    DomainBundle::new(b.domains, b.class_count).unwrap()
}

#[test]
fn linear_kernel_domain_rescaling_transfers_eigenpairs() {
    // without the topology term the rescaled pencil is a congruence
    // D·A·D, D·B·D with D = diag(I, s·I), so α_2 → α_2 / s keeps Z = Kα
    let bundle = synthetic_bundle(6, 3);
    let config = KemaConfig {
        kernel: KernelChoice::Fixed(KernelSpec::Linear),
        mu: 0.0,
        knn_k: 4,
        ..KemaConfig::default()
    };
    let s = 3.0;
    let mut scaled = bundle.clone();
    scaled.domains[1].features *= s;
    let p0 = kema_pencil(&bundle, &config).unwrap();
    let p1 = kema_pencil(&scaled, &config).unwrap();
    let n0 = bundle.domains[0].len();
    let n = bundle.total_samples();
    let d = DVector::from_fn(n, |i, _| if i < n0 { 1.0 } else { s * s });
    let dm = DMatrix::from_diagonal(&d);
    assert!((&dm * &p0.left * &dm - &p1.left).amax() <= 1e-9 * p1.left.amax());
    assert!((&dm * &p0.right * &dm - &p1.right).amax() <= 1e-9 * p1.right.amax());

    let ridge = 1e-6 * p0.right.trace() / n as f64;
    let g = solve_gevd_full(&p0.left, &p0.right, ridge).unwrap();
    let dinv = DMatrix::from_diagonal(&d.map(|v| 1.0 / v));
    for k in (n - 5)..n {
        let alpha = g.vectors.column(k).into_owned();
        let moved = &dinv * &alpha;
        let lambda = g.values[k];
        let lhs = &p1.left * &moved;
        let rhs = &p1.right * &moved * lambda;
        let scale = (p1.left.norm() + lambda.abs() * p1.right.norm()) * moved.norm();
        assert!((lhs - rhs).norm() <= 1e-6 * scale, "pair {k}");
        // latent coordinates of the training rows are unchanged
        let z0 = &p0.gram * &alpha;
        let z1 = &p1.gram * &moved;
        assert!((z0 - z1).amax() <= 1e-9 * alpha.amax().max(1.0) * p0.gram.amax());
    }
}

#[test]
fn raising_mu_does_not_lower_similarity_term() {
    // SIM = tr(Zᵀ L_s Z) loses weight in the numerator as μ grows
    for seed in 0..5 {
        let bundle = synthetic_bundle(8, seed);
        let fit = |mu: f64| {
            let config = KemaConfig {
                mu,
                latent_dim: 10,
                ..KemaConfig::default()
            };
            let model = kema_fit(&bundle, &config).unwrap();
            kema_diagnostics(&model, &bundle).unwrap().sim
        };
        let low = fit(0.1);
        let high = fit(0.9);
        assert!(high >= low * (1.0 - 1e-9), "seed {seed}: SIM {low} at mu=0.1, {high} at mu=0.9");
    }
}

#[test]
fn encoder_loss_settles_over_last_hundred_iterations() {
    let bundle = synthetic_bundle(30, 0);
    let config = PipelineConfig::default();
    for seed in 0..3 {
        let split = split_bundle(&bundle, &config.splits, seed).unwrap();
        let (_, trace) = train_pipeline(&split.source, &split.target, &PipelineConfig { seed, ..config.clone() }).unwrap();
        for losses in &trace.losses {
            let tail = &losses[losses.len() - 100..];
            for w in tail.windows(2) {
                assert!(w[1] <= w[0] + 1e-6, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn generalized_training_features_inside_unit_interval() {
    let bundle = synthetic_bundle(30, 1);
    let config = PipelineConfig::default();
    let split = split_bundle(&bundle, &config.splits, 1).unwrap();
    let (_, trace) = train_pipeline(&split.source, &split.target, &config).unwrap();
    for g in &trace.generalized {
        assert!(g.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}
