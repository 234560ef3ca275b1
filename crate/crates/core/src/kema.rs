//! Semi-supervised kernel manifold alignment of K domains into one shared
//! latent space.
//!
//! All domains are stacked into a single sample set of size `N = Σ m_k`.
//! Three graphs are built over it: a per-domain kNN topology graph
//! (block-diagonal), a same-class graph and a different-class graph (both
//! spanning domains, labeled samples only). With block-diagonal kernel
//! matrix `K` the projection coefficients `Λ` solve
//!
//! ```text
//! K (μ L_t + (1 − μ) L_s) K Λ = λ (K L_d K + ridge·I) Λ
//! ```
//!
//! for the smallest eigenvalues. The rows of `Λ` belonging to domain `k`
//! form `α_k`, and a new sample `x` of that domain maps to
//! `α_kᵀ [k(a_1, x), …, k(a_{m_k}, x)]` over the domain's anchors `a_i`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::data::DomainBundle;
use crate::error::{Error, Result};
use crate::spectral::{
    check_residuals, default_ridge, gram, knn_topology_weights, label_weights, laplacian,
    median_bandwidth, solve_gevd_full, KernelSpec, LabelRelation, LaplacianTriple, Symmetrization,
};

/// Modes whose different-class energy `vᵀ K L_d K v` is below this share of
/// their normalization `vᵀ(K L_d K + ridge·I)v = 1` are spurious: the
/// denominator is pure ridge, so the eigenvalue says nothing about class
/// separation. The all-constant latent axis is the typical case.
pub const SPURIOUS_ENERGY: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    /// RBF with bandwidth set to half the median pairwise distance of each
    /// domain's training samples.
    RbfMedian,
    Fixed(KernelSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KemaConfig {
    pub mu: f64,
    pub latent_dim: usize,
    pub knn_k: usize,
    /// `None` selects `1e-6 · trace(B) / N`.
    pub ridge: Option<f64>,
    pub kernel: KernelChoice,
    pub symmetrization: Symmetrization,
}

impl Default for KemaConfig {
    fn default() -> Self {
        KemaConfig {
            mu: 0.1,
            latent_dim: 100,
            knn_k: 10,
            ridge: None,
            kernel: KernelChoice::RbfMedian,
            symmetrization: Symmetrization::Union,
        }
    }
}

impl KemaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::BadConfig(format!("mu {} outside [0, 1]", self.mu)));
        }
        if self.latent_dim == 0 {
            return Err(Error::BadConfig("latent dimension must be positive".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::BadConfig("knn k must be positive".into()));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0) {
                return Err(Error::BadConfig("ridge must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Fitted alignment: per-domain anchors, kernels and coefficient blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    pub anchors: Vec<DMatrix<f64>>,
    pub kernels: Vec<KernelSpec>,
    /// `m_k × n` per domain.
    pub alphas: Vec<DMatrix<f64>>,
    /// Ascending, length `n`.
    pub eigenvalues: DVector<f64>,
    pub config: KemaConfig,
}

impl AlignmentModel {
    pub fn latent_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn domain_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn input_dim(&self, domain: usize) -> Option<usize> {
        self.anchors.get(domain).map(|a| a.ncols())
    }

    /// `Λ` with the domain blocks stacked in order.
    pub fn stacked_alphas(&self) -> DMatrix<f64> {
        let n = self.latent_dim();
        let rows: usize = self.alphas.iter().map(|a| a.nrows()).sum();
        let mut out = DMatrix::zeros(rows, n);
        let mut at = 0;
        for a in &self.alphas {
            out.rows_mut(at, a.nrows()).copy_from(a);
            at += a.nrows();
        }
        out
    }
}

/// Everything that goes into the eigenproblem.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub kernels: Vec<KernelSpec>,
    /// Block-diagonal `N × N` kernel matrix.
    pub gram: DMatrix<f64>,
    pub laplacians: LaplacianTriple,
    /// `K (μ L_t + (1 − μ) L_s) K`
    pub left: DMatrix<f64>,
    /// `K L_d K`, without ridge.
    pub right: DMatrix<f64>,
}

fn domain_kernels(bundle: &DomainBundle, choice: KernelChoice) -> Result<Vec<KernelSpec>> {
    bundle
        .domains
        .iter()
        .map(|d| match choice {
            KernelChoice::RbfMedian => KernelSpec::rbf(median_bandwidth(&d.features)?),
            KernelChoice::Fixed(spec) => Ok(spec),
        })
        .collect()
}

/// The three Laplacians over the stacked samples of `bundle`.
pub fn build_laplacians(
    bundle: &DomainBundle,
    knn_k: usize,
    symmetrization: Symmetrization,
) -> Result<LaplacianTriple> {
    let total = bundle.total_samples();
    let mut w_t = DMatrix::zeros(total, total);
    let mut at = 0;
    for (k, d) in bundle.domains.iter().enumerate() {
        let m = d.len();
        if m >= 2 {
            let k_eff = knn_k.min(m - 1);
            if k_eff < knn_k {
                warn!("domain {k}: knn k={knn_k} clamped to {k_eff} ({m} samples)");
            }
            let w = knn_topology_weights(&d.features, k_eff, symmetrization)?;
            w_t.view_mut((at, at), (m, m)).copy_from(&w);
        }
        at += m;
    }
    let labels = bundle.stacked_labels();
    Ok(LaplacianTriple {
        topology: laplacian(&w_t)?,
        similarity: laplacian(&label_weights(&labels, LabelRelation::SameClass))?,
        dissimilarity: laplacian(&label_weights(&labels, LabelRelation::DifferentClass))?,
    })
}

fn block_gram(bundle: &DomainBundle, kernels: &[KernelSpec]) -> Result<DMatrix<f64>> {
    let total = bundle.total_samples();
    let mut k = DMatrix::zeros(total, total);
    let mut at = 0;
    for (d, spec) in bundle.domains.iter().zip(kernels) {
        let m = d.len();
        let g = gram(&d.features, &d.features, *spec)?;
        k.view_mut((at, at), (m, m)).copy_from(&g);
        at += m;
    }
    Ok(k)
}

fn validate_bundle(bundle: &DomainBundle) -> Result<()> {
    if bundle.domains.len() < 2 {
        return Err(Error::BadConfig("alignment needs at least two domains".into()));
    }
    for (k, d) in bundle.domains.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::InsufficientData(format!("domain {k} is empty")));
        }
        if d.labeled_count() == 0 {
            return Err(Error::InsufficientLabels(format!("domain {k} has no labeled samples")));
        }
    }
    let mut classes: Vec<usize> = bundle.stacked_labels().into_iter().flatten().collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InsufficientLabels(
            "labeled samples must cover at least two classes".into(),
        ));
    }
    Ok(())
}

/// Builds kernels, Laplacians and both sides of the eigenproblem.
pub fn kema_pencil(bundle: &DomainBundle, config: &KemaConfig) -> Result<Pencil> {
    config.validate()?;
    validate_bundle(bundle)?;
    let kernels = domain_kernels(bundle, config.kernel)?;
    let k = block_gram(bundle, &kernels)?;
    let laplacians = build_laplacians(bundle, config.knn_k, config.symmetrization)?;
    let mix = &laplacians.topology * config.mu + &laplacians.similarity * (1.0 - config.mu);
    let left = &k * mix * &k;
    let right = &k * &laplacians.dissimilarity * &k;
    Ok(Pencil {
        kernels,
        gram: k,
        laplacians,
        left,
        right,
    })
}

pub fn kema_fit(bundle: &DomainBundle, config: &KemaConfig) -> Result<AlignmentModel> {
    let total = bundle.total_samples();
    if config.latent_dim > total {
        return Err(Error::BadConfig(format!(
            "latent dimension {} exceeds the {total} training samples",
            config.latent_dim
        )));
    }
    let pencil = kema_pencil(bundle, config)?;
    let ridge = config.ridge.unwrap_or_else(|| default_ridge(&pencil.right));
    let full = solve_gevd_full(&pencil.left, &pencil.right, ridge)?;

    let mut keep: Vec<usize> = (0..full.values.len())
        .filter(|&i| {
            let v = full.vectors.column(i);
            v.dot(&(&pencil.right * v)) >= SPURIOUS_ENERGY
        })
        .take(config.latent_dim)
        .collect();
    if keep.len() < config.latent_dim {
        warn!(
            "latent dimension {} clamped to {} usable eigenpairs",
            config.latent_dim,
            keep.len()
        );
    }
    if keep.is_empty() {
        // every mode is spurious; fall back to the smallest one
        keep.push(0);
    }
    check_residuals(&pencil.left, &pencil.right, &full, &keep)?;
    let chosen = full.select(&keep);

    let mut alphas = Vec::with_capacity(bundle.domains.len());
    let mut at = 0;
    for d in &bundle.domains {
        alphas.push(chosen.vectors.rows(at, d.len()).into_owned());
        at += d.len();
    }
    Ok(AlignmentModel {
        anchors: bundle.domains.iter().map(|d| d.features.clone()).collect(),
        kernels: pencil.kernels,
        alphas,
        eigenvalues: chosen.values,
        config: config.clone(),
    })
}

/// Latent coordinates of `samples` drawn from domain `domain`.
pub fn kema_project(
    model: &AlignmentModel,
    domain: usize,
    samples: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let anchors = model.anchors.get(domain).ok_or(Error::UnknownDomain(domain))?;
    if samples.ncols() != anchors.ncols() {
        return Err(Error::DimensionMismatch {
            expected: anchors.ncols(),
            got: samples.ncols(),
        });
    }
    let kx = gram(samples, anchors, model.kernels[domain])?;
    Ok(kx * &model.alphas[domain])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KemaDiagnostics {
    pub top: f64,
    pub sim: f64,
    pub dis: f64,
    /// `(μ·TOP + (1 − μ)·SIM) / DIS`, `+∞` when DIS is zero.
    pub objective: f64,
}

/// Trace forms `tr(Zᵀ L Z)` of the fitted latent coordinates `Z = KΛ`.
pub fn kema_diagnostics(model: &AlignmentModel, bundle: &DomainBundle) -> Result<KemaDiagnostics> {
    let lap = build_laplacians(bundle, model.config.knn_k, model.config.symmetrization)?;
    let z = latent_training(model, bundle)?;
    Ok(diagnostics_for(&z, &lap, model.config.mu))
}

/// Stacked latent coordinates of every domain's samples in `bundle`.
pub fn latent_training(model: &AlignmentModel, bundle: &DomainBundle) -> Result<DMatrix<f64>> {
    let parts = bundle
        .domains
        .iter()
        .enumerate()
        .map(|(k, d)| kema_project(model, k, &d.features))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&DMatrix<f64>> = parts.iter().collect();
    crate::data::vstack(&refs)
}

pub fn diagnostics_for(z: &DMatrix<f64>, lap: &LaplacianTriple, mu: f64) -> KemaDiagnostics {
    let form = |l: &DMatrix<f64>| (z.transpose() * l * z).trace();
    let top = form(&lap.topology);
    let sim = form(&lap.similarity);
    let dis = form(&lap.dissimilarity);
    let objective = if dis > 0.0 {
        (mu * top + (1.0 - mu) * sim) / dis
    } else {
        f64::INFINITY
    };
    KemaDiagnostics {
        top,
        sim,
        dis,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSet;

    fn domain(rows: &[[f64; 2]], labels: &[Option<usize>]) -> FeatureSet {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        FeatureSet::new(DMatrix::from_row_slice(rows.len(), 2, &flat), labels.to_vec()).unwrap()
    }

    fn small_bundle() -> DomainBundle {
        let a = domain(
            &[[0.0, 0.1], [0.2, 0.0], [2.0, 2.1], [2.2, 1.9], [1.0, 1.2]],
            &[Some(0), Some(0), Some(1), Some(1), None],
        );
        let b = domain(
            &[[5.0, 0.0], [5.1, 0.3], [7.0, 2.0], [7.2, 2.2], [6.0, 1.0]],
            &[Some(0), None, Some(1), Some(1), None],
        );
        DomainBundle::new(vec![a, b], 2).unwrap()
    }

    #[test]
    fn mu_one_leaves_only_topology() {
        let b = small_bundle();
        let cfg = KemaConfig {
            mu: 1.0,
            knn_k: 2,
            latent_dim: 3,
            ..Default::default()
        };
        let p = kema_pencil(&b, &cfg).unwrap();
        let want = &p.gram * &p.laplacians.topology * &p.gram;
        assert!((&p.left - want).amax() < 1e-12);
    }

    #[test]
    fn topology_is_block_diagonal() {
        let b = small_bundle();
        let lap = build_laplacians(&b, 2, Symmetrization::Union).unwrap();
        for i in 0..5 {
            for j in 5..10 {
                assert_eq!(lap.topology[(i, j)], 0.0);
            }
        }
        // unlabeled samples never enter the label graphs
        assert_eq!(lap.similarity[(4, 4)], 0.0);
        assert_eq!(lap.dissimilarity.row(6).amax(), 0.0);
    }

    #[test]
    fn anchors_round_trip() {
        let b = small_bundle();
        let cfg = KemaConfig {
            knn_k: 2,
            latent_dim: 3,
            ..Default::default()
        };
        let m = kema_fit(&b, &cfg).unwrap();
        let z = latent_training(&m, &b).unwrap();
        let k = kema_pencil(&b, &cfg).unwrap().gram;
        let direct = k * m.stacked_alphas();
        assert!((z - direct).amax() < 1e-10);
        assert!(m.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_anchor_linear_projection() {
        let m = AlignmentModel {
            anchors: vec![DMatrix::from_row_slice(1, 2, &[1.0, 2.0])],
            kernels: vec![KernelSpec::Linear],
            alphas: vec![DMatrix::from_element(1, 1, 0.5)],
            eigenvalues: DVector::from_element(1, 1.0),
            config: KemaConfig::default(),
        };
        let x = DMatrix::from_row_slice(1, 2, &[3.0, -1.0]);
        assert_eq!(kema_project(&m, 0, &x).unwrap()[(0, 0)], 0.5 * (3.0 - 2.0));
        assert!(matches!(kema_project(&m, 1, &x), Err(Error::UnknownDomain(1))));
        assert!(matches!(
            kema_project(&m, 0, &DMatrix::zeros(1, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fit_errors() {
        let b = small_bundle();
        let cfg = KemaConfig {
            knn_k: 2,
            latent_dim: 11,
            ..Default::default()
        };
        assert!(matches!(kema_fit(&b, &cfg), Err(Error::BadConfig(_))));

        let one_class = DomainBundle::new(
            vec![
                domain(&[[0.0, 0.0], [1.0, 0.0]], &[Some(0), None]),
                domain(&[[0.0, 1.0], [1.0, 1.0]], &[Some(0), None]),
            ],
            1,
        )
        .unwrap();
        let cfg = KemaConfig {
            knn_k: 1,
            latent_dim: 1,
            ..Default::default()
        };
        assert!(matches!(kema_fit(&one_class, &cfg), Err(Error::InsufficientLabels(_))));
    }

    #[test]
    fn diagnostics_sentinels() {
        let z = DMatrix::from_element(4, 2, 0.3);
        let labels = vec![Some(0), Some(0), None, None];
        let lap = LaplacianTriple {
            topology: laplacian(&(DMatrix::from_element(4, 4, 1.0) - DMatrix::identity(4, 4))).unwrap(),
            similarity: laplacian(&label_weights(&labels, LabelRelation::SameClass)).unwrap(),
            dissimilarity: laplacian(&label_weights(&labels, LabelRelation::DifferentClass)).unwrap(),
        };
        let d = diagnostics_for(&z, &lap, 0.1);
        assert!(d.top.abs() < 1e-12);
        assert_eq!(d.dis, 0.0);
        assert_eq!(d.objective, f64::INFINITY);
    }
}
