//! End-to-end training and testing: PCA → alignment → range scaling →
//! encoders → SVM.

mod config;

use log::info;
use nalgebra::DMatrix;

use crate::age::{age_generalize, age_train, class_targets, AgeModel, ClassTargets, RangeScaler, TrainConfig};
use crate::bench::{evaluate, EvalReport};
use crate::data::{select_rows, DomainBundle, FeatureSet};
use crate::encoding::{pca_fit, PcaModel};
use crate::error::{Error, Result, Stage, StageExt};
use crate::kema::{kema_fit, kema_project, AlignmentModel};
use crate::svm::{grid_search_cv, svm_predict, svm_train, SvmModel};

pub use config::{parse_list, ClassifierConfig, PipelineConfig, Splits};

pub const MODEL_VERSION: u32 = 1;
pub const SOURCE: usize = 0;
pub const TARGET: usize = 1;

/// Everything needed to classify unseen target samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub version: u32,
    /// Per domain, source then target.
    pub pca: Vec<Option<PcaModel>>,
    pub alignment: AlignmentModel,
    pub scaler: RangeScaler,
    pub source_encoder: AgeModel,
    pub target_encoder: AgeModel,
    pub targets: ClassTargets,
    pub svm: SvmModel,
    pub config: PipelineConfig,
}

impl PipelineModel {
    pub fn input_dim(&self, domain: usize) -> Option<usize> {
        match self.pca.get(domain)? {
            Some(p) => Some(p.input_dim()),
            None => self.alignment.input_dim(domain),
        }
    }

    /// Checks that every stage's output width feeds the next stage.
    pub fn validate_chain(&self) -> Result<()> {
        let corrupt = |m: String| Err(Error::CorruptModel(m));
        if self.version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: self.version,
                expected: MODEL_VERSION,
            });
        }
        if self.pca.len() != 2 || self.alignment.domain_count() != 2 {
            return corrupt("pipeline must have exactly two domains".into());
        }
        for (k, p) in self.pca.iter().enumerate() {
            if let Some(p) = p {
                if Some(p.output_dim()) != self.alignment.input_dim(k) {
                    return corrupt(format!("domain {k}: PCA output does not match alignment input"));
                }
            }
        }
        let n = self.alignment.latent_dim();
        for (k, a) in self.alignment.alphas.iter().enumerate() {
            if a.ncols() != n || a.nrows() != self.alignment.anchors[k].nrows() {
                return corrupt(format!("domain {k}: coefficient block shape"));
            }
        }
        let widths = [
            self.scaler.dim(),
            self.source_encoder.input_dim(),
            self.target_encoder.input_dim(),
            self.targets.targets.ncols(),
            self.svm.dim,
        ];
        if widths.iter().any(|&w| w != n) {
            return corrupt(format!("stage widths {widths:?} do not all equal latent dimension {n}"));
        }
        if self.source_encoder.hidden_dim() != self.target_encoder.hidden_dim() {
            return corrupt("encoder hidden widths differ".into());
        }
        Ok(())
    }
}

/// Intermediate matrices of a training run.
#[derive(Debug, Clone)]
pub struct TrainingTrace {
    /// PCA-reduced training features per domain (all rows).
    pub reduced: [FeatureSet; 2],
    /// Latent coordinates per domain (all rows).
    pub aligned: [DMatrix<f64>; 2],
    /// Scaled latent coordinates of labeled rows, with labels.
    pub scaled_labeled: [(DMatrix<f64>, Vec<usize>); 2],
    /// Encoder outputs of the labeled rows.
    pub generalized: [DMatrix<f64>; 2],
    pub losses: [Vec<f64>; 2],
    pub cv_accuracy: f64,
}

/// Output of the stages up to and including alignment.
#[derive(Debug, Clone)]
pub struct AlignedStage {
    pub pca: Vec<Option<PcaModel>>,
    pub reduced: [FeatureSet; 2],
    pub alignment: AlignmentModel,
    pub aligned: [DMatrix<f64>; 2],
    pub class_count: usize,
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

pub fn check_class_sets(source: &FeatureSet, target: &FeatureSet) -> Result<usize> {
    let (s, t) = (source.class_set(), target.class_set());
    if s != t {
        return Err(Error::ClassSetMismatch);
    }
    if s.len() < 2 {
        return Err(Error::InsufficientLabels("need at least two labeled classes".into()));
    }
    Ok(source.class_count())
}

/// PCA per domain, then alignment of both domains.
pub fn fit_aligned_stage(
    source: &FeatureSet,
    target: &FeatureSet,
    config: &PipelineConfig,
) -> Result<AlignedStage> {
    config.validate()?;
    let class_count = check_class_sets(source, target)?;
    let mut pca = Vec::with_capacity(2);
    let mut reduced = Vec::with_capacity(2);
    for d in [source, target] {
        match config.pca_retain {
            Some(r) => {
                let m = pca_fit(&d.features, r).stage(Stage::Pca)?;
                let x = m.project(&d.features).stage(Stage::Pca)?;
                reduced.push(FeatureSet::new(x, d.labels.clone()).stage(Stage::Pca)?);
                pca.push(Some(m));
            }
            None => {
                reduced.push(d.clone());
                pca.push(None);
            }
        }
    }
    let bundle = DomainBundle::new(reduced.clone(), class_count).stage(Stage::Align)?;
    let mut kema_cfg = config.kema.clone();
    let total = bundle.total_samples();
    if kema_cfg.latent_dim > total {
        log::warn!("latent dimension {} clamped to {total} samples", kema_cfg.latent_dim);
        kema_cfg.latent_dim = total;
    }
    let alignment = kema_fit(&bundle, &kema_cfg).stage(Stage::Align)?;
    let aligned_s = kema_project(&alignment, SOURCE, &reduced[0].features).stage(Stage::Align)?;
    let aligned_t = kema_project(&alignment, TARGET, &reduced[1].features).stage(Stage::Align)?;
    let [rs, rt]: [FeatureSet; 2] = reduced.try_into().unwrap();
    Ok(AlignedStage {
        pca,
        reduced: [rs, rt],
        alignment,
        aligned: [aligned_s, aligned_t],
        class_count,
    })
}

fn labeled_rows(aligned: &DMatrix<f64>, labels: &[Option<usize>]) -> (DMatrix<f64>, Vec<usize>) {
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let y = idx.iter().map(|&i| labels[i].unwrap()).collect();
    (select_rows(aligned, &idx), y)
}

/// Grid-searched then refit classifier on labeled rows.
pub fn fit_classifier(
    features: &DMatrix<f64>,
    labels: &[usize],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<(SvmModel, f64)> {
    let grid = grid_search_cv(
        features,
        labels,
        &config.c_grid,
        &config.gamma_grid,
        config.folds,
        seed,
        &config.solver,
    )?;
    info!(
        "classifier: C={} gamma={} cv accuracy {:.4}",
        grid.config.c, grid.config.gamma, grid.accuracy
    );
    Ok((svm_train(features, labels, &grid.config)?, grid.accuracy))
}

/// Pools two labeled blocks into one.
pub fn pool(a: &(DMatrix<f64>, Vec<usize>), b: &(DMatrix<f64>, Vec<usize>)) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let x = crate::data::vstack(&[&a.0, &b.0])?;
    let mut y = a.1.clone();
    y.extend_from_slice(&b.1);
    Ok((x, y))
}

/// Trains every stage on labeled and unlabeled source/target samples.
pub fn train_pipeline(
    source: &FeatureSet,
    target: &FeatureSet,
    config: &PipelineConfig,
) -> Result<(PipelineModel, TrainingTrace)> {
    let stage = fit_aligned_stage(source, target, config)?;

    let scaler = RangeScaler::fit(&[&stage.aligned[0], &stage.aligned[1]]).stage(Stage::Scale)?;
    let mut scaled_labeled = Vec::with_capacity(2);
    for (k, d) in [source, target].iter().enumerate() {
        let (x, y) = labeled_rows(&stage.aligned[k], &d.labels);
        scaled_labeled.push((scaler.transform(&x).stage(Stage::Scale)?, y));
    }
    let (ss, st) = (&scaled_labeled[0], &scaled_labeled[1]);
    let targets = class_targets(&ss.0, &ss.1, &st.0, &st.1, stage.class_count).stage(Stage::Generalize)?;
    let age_cfg = TrainConfig {
        seed: derive_seed(config.seed, 1),
        ..config.age.clone()
    };
    let pair = age_train(&ss.0, &ss.1, &st.0, &st.1, &targets, &age_cfg).stage(Stage::Generalize)?;
    let gen_s = age_generalize(&pair.source.model, &ss.0).stage(Stage::Generalize)?;
    let gen_t = age_generalize(&pair.target.model, &st.0).stage(Stage::Generalize)?;

    let (x, y) = pool(&(gen_s.clone(), ss.1.clone()), &(gen_t.clone(), st.1.clone())).stage(Stage::Classify)?;
    let (svm, cv_accuracy) =
        fit_classifier(&x, &y, &config.classifier, derive_seed(config.seed, 2)).stage(Stage::Classify)?;

    let model = PipelineModel {
        version: MODEL_VERSION,
        pca: stage.pca,
        alignment: stage.alignment,
        scaler,
        source_encoder: pair.source.model,
        target_encoder: pair.target.model,
        targets,
        svm,
        config: config.clone(),
    };
    model.validate_chain()?;
    let [sl, tl]: [(DMatrix<f64>, Vec<usize>); 2] = scaled_labeled.try_into().unwrap();
    let trace = TrainingTrace {
        reduced: stage.reduced,
        aligned: stage.aligned,
        scaled_labeled: [sl, tl],
        generalized: [gen_s, gen_t],
        losses: [pair.source.losses, pair.target.losses],
        cv_accuracy,
    };
    Ok((model, trace))
}

/// Target-domain features after each test-time stage.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub aligned: DMatrix<f64>,
    pub scaled: DMatrix<f64>,
    pub generalized: DMatrix<f64>,
    pub predictions: Vec<usize>,
    /// Present when the test rows carry labels.
    pub report: Option<EvalReport>,
}

/// Generalized features of raw samples from `domain`.
pub fn generalize_domain(model: &PipelineModel, domain: usize, raw: &DMatrix<f64>) -> Result<[DMatrix<f64>; 3]> {
    let reduced = match &model.pca[domain] {
        Some(p) => p.project(raw).stage(Stage::Pca)?,
        None => raw.clone(),
    };
    let aligned = kema_project(&model.alignment, domain, &reduced).stage(Stage::Align)?;
    let scaled = model.scaler.transform(&aligned).stage(Stage::Scale)?;
    let encoder = if domain == SOURCE {
        &model.source_encoder
    } else {
        &model.target_encoder
    };
    let generalized = age_generalize(encoder, &scaled).stage(Stage::Generalize)?;
    Ok([aligned, scaled, generalized])
}

/// Classifies target-domain samples; evaluates the labeled ones.
pub fn test_pipeline(model: &PipelineModel, target_test: &FeatureSet) -> Result<TestOutcome> {
    let [aligned, scaled, generalized] = generalize_domain(model, TARGET, &target_test.features)?;
    let predictions = svm_predict(&model.svm, &generalized).stage(Stage::Classify)?;
    let labeled: Vec<usize> = (0..target_test.len())
        .filter(|&i| target_test.labels[i].is_some())
        .collect();
    let report = if labeled.is_empty() {
        None
    } else {
        let pred: Vec<usize> = labeled.iter().map(|&i| predictions[i]).collect();
        let truth: Vec<usize> = labeled.iter().map(|&i| target_test.labels[i].unwrap()).collect();
        Some(evaluate(&pred, &truth, model.targets.class_count())?)
    };
    Ok(TestOutcome {
        aligned,
        scaled,
        generalized,
        predictions,
        report,
    })
}
