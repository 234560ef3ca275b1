//! Split, train, and score one method on one bundle; multi-seed drivers and
//! parameter sweeps on top.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{evaluate, EvalReport};
use crate::age::RangeScaler;
use crate::data::{DomainBundle, FeatureSet};
use crate::error::{Error, Result, Stage, StageExt};
use crate::kema::kema_project;
use crate::pipeline::{
    fit_aligned_stage, fit_classifier, pool, test_pipeline, train_pipeline, PipelineConfig, Splits, TARGET,
};
use crate::svm::svm_predict;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// SVM on pooled raw features.
    Na,
    /// SVM on scaled aligned features.
    Kema,
    /// Alignment, encoders, SVM.
    Cdfag,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Na => "na",
            Method::Kema => "kema",
            Method::Cdfag => "cdfag",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "na" => Ok(Method::Na),
            "kema" => Ok(Method::Kema),
            "cdfag" => Ok(Method::Cdfag),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Training sets (labeled + unlabeled rows) and the held-out target test set.
#[derive(Debug, Clone)]
pub struct ProtocolSplit {
    pub source: FeatureSet,
    pub target: FeatureSet,
    pub target_test: FeatureSet,
}

fn class_rows(set: &FeatureSet, class: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == Some(class)).collect();
    rows.shuffle(rng);
    rows
}

/// Stratified per-class split. Source: `s_train` labeled then `s_unlabeled`
/// unlabeled rows per class. Target: `t_test` test rows, `t_train` labeled
/// rows, and every remaining row unlabeled.
pub fn split_bundle(bundle: &DomainBundle, splits: &Splits, seed: u64) -> Result<ProtocolSplit> {
    if bundle.domains.len() != 2 {
        return Err(Error::BadConfig("protocol needs exactly two domains".into()));
    }
    let (src, tgt) = (&bundle.domains[0], &bundle.domains[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s_rows = (Vec::new(), Vec::new());
    let mut t_rows = (Vec::new(), Vec::new());
    let mut test_rows = Vec::new();
    for c in 0..bundle.class_count {
        let rows = class_rows(src, c, &mut rng);
        if splits.s_train + splits.s_unlabeled > rows.len() {
            return Err(Error::SplitTooLarge(format!(
                "source class {c}: {} + {} requested, {} available",
                splits.s_train,
                splits.s_unlabeled,
                rows.len()
            )));
        }
        s_rows.0.extend(rows[..splits.s_train].iter().map(|&r| (r, Some(c))));
        s_rows.1.extend(rows[splits.s_train..splits.s_train + splits.s_unlabeled].iter().map(|&r| (r, None)));

        let rows = class_rows(tgt, c, &mut rng);
        if splits.t_test + splits.t_train > rows.len() {
            return Err(Error::SplitTooLarge(format!(
                "target class {c}: {} + {} requested, {} available",
                splits.t_test,
                splits.t_train,
                rows.len()
            )));
        }
        test_rows.extend(rows[..splits.t_test].iter().map(|&r| (r, Some(c))));
        let train_end = splits.t_test + splits.t_train;
        t_rows.0.extend(rows[splits.t_test..train_end].iter().map(|&r| (r, Some(c))));
        t_rows.1.extend(rows[train_end..].iter().map(|&r| (r, None)));
    }
    let build = |set: &FeatureSet, picks: Vec<(usize, Option<usize>)>| {
        let idx: Vec<usize> = picks.iter().map(|p| p.0).collect();
        FeatureSet::new(
            crate::data::select_rows(&set.features, &idx),
            picks.into_iter().map(|p| p.1).collect(),
        )
    };
    let join = |(mut a, b): (Vec<_>, Vec<_>)| {
        a.extend(b);
        a
    };
    Ok(ProtocolSplit {
        source: build(src, join(s_rows))?,
        target: build(tgt, join(t_rows))?,
        target_test: build(tgt, test_rows)?,
    })
}

fn truth_of(set: &FeatureSet) -> Vec<usize> {
    set.labels.iter().map(|l| l.expect("test rows are labeled")).collect()
}

fn run_na(split: &ProtocolSplit, config: &PipelineConfig, class_count: usize) -> Result<EvalReport> {
    let train = pool(&split.source.labeled(), &split.target.labeled()).stage(Stage::Classify)?;
    let (svm, _) = fit_classifier(&train.0, &train.1, &config.classifier, config.seed).stage(Stage::Classify)?;
    let pred = svm_predict(&svm, &split.target_test.features).stage(Stage::Classify)?;
    evaluate(&pred, &truth_of(&split.target_test), class_count)
}

fn run_kema(split: &ProtocolSplit, config: &PipelineConfig, class_count: usize) -> Result<EvalReport> {
    let stage = fit_aligned_stage(&split.source, &split.target, config)?;
    let scaler = RangeScaler::fit(&[&stage.aligned[0], &stage.aligned[1]]).stage(Stage::Scale)?;
    let labeled = |k: usize, set: &FeatureSet| -> Result<(DMatrix<f64>, Vec<usize>)> {
        let idx: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i].is_some()).collect();
        let x = crate::data::select_rows(&stage.aligned[k], &idx);
        let y = idx.iter().map(|&i| set.labels[i].unwrap()).collect();
        Ok((scaler.transform(&x).stage(Stage::Scale)?, y))
    };
    let train = pool(&labeled(0, &split.source)?, &labeled(1, &split.target)?).stage(Stage::Classify)?;
    let (svm, _) = fit_classifier(&train.0, &train.1, &config.classifier, config.seed).stage(Stage::Classify)?;
    let test = match &stage.pca[TARGET] {
        Some(p) => p.project(&split.target_test.features).stage(Stage::Pca)?,
        None => split.target_test.features.clone(),
    };
    let z = kema_project(&stage.alignment, TARGET, &test).stage(Stage::Align)?;
    let pred = svm_predict(&svm, &scaler.transform(&z).stage(Stage::Scale)?).stage(Stage::Classify)?;
    evaluate(&pred, &truth_of(&split.target_test), class_count)
}

/// Splits `bundle` with `seed`, trains `method` with `config` (its seed
/// replaced by `seed`), and scores the held-out target rows.
pub fn run_protocol(
    bundle: &DomainBundle,
    method: Method,
    config: &PipelineConfig,
    seed: u64,
) -> Result<EvalReport> {
    let start = Instant::now();
    let split = split_bundle(bundle, &config.splits, seed)?;
    let config = PipelineConfig {
        seed,
        ..config.clone()
    };
    let c = bundle.class_count;
    let report = match method {
        Method::Na => run_na(&split, &config, c)?,
        Method::Kema => run_kema(&split, &config, c)?,
        Method::Cdfag => {
            let (model, _) = train_pipeline(&split.source, &split.target, &config)?;
            test_pipeline(&model, &split.target_test)?
                .report
                .expect("test rows are labeled")
        }
    };
    log::info!("{} seed {seed}: AP {:.2}", method.name(), report.ap);
    Ok(report
        .with_meta("method", method.name())
        .with_meta("seed", seed)
        .with_meta("wall_ms", start.elapsed().as_millis()))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One report row of a multi-seed benchmark.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: Method,
    pub splits: Splits,
    pub seed: u64,
    pub report: EvalReport,
}

pub fn run_seeds(
    bundle: &DomainBundle,
    methods: &[Method],
    config: &PipelineConfig,
    seeds: &[u64],
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &method in methods {
        for &seed in seeds {
            rows.push(BenchRow {
                method,
                splits: config.splits,
                seed,
                report: run_protocol(bundle, method, config, seed)?,
            });
        }
    }
    Ok(rows)
}

/// Mean AP per method, in the order methods first appear.
pub fn mean_ap(rows: &[BenchRow]) -> Vec<(Method, f64, f64)> {
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let aps: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.report.ap).collect();
            let (mean, std) = mean_std(&aps);
            (m, mean, std)
        })
        .collect()
}

/// `method,s_train,t_train,seed,ap,p0,…` rows.
pub fn bench_csv(rows: &[BenchRow], class_count: usize) -> String {
    let mut s = String::from("method,s_train,t_train,seed,ap");
    for c in 0..class_count {
        let _ = write!(s, ",p{c}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            r.method.name(),
            r.splits.s_train,
            r.splits.t_train,
            r.seed,
            r.report.ap
        );
        for p in &r.report.precisions {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
    }
    s
}

/// Mean CDFAG AP over `seeds` for each latent dimension in `grid`.
pub fn latent_sweep(
    bundle: &DomainBundle,
    config: &PipelineConfig,
    grid: &[usize],
    seeds: &[u64],
) -> Result<Vec<(usize, f64)>> {
    grid.iter()
        .map(|&n| {
            let mut cfg = config.clone();
            cfg.kema.latent_dim = n;
            let aps = seeds
                .iter()
                .map(|&s| run_protocol(bundle, Method::Cdfag, &cfg, s).map(|r| r.ap))
                .collect::<Result<Vec<_>>>()?;
            Ok((n, mean_std(&aps).0))
        })
        .collect()
}

/// Mean AP of `method` over `seeds` for each trade-off weight in `grid`.
pub fn mu_sweep(
    bundle: &DomainBundle,
    method: Method,
    config: &PipelineConfig,
    grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&mu| {
            let mut cfg = config.clone();
            cfg.kema.mu = mu;
            let aps = seeds
                .iter()
                .map(|&s| run_protocol(bundle, method, &cfg, s).map(|r| r.ap))
                .collect::<Result<Vec<_>>>()?;
            Ok((mu, mean_std(&aps).0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate, SynthSpec};

    #[test]
    fn split_counts_and_disjointness() {
        let b = generate(&SynthSpec::default()).unwrap();
        let s = split_bundle(&b, &Splits::default(), 7).unwrap();
        assert_eq!(s.source.len(), 4 * 25);
        assert_eq!(s.source.labeled_count(), 4 * 20);
        assert_eq!(s.target.len(), 4 * 15);
        assert_eq!(s.target.labeled_count(), 4 * 5);
        assert_eq!(s.target_test.len(), 4 * 15);
        // every target row lands in exactly one of train/test
        let mut rows: Vec<Vec<u64>> = s
            .target
            .features
            .row_iter()
            .chain(s.target_test.features.row_iter())
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 120);
    }

    #[test]
    fn oversized_split_rejected() {
        let b = generate(&SynthSpec::default()).unwrap();
        let splits = Splits {
            t_test: 28,
            ..Splits::default()
        };
        assert!(matches!(split_bundle(&b, &splits, 0), Err(Error::SplitTooLarge(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Na, Method::Kema, Method::Cdfag] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn mean_std_of_constant() {
        assert_eq!(mean_std(&[2.0, 2.0]), (2.0, 0.0));
    }
}
