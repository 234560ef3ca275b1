//! Line-oriented `key = value` run configuration.

use std::fmt::Write as _;

use crate::age::{TrainConfig, WeightInit};
use crate::encoding::DEFAULT_PCA_RETAIN;
use crate::error::{Error, Result};
use crate::kema::{KemaConfig, KernelChoice};
use crate::spectral::{KernelSpec, Symmetrization};
use crate::svm::{default_c_grid, default_gamma_grid, SvmConfig};

/// Classifier training: cross-validated grid plus solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub folds: usize,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub solver: SvmConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            folds: 5,
            c_grid: default_c_grid(),
            gamma_grid: default_gamma_grid(),
            solver: SvmConfig::default(),
        }
    }
}

/// Per-class sample counts of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Splits {
    pub s_train: usize,
    pub s_unlabeled: usize,
    pub t_train: usize,
    pub t_test: usize,
}

impl Default for Splits {
    fn default() -> Self {
        Splits {
            s_train: 20,
            s_unlabeled: 5,
            t_train: 5,
            t_test: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// `None` skips PCA.
    pub pca_retain: Option<f64>,
    pub kema: KemaConfig,
    pub age: TrainConfig,
    pub classifier: ClassifierConfig,
    pub splits: Splits,
    /// Master seed; every random choice downstream derives from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pca_retain: Some(DEFAULT_PCA_RETAIN),
            kema: KemaConfig::default(),
            age: TrainConfig::default(),
            classifier: ClassifierConfig::default(),
            splits: Splits::default(),
            seed: 0,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(key, s))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "pca_retain",
        "mu",
        "latent_dim",
        "knn_k",
        "knn_mode",
        "kernel",
        "ridge",
        "age_iterations",
        "age_learning_rate",
        "age_momentum",
        "age_init",
        "age_hidden",
        "age_batch",
        "svm_folds",
        "svm_c_grid",
        "svm_gamma_grid",
        "svm_tolerance",
        "svm_max_iter",
        "s_train",
        "s_unlabeled",
        "t_train",
        "t_test",
    ];

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("seed: '{v}'")))?,
            "pca_retain" => {
                self.pca_retain = if v == "off" { None } else { Some(parse_f64(key, v)?) }
            }
            "mu" => self.kema.mu = parse_f64(key, v)?,
            "latent_dim" => self.kema.latent_dim = parse_usize(key, v)?,
            "knn_k" => self.kema.knn_k = parse_usize(key, v)?,
            "knn_mode" => {
                self.kema.symmetrization = match v {
                    "union" => Symmetrization::Union,
                    "mutual" => Symmetrization::Mutual,
                    _ => return Err(Error::Config(format!("knn_mode: '{v}' (union|mutual)"))),
                }
            }
            "kernel" => {
                self.kema.kernel = match v {
                    "rbf-median" => KernelChoice::RbfMedian,
                    "linear" => KernelChoice::Fixed(KernelSpec::Linear),
                    other => match other.strip_prefix("rbf:") {
                        Some(bw) => KernelChoice::Fixed(
                            KernelSpec::rbf(parse_f64(key, bw)?).map_err(|e| Error::Config(e.to_string()))?,
                        ),
                        None => {
                            return Err(Error::Config(format!(
                                "kernel: '{v}' (rbf-median|linear|rbf:<bandwidth>)"
                            )))
                        }
                    },
                }
            }
            "ridge" => self.kema.ridge = if v == "auto" { None } else { Some(parse_f64(key, v)?) },
            "age_iterations" => self.age.iterations = parse_usize(key, v)?,
            "age_learning_rate" => self.age.learning_rate = parse_f64(key, v)?,
            "age_momentum" => self.age.momentum = parse_f64(key, v)?,
            "age_init" => self.age.init = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "age_hidden" => {
                self.age.hidden = if v == "auto" { None } else { Some(parse_usize(key, v)?) }
            }
            "age_batch" => {
                self.age.batch_size = if v == "full" { None } else { Some(parse_usize(key, v)?) }
            }
            "svm_folds" => self.classifier.folds = parse_usize(key, v)?,
            "svm_c_grid" => self.classifier.c_grid = parse_list(key, v)?,
            "svm_gamma_grid" => self.classifier.gamma_grid = parse_list(key, v)?,
            "svm_tolerance" => self.classifier.solver.tolerance = parse_f64(key, v)?,
            "svm_max_iter" => self.classifier.solver.max_iter = parse_usize(key, v)?,
            "s_train" => self.splits.s_train = parse_usize(key, v)?,
            "s_unlabeled" => self.splits.s_unlabeled = parse_usize(key, v)?,
            "t_train" => self.splits.t_train = parse_usize(key, v)?,
            "t_test" => self.splits.t_test = parse_usize(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(strip_prefix(&e));
        if let Some(r) = self.pca_retain {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("pca_retain {r} outside (0, 1]")));
            }
        }
        self.kema.validate().map_err(wrap)?;
        self.age.validate().map_err(wrap)?;
        if self.classifier.folds < 2 {
            return Err(Error::Config("svm_folds must be at least 2".into()));
        }
        if self.classifier.c_grid.is_empty() || self.classifier.gamma_grid.is_empty() {
            return Err(Error::Config("SVM grids must be non-empty".into()));
        }
        if self.classifier.c_grid.iter().chain(&self.classifier.gamma_grid).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("SVM grid values must be positive".into()));
        }
        if !(self.classifier.solver.tolerance > 0.0) {
            return Err(Error::Config("svm_tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Text form accepted by [`PipelineConfig::parse`]; floats round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv(
            "pca_retain",
            self.pca_retain.map_or("off".into(), |r| format!("{r:?}")),
        );
        kv("mu", format!("{:?}", self.kema.mu));
        kv("latent_dim", self.kema.latent_dim.to_string());
        kv("knn_k", self.kema.knn_k.to_string());
        kv(
            "knn_mode",
            match self.kema.symmetrization {
                Symmetrization::Union => "union".into(),
                Symmetrization::Mutual => "mutual".into(),
            },
        );
        kv(
            "kernel",
            match self.kema.kernel {
                KernelChoice::RbfMedian => "rbf-median".into(),
                KernelChoice::Fixed(KernelSpec::Linear) => "linear".into(),
                KernelChoice::Fixed(KernelSpec::Rbf { bandwidth }) => format!("rbf:{bandwidth:?}"),
            },
        );
        kv("ridge", self.kema.ridge.map_or("auto".into(), |r| format!("{r:?}")));
        kv("age_iterations", self.age.iterations.to_string());
        kv("age_learning_rate", format!("{:?}", self.age.learning_rate));
        kv("age_momentum", format!("{:?}", self.age.momentum));
        kv(
            "age_init",
            match self.age.init {
                WeightInit::Uniform01 => "uniform01".into(),
                WeightInit::ScaledUniform => "scaled".into(),
            },
        );
        kv("age_hidden", self.age.hidden.map_or("auto".into(), |h| h.to_string()));
        kv("age_batch", self.age.batch_size.map_or("full".into(), |b| b.to_string()));
        kv("svm_folds", self.classifier.folds.to_string());
        kv("svm_c_grid", fmt_list(&self.classifier.c_grid));
        kv("svm_gamma_grid", fmt_list(&self.classifier.gamma_grid));
        kv("svm_tolerance", format!("{:?}", self.classifier.solver.tolerance));
        kv("svm_max_iter", self.classifier.solver.max_iter.to_string());
        kv("s_train", self.splits.s_train.to_string());
        kv("s_unlabeled", self.splits.s_unlabeled.to_string());
        kv("t_train", self.splits.t_train.to_string());
        kv("t_test", self.splits.t_test.to_string());
        s
    }
}

fn strip_prefix(e: &Error) -> String {
    match e.root() {
        Error::Config(m) | Error::BadConfig(m) => m.clone(),
        other => other.to_string(),
    }
}
