use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cdfag::age::{age_generalize, age_train, class_targets, RangeScaler, TrainConfig, WeightInit};
use cdfag::bench::{bench_csv, generate, latent_sweep, mean_ap, mu_sweep, run_seeds, split_bundle, Method, SynthSpec};
use cdfag::data::{DomainBundle, FeatureSet};
use cdfag::encoding::{
    build_codebook, encode_videos, pca_fit, Codebook, PcaModel, Pooling, DEFAULT_LLC_REG,
};
use cdfag::error::{Error, Result};
use cdfag::io;
use cdfag::kema::{build_laplacians, kema_fit, kema_project, AlignmentModel, KemaConfig};
use cdfag::persist::{load_model, save_model, EncoderBundle};
use cdfag::pipeline::{
    fit_classifier, generalize_domain, parse_list, test_pipeline, train_pipeline, ClassifierConfig, PipelineConfig,
    PipelineModel, SOURCE, TARGET,
};
use cdfag::svm::{default_c_grid, default_gamma_grid, svm_predict};

#[derive(Parser)]
#[command(name = "cdfag", version, about = "Cross-dataset feature alignment and generalization")]
struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Source,
    Target,
}

impl DomainArg {
    fn index(self) -> usize {
        match self {
            DomainArg::Source => SOURCE,
            DomainArg::Target => TARGET,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a k-means codebook from descriptor CSV files.
    Codebook {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 4000)]
        size: usize,
        /// Descriptors sampled per video.
        #[arg(long, default_value_t = 200)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// LLC-encode and pool each video into one feature vector.
    Encode {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long, default_value_t = 5)]
        bases: usize,
        #[arg(long, default_value = "max")]
        pool: String,
        #[arg(long, default_value_t = DEFAULT_LLC_REG)]
        reg: f64,
        #[arg(long = "in")]
        input: PathBuf,
        /// Optional `video_id,label` file; unlisted videos are unlabeled.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit PCA on a feature file.
    PcaFit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        retain: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project a feature file with a fitted PCA model.
    PcaProject {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the two-domain alignment.
    AlignFit {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        mu: f64,
        #[arg(long, default_value_t = 100)]
        latent: usize,
        #[arg(long, default_value_t = 10)]
        knn: usize,
        /// `union` or `mutual`.
        #[arg(long, default_value = "union")]
        knn_mode: String,
        /// `auto` or a non-negative value.
        #[arg(long, default_value = "auto")]
        ridge: String,
        /// Accepted for symmetry with the other commands; alignment has no
        /// random choices.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the three Laplacians as CSV into this directory.
        #[arg(long)]
        dump_laplacians: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map a feature file of one domain into the latent space.
    AlignProject {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        domain: DomainArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the encoder pair on aligned source and target features.
    AgeTrain {
        #[arg(long)]
        source_aligned: PathBuf,
        #[arg(long)]
        target_aligned: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        /// `scaled` or `uniform01`.
        #[arg(long, default_value = "scaled")]
        init: String,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `iteration,loss` rows of the summed encoder objective.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generalize aligned features with a trained encoder.
    AgeApply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        domain: DomainArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search and train the SVM on the labeled rows of a feature file.
    SvmTrain {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        cv: usize,
        /// Comma-separated; defaults to 2^-5, 2^-3, …, 2^15.
        #[arg(long)]
        c_grid: Option<String>,
        /// Comma-separated; defaults to 2^-15, 2^-13, …, 2^3.
        #[arg(long)]
        gamma_grid: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict labels with a pipeline (target domain) or a bare SVM.
    Predict {
        #[arg(long, conflicts_with = "svm", required_unless_present = "svm")]
        pipeline: Option<PathBuf>,
        #[arg(long)]
        svm: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full pipeline.
    Train {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify target samples with a trained pipeline.
    Test {
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Treat the labels of the input file as ground truth.
        #[arg(long)]
        truth: bool,
        #[arg(long, requires = "truth")]
        report: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Write one protocol split of a synthetic bundle as feature files.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the synthetic benchmark.
    BenchSynth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "na,kema,cdfag")]
        methods: String,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Emit `n,ap` rows over these latent dimensions instead.
        #[arg(long, value_delimiter = ',')]
        latent_sweep: Option<Vec<usize>>,
        /// Emit `method,mu,ap` rows over these trade-off weights instead.
        #[arg(long, value_delimiter = ',')]
        mu_sweep: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn labeled_rows(set: &FeatureSet) -> Result<(nalgebra::DMatrix<f64>, Vec<usize>)> {
    let (x, y) = set.labeled();
    if y.is_empty() {
        return Err(Error::InsufficientLabels("input has no labeled rows".into()));
    }
    Ok((x, y))
}

/// Bench/synth spec file: synthetic-data keys plus any run-config key.
fn read_spec(path: Option<&Path>) -> Result<(SynthSpec, PipelineConfig)> {
    let mut spec = SynthSpec::default();
    let mut config = PipelineConfig::default();
    let Some(path) = path else {
        return Ok((spec, config));
    };
    for (n, line) in fs::read_to_string(path)?.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !spec.set(k, v)? {
            config.set(k, v)?;
        }
    }
    config.validate()?;
    Ok((spec, config))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codebook {
            input,
            size,
            sample,
            seed,
            out,
        } => {
            let sets = io::read_descriptor_input(&input)?;
            save_model(&build_codebook(&sets, size, sample, seed)?, out)
        }
        Command::Encode {
            codebook,
            bases,
            pool,
            reg,
            input,
            labels,
            out,
        } => {
            let codebook: Codebook = load_model(codebook)?;
            let pooling: Pooling = pool.parse()?;
            let sets = io::read_descriptor_input(&input)?;
            let x = encode_videos(&sets, &codebook, bases, reg, pooling)?;
            let map = labels.map(|p| io::read_video_labels(&p)).transpose()?.unwrap_or_default();
            let y: Vec<_> = sets.iter().map(|s| map.get(&s.video_id).copied()).collect();
            write(&out, &io::features_csv(&x, &y))
        }
        Command::PcaFit { input, retain, out } => {
            let set = io::read_features(&input)?;
            save_model(&pca_fit(&set.features, retain)?, out)
        }
        Command::PcaProject { model, input, out } => {
            let model: PcaModel = load_model(model)?;
            let set = io::read_features(&input)?;
            write(&out, &io::features_csv(&model.project(&set.features)?, &set.labels))
        }
        Command::AlignFit {
            source,
            target,
            mu,
            latent,
            knn,
            knn_mode,
            ridge,
            seed: _,
            dump_laplacians,
            out,
        } => {
            let mut probe = PipelineConfig::default();
            probe.set("knn_mode", &knn_mode)?;
            probe.set("ridge", &ridge)?;
            let config = KemaConfig {
                mu,
                latent_dim: latent,
                knn_k: knn,
                ..probe.kema
            };
            let (s, t) = (io::read_features(&source)?, io::read_features(&target)?);
            let c = s.class_count().max(t.class_count());
            let bundle = DomainBundle::new(vec![s, t], c)?;
            if let Some(dir) = dump_laplacians {
                fs::create_dir_all(&dir)?;
                let lap = build_laplacians(&bundle, config.knn_k, config.symmetrization)?;
                write(&dir.join("topology.csv"), &io::matrix_csv(&lap.topology))?;
                write(&dir.join("similarity.csv"), &io::matrix_csv(&lap.similarity))?;
                write(&dir.join("dissimilarity.csv"), &io::matrix_csv(&lap.dissimilarity))?;
            }
            save_model(&kema_fit(&bundle, &config)?, out)
        }
        Command::AlignProject {
            model,
            domain,
            input,
            out,
        } => {
            let model: AlignmentModel = load_model(model)?;
            let set = io::read_features(&input)?;
            let z = kema_project(&model, domain.index(), &set.features)?;
            write(&out, &io::features_csv(&z, &set.labels))
        }
        Command::AgeTrain {
            source_aligned,
            target_aligned,
            iters,
            lr,
            momentum,
            init,
            hidden,
            batch,
            seed,
            loss_log,
            out,
        } => {
            let (s, t) = (io::read_features(&source_aligned)?, io::read_features(&target_aligned)?);
            let scaler = RangeScaler::fit(&[&s.features, &t.features])?;
            let (sx, sy) = labeled_rows(&s)?;
            let (tx, ty) = labeled_rows(&t)?;
            let (sx, tx) = (scaler.transform(&sx)?, scaler.transform(&tx)?);
            let c = s.class_count().max(t.class_count());
            let targets = class_targets(&sx, &sy, &tx, &ty, c)?;
            let config = TrainConfig {
                learning_rate: lr,
                momentum,
                iterations: iters,
                seed,
                init: init.parse::<WeightInit>()?,
                hidden,
                batch_size: batch,
            };
            let pair = age_train(&sx, &sy, &tx, &ty, &targets, &config)?;
            if let Some(path) = loss_log {
                let sum: Vec<f64> = pair
                    .source
                    .losses
                    .iter()
                    .zip(&pair.target.losses)
                    .map(|(a, b)| a + b)
                    .collect();
                write(&path, &io::loss_csv(&sum))?;
            }
            let bundle = EncoderBundle {
                scaler,
                targets,
                source: pair.source.model,
                target: pair.target.model,
            };
            save_model(&bundle, out)
        }
        Command::AgeApply {
            model,
            domain,
            input,
            out,
        } => {
            let bundle: EncoderBundle = load_model(model)?;
            let set = io::read_features(&input)?;
            let scaled = bundle.scaler.transform(&set.features)?;
            let encoder = match domain {
                DomainArg::Source => &bundle.source,
                DomainArg::Target => &bundle.target,
            };
            write(&out, &io::features_csv(&age_generalize(encoder, &scaled)?, &set.labels))
        }
        Command::SvmTrain {
            input,
            cv,
            c_grid,
            gamma_grid,
            seed,
            out,
        } => {
            let set = io::read_features(&input)?;
            let (x, y) = labeled_rows(&set)?;
            let config = ClassifierConfig {
                folds: cv,
                c_grid: c_grid.map(|g| parse_list("c_grid", &g)).transpose()?.unwrap_or_else(default_c_grid),
                gamma_grid: gamma_grid
                    .map(|g| parse_list("gamma_grid", &g))
                    .transpose()?
                    .unwrap_or_else(default_gamma_grid),
                ..ClassifierConfig::default()
            };
            let (svm, _) = fit_classifier(&x, &y, &config, seed)?;
            save_model(&svm, out)
        }
        Command::Predict {
            pipeline,
            svm,
            input,
            out,
        } => {
            let set = io::read_features(&input)?;
            let pred = match (pipeline, svm) {
                (Some(p), _) => {
                    let model: PipelineModel = load_model(p)?;
                    let [_, _, g] = generalize_domain(&model, TARGET, &set.features)?;
                    svm_predict(&model.svm, &g)?
                }
                (None, Some(s)) => svm_predict(&load_model(s)?, &set.features)?,
                (None, None) => return Err(Error::Config("--pipeline or --svm is required".into())),
            };
            write(&out, &io::predictions_csv(&pred))
        }
        Command::Train {
            source,
            target,
            config,
            out,
        } => {
            let config = match config {
                Some(p) => PipelineConfig::parse(&fs::read_to_string(p)?)?,
                None => PipelineConfig::default(),
            };
            let (s, t) = (io::read_features(&source)?, io::read_features(&target)?);
            let (model, trace) = train_pipeline(&s, &t, &config)?;
            log::info!("cross-validation accuracy {:.4}", trace.cv_accuracy);
            save_model(&model, out)
        }
        Command::Test {
            pipeline,
            input,
            truth,
            report,
            predictions,
        } => {
            let model: PipelineModel = load_model(pipeline)?;
            let mut set = io::read_features(&input)?;
            if !truth {
                set.labels.iter_mut().for_each(|l| *l = None);
            }
            let outcome = test_pipeline(&model, &set)?;
            match predictions {
                Some(p) => write(&p, &io::predictions_csv(&outcome.predictions))?,
                None if report.is_none() => print!("{}", io::predictions_csv(&outcome.predictions)),
                None => {}
            }
            match (report, outcome.report) {
                (Some(path), Some(r)) => write(&path, &r.to_csv())?,
                (Some(_), None) => return Err(Error::InsufficientLabels("no labeled rows to score".into())),
                (None, Some(r)) => println!("ap,{}", r.ap),
                (None, None) => {}
            }
            Ok(())
        }
        Command::Synth { spec, seed, out_dir } => {
            let (spec, config) = read_spec(spec.as_deref())?;
            let split = split_bundle(&generate(&spec)?, &config.splits, seed)?;
            fs::create_dir_all(&out_dir)?;
            io::write_features(&out_dir.join("source.csv"), &split.source)?;
            io::write_features(&out_dir.join("target.csv"), &split.target)?;
            io::write_features(&out_dir.join("target_test.csv"), &split.target_test)
        }
        Command::BenchSynth {
            spec,
            methods,
            seeds,
            latent_sweep: latent,
            mu_sweep: mus,
            out,
        } => {
            let (spec, config) = read_spec(spec.as_deref())?;
            let methods = methods.split(',').map(str::parse).collect::<Result<Vec<Method>>>()?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let bundle = generate(&spec)?;
            if let Some(grid) = latent {
                let mut s = String::from("n,ap\n");
                for (n, ap) in latent_sweep(&bundle, &config, &grid, &seeds)? {
                    s.push_str(&format!("{n},{ap}\n"));
                }
                return write(&out, &s);
            }
            if let Some(grid) = mus {
                let mut s = String::from("method,mu,ap\n");
                for &m in &methods {
                    for (mu, ap) in mu_sweep(&bundle, m, &config, &grid, &seeds)? {
                        s.push_str(&format!("{},{mu},{ap}\n", m.name()));
                    }
                }
                return write(&out, &s);
            }
            let rows = run_seeds(&bundle, &methods, &config, &seeds)?;
            for (m, mean, std) in mean_ap(&rows) {
                println!("{} {mean:.2} ± {std:.2}", m.name());
            }
            write(&out, &bench_csv(&rows, spec.class_count))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
