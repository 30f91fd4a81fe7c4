//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for
//! runtime and numerical failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::benchmark::{
    make_synthetic_dataset, run_benchmark, write_benchmark_outputs, ProblemSpec,
};
use crate::config::ExperimentConfig;
use crate::data::{
    fit_normalizer, load_dataset, read_designs_csv, write_designs_csv, Dataset, DatasetSchema,
    TargetSpec,
};
use crate::error::Error;
use crate::gan::{sample_generator, train, GeneratorCheckpoint, Variant};
use crate::metrics::{evaluate_all, kde_density, kde_grid, write_kde_csv, Evaluator, ReportLabel};
use crate::nn::{train_surrogates, SurrogateCheckpoint};

#[derive(Debug, Parser)]
#[command(name = "dtaigen", version, about = "Target-aware generative design toolkit")]
pub struct Cli {
    /// JSON experiment config; defaults apply to anything omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a dataset for a built-in problem.
    MakeData {
        #[arg(long, default_value = "ring8")]
        problem: String,
        #[arg(long, default_value_t = 4500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the performance regressor and feasibility classifier.
    TrainSurrogates {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a generator variant against frozen surrogates.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        surrogates: PathBuf,
        /// proposed, no-dtai, no-clf, no-dtai-no-clf or vanilla.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Generator checkpoint (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Training log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Targets used during training (JSON).
        #[arg(long)]
        targets_out: Option<PathBuf>,
    },
    /// Sample designs from a trained generator.
    Generate {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep softmax-relaxed categorical groups instead of one-hot.
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a design set against a dataset and targets.
    Evaluate {
        #[arg(long)]
        designs: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Targets file; computed from the dataset when absent.
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Surrogate checkpoint used when no exact oracle is available.
        #[arg(long)]
        surrogates: Option<PathBuf>,
        /// Number of leading designs to evaluate.
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[arg(long, default_value = "generated")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-design metrics to export as KDE curves (tsr, mtr, dtai, novelty).
        #[arg(long, value_delimiter = ',')]
        kde: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the full comparison on a synthetic problem.
    Benchmark {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Overrides benchmark.seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

#[derive(Debug, clap::Args)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Column roles (JSON); falls back to the config's schema.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Built-in problem whose schema and oracle apply to the dataset.
    #[arg(long)]
    pub problem: Option<String>,
}

/// Targets as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    pub config_digest: String,
    pub seed: u64,
    pub targets: TargetSpec,
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

trait At<T> {
    fn at(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> At<T> for Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            stage,
            error: e.into(),
        })
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { 0 } else { 1 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}: {}", f.stage, f.error);
            if f.error.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path).at("reading config")?,
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::MakeData { problem, n, seed, out } => {
            cfg.benchmark.problem = problem;
            cfg.benchmark.dataset_size = n;
            let spec = ProblemSpec::by_id(&cfg.benchmark.problem).at("make-data")?;
            let data = make_synthetic_dataset(&spec, n, seed).at("synthesizing dataset")?;
            data.write_csv(create(&out)?, &cfg.preamble(seed)).at("writing dataset")?;
            let infeasible = data.feasible().iter().filter(|&&f| !f).count();
            eprintln!(
                "wrote {} rows ({} infeasible) to {}",
                data.n_rows(),
                infeasible,
                out.display()
            );
        }
        Command::TrainSurrogates { data, seed, out } => {
            cfg.surrogate = cfg.surrogate.with_seed(seed);
            let dataset = load(&data, &cfg)?;
            let norm = fit_normalizer(&dataset).at("fitting normalizer")?;
            let (s, metrics) = train_surrogates(&dataset, &norm, &cfg.surrogate).at("training surrogates")?;
            let ckpt = SurrogateCheckpoint::new(&s, metrics, &cfg.digest(), seed);
            write_json(&out, &ckpt)?;
            eprintln!(
                "regressor held-out RMSE {}, classifier held-out accuracy {}",
                fmt_opt(metrics.regressor_rmse),
                fmt_opt(metrics.classifier_accuracy)
            );
        }
        Command::Train {
            data,
            surrogates,
            variant,
            seed,
            out,
            log,
            targets_out,
        } => {
            if let Some(v) = variant {
                cfg.gan.variant = v.parse::<Variant>().at("parsing --variant")?;
            }
            if let Some(s) = seed {
                cfg.gan.seed = s;
            }
            let gan = cfg.gan_for(cfg.gan.variant, cfg.gan.seed);
            let dataset = load(&data, &cfg)?;
            let s = read_json::<SurrogateCheckpoint>(&surrogates)?
                .to_surrogates()
                .at("loading surrogates")?;
            let targets = cfg.targets.compute(&dataset).at("computing targets")?;
            let (model, training_log) = train(&dataset, &s, &targets, &gan).at("training generator")?;
            let digest = cfg.digest();
            write_json(&out, &GeneratorCheckpoint::new(&model, gan.variant, gan.seed, &digest))?;
            if let Some(path) = log {
                training_log
                    .write_csv(create(&path)?, &cfg.preamble(gan.seed))
                    .at("writing training log")?;
            }
            if let Some(path) = targets_out {
                write_json(
                    &path,
                    &TargetsFile {
                        config_digest: digest,
                        seed: gan.seed,
                        targets,
                    },
                )?;
            }
        }
        Command::Generate {
            generator,
            n,
            seed,
            soft,
            out,
        } => {
            cfg.benchmark.eval_count = n;
            let model = read_json::<GeneratorCheckpoint>(&generator)?
                .to_model()
                .at("loading generator")?;
            let x = sample_generator(&model, n, seed, !soft).at("sampling generator")?;
            let raw = model.to_raw(&x).at("denormalizing designs")?;
            write_designs_csv(&model.design_columns, &raw, create(&out)?, &cfg.preamble(seed))
                .at("writing designs")?;
        }
        Command::Evaluate {
            designs,
            data,
            targets,
            surrogates,
            n,
            method,
            seed,
            kde,
            out_dir,
        } => {
            cfg.benchmark.eval_count = n;
            let dataset = load(&data, &cfg)?;
            let file = File::open(&designs).map_err(|e| Error::io(&designs, e)).at("reading designs")?;
            let all = read_designs_csv(file, dataset.design_columns()).at("reading designs")?;
            if all.rows() < n {
                return Err(Failure {
                    stage: "reading designs",
                    error: Error::InsufficientData(format!(
                        "{} holds {} designs, {n} requested",
                        designs.display(),
                        all.rows()
                    )),
                });
            }
            let x = all.select_rows(&(0..n).collect::<Vec<_>>());
            let targets = match targets {
                Some(path) => read_json::<TargetsFile>(&path)?.targets,
                None => cfg.targets.compute(&dataset).at("computing targets")?,
            };
            let problem = data
                .problem
                .as_deref()
                .map(ProblemSpec::by_id)
                .transpose()
                .at("resolving problem")?;
            let loaded_surrogates = surrogates
                .map(|p| read_json::<SurrogateCheckpoint>(&p)?.to_surrogates().at("loading surrogates"))
                .transpose()?;
            let evaluator = match (&problem, &loaded_surrogates) {
                (Some(p), _) => Evaluator::Oracle(p.oracle()),
                (None, Some(s)) => Evaluator::Surrogates(s),
                (None, None) => {
                    return Err(Failure {
                        stage: "evaluate",
                        error: Error::Config("evaluation needs --problem (oracle) or --surrogates".into()),
                    })
                }
            };
            let normalizer = match &loaded_surrogates {
                Some(s) => s.normalizer.clone(),
                None => fit_normalizer(&dataset).at("fitting normalizer")?,
            };
            let report = evaluate_all(
                &x,
                &dataset,
                &normalizer,
                &targets,
                &evaluator,
                &cfg.metrics,
                &ReportLabel {
                    method: method.clone(),
                    seed,
                    config_digest: cfg.digest(),
                },
            )
            .at("evaluating designs")?;
            let preamble = cfg.preamble(seed);
            report
                .write_json(create(&out_dir.join("report.json"))?)
                .at("writing report")?;
            report
                .write_per_design_csv(create(&out_dir.join("per_design.csv"))?, &preamble)
                .at("writing per-design scores")?;
            for metric in &kde {
                let values = report.per_design_values(metric).at("kde export")?;
                let grid = kde_grid(&values, cfg.metrics.kde_grid_points).at("kde export")?;
                let density = kde_density(&values, &grid).at("kde export")?;
                let path = out_dir.join(format!("kde_{method}_{metric}.csv"));
                write_kde_csv(create(&path)?, &grid, &density, &preamble).at("writing kde")?;
            }
            println!(
                "tsr {:.4}  gfr {:.4}  dtai {:.4}  mtr {:.4}  hv {:.6}  novelty {:.4}  dsd {:.4}  psd {:.4}",
                report.mean_tsr,
                report.feasibility_rate,
                report.mean_dtai,
                report.mean_mtr,
                report.hypervolume,
                report.mean_novelty,
                report.design_space_diversity,
                report.performance_space_diversity
            );
        }
        Command::Benchmark {
            out_dir,
            threads,
            seeds,
        } => {
            if !seeds.is_empty() {
                cfg.benchmark.seeds = seeds;
            }
            let outcome = run_benchmark(&cfg, threads).at("benchmark")?;
            write_benchmark_outputs(&outcome, &cfg, &out_dir).at("writing benchmark outputs")?;
            for cell in outcome.failed_cells() {
                if let Err(e) = &cell.result {
                    eprintln!("cell seed={} method={} failed: {e}", cell.seed, cell.method);
                }
            }
            let mut stdout = std::io::stdout().lock();
            outcome
                .write_summary_csv(&mut stdout, &[])
                .at("printing summary")?;
            if outcome.cells.iter().all(|c| c.result.is_err()) {
                return Err(Failure {
                    stage: "benchmark",
                    error: Error::Numerical("every benchmark cell failed".into()),
                });
            }
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn schema_for(args: &DataArgs, cfg: &ExperimentConfig) -> Result<DatasetSchema, Failure> {
    if let Some(path) = &args.schema {
        return DatasetSchema::from_path(path).at("reading schema");
    }
    if let Some(schema) = &cfg.schema {
        return Ok(schema.clone());
    }
    if let Some(problem) = &args.problem {
        return Ok(ProblemSpec::by_id(problem).at("resolving problem")?.schema());
    }
    Err(Failure {
        stage: "reading dataset",
        error: Error::Config("no schema: pass --schema, set `schema` in the config, or name a --problem".into()),
    })
}

fn load(args: &DataArgs, cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    let schema = schema_for(args, cfg)?;
    load_dataset(&args.data, &schema).at("reading dataset")
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(parent, e))
            .at("creating output directory")?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
        .at("creating output file")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, value).at("writing json")?;
    w.flush().map_err(|e| Error::io(path, e)).at("writing json")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path, e))
        .at("reading json")?;
    serde_json::from_str(&text).at("parsing json")
}
