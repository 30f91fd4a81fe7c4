//! Synthetic benchmark problem, baselines and the comparison harness.
//!
//! `ring8` has eight continuous variables on the unit box and three
//! maximized objectives, each a Gaussian bump `exp(-|x - c_k|^2 / 0.8)`.
//! A design is feasible when `x1 + x2 <= 1.4` and `|x3 - x4| <= 0.6`; the
//! feasible region is convex, so interpolating feasible designs stays
//! feasible.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{
    fit_normalizer, write_designs_csv, Dataset, DatasetSchema, DesignColumn, DesignLayout,
    Direction, ObjectiveSpec, TargetSpec, FEASIBLE_DEFAULT_COLUMN,
};
use crate::error::{Error, Result};
use crate::gan::{sample_generator, train, GeneratorCheckpoint, TrainingLog, Variant};
use crate::linalg::Matrix;
use crate::metrics::{evaluate_all, DesignOracle, Evaluator, MetricsReport, ReportLabel};
use crate::nn::{train_surrogates, SurrogateCheckpoint, Surrogates};
use crate::stats;

pub const RING8: &str = "ring8";

const RING8_DIM: usize = 8;
const RING8_CENTERS: [[f64; 2]; 3] = [[0.25, 0.25], [0.75, 0.25], [0.5, 0.75]];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: String,
    pub design_dim: usize,
    pub objective_count: usize,
}

impl ProblemSpec {
    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            RING8 => Ok(ProblemSpec {
                id: RING8.to_string(),
                design_dim: RING8_DIM,
                objective_count: RING8_CENTERS.len(),
            }),
            other => Err(Error::Parameter(format!("unknown problem `{other}` (available: ring8)"))),
        }
    }

    pub fn oracle(&self) -> &'static dyn DesignOracle {
        &Ring8
    }

    pub fn design_columns(&self) -> Vec<DesignColumn> {
        (1..=self.design_dim)
            .map(|j| DesignColumn::Continuous {
                name: format!("x{j}"),
                min: 0.0,
                max: 1.0,
            })
            .collect()
    }

    /// Column roles of datasets written by [`make_synthetic_dataset`].
    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            design_continuous: (1..=self.design_dim).map(|j| format!("x{j}")).collect(),
            design_categorical: Default::default(),
            performance: self.objectives(),
            feasibility: FEASIBLE_DEFAULT_COLUMN.to_string(),
        }
    }

    pub fn objectives(&self) -> Vec<ObjectiveSpec> {
        (1..=self.objective_count)
            .map(|k| ObjectiveSpec::new(format!("p{k}"), Direction::Maximize))
            .collect()
    }
}

/// Exact oracle of the `ring8` problem.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ring8;

impl DesignOracle for Ring8 {
    fn objective_count(&self) -> usize {
        RING8_CENTERS.len()
    }

    fn evaluate(&self, raw_design: &[f64]) -> Result<(Vec<f64>, bool)> {
        oracle_eval(raw_design)
    }
}

/// Performance and feasibility of one `ring8` design.
pub fn oracle_eval(x: &[f64]) -> Result<(Vec<f64>, bool)> {
    if x.len() != RING8_DIM {
        return Err(Error::Dimension(format!("ring8 designs have 8 variables, got {}", x.len())));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain(format!("ring8 design outside the unit box: {x:?}")));
    }
    let perf = RING8_CENTERS
        .iter()
        .map(|c| {
            let d2: f64 = x
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let center = if j < 2 { c[j] } else { 0.5 };
                    (v - center) * (v - center)
                })
                .sum();
            (-d2 / 0.8).exp()
        })
        .collect();
    let feasible = x[0] + x[1] <= 1.4 && (x[2] - x[3]).abs() <= 0.6;
    Ok((perf, feasible))
}

/// `n` rows: 60% uniform on the box, 40% from `N(0.4, 0.15^2)` per
/// coordinate clipped to the box, each labeled by the oracle.
pub fn make_synthetic_dataset(spec: &ProblemSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n < 100 {
        return Err(Error::Parameter(format!("synthetic datasets need n >= 100, got {n}")));
    }
    let oracle = spec.oracle();
    let d = spec.design_dim;
    let t = spec.objective_count;
    let cluster: Normal<f64> = Normal::new(0.4, 0.15).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut designs = Matrix::zeros(n, d);
    let mut perf = Matrix::zeros(n, t);
    let mut feasible = Vec::with_capacity(n);
    for i in 0..n {
        let uniform = rng.random::<f64>() < 0.6;
        for v in designs.row_mut(i) {
            *v = if uniform {
                rng.random::<f64>()
            } else {
                cluster.sample(&mut rng).clamp(0.0, 1.0)
            };
        }
        let (p, f) = oracle.evaluate(designs.row(i))?;
        perf.row_mut(i).copy_from_slice(&p);
        feasible.push(f);
    }
    Dataset::new(spec.design_columns(), spec.objectives(), designs, perf, feasible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[serde(rename = "dataset")]
    DatasetSample,
    Interpolation,
}

impl Baseline {
    pub const ALL: [Baseline; 2] = [Baseline::DatasetSample, Baseline::Interpolation];

    /// Method label used in reports.
    pub fn name(self) -> &'static str {
        match self {
            Baseline::DatasetSample => "dataset",
            Baseline::Interpolation => "interpolation",
        }
    }
}

/// `lambda * a + (1 - lambda) * b` on continuous columns; each categorical
/// group is copied from `a` when `lambda >= 0.5`, else from `b`.
pub fn interpolate_pair(a: &[f64], b: &[f64], lambda: f64, layout: &DesignLayout) -> Vec<f64> {
    let mut out: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    let src = if lambda >= 0.5 { a } else { b };
    for &(start, len) in &layout.categorical {
        out[start..start + len].copy_from_slice(&src[start..start + len]);
    }
    for &j in &layout.continuous {
        // rounding must not step outside the segment
        out[j] = out[j].clamp(a[j].min(b[j]), a[j].max(b[j]));
    }
    out
}

/// Designs in data units drawn from the feasible rows of `data`.
pub fn baseline_generate(data: &Dataset, method: Baseline, n: usize, seed: u64) -> Result<Matrix> {
    let feasible = data.feasible_indices();
    if feasible.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "baselines need at least 2 feasible rows, got {}",
            feasible.len()
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = data.designs();
    match method {
        Baseline::DatasetSample => {
            let rows: Vec<usize> = if n <= feasible.len() {
                feasible.choose_multiple(&mut rng, n).copied().collect()
            } else {
                (0..n).map(|_| feasible[rng.random_range(0..feasible.len())]).collect()
            };
            Ok(x.select_rows(&rows))
        }
        Baseline::Interpolation => {
            let layout = data.layout();
            let mut out = Matrix::zeros(n, data.design_width());
            for i in 0..n {
                let a = feasible[rng.random_range(0..feasible.len())];
                let b = feasible[rng.random_range(0..feasible.len())];
                // open interval (0, 1)
                let lambda = loop {
                    let l = rng.random::<f64>();
                    if l > 0.0 {
                        break l;
                    }
                };
                out.row_mut(i)
                    .copy_from_slice(&interpolate_pair(x.row(a), x.row(b), lambda, &layout));
            }
            Ok(out)
        }
    }
}

/// A column of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Baseline(Baseline),
    Gan(Variant),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline(b) => b.name(),
            Method::Gan(v) => v.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset" | "dataset_sample" | "dataset-sample" => Ok(Method::Baseline(Baseline::DatasetSample)),
            "interpolation" => Ok(Method::Baseline(Baseline::Interpolation)),
            other => other.parse::<Variant>().map(Method::Gan),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub problem: String,
    pub dataset_size: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub baselines: Vec<Baseline>,
    pub eval_count: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            problem: RING8.to_string(),
            dataset_size: 4500,
            seeds: vec![0, 1, 2],
            variants: Variant::ALL.to_vec(),
            baselines: Baseline::ALL.to_vec(),
            eval_count: 250,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        ProblemSpec::by_id(&self.problem)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("benchmark.seeds must not be empty".into()));
        }
        if self.eval_count < 2 {
            return Err(Error::Config("benchmark.eval_count must be >= 2".into()));
        }
        if self.dataset_size < 100 {
            return Err(Error::Config("benchmark.dataset_size must be >= 100".into()));
        }
        Ok(())
    }

    /// Baselines first, then variants, each without repeats.
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        let all = self
            .baselines
            .iter()
            .map(|&b| Method::Baseline(b))
            .chain(self.variants.iter().map(|&v| Method::Gan(v)));
        for m in all {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }
}

/// Everything shared by the cells of one seed.
pub struct SeedContext {
    pub seed: u64,
    pub data: Dataset,
    pub targets: TargetSpec,
    pub surrogates: Surrogates,
    pub surrogate_checkpoint: SurrogateCheckpoint,
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedContext> {
    let spec = ProblemSpec::by_id(&cfg.benchmark.problem)?;
    let data = make_synthetic_dataset(&spec, cfg.benchmark.dataset_size, seed)?;
    let normalizer = fit_normalizer(&data)?;
    let targets = cfg.targets.compute(&data)?;
    let (surrogates, metrics) = train_surrogates(&data, &normalizer, &cfg.surrogate.with_seed(seed))?;
    let surrogate_checkpoint = SurrogateCheckpoint::new(&surrogates, metrics, &cfg.digest(), seed);
    Ok(SeedContext {
        seed,
        data,
        targets,
        surrogates,
        surrogate_checkpoint,
    })
}

/// Result of one (seed, method) cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub seed: u64,
    pub method: Method,
    pub result: std::result::Result<CellArtifacts, String>,
}

#[derive(Debug, Clone)]
pub struct CellArtifacts {
    pub report: MetricsReport,
    /// Evaluated designs in data units.
    pub designs: Matrix,
    pub training_log: Option<TrainingLog>,
    pub generator: Option<GeneratorCheckpoint>,
}

/// Generates and evaluates one method on a prepared seed.
pub fn run_cell(cfg: &ExperimentConfig, ctx: &SeedContext, method: Method) -> Result<CellArtifacts> {
    let spec = ProblemSpec::by_id(&cfg.benchmark.problem)?;
    let n = cfg.benchmark.eval_count;
    let digest = cfg.digest();
    let (designs, training_log, generator) = match method {
        Method::Baseline(b) => (baseline_generate(&ctx.data, b, n, ctx.seed)?, None, None),
        Method::Gan(v) => {
            let gan = cfg.gan_for(v, ctx.seed);
            let (model, log) = train(&ctx.data, &ctx.surrogates, &ctx.targets, &gan)?;
            let x = sample_generator(&model, n, ctx.seed, true)?;
            let raw = model.to_raw(&x)?;
            let ckpt = GeneratorCheckpoint::new(&model, v, ctx.seed, &digest);
            (raw, Some(log), Some(ckpt))
        }
    };
    let report = evaluate_all(
        &designs,
        &ctx.data,
        &ctx.surrogates.normalizer,
        &ctx.targets,
        &Evaluator::Oracle(spec.oracle()),
        &cfg.metrics,
        &ReportLabel {
            method: method.name().to_string(),
            seed: ctx.seed,
            config_digest: digest,
        },
    )?;
    Ok(CellArtifacts {
        report,
        designs,
        training_log,
        generator,
    })
}

/// Table row labels and how to read each from a report.
pub const SUMMARY_METRICS: [(&str, fn(&MetricsReport) -> f64); 8] = [
    ("Mean Target Success Rate (TSR)", |r| r.mean_tsr),
    ("Feasibility Rate (GFR)", |r| r.feasibility_rate),
    ("Mean Design Target Achievement Index (DTAI)", |r| r.mean_dtai),
    ("Mean Minimum Target Ratio (MTR)", |r| r.mean_mtr),
    ("Hypervolume (HV)", |r| r.hypervolume),
    ("Mean Design Novelty (DN)", |r| r.mean_novelty),
    ("Mean Design Space Diversity (DSD)", |r| r.design_space_diversity),
    ("Mean Performance Space Diversity (PSD)", |r| r.performance_space_diversity),
];

pub struct BenchmarkOutcome {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub contexts: Vec<std::result::Result<SeedContext, String>>,
    pub cells: Vec<CellOutcome>,
}

impl BenchmarkOutcome {
    pub fn report(&self, seed: u64, method: Method) -> Option<&MetricsReport> {
        self.cells
            .iter()
            .find(|c| c.seed == seed && c.method == method)
            .and_then(|c| c.result.as_ref().ok())
            .map(|a| &a.report)
    }

    /// Median over the seeds whose cell succeeded.
    pub fn median(&self, method: Method, metric: fn(&MetricsReport) -> f64) -> Option<f64> {
        let values: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method)
            .filter_map(|c| c.result.as_ref().ok())
            .map(|a| metric(&a.report))
            .collect();
        stats::median(&values)
    }

    pub fn failed_cells(&self) -> Vec<&CellOutcome> {
        self.cells.iter().filter(|c| c.result.is_err()).collect()
    }

    /// Rows are metrics, columns are methods; `NA` where every seed failed.
    pub fn write_summary_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let mut out = out;
        for line in preamble {
            writeln!(out, "# {line}").map_err(|e| Error::io("<summary output>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["metric".to_string()];
        header.extend(self.methods.iter().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for (label, metric) in SUMMARY_METRICS {
            let mut record = vec![label.to_string()];
            for &m in &self.methods {
                record.push(
                    self.median(m, metric)
                        .map_or_else(|| "NA".to_string(), |v| v.to_string()),
                );
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<summary output>", e))?;
        Ok(())
    }

    /// One row per (seed, method) cell.
    pub fn write_cells_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let mut out = out;
        for line in preamble {
            writeln!(out, "# {line}").map_err(|e| Error::io("<cells output>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "seed", "method", "status", "mean_tsr", "feasibility_rate", "mean_dtai", "mean_mtr",
            "hypervolume", "mean_novelty", "design_space_diversity", "performance_space_diversity",
            "error",
        ])?;
        for c in &self.cells {
            let mut record = vec![c.seed.to_string(), c.method.name().to_string()];
            match &c.result {
                Ok(a) => {
                    record.push("ok".into());
                    record.extend(SUMMARY_METRICS.iter().map(|(_, f)| f(&a.report).to_string()));
                    record.push(String::new());
                }
                Err(e) => {
                    record.push("failed".into());
                    record.extend(std::iter::repeat_n(String::new(), SUMMARY_METRICS.len()));
                    record.push(e.clone());
                }
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<cells output>", e))?;
        Ok(())
    }
}

/// Runs every (seed, method) cell. Stage failures are recorded per cell and
/// never abort the rest. Cells fan out over `threads` workers; results are
/// collected in seed-then-method order regardless.
pub fn run_benchmark(cfg: &ExperimentConfig, threads: usize) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let seeds = cfg.benchmark.seeds.clone();
    let methods = cfg.benchmark.methods();
    let contexts: Vec<std::result::Result<SeedContext, String>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| prepare_seed(cfg, s).map_err(|e| format!("seed preparation: {e}")))
            .collect()
    });
    let jobs: Vec<(usize, Method)> = (0..seeds.len())
        .flat_map(|i| methods.iter().map(move |&m| (i, m)))
        .collect();
    let cells: Vec<CellOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, method)| CellOutcome {
                seed: seeds[i],
                method,
                result: match &contexts[i] {
                    Ok(ctx) => run_cell(cfg, ctx, method).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                },
            })
            .collect()
    });
    Ok(BenchmarkOutcome {
        methods,
        seeds,
        contexts,
        cells,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes `summary.csv`, `cells.csv` and per-cell artifacts under
/// `<out_dir>/<seed>/<method>/`.
pub fn write_benchmark_outputs(outcome: &BenchmarkOutcome, cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let all_seeds = outcome
        .seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let run_preamble = vec![
        format!("config_digest={}", cfg.digest()),
        format!("seeds={all_seeds}"),
    ];
    outcome.write_summary_csv(create(&out_dir.join("summary.csv"))?, &run_preamble)?;
    outcome.write_cells_csv(create(&out_dir.join("cells.csv"))?, &run_preamble)?;

    for (seed, ctx) in outcome.seeds.iter().zip(&outcome.contexts) {
        let seed_dir = out_dir.join(seed.to_string());
        let preamble = cfg.preamble(*seed);
        match ctx {
            Ok(ctx) => {
                ctx.data.write_csv(create(&seed_dir.join("dataset.csv"))?, &preamble)?;
                serde_json::to_writer_pretty(create(&seed_dir.join("targets.json"))?, &ctx.targets)?;
                serde_json::to_writer(create(&seed_dir.join("surrogates.json"))?, &ctx.surrogate_checkpoint)?;
            }
            Err(e) => {
                let mut f = create(&seed_dir.join("error.txt"))?;
                writeln!(f, "{e}").map_err(|err| Error::io(&seed_dir, err))?;
            }
        }
    }
    for cell in &outcome.cells {
        let dir = out_dir.join(cell.seed.to_string()).join(cell.method.name());
        let preamble = cfg.preamble(cell.seed);
        match &cell.result {
            Ok(a) => {
                a.report.write_json(create(&dir.join("report.json"))?)?;
                a.report.write_per_design_csv(create(&dir.join("per_design.csv"))?, &preamble)?;
                let columns = ProblemSpec::by_id(&cfg.benchmark.problem)?.design_columns();
                write_designs_csv(&columns, &a.designs, create(&dir.join("designs.csv"))?, &preamble)?;
                if let Some(log) = &a.training_log {
                    log.write_csv(create(&dir.join("training_log.csv"))?, &preamble)?;
                }
                if let Some(g) = &a.generator {
                    serde_json::to_writer(create(&dir.join("generator.json"))?, g)?;
                }
            }
            Err(e) => {
                let mut f = create(&dir.join("error.txt"))?;
                writeln!(f, "{e}").map_err(|err| Error::io(&dir, err))?;
            }
        }
    }
    Ok(())
}
