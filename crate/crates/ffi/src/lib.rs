//! C ABI over the `dtaigen` library.
//!
//! Every fallible function returns a [`DtaigenStatus`]; on failure the
//! message is available from [`dtaigen_last_error`] on the same thread.
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released by the matching `*_free`. Matrices are row-major
//! `double` buffers whose shapes are passed alongside.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dtaigen::benchmark::{make_synthetic_dataset, oracle_eval, ProblemSpec};
use dtaigen::data::{
    compute_targets, fit_normalizer, load_dataset, target_ratios, Dataset, DatasetSchema,
    Direction, TargetSpec,
};
use dtaigen::dpp::{DppTerm, KernelConfig};
use dtaigen::dtai::{achievement_score, dtai_grad_wrt_performance, dtai_score};
use dtaigen::gan::{sample_generator, GeneratorCheckpoint, GeneratorModel};
use dtaigen::linalg::Matrix;
use dtaigen::metrics::{evaluate_all, hv_exact, hv_monte_carlo, Evaluator, MetricsConfig, ReportLabel};
use dtaigen::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtaigenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Schema = 3,
    Parse = 4,
    DegenerateColumn = 5,
    Parameter = 6,
    InsufficientData = 7,
    Domain = 8,
    Dimension = 9,
    Contract = 10,
    Divergence = 11,
    Numerical = 12,
    Config = 13,
    Io = 14,
    Panic = 15,
}

/// Opaque dataset handle.
pub struct DtaigenDataset {
    inner: Dataset,
}

/// Opaque target specification handle.
pub struct DtaigenTargets {
    inner: TargetSpec,
}

/// Opaque trained generator handle.
pub struct DtaigenGenerator {
    inner: GeneratorModel,
}

/// Set-level evaluation metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DtaigenMetrics {
    pub mean_tsr: f64,
    pub feasibility_rate: f64,
    pub mean_dtai: f64,
    pub mean_mtr: f64,
    pub hypervolume: f64,
    pub mean_novelty: f64,
    pub design_space_diversity: f64,
    pub performance_space_diversity: f64,
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DtaigenStatus {
    match e {
        Error::Schema { .. } => DtaigenStatus::Schema,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => DtaigenStatus::Parse,
        Error::DegenerateColumn { .. } => DtaigenStatus::DegenerateColumn,
        Error::Parameter(_) => DtaigenStatus::Parameter,
        Error::InsufficientData(_) => DtaigenStatus::InsufficientData,
        Error::Domain(_) => DtaigenStatus::Domain,
        Error::Dimension(_) => DtaigenStatus::Dimension,
        Error::Contract(_) => DtaigenStatus::Contract,
        Error::Divergence { .. } => DtaigenStatus::Divergence,
        Error::Numerical(_) => DtaigenStatus::Numerical,
        Error::Config(_) => DtaigenStatus::Config,
        Error::Io { .. } => DtaigenStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> DtaigenStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            DtaigenStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            DtaigenStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_last_error(format!("not valid UTF-8: {what}"));
            DtaigenStatus::InvalidString
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            DtaigenStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn matrix(values: &[f64], rows: usize, cols: usize) -> Result<Matrix, Failure> {
    Ok(Matrix::from_vec(rows, cols, values.to_vec())?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dtaigen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn dtaigen_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Per-objective achievement score of ratio `r`.
///
/// # Safety
/// `out` must be a valid pointer to one `double`.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_achievement_score(r: f64, alpha: f64, beta: f64, out: *mut f64) -> DtaigenStatus {
    guard(|| {
        let v = achievement_score(r, alpha, beta)?;
        *slice_mut(out, 1, "out")?.first_mut().expect("len 1") = v;
        Ok(())
    })
}

/// Builds a target specification. `directions[k]` is 0 for maximize and 1
/// for minimize.
///
/// # Safety
/// `targets`, `alpha`, `beta` and `directions` must each hold `count`
/// elements; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_targets_new(
    targets: *const f64,
    alpha: *const f64,
    beta: *const f64,
    directions: *const i32,
    count: usize,
    out: *mut *mut DtaigenTargets,
) -> DtaigenStatus {
    guard(|| {
        let t = slice(targets, count, "targets")?;
        let a = slice(alpha, count, "alpha")?;
        let b = slice(beta, count, "beta")?;
        if count > 0 && directions.is_null() {
            return Err(Failure::Null("directions"));
        }
        let dirs = (0..count)
            .map(|k| match *directions.add(k) {
                0 => Ok(Direction::Maximize),
                1 => Ok(Direction::Minimize),
                other => Err(Error::Parameter(format!("direction code {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let spec = TargetSpec::new(t.to_vec(), a.to_vec(), b.to_vec(), dirs)?;
        put(out, DtaigenTargets { inner: spec })
    })
}

/// Number of objectives, or 0 for a null handle.
///
/// # Safety
/// `targets` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_targets_count(targets: *const DtaigenTargets) -> usize {
    targets.as_ref().map_or(0, |t| t.inner.objective_count())
}

/// Copies the target values into `out` (`count` elements).
///
/// # Safety
/// `targets` must be a live handle; `out` must hold the objective count.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_targets_values(targets: *const DtaigenTargets, out: *mut f64) -> DtaigenStatus {
    guard(|| {
        let t = &handle(targets, "targets")?.inner;
        slice_mut(out, t.objective_count(), "out")?.copy_from_slice(&t.targets);
        Ok(())
    })
}

/// # Safety
/// `targets` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_targets_free(targets: *mut DtaigenTargets) {
    if !targets.is_null() {
        drop(Box::from_raw(targets));
    }
}

/// Achievement ratios of an `n x T` performance matrix into `out` (`n x T`).
///
/// # Safety
/// `perf` and `out` must hold `n * T` elements.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_target_ratios(
    targets: *const DtaigenTargets,
    perf: *const f64,
    n: usize,
    out: *mut f64,
) -> DtaigenStatus {
    guard(|| {
        let t = &handle(targets, "targets")?.inner;
        let k = t.objective_count();
        let p = matrix(slice(perf, n * k, "perf")?, n, k)?;
        let r = target_ratios(&p, t)?;
        slice_mut(out, n * k, "out")?.copy_from_slice(r.values().as_slice());
        Ok(())
    })
}

/// DTAI of each of `n` designs, and optionally `dDTAI/dp` (`n x T`).
///
/// # Safety
/// `perf` must hold `n * T` elements, `out_dtai` `n` elements, and
/// `out_grad` must be null or hold `n * T` elements.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dtai(
    targets: *const DtaigenTargets,
    perf: *const f64,
    n: usize,
    out_dtai: *mut f64,
    out_grad: *mut f64,
) -> DtaigenStatus {
    guard(|| {
        let t = &handle(targets, "targets")?.inner;
        let k = t.objective_count();
        let p = matrix(slice(perf, n * k, "perf")?, n, k)?;
        let r = target_ratios(&p, t)?;
        let s = dtai_score(&r, t)?;
        slice_mut(out_dtai, n, "out_dtai")?.copy_from_slice(&s.dtai);
        if !out_grad.is_null() {
            let g = dtai_grad_wrt_performance(&s, &r, t, &p)?;
            slice_mut(out_grad, n * k, "out_grad")?.copy_from_slice(g.as_slice());
        }
        Ok(())
    })
}

/// Quality-weighted DPP loss of a `b x d` batch with qualities `q`, and
/// optionally its gradients with respect to the batch and the qualities.
///
/// # Safety
/// `x` must hold `b * d` elements and `q` `b`; `out_loss` must be valid;
/// `out_grad_x` (`b * d`) and `out_grad_q` (`b`) may be null.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dpp_loss(
    x: *const f64,
    b: usize,
    d: usize,
    q: *const f64,
    sigma: f64,
    gamma_q: f64,
    jitter: f64,
    out_loss: *mut f64,
    out_grad_x: *mut f64,
    out_grad_q: *mut f64,
) -> DtaigenStatus {
    guard(|| {
        let xm = matrix(slice(x, b * d, "x")?, b, d)?;
        let qv = slice(q, b, "q")?;
        let cfg = KernelConfig {
            sigma,
            gamma_q,
            jitter,
        };
        let term = DppTerm::evaluate(&xm, qv, &cfg)?;
        slice_mut(out_loss, 1, "out_loss")?[0] = term.loss.loss;
        if !out_grad_x.is_null() {
            slice_mut(out_grad_x, b * d, "out_grad_x")?.copy_from_slice(term.grad_x.as_slice());
        }
        if !out_grad_q.is_null() {
            slice_mut(out_grad_q, b, "out_grad_q")?.copy_from_slice(&term.grad_q);
        }
        Ok(())
    })
}

/// Exact hypervolume of `n` maximization-form points in `t` objectives.
///
/// # Safety
/// `points` must hold `n * t` elements, `reference` `t`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_hypervolume_exact(
    points: *const f64,
    n: usize,
    t: usize,
    reference: *const f64,
    out: *mut f64,
) -> DtaigenStatus {
    guard(|| {
        let p = matrix(slice(points, n * t, "points")?, n, t)?;
        let r = slice(reference, t, "reference")?;
        if t == 0 {
            return Err(Error::Dimension("at least one objective is required".into()).into());
        }
        slice_mut(out, 1, "out")?[0] = hv_exact(&p, r);
        Ok(())
    })
}

/// Monte Carlo hypervolume inside the box `[reference, bound]`.
///
/// # Safety
/// `points` must hold `n * t` elements, `reference` and `bound` `t` each;
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_hypervolume_monte_carlo(
    points: *const f64,
    n: usize,
    t: usize,
    reference: *const f64,
    bound: *const f64,
    samples: usize,
    seed: u64,
    out: *mut f64,
) -> DtaigenStatus {
    guard(|| {
        let p = matrix(slice(points, n * t, "points")?, n, t)?;
        let r = slice(reference, t, "reference")?;
        let bd = slice(bound, t, "bound")?;
        slice_mut(out, 1, "out")?[0] = hv_monte_carlo(&p, r, bd, samples, seed)?;
        Ok(())
    })
}

/// Exact oracle of the built-in `ring8` problem: three performances and a
/// feasibility flag for an 8-variable design in the unit box.
///
/// # Safety
/// `x` must hold 8 elements, `out_perf` 3; `out_feasible` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_ring8_eval(x: *const f64, out_perf: *mut f64, out_feasible: *mut bool) -> DtaigenStatus {
    guard(|| {
        let (p, f) = oracle_eval(slice(x, 8, "x")?)?;
        slice_mut(out_perf, 3, "out_perf")?.copy_from_slice(&p);
        if out_feasible.is_null() {
            return Err(Failure::Null("out_feasible"));
        }
        *out_feasible = f;
        Ok(())
    })
}

/// Synthesizes `n` labeled rows of a built-in problem.
///
/// # Safety
/// `problem` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_synthetic(
    problem: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut DtaigenDataset,
) -> DtaigenStatus {
    guard(|| {
        let spec = ProblemSpec::by_id(text(problem, "problem")?)?;
        let data = make_synthetic_dataset(&spec, n, seed)?;
        put(out, DtaigenDataset { inner: data })
    })
}

/// Loads a CSV dataset with column roles given as a JSON schema document.
///
/// # Safety
/// `csv_path` and `schema_json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_load(
    csv_path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut DtaigenDataset,
) -> DtaigenStatus {
    guard(|| {
        let schema = DatasetSchema::from_json_str(text(schema_json, "schema_json")?)?;
        let data = load_dataset(Path::new(text(csv_path, "csv_path")?), &schema)?;
        put(out, DtaigenDataset { inner: data })
    })
}

/// Row count, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_rows(data: *const DtaigenDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.n_rows())
}

/// Encoded design width, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_width(data: *const DtaigenDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.design_width())
}

/// Objective count, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_objectives(data: *const DtaigenDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.objective_count())
}

/// Copies the encoded `rows x width` design matrix into `out`.
///
/// # Safety
/// `data` must be a live handle and `out` hold `rows * width` elements.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_designs(data: *const DtaigenDataset, out: *mut f64) -> DtaigenStatus {
    guard(|| {
        let d = &handle(data, "data")?.inner;
        let src = d.designs().as_slice();
        slice_mut(out, src.len(), "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// Targets at `percentile` of the feasible rows, with per-objective `alpha`
/// and `beta`.
///
/// # Safety
/// `data` must be a live handle; `alpha` and `beta` must hold one value per
/// objective; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_targets(
    data: *const DtaigenDataset,
    percentile: f64,
    alpha: *const f64,
    beta: *const f64,
    out: *mut *mut DtaigenTargets,
) -> DtaigenStatus {
    guard(|| {
        let d = &handle(data, "data")?.inner;
        let t = d.objective_count();
        let spec = compute_targets(d, percentile, slice(alpha, t, "alpha")?, slice(beta, t, "beta")?)?;
        put(out, DtaigenTargets { inner: spec })
    })
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_dataset_free(data: *mut DtaigenDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Loads a generator checkpoint written by the `train` command.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_generator_load(path: *const c_char, out: *mut *mut DtaigenGenerator) -> DtaigenStatus {
    guard(|| {
        let p = text(path, "path")?;
        let body = std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.into(),
            source: e,
        })?;
        let ckpt: GeneratorCheckpoint = serde_json::from_str(&body).map_err(Error::from)?;
        put(out, DtaigenGenerator { inner: ckpt.to_model()? })
    })
}

/// Encoded design width produced by the generator, or 0 for null.
///
/// # Safety
/// `generator` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_generator_width(generator: *const DtaigenGenerator) -> usize {
    generator.as_ref().map_or(0, |g| g.inner.layout().width)
}

/// Samples `n` designs in data units into `out` (`n x width`). With `hard`,
/// categorical groups are emitted one-hot.
///
/// # Safety
/// `generator` must be a live handle and `out` hold `n * width` elements.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_generator_sample(
    generator: *const DtaigenGenerator,
    n: usize,
    seed: u64,
    hard: bool,
    out: *mut f64,
) -> DtaigenStatus {
    guard(|| {
        let g = &handle(generator, "generator")?.inner;
        let x = sample_generator(g, n, seed, hard)?;
        let raw = g.to_raw(&x)?;
        slice_mut(out, raw.as_slice().len(), "out")?.copy_from_slice(raw.as_slice());
        Ok(())
    })
}

/// # Safety
/// `generator` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_generator_free(generator: *mut DtaigenGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

/// Scores `m` designs (data units, `m x width`) with the exact oracle of
/// `problem`, relative to `data` and `targets`.
///
/// # Safety
/// Handles must be live, `problem` NUL-terminated, `designs` must hold
/// `m * width` elements and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtaigen_evaluate(
    data: *const DtaigenDataset,
    targets: *const DtaigenTargets,
    designs: *const f64,
    m: usize,
    problem: *const c_char,
    out: *mut DtaigenMetrics,
) -> DtaigenStatus {
    guard(|| {
        let d = &handle(data, "data")?.inner;
        let t = &handle(targets, "targets")?.inner;
        let spec = ProblemSpec::by_id(text(problem, "problem")?)?;
        let w = d.design_width();
        let x = matrix(slice(designs, m * w, "designs")?, m, w)?;
        let normalizer = fit_normalizer(d)?;
        let report = evaluate_all(
            &x,
            d,
            &normalizer,
            t,
            &Evaluator::Oracle(spec.oracle()),
            &MetricsConfig::default(),
            &ReportLabel {
                method: "ffi".into(),
                seed: 0,
                config_digest: String::new(),
            },
        )?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        ptr::write(
            out,
            DtaigenMetrics {
                mean_tsr: report.mean_tsr,
                feasibility_rate: report.feasibility_rate,
                mean_dtai: report.mean_dtai,
                mean_mtr: report.mean_mtr,
                hypervolume: report.hypervolume,
                mean_novelty: report.mean_novelty,
                design_space_diversity: report.design_space_diversity,
                performance_space_diversity: report.performance_space_diversity,
            },
        );
        Ok(())
    })
}
