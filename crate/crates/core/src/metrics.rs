//! Evaluation of generated design sets.
//!
//! Per-design: target success rate (fraction of objectives whose ratio is
//! at least 1), minimum target ratio, DTAI, feasibility and novelty
//! (distance to the nearest dataset design). Per-set: means of those plus
//! hypervolume and mean pairwise distance in normalized design and
//! performance space.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{target_ratios, Dataset, Direction, Normalizer, TargetSpec};
use crate::dtai::dtai_score;
use crate::error::{Error, Result};
use crate::gan::RATIO_FLOOR;
use crate::linalg::{squared_distance, Matrix};
use crate::nn::Surrogates;
use crate::stats;

/// Ground-truth performance and feasibility of a design in data units.
pub trait DesignOracle: Sync {
    fn objective_count(&self) -> usize;
    fn evaluate(&self, raw_design: &[f64]) -> Result<(Vec<f64>, bool)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMetrics {
    pub tsr: Vec<f64>,
    pub mtr: Vec<f64>,
    pub dtai: Vec<f64>,
}

impl TargetMetrics {
    pub fn mean_tsr(&self) -> f64 {
        stats::mean(&self.tsr)
    }

    pub fn mean_mtr(&self) -> f64 {
        stats::mean(&self.mtr)
    }

    pub fn mean_dtai(&self) -> f64 {
        stats::mean(&self.dtai)
    }
}

/// A target counts as met when its ratio is at least 1.
pub fn target_metrics(perf: &Matrix, targets: &TargetSpec) -> Result<TargetMetrics> {
    let ratios = target_ratios(perf, targets)?;
    let scores = dtai_score(&ratios, targets)?;
    let t = ratios.cols() as f64;
    let mut tsr = Vec::with_capacity(ratios.rows());
    let mut mtr = Vec::with_capacity(ratios.rows());
    for row in ratios.values().row_iter() {
        tsr.push(row.iter().filter(|&&r| r >= 1.0).count() as f64 / t);
        mtr.push(row.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok(TargetMetrics {
        tsr,
        mtr,
        dtai: scores.dtai,
    })
}

/// Whether a judgment came from ground truth or a surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Estimated,
}

pub enum Judge<'a> {
    Oracle(&'a dyn DesignOracle),
    Classifier {
        surrogates: &'a Surrogates,
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    pub rate: f64,
    pub feasible: Vec<bool>,
    pub provenance: Provenance,
}

/// Fraction of designs judged feasible. `designs` are in data units.
pub fn feasibility_rate(
    designs: &Matrix,
    normalizer: &Normalizer,
    judge: Option<&Judge<'_>>,
) -> Result<FeasibilityResult> {
    let judge = judge.ok_or_else(|| {
        Error::Config("feasibility needs either an oracle or a classifier".into())
    })?;
    let (feasible, provenance) = match judge {
        Judge::Oracle(oracle) => {
            let flags = designs
                .row_iter()
                .map(|r| oracle.evaluate(r).map(|(_, f)| f))
                .collect::<Result<Vec<_>>>()?;
            (flags, Provenance::Exact)
        }
        Judge::Classifier {
            surrogates,
            threshold,
        } => {
            let p = surrogates
                .classifier
                .predict(&normalizer.normalize_designs(designs)?)?;
            (
                p.as_slice().iter().map(|&v| v >= *threshold).collect(),
                Provenance::Estimated,
            )
        }
    };
    let rate = if feasible.is_empty() {
        0.0
    } else {
        feasible.iter().filter(|&&f| f).count() as f64 / feasible.len() as f64
    };
    Ok(FeasibilityResult {
        rate,
        feasible,
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypervolumeConfig {
    /// Exact sweep up to this many objectives, Monte Carlo above.
    pub exact_max_objectives: usize,
    pub samples: usize,
    pub seed: u64,
    /// Upper corner for Monte Carlo; per-objective maximum of the points
    /// when absent.
    pub upper_bound: Option<Vec<f64>>,
}

impl Default for HypervolumeConfig {
    fn default() -> Self {
        HypervolumeConfig {
            exact_max_objectives: 4,
            samples: 1_000_000,
            seed: 0,
            upper_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypervolumeResult {
    pub value: f64,
    pub exact: bool,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

/// Dominated volume of maximization-form `points` above `reference`.
/// Points not strictly above the reference in every objective add nothing.
pub fn hypervolume(
    points: &Matrix,
    reference: &[f64],
    cfg: &HypervolumeConfig,
) -> Result<HypervolumeResult> {
    let t = reference.len();
    if t == 0 || (points.rows() > 0 && points.cols() != t) {
        return Err(Error::Dimension(format!(
            "points have {} objectives, reference has {t}",
            points.cols()
        )));
    }
    if !points.is_finite() || reference.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("hypervolume inputs must be finite".into()));
    }
    if let Some(bound) = &cfg.upper_bound {
        if bound.len() != t || bound.iter().zip(reference).any(|(b, r)| !(r < b)) {
            return Err(Error::Config(
                "reference point must lie strictly below the upper bound".into(),
            ));
        }
    }
    if t <= cfg.exact_max_objectives {
        return Ok(HypervolumeResult {
            value: hv_exact(points, reference),
            exact: true,
            samples: None,
            seed: None,
        });
    }
    let bound = match &cfg.upper_bound {
        Some(b) => b.clone(),
        None => (0..t)
            .map(|k| {
                points
                    .row_iter()
                    .map(|p| p[k])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect(),
    };
    let value = if points.rows() == 0 || bound.iter().zip(reference).any(|(b, r)| b <= r) {
        0.0
    } else {
        hv_monte_carlo(points, reference, &bound, cfg.samples, cfg.seed)?
    };
    Ok(HypervolumeResult {
        value,
        exact: false,
        samples: Some(cfg.samples),
        seed: Some(cfg.seed),
    })
}

/// Exact hypervolume by recursive slicing along the last objective.
pub fn hv_exact(points: &Matrix, reference: &[f64]) -> f64 {
    let pts: Vec<Vec<f64>> = points
        .row_iter()
        .filter(|p| p.iter().zip(reference).all(|(v, r)| v > r))
        .map(|p| p.to_vec())
        .collect();
    hv_recursive(nondominated(pts), reference)
}

/// Drops points weakly dominated by another (keeping the first of equal
/// points), so dominated points cannot perturb the summation order.
fn nondominated(pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x >= y);
    (0..pts.len())
        .filter(|&i| {
            !(0..pts.len()).any(|j| {
                j != i && dominates(&pts[j], &pts[i]) && (pts[j] != pts[i] || j < i)
            })
        })
        .map(|i| pts[i].clone())
        .collect()
}

fn hv_recursive(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    let d = reference.len();
    if pts.is_empty() {
        return 0.0;
    }
    if d == 1 {
        return pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) - reference[0];
    }
    if d == 2 {
        // sweep by first objective descending, accumulate staircase
        pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
        let mut area = 0.0;
        let mut best_y = reference[1];
        for p in &pts {
            if p[1] > best_y {
                area += (p[0] - reference[0]) * (p[1] - best_y);
                best_y = p[1];
            }
        }
        return area;
    }
    let last = d - 1;
    pts.sort_by(|a, b| b[last].total_cmp(&a[last]));
    let mut volume = 0.0;
    let mut active: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    let sub_ref = &reference[..last];
    for i in 0..pts.len() {
        active.push(pts[i][..last].to_vec());
        let top = pts[i][last];
        let next = if i + 1 < pts.len() {
            pts[i + 1][last]
        } else {
            reference[last]
        };
        let height = top - next;
        if height > 0.0 {
            volume += height * hv_recursive(active.clone(), sub_ref);
        }
    }
    volume
}

/// Monte Carlo hypervolume: uniform samples in the box `[reference, bound]`,
/// volume of the box times the fraction dominated by some point.
pub fn hv_monte_carlo(
    points: &Matrix,
    reference: &[f64],
    bound: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let t = reference.len();
    if bound.len() != t || (points.rows() > 0 && points.cols() != t) {
        return Err(Error::Dimension("reference, bound and points disagree".into()));
    }
    let box_volume: f64 = bound.iter().zip(reference).map(|(b, r)| b - r).product();
    if !(box_volume > 0.0) || bound.iter().zip(reference).any(|(b, r)| !(b > r)) {
        return Err(Error::Config("Monte Carlo box has zero volume".into()));
    }
    if samples == 0 {
        return Err(Error::Config("Monte Carlo needs at least one sample".into()));
    }
    for p in points.row_iter() {
        if p.iter().zip(bound).any(|(v, b)| v > b) {
            return Err(Error::Config("bound must dominate every point".into()));
        }
    }
    if points.rows() == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0.0; t];
    let mut hits = 0usize;
    for _ in 0..samples {
        for k in 0..t {
            sample[k] = reference[k] + rng.random::<f64>() * (bound[k] - reference[k]);
        }
        if points
            .row_iter()
            .any(|p| p.iter().zip(&sample).all(|(v, s)| v >= s))
        {
            hits += 1;
        }
    }
    Ok(box_volume * hits as f64 / samples as f64)
}

/// Euclidean distance from each generated row to its nearest dataset row.
pub fn novelty(generated: &Matrix, data: &Matrix) -> Result<Vec<f64>> {
    if data.rows() == 0 {
        return Err(Error::InsufficientData("novelty needs a non-empty dataset".into()));
    }
    if generated.rows() > 0 && generated.cols() != data.cols() {
        return Err(Error::Dimension(format!(
            "generated rows have {} columns, dataset rows {}",
            generated.cols(),
            data.cols()
        )));
    }
    Ok(generated
        .row_iter()
        .map(|g| {
            data.row_iter()
                .map(|d| squared_distance(g, d))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// Mean pairwise Euclidean distance.
pub fn diversity(points: &Matrix) -> Result<f64> {
    let m = points.rows();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "diversity needs at least 2 points, got {m}"
        )));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            total += squared_distance(points.row(i), points.row(j)).sqrt();
        }
    }
    Ok(total / (m * (m - 1) / 2) as f64)
}

/// Silverman's rule: `0.9 * min(std, IQR / 1.34) * n^(-1/5)`, falling back
/// to the standard deviation alone when the interquartile range is zero.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("KDE needs at least 2 values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("KDE input contains non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let std = stats::sample_std(values);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    let h = 0.9 * spread * (values.len() as f64).powf(-0.2);
    if !(h > 0.0) {
        return Err(Error::DegenerateColumn {
            column: "kde input".into(),
            reason: "zero bandwidth (constant data)".into(),
        });
    }
    Ok(h)
}

/// Gaussian KDE evaluated on `grid`.
pub fn kde_density(values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(values)?;
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("KDE grid must be sorted".into()));
    }
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            norm * values
                .iter()
                .map(|&v| {
                    let u = (g - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect())
}

/// Evenly spaced grid covering the data plus three bandwidths each side.
pub fn kde_grid(values: &[f64], points: usize) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let points = points.max(2);
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

pub fn write_kde_csv<W: Write>(out: W, grid: &[f64], density: &[f64], preamble: &[String]) -> Result<()> {
    let mut out = out;
    for line in preamble {
        writeln!(out, "# {line}").map_err(|e| Error::io("<kde output>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["grid_value", "density"])?;
    for (g, d) in grid.iter().zip(density) {
        w.write_record([g.to_string(), d.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<kde output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub hypervolume: HypervolumeConfig,
    pub classifier_threshold: f64,
    pub kde_grid_points: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            hypervolume: HypervolumeConfig::default(),
            classifier_threshold: 0.5,
            kde_grid_points: 200,
        }
    }
}

/// Where performance and feasibility come from during evaluation.
pub enum Evaluator<'a> {
    Oracle(&'a dyn DesignOracle),
    Surrogates(&'a Surrogates),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerDesignRow {
    pub design_id: usize,
    pub tsr: f64,
    pub mtr: f64,
    pub dtai: f64,
    pub feasible: bool,
    pub novelty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub method: String,
    pub seed: u64,
    pub config_digest: String,
    pub n_designs: usize,
    pub mean_tsr: f64,
    pub feasibility_rate: f64,
    pub mean_dtai: f64,
    pub mean_mtr: f64,
    pub hypervolume: f64,
    pub mean_novelty: f64,
    pub design_space_diversity: f64,
    pub performance_space_diversity: f64,
    pub performance_source: Provenance,
    pub feasibility_source: Provenance,
    pub hypervolume_exact: bool,
    pub hypervolume_reference: Vec<f64>,
    pub hypervolume_samples: Option<usize>,
    pub hypervolume_seed: Option<u64>,
    pub targets: TargetSpec,
    pub per_design: Vec<PerDesignRow>,
}

impl MetricsReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_per_design_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let mut out = out;
        for line in preamble {
            writeln!(out, "# {line}").map_err(|e| Error::io("<per-design output>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["design_id", "tsr", "mtr", "dtai", "feasible", "novelty"])?;
        for r in &self.per_design {
            w.write_record([
                r.design_id.to_string(),
                r.tsr.to_string(),
                r.mtr.to_string(),
                r.dtai.to_string(),
                (r.feasible as u8).to_string(),
                r.novelty.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<per-design output>", e))?;
        Ok(())
    }

    /// Per-design values of one metric, by column name.
    pub fn per_design_values(&self, metric: &str) -> Result<Vec<f64>> {
        let pick: fn(&PerDesignRow) -> f64 = match metric {
            "tsr" => |r| r.tsr,
            "mtr" => |r| r.mtr,
            "dtai" => |r| r.dtai,
            "novelty" => |r| r.novelty,
            "feasible" => |r| r.feasible as u8 as f64,
            other => {
                return Err(Error::Parameter(format!(
                    "unknown per-design metric `{other}` (tsr, mtr, dtai, novelty, feasible)"
                )))
            }
        };
        Ok(self.per_design.iter().map(pick).collect())
    }
}

/// Identifies the evaluated set inside a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportLabel {
    pub method: String,
    pub seed: u64,
    pub config_digest: String,
}

/// All metrics for a set of designs given in data units.
///
/// The hypervolume reference is the per-objective minimum, in maximization
/// form, over dataset and generated performances together.
pub fn evaluate_all(
    designs: &Matrix,
    data: &Dataset,
    normalizer: &Normalizer,
    targets: &TargetSpec,
    evaluator: &Evaluator<'_>,
    cfg: &MetricsConfig,
    label: &ReportLabel,
) -> Result<MetricsReport> {
    let m = designs.rows();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "evaluation needs at least 2 designs, got {m}"
        )));
    }
    if designs.cols() != data.design_width() {
        return Err(Error::Dimension(format!(
            "designs have {} columns, dataset encodes {}",
            designs.cols(),
            data.design_width()
        )));
    }
    let t = targets.objective_count();
    if t != data.objective_count() {
        return Err(Error::Dimension("targets and dataset disagree on objectives".into()));
    }

    let normalized = normalizer.normalize_designs(designs)?;
    let (perf, feas, perf_source) = match evaluator {
        Evaluator::Oracle(oracle) => {
            if oracle.objective_count() != t {
                return Err(Error::Contract("oracle objective count differs from targets".into()));
            }
            let mut perf = Matrix::zeros(m, t);
            let mut flags = Vec::with_capacity(m);
            for (i, row) in designs.row_iter().enumerate() {
                let (p, f) = oracle.evaluate(row)?;
                perf.row_mut(i).copy_from_slice(&p);
                flags.push(f);
            }
            let rate = flags.iter().filter(|&&f| f).count() as f64 / m as f64;
            (
                perf,
                FeasibilityResult {
                    rate,
                    feasible: flags,
                    provenance: Provenance::Exact,
                },
                Provenance::Exact,
            )
        }
        Evaluator::Surrogates(s) => {
            let z = s.regressor.predict(&normalized)?;
            let mut perf = normalizer.denormalize_performances(&z)?;
            for i in 0..m {
                for k in 0..t {
                    let target = targets.targets[k];
                    perf[(i, k)] = perf[(i, k)].clamp(target * RATIO_FLOOR, target / RATIO_FLOOR);
                }
            }
            let judge = Judge::Classifier {
                surrogates: s,
                threshold: cfg.classifier_threshold,
            };
            (
                perf,
                feasibility_rate(designs, normalizer, Some(&judge))?,
                Provenance::Estimated,
            )
        }
    };

    let tm = target_metrics(&perf, targets)?;

    let to_max = |p: &Matrix| -> Matrix {
        let mut out = p.clone();
        for i in 0..out.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                if targets.directions[k] == Direction::Minimize {
                    *v = -*v;
                }
            }
        }
        out
    };
    let gen_max = to_max(&perf);
    let data_max = to_max(data.performances());
    let reference: Vec<f64> = (0..t)
        .map(|k| {
            gen_max
                .row_iter()
                .chain(data_max.row_iter())
                .map(|r| r[k])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let hv = hypervolume(&gen_max, &reference, &cfg.hypervolume)?;

    let data_norm = normalizer.normalize_designs(data.designs())?;
    let nov = novelty(&normalized, &data_norm)?;
    let design_div = diversity(&normalized)?;
    let perf_div = diversity(&normalizer.normalize_performances(&perf)?)?;

    let per_design = (0..m)
        .map(|i| PerDesignRow {
            design_id: i,
            tsr: tm.tsr[i],
            mtr: tm.mtr[i],
            dtai: tm.dtai[i],
            feasible: feas.feasible[i],
            novelty: nov[i],
        })
        .collect();

    Ok(MetricsReport {
        method: label.method.clone(),
        seed: label.seed,
        config_digest: label.config_digest.clone(),
        n_designs: m,
        mean_tsr: tm.mean_tsr(),
        feasibility_rate: feas.rate,
        mean_dtai: tm.mean_dtai(),
        mean_mtr: tm.mean_mtr(),
        hypervolume: hv.value,
        mean_novelty: stats::mean(&nov),
        design_space_diversity: design_div,
        performance_space_diversity: perf_div,
        performance_source: perf_source,
        feasibility_source: feas.provenance,
        hypervolume_exact: hv.exact,
        hypervolume_reference: reference,
        hypervolume_samples: hv.samples,
        hypervolume_seed: hv.seed,
        targets: targets.clone(),
        per_design,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn tsr_and_mtr_counting() {
        let t = TargetSpec::new(vec![1.0; 3], vec![1.0; 3], vec![1.0; 3], vec![Direction::Maximize; 3]).unwrap();
        let tm = target_metrics(&m(&[&[1.2, 0.8, 1.0], &[2.0, 3.0, 1.0]]), &t).unwrap();
        assert!((tm.tsr[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(tm.mtr[0], 0.8);
        assert_eq!(tm.tsr[1], 1.0);
        assert_eq!(tm.mtr[1], 1.0);
    }

    #[test]
    fn hypervolume_hand_cases() {
        let r = [0.0, 0.0];
        assert_eq!(hv_exact(&m(&[&[1.0, 1.0]]), &r), 1.0);
        assert_eq!(hv_exact(&m(&[&[1.0, 2.0], &[2.0, 1.0]]), &r), 3.0);
        assert_eq!(hv_exact(&m(&[&[2.0, 2.0], &[1.0, 1.0]]), &r), 4.0);
        assert_eq!(hv_exact(&m(&[&[-1.0, 5.0]]), &r), 0.0);
        assert_eq!(hv_exact(&m(&[&[1.0, 1.0, 1.0], &[2.0, 0.5, 0.5]]), &[0.0; 3]), 1.25);
        assert_eq!(hv_exact(&Matrix::zeros(0, 2), &r), 0.0);
    }

    #[test]
    fn hypervolume_config_errors() {
        let cfg = HypervolumeConfig {
            upper_bound: Some(vec![1.0, 0.0]),
            ..HypervolumeConfig::default()
        };
        assert!(matches!(hypervolume(&m(&[&[1.0, 1.0]]), &[0.0, 0.0], &cfg), Err(Error::Config(_))));
        assert!(matches!(
            hv_monte_carlo(&m(&[&[1.0, 1.0]]), &[0.0, 0.0], &[0.0, 2.0], 10, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn monte_carlo_unit_box() {
        let v = hv_monte_carlo(&m(&[&[1.0, 1.0]]), &[0.0, 0.0], &[2.0, 2.0], 1_000_000, 7).unwrap();
        assert!((v - 1.0).abs() < 0.01);
        assert_eq!(hv_monte_carlo(&Matrix::zeros(0, 2), &[0.0, 0.0], &[2.0, 2.0], 10, 7).unwrap(), 0.0);
    }

    #[test]
    fn high_dimension_uses_monte_carlo() {
        let pts = m(&[&[1.0; 5]]);
        let cfg = HypervolumeConfig {
            samples: 10_000,
            upper_bound: Some(vec![1.0; 5]),
            ..HypervolumeConfig::default()
        };
        let r = hypervolume(&pts, &[0.0; 5], &cfg).unwrap();
        assert!(!r.exact);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn novelty_and_diversity() {
        let data = m(&[&[0.0, 0.0], &[3.0, 4.0]]);
        assert_eq!(novelty(&m(&[&[0.0, 0.0]]), &data).unwrap(), vec![0.0]);
        assert_eq!(novelty(&m(&[&[3.0, 0.0]]), &m(&[&[0.0, 0.0]])).unwrap(), vec![3.0]);
        assert!(novelty(&m(&[&[0.0, 0.0]]), &Matrix::zeros(0, 2)).is_err());
        assert_eq!(diversity(&m(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]])).unwrap(), 0.0);
        assert_eq!(diversity(&data).unwrap(), 5.0);
        let h = 3f64.sqrt() / 2.0;
        assert!((diversity(&m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, h]])).unwrap() - 1.0).abs() < 1e-15);
        assert!(diversity(&m(&[&[0.0]])).is_err());
    }

    #[test]
    fn kde_properties() {
        let values = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let grid: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.05).collect();
        let d = kde_density(&values, &grid).unwrap();
        for i in 0..grid.len() {
            assert!((d[i] - d[grid.len() - 1 - i]).abs() < 1e-12);
            assert!(d[i] >= 0.0);
        }
        let bimodal = kde_density(&[-10.0, 10.0], &grid.iter().map(|g| g * 4.0).collect::<Vec<_>>()).unwrap();
        let peaks = (1..bimodal.len() - 1)
            .filter(|&i| bimodal[i] > bimodal[i - 1] && bimodal[i] > bimodal[i + 1])
            .count();
        assert_eq!(peaks, 2);
        assert!(matches!(kde_density(&[5.0, 5.0, 5.0], &grid), Err(Error::DegenerateColumn { .. })));
    }

    #[test]
    fn kde_integrates_to_one() {
        let values = [0.1, 0.4, 0.45, 0.8, 0.9, 1.7, 2.2];
        let grid: Vec<f64> = (0..=20000).map(|i| -10.0 + i as f64 * 0.001).collect();
        let d = kde_density(&values, &grid).unwrap();
        let integral: f64 = d.windows(2).map(|w| 0.5 * (w[0] + w[1]) * 0.001).sum();
        assert!((integral - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn adding_points_never_shrinks_hypervolume(
            pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..8),
            extra in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let base = Matrix::from_rows(&pts).unwrap();
            let mut more = pts.clone();
            more.push(extra);
            let bigger = Matrix::from_rows(&more).unwrap();
            prop_assert!(hv_exact(&bigger, &[0.0; 3]) >= hv_exact(&base, &[0.0; 3]) - 1e-12);
            // a point dominated by the first point adds exactly nothing
            let mut dominated = pts.clone();
            dominated.push(pts[0].iter().map(|v| v * 0.5).collect());
            let d = Matrix::from_rows(&dominated).unwrap();
            prop_assert_eq!(hv_exact(&d, &[0.0; 3]), hv_exact(&base, &[0.0; 3]));
        }

        #[test]
        fn diversity_and_novelty_order_and_translation(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..10),
            shift in -3.0f64..3.0,
        ) {
            let a = Matrix::from_rows(&pts).unwrap();
            let mut rev = pts.clone();
            rev.reverse();
            let b = Matrix::from_rows(&rev).unwrap();
            prop_assert!((diversity(&a).unwrap() - diversity(&b).unwrap()).abs() < 1e-12);
            let shifted: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v + shift).collect()).collect();
            let c = Matrix::from_rows(&shifted).unwrap();
            prop_assert!((diversity(&a).unwrap() - diversity(&c).unwrap()).abs() < 1e-9);
            let probe = Matrix::from_rows(&[[0.3, -0.2]]).unwrap();
            prop_assert_eq!(novelty(&probe, &a).unwrap(), novelty(&probe, &b).unwrap());
        }

        #[test]
        fn tsr_mtr_consistency(r in prop::collection::vec(prop::collection::vec(0.2f64..3.0, 3), 1..10)) {
            let t = TargetSpec::new(vec![1.0; 3], vec![1.0; 3], vec![1.0; 3], vec![Direction::Maximize; 3]).unwrap();
            let tm = target_metrics(&Matrix::from_rows(&r).unwrap(), &t).unwrap();
            for i in 0..r.len() {
                prop_assert_eq!(tm.mtr[i] >= 1.0, tm.tsr[i] == 1.0);
                prop_assert!((0.0..=1.0).contains(&tm.tsr[i]));
            }
        }
    }
}
