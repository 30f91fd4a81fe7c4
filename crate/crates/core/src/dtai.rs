//! Design Target Achievement Index.
//!
//! Each objective's achievement ratio `r` (oriented so `r >= 1` means the
//! target is met) is scored piecewise:
//!
//! ```text
//! s(r) = alpha * (r - 1)                              r <= 1
//! s(r) = alpha / beta * (1 - exp(beta * (1 - r)))     r >  1
//! ```
//!
//! The per-objective scores are summed and mapped onto `[0, 1)` using the
//! sum's infimum `-sum(alpha)` and supremum `sum(alpha / beta)`. Both
//! branches meet at `r = 1` with value 0 and slope `alpha`, so the index is
//! continuously differentiable and its slope is bounded by `alpha`.

use crate::data::{Direction, RatioMatrix, TargetSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Largest double strictly below one. Sums that round up to 1 are pulled
/// back here to keep the index in `[0, 1)`.
pub const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

fn check_inputs(r: f64, alpha: f64, beta: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("ratio must be finite and > 0, got {r}")));
    }
    if !(alpha > 0.0) || !(beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "alpha and beta must be finite and > 0, got {alpha}, {beta}"
        )));
    }
    Ok(())
}

/// Per-objective achievement score.
pub fn achievement_score(r: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_inputs(r, alpha, beta)?;
    Ok(score_unchecked(r, alpha, beta))
}

#[inline]
fn score_unchecked(r: f64, alpha: f64, beta: f64) -> f64 {
    if r <= 1.0 {
        alpha * (r - 1.0)
    } else {
        -(alpha / beta) * (beta * (1.0 - r)).exp_m1()
    }
}

/// `ds/dr`.
pub fn achievement_slope(r: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_inputs(r, alpha, beta)?;
    Ok(slope_unchecked(r, alpha, beta))
}

#[inline]
fn slope_unchecked(r: f64, alpha: f64, beta: f64) -> f64 {
    if r <= 1.0 {
        alpha
    } else {
        alpha * (beta * (1.0 - r)).exp()
    }
}

/// `(s_min, s_max)` of the summed score.
pub fn score_bounds(targets: &TargetSpec) -> (f64, f64) {
    let s_min = -targets.alpha.iter().sum::<f64>();
    let s_max = targets
        .alpha
        .iter()
        .zip(&targets.beta)
        .map(|(a, b)| a / b)
        .sum::<f64>();
    (s_min, s_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AchievementScores {
    /// `n x T` per-objective scores.
    pub per_objective: Matrix,
    /// DTAI of each design, in `[0, 1)`.
    pub dtai: Vec<f64>,
    /// `n x T` derivative of each design's DTAI with respect to its ratios.
    pub grad_wrt_ratio: Matrix,
}

impl AchievementScores {
    pub fn mean_dtai(&self) -> f64 {
        self.dtai.iter().sum::<f64>() / self.dtai.len().max(1) as f64
    }
}

pub fn dtai_score(ratios: &RatioMatrix, targets: &TargetSpec) -> Result<AchievementScores> {
    targets.validate()?;
    let t = targets.objective_count();
    if ratios.cols() != t {
        return Err(Error::Dimension(format!(
            "ratios have {} objectives, targets have {t}",
            ratios.cols()
        )));
    }
    let (s_min, s_max) = score_bounds(targets);
    let range = s_max - s_min;
    let n = ratios.rows();
    let mut per_objective = Matrix::zeros(n, t);
    let mut grad = Matrix::zeros(n, t);
    let mut dtai = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 0.0;
        for k in 0..t {
            let r = ratios.values()[(i, k)];
            let (a, b) = (targets.alpha[k], targets.beta[k]);
            let s = score_unchecked(r, a, b);
            per_objective[(i, k)] = s;
            grad[(i, k)] = slope_unchecked(r, a, b) / range;
            sum += s;
        }
        dtai.push(((sum - s_min) / range).clamp(0.0, BELOW_ONE));
    }
    Ok(AchievementScores {
        per_objective,
        dtai,
        grad_wrt_ratio: grad,
    })
}

/// `dr/dp` for one objective.
#[inline]
pub fn ratio_slope(p: f64, t: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Maximize => 1.0 / t,
        Direction::Minimize => -t / (p * p),
    }
}

/// `d DTAI_i / d p_{i,k}` by the chain rule through the ratios.
pub fn dtai_grad_wrt_performance(
    scores: &AchievementScores,
    ratios: &RatioMatrix,
    targets: &TargetSpec,
    perf: &Matrix,
) -> Result<Matrix> {
    let (n, t) = (perf.rows(), perf.cols());
    if scores.grad_wrt_ratio.rows() != n
        || scores.grad_wrt_ratio.cols() != t
        || ratios.rows() != n
        || ratios.cols() != t
        || targets.objective_count() != t
    {
        return Err(Error::Contract(
            "scores, ratios, targets and performances come from different batches".into(),
        ));
    }
    let mut out = Matrix::zeros(n, t);
    for i in 0..n {
        for k in 0..t {
            let p = perf[(i, k)];
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Domain(format!(
                    "performance at row {i}, objective {k} must be finite and > 0, got {p}"
                )));
            }
            out[(i, k)] = scores.grad_wrt_ratio[(i, k)]
                * ratio_slope(p, targets.targets[k], targets.directions[k]);
        }
    }
    Ok(out)
}
