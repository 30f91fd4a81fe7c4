//! Quality-weighted determinantal point process loss.
//!
//! A batch `x` is turned into a squared-exponential similarity matrix `S`,
//! reweighted by per-design quality `L_ij = (q_i q_j)^gamma * S_ij`, and
//! scored as `-(1/B) log det(L + eps I)`. Spread-out, high-quality batches
//! have large determinants and therefore low loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Cholesky, Matrix};

/// Qualities are clamped into `[Q_FLOOR, 1 - Q_FLOOR]` before exponentiation.
pub const Q_FLOOR: f64 = 1e-6;

/// Number of tenfold jitter escalations tried after the configured jitter.
pub const JITTER_ESCALATIONS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Lengthscale in normalized design units.
    pub sigma: f64,
    /// Quality exponent; 0 disables quality weighting.
    pub gamma_q: f64,
    pub jitter: f64,
}

impl KernelConfig {
    /// `sigma = 0.15 * sqrt(D)`, `gamma_q = 1`, `jitter = 1e-6`.
    pub fn default_for_width(design_width: usize) -> Self {
        KernelConfig {
            sigma: 0.15 * (design_width as f64).sqrt(),
            gamma_q: 1.0,
            jitter: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.gamma_q >= 0.0) || !self.gamma_q.is_finite() {
            return Err(Error::Parameter(format!(
                "gamma_q must be >= 0, got {}",
                self.gamma_q
            )));
        }
        if !(self.jitter > 0.0) || !self.jitter.is_finite() {
            return Err(Error::Parameter(format!(
                "jitter must be > 0, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// `S_ij = exp(-|x_i - x_j|^2 / (2 sigma^2))`.
pub fn similarity_matrix(x: &Matrix, cfg: &KernelConfig) -> Result<Matrix> {
    cfg.validate()?;
    let b = x.rows();
    if b < 2 {
        return Err(Error::Dimension(format!("batch needs at least 2 rows, got {b}")));
    }
    if !x.is_finite() {
        return Err(Error::Domain("batch contains non-finite values".into()));
    }
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    let mut s = Matrix::identity(b);
    for i in 0..b {
        for j in (i + 1)..b {
            let v = (-squared_distance(x.row(i), x.row(j)) / denom).exp();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

fn clamp_quality(q: &[f64]) -> Result<Vec<f64>> {
    q.iter()
        .enumerate()
        .map(|(i, &v)| {
            if !(0.0..1.0).contains(&v) {
                Err(Error::Domain(format!("quality q[{i}] = {v} outside [0, 1)")))
            } else {
                Ok(v.clamp(Q_FLOOR, 1.0 - Q_FLOOR))
            }
        })
        .collect()
}

/// `L_ij = (q_i q_j)^gamma_q * S_ij` with qualities clamped to the floor.
pub fn quality_weighted_kernel(s: &Matrix, q: &[f64], cfg: &KernelConfig) -> Result<Matrix> {
    cfg.validate()?;
    if s.rows() != s.cols() || s.rows() != q.len() {
        return Err(Error::Dimension(format!(
            "similarity is {}x{}, quality has {} entries",
            s.rows(),
            s.cols(),
            q.len()
        )));
    }
    let q = clamp_quality(q)?;
    let w: Vec<f64> = q.iter().map(|v| v.powf(cfg.gamma_q)).collect();
    let mut l = s.clone();
    for i in 0..l.rows() {
        for j in 0..l.cols() {
            l[(i, j)] *= w[i] * w[j];
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppLoss {
    pub loss: f64,
    /// `dLoss/dL`, symmetric.
    pub grad: Matrix,
    /// Jitter actually added to the diagonal.
    pub jitter: f64,
    /// Smallest pivot of the factorization of `L + jitter I`.
    pub min_pivot: f64,
}

/// `-(1/B) log det(L + eps I)` and its gradient `-(1/B) (L + eps I)^{-1}`.
///
/// If the factorization fails the jitter is raised tenfold, at most
/// [`JITTER_ESCALATIONS`] times.
pub fn dpp_loss(l: &Matrix, cfg: &KernelConfig) -> Result<DppLoss> {
    cfg.validate()?;
    let b = l.rows();
    if b != l.cols() || b == 0 {
        return Err(Error::Dimension(format!("kernel is {}x{}", l.rows(), l.cols())));
    }
    if !l.is_finite() {
        return Err(Error::Domain("kernel contains non-finite values".into()));
    }
    let scale = l.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if l.max_abs_asymmetry() > 1e-12 * scale {
        return Err(Error::Contract("kernel matrix is not symmetric".into()));
    }
    let mut jitter = cfg.jitter;
    for _ in 0..=JITTER_ESCALATIONS {
        let mut shifted = l.clone();
        for i in 0..b {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::factor(&shifted) {
            let inv_b = 1.0 / b as f64;
            let mut grad = chol.inverse();
            grad.as_mut_slice().iter_mut().for_each(|v| *v *= -inv_b);
            return Ok(DppLoss {
                loss: -inv_b * chol.log_det(),
                grad,
                jitter,
                min_pivot: chol.min_pivot(),
            });
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "kernel not positive definite even with jitter {}",
        jitter / 10.0
    )))
}

/// Gradients of the DPP loss with respect to the batch rows and the raw
/// (unclamped) qualities. Qualities sitting on the clamp receive zero
/// gradient.
pub fn dpp_loss_backward(
    x: &Matrix,
    q: &[f64],
    l: &Matrix,
    loss: &DppLoss,
    cfg: &KernelConfig,
) -> Result<(Matrix, Vec<f64>)> {
    let b = x.rows();
    if l.rows() != b || q.len() != b || loss.grad.rows() != b {
        return Err(Error::Contract(
            "batch, qualities and kernel come from different forward passes".into(),
        ));
    }
    let g = &loss.grad;
    let inv_s2 = 1.0 / (cfg.sigma * cfg.sigma);
    let mut dx = Matrix::zeros(b, x.cols());
    for i in 0..b {
        for j in 0..b {
            if i == j {
                continue;
            }
            // dLoss/dx_i = -(2/sigma^2) sum_j G_ij L_ij (x_i - x_j)
            let c = -2.0 * inv_s2 * g[(i, j)] * l[(i, j)];
            if c == 0.0 {
                continue;
            }
            for d in 0..x.cols() {
                dx[(i, d)] += c * (x[(i, d)] - x[(j, d)]);
            }
        }
    }
    let mut dq = vec![0.0; b];
    if cfg.gamma_q != 0.0 {
        let clamped = clamp_quality(q)?;
        for i in 0..b {
            if clamped[i] != q[i] {
                continue;
            }
            // dLoss/dq_i = (2 gamma / q_i) sum_j G_ij L_ij
            let acc: f64 = (0..b).map(|j| g[(i, j)] * l[(i, j)]).sum();
            dq[i] = 2.0 * cfg.gamma_q * acc / clamped[i];
        }
    }
    Ok((dx, dq))
}

/// Forward and backward of the whole quality-diversity term for one batch.
#[derive(Debug, Clone)]
pub struct DppTerm {
    pub similarity: Matrix,
    pub kernel: Matrix,
    pub loss: DppLoss,
    pub grad_x: Matrix,
    pub grad_q: Vec<f64>,
}

impl DppTerm {
    pub fn evaluate(x: &Matrix, q: &[f64], cfg: &KernelConfig) -> Result<DppTerm> {
        let similarity = similarity_matrix(x, cfg)?;
        let kernel = quality_weighted_kernel(&similarity, q, cfg)?;
        let loss = dpp_loss(&kernel, cfg)?;
        let (grad_x, grad_q) = dpp_loss_backward(x, q, &kernel, &loss, cfg)?;
        Ok(DppTerm {
            similarity,
            kernel,
            loss,
            grad_x,
            grad_q,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(sigma: f64, gamma_q: f64) -> KernelConfig {
        KernelConfig {
            sigma,
            gamma_q,
            jitter: 1e-12,
        }
    }

    #[test]
    fn similarity_basics() {
        let c = cfg(0.5, 1.0);
        let same = Matrix::from_rows(&[[0.3, 0.1], [0.3, 0.1], [0.3, 0.1]]).unwrap();
        assert!(similarity_matrix(&same, &c).unwrap().as_slice().iter().all(|&v| v == 1.0));
        let d = 0.5 * 2f64.sqrt();
        let pair = Matrix::from_rows(&[[0.0, 0.0], [d, 0.0]]).unwrap();
        let s = similarity_matrix(&pair, &c).unwrap();
        assert!((s[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        let far = Matrix::from_rows(&[[0.0], [100.0]]).unwrap();
        assert!(similarity_matrix(&far, &c).unwrap()[(0, 1)] < 1e-300);
        assert!(similarity_matrix(&Matrix::from_rows(&[[0.0]]).unwrap(), &c).is_err());
        let bad = Matrix::from_rows(&[[0.0], [f64::NAN]]).unwrap();
        assert!(matches!(similarity_matrix(&bad, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn quality_weighting() {
        let s = Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap();
        assert_eq!(quality_weighted_kernel(&s, &[0.2, 0.9], &cfg(1.0, 0.0)).unwrap(), s);
        let l = quality_weighted_kernel(&Matrix::identity(2), &[0.3, 0.5], &cfg(1.0, 1.0)).unwrap();
        assert!((l[(0, 0)] - 0.09).abs() < 1e-15 && (l[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        let l = quality_weighted_kernel(&s, &[1.0 - 1e-9, 0.5], &cfg(1.0, 1.0)).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-5);
        assert!((l[(0, 1)] - 0.25).abs() < 1e-5);
        assert!((l[(1, 1)] - 0.25).abs() < 1e-15);
        assert!(matches!(quality_weighted_kernel(&s, &[1.0, 0.5], &cfg(1.0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn loss_closed_forms() {
        let c = cfg(1.0, 1.0);
        assert!(dpp_loss(&Matrix::identity(3), &c).unwrap().loss.abs() < 1e-11);
        let l = Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let out = dpp_loss(&l, &c).unwrap();
        assert!((out.loss - (-0.5 * 0.75f64.ln())).abs() < 1e-9);
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(matches!(dpp_loss(&asym, &c), Err(Error::Contract(_))));
        let indefinite = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(dpp_loss(&indefinite, &c), Err(Error::Numerical(_))));
    }

    #[test]
    fn duplicates_need_jitter_and_cost_more() {
        let c = KernelConfig {
            sigma: 0.5,
            gamma_q: 1.0,
            jitter: 1e-6,
        };
        let dup = Matrix::from_rows(&[[0.2, 0.2], [0.2, 0.2]]).unwrap();
        let spread = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let q = [0.99, 0.99];
        let a = DppTerm::evaluate(&dup, &q, &c).unwrap();
        let b = DppTerm::evaluate(&spread, &q, &c).unwrap();
        assert!(a.loss.loss > 3.0);
        assert!(a.loss.loss > b.loss.loss);
    }

    #[test]
    fn gamma_zero_gives_zero_quality_gradient() {
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.4, 0.1], [0.9, 0.8]]).unwrap();
        let t = DppTerm::evaluate(&x, &[0.2, 0.5, 0.7], &cfg(0.5, 0.0)).unwrap();
        assert!(t.grad_q.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn coincident_rows_are_pushed_apart() {
        let c = KernelConfig {
            sigma: 0.5,
            gamma_q: 1.0,
            jitter: 1e-6,
        };
        let x = Matrix::from_rows(&[[0.5, 0.5], [0.5 + 1e-3, 0.5 - 1e-3]]).unwrap();
        let t = DppTerm::evaluate(&x, &[0.5, 0.5], &c).unwrap();
        // gradient descent moves row 0 away from row 1 and vice versa
        for d in 0..2 {
            assert!(t.grad_x[(0, d)] * t.grad_x[(1, d)] < 0.0);
            let step0 = -t.grad_x[(0, d)];
            assert!(step0 * (x[(0, d)] - x[(1, d)]) > 0.0);
        }
    }

    #[test]
    fn moving_a_twin_away_lowers_loss() {
        let c = KernelConfig {
            sigma: 0.3,
            gamma_q: 1.0,
            jitter: 1e-6,
        };
        let mut prev = f64::INFINITY;
        for step in 0..20 {
            let off = 0.05 * step as f64;
            let x = Matrix::from_rows(&[[0.1, 0.5], [0.1 + off, 0.5], [-1.0, -1.0]]).unwrap();
            let loss = DppTerm::evaluate(&x, &[1.0 - 1e-6, 1.0 - 1e-6, 1.0 - 1e-6], &c).unwrap().loss.loss;
            assert!(loss < prev, "step {step}: {loss} !< {prev}");
            prev = loss;
        }
    }
}
