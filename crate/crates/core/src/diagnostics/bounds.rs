//! Gaussian max-entropy upper bounds on the information a masked channel
//! `z̃ = z ⊙ m + ε` carries about `z`. All values in nats.

use forgetnet_tensor::Tensor;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

const DUPLICATE_CORRELATION: f64 = 1.0 - 1e-9;

fn check_var_eps(var_eps: f64) -> Result<()> {
    if !(var_eps > 0.0 && var_eps.is_finite()) {
        return Err(Error::Invalid(format!(
            "noise variance must be positive, got {var_eps}"
        )));
    }
    Ok(())
}

/// `½ ln(m² Var z + Var ε) − ½ ln Var ε` for a deterministic mask value.
pub fn fixed_mask_bound(m: f64, var_z: f64, var_eps: f64) -> Result<f64> {
    check_var_eps(var_eps)?;
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Invalid(format!("mask value {m} outside [0, 1]")));
    }
    if !(var_z >= 0.0) {
        return Err(Error::Invalid(format!("negative variance {var_z}")));
    }
    Ok(0.5 * (m * m * var_z / var_eps).ln_1p())
}

/// Sample moments of a `(m, z)` pair sequence (population normalization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub n: usize,
    pub mean_m: f64,
    pub var_z: f64,
    /// `Var((m − E[m]) z)`.
    pub var_centered: f64,
    /// `Var(m z)`.
    pub var_mz: f64,
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

fn variance(v: &[f64]) -> f64 {
    let mu = mean(v.iter().copied(), v.len());
    mean(v.iter().map(|x| (x - mu) * (x - mu)), v.len())
}

pub fn pair_moments(m: &[f64], z: &[f64]) -> Result<PairMoments> {
    if m.len() != z.len() {
        return Err(Error::Invalid(format!(
            "{} mask samples but {} latent samples",
            m.len(),
            z.len()
        )));
    }
    if m.len() < 2 {
        return Err(Error::Invalid("at least two samples required".into()));
    }
    let n = m.len();
    let mean_m = mean(m.iter().copied(), n);
    let centered: Vec<f64> = m.iter().zip(z).map(|(a, b)| (a - mean_m) * b).collect();
    let product: Vec<f64> = m.iter().zip(z).map(|(a, b)| a * b).collect();
    Ok(PairMoments {
        n,
        mean_m,
        var_z: variance(z),
        var_centered: variance(&centered),
        var_mz: variance(&product),
    })
}

/// `½ ln(2 Var((m − E m) z) + Var ε + 2 E[m]² Var z) − ½ ln Var ε`.
pub fn random_mask_bound(m: &[f64], z: &[f64], var_eps: f64) -> Result<f64> {
    check_var_eps(var_eps)?;
    let p = pair_moments(m, z)?;
    Ok(random_bound_from(&p, var_eps))
}

pub(crate) fn random_bound_from(p: &PairMoments, var_eps: f64) -> f64 {
    let excess = 2.0 * p.var_centered + 2.0 * p.mean_m * p.mean_m * p.var_z;
    0.5 * (excess / var_eps).ln_1p()
}

/// Both sides of `Var(mz) ≤ 2 Var((m − E m) z) + 2 E[m]² Var z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of `rhs − lhs` from per-sample terms.
    pub std_error: f64,
    pub holds: bool,
}

pub fn variance_inequality_check(m: &[f64], z: &[f64]) -> Result<InequalityCheck> {
    let p = pair_moments(m, z)?;
    let lhs = p.var_mz;
    let rhs = 2.0 * p.var_centered + 2.0 * p.mean_m * p.mean_m * p.var_z;

    // rhs − lhs is the sample mean of 2a² + 2b² − (a + b)² over centred
    // a = (m − m̄)z and b = m̄ z; its spread gives the standard error.
    let n = p.n;
    let a: Vec<f64> = m.iter().zip(z).map(|(mi, zi)| (mi - p.mean_m) * zi).collect();
    let a_mu = mean(a.iter().copied(), n);
    let z_mu = mean(z.iter().copied(), n);
    let terms: Vec<f64> = a
        .iter()
        .zip(z)
        .map(|(ai, zi)| {
            let ac = ai - a_mu;
            let bc = p.mean_m * (zi - z_mu);
            2.0 * ac * ac + 2.0 * bc * bc - (ac + bc) * (ac + bc)
        })
        .collect();
    let std_error = (variance(&terms) / n as f64).sqrt();
    Ok(InequalityCheck {
        lhs,
        rhs,
        std_error,
        holds: lhs <= rhs + 3.0 * std_error,
    })
}

/// Multivariate quantities for a sample of `(m, z)` vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultivariateBound {
    /// `Σ_i ln(Var(m_i z_i) + Var ε)`, exactly as the bound is usually printed.
    pub printed: f64,
    /// `Σ_i [½ ln(Var(m_i z_i) + Var ε) − ½ ln Var ε]`: the sum of the
    /// per-dimension bounds, which carries the noise normalization and ½
    /// factors the printed form drops.
    pub per_dimension_sum: f64,
    /// `ln det(diag Σ_z̃ + Var ε · I)`.
    pub diagonal_log_det: f64,
    /// `ln det(Σ_z̃ + Var ε · I)`; never exceeds the diagonal version.
    pub full_log_det: f64,
    /// `½ full_log_det − (d/2) ln Var ε`, an upper bound on `I(z̃ : z)` in nats.
    pub information_bound: f64,
}

/// Sample covariance (population normalization) of the columns of `x`.
pub(crate) fn covariance(x: &Tensor) -> DMatrix<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut mu = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mu.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x.row(i)[j] - mu[j]);
    centered.transpose() * &centered / n as f64
}

/// Evaluates the multivariate bound on `z̃ = m ⊙ z` samples (rows).
///
/// Rejects exactly duplicated channels (correlation ≥ 1 − 1e-9), for which
/// the max-entropy argument degenerates.
pub fn multivariate_bound(m: &Tensor, z: &Tensor, var_eps: f64) -> Result<MultivariateBound> {
    check_var_eps(var_eps)?;
    if m.shape() != z.shape() || m.rank() != 2 {
        return Err(Error::Invalid("mask and latent samples must be equal-shape matrices".into()));
    }
    if m.rows() < 2 {
        return Err(Error::Invalid("at least two samples required".into()));
    }
    let zt = m.zip_map(z, |a, b| a * b);
    let cov = covariance(&zt);
    let d = zt.cols();
    for i in 0..d {
        for j in i + 1..d {
            let (vi, vj) = (cov[(i, i)], cov[(j, j)]);
            if vi > 0.0 && vj > 0.0 && cov[(i, j)] / (vi * vj).sqrt() >= DUPLICATE_CORRELATION {
                return Err(Error::DuplicateChannels { first: i, second: j });
            }
        }
    }
    let printed: f64 = (0..d).map(|i| (cov[(i, i)] + var_eps).ln()).sum();
    let per_dimension_sum: f64 = (0..d)
        .map(|i| 0.5 * (cov[(i, i)] / var_eps).ln_1p())
        .sum();
    let shifted = cov + DMatrix::identity(d, d) * var_eps;
    let full_log_det = match shifted.clone().cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => shifted.determinant().ln(),
    };
    Ok(MultivariateBound {
        printed,
        per_dimension_sum,
        diagonal_log_det: printed,
        full_log_det,
        information_bound: 0.5 * full_log_det - 0.5 * d as f64 * var_eps.ln(),
    })
}
