//! Sample-based mutual-information estimators for scalar pairs.

use crate::error::{Error, Result};

/// An estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    /// Bias-corrected estimate.
    pub value: f64,
    /// Magnitude of the correction that was applied (0 when none).
    pub bias_correction: f64,
    /// Asymptotic standard error.
    pub std_error: f64,
}

impl MiEstimate {
    /// The estimate minus its correction and three standard errors.
    pub fn lower_tolerance(&self) -> f64 {
        self.value - self.bias_correction - 3.0 * self.std_error
    }
}

pub trait MiEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, x: &[f64], y: &[f64]) -> Result<MiEstimate>;
}

fn check(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::Invalid(format!("need at least {min} samples")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite sample".into()));
    }
    Ok(())
}

/// Equal-mass bin index of every sample; tied values share a bin.
pub fn equal_mass_bins(v: &[f64], bins: usize) -> Vec<usize> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let bin = (start * bins / n).min(bins - 1);
        for &i in &order[start..end] {
            out[i] = bin;
        }
        start = end;
    }
    out
}

/// Plug-in estimator on an adaptive equal-mass grid with the Miller–Madow
/// correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinnedMi {
    pub bins: usize,
}

impl Default for BinnedMi {
    fn default() -> Self {
        Self { bins: 32 }
    }
}

impl MiEstimator for BinnedMi {
    fn name(&self) -> &'static str {
        "binned"
    }

    fn estimate(&self, x: &[f64], y: &[f64]) -> Result<MiEstimate> {
        check(x, y, 2)?;
        let b = self.bins.max(1);
        let n = x.len();
        let bx = equal_mass_bins(x, b);
        let by = equal_mass_bins(y, b);
        let mut joint = vec![0usize; b * b];
        let mut mx = vec![0usize; b];
        let mut my = vec![0usize; b];
        for (&i, &j) in bx.iter().zip(&by) {
            joint[i * b + j] += 1;
            mx[i] += 1;
            my[j] += 1;
        }
        let nf = n as f64;
        let occupied = |c: &[usize]| c.iter().filter(|&&v| v > 0).count() as f64;
        // Per-sample pointwise MI, for both the estimate and its spread.
        let pmi = |i: usize, j: usize| {
            let pxy = joint[i * b + j] as f64 / nf;
            (pxy / ((mx[i] as f64 / nf) * (my[j] as f64 / nf))).ln()
        };
        let mut plug_in = 0.0;
        for i in 0..b {
            for j in 0..b {
                let c = joint[i * b + j];
                if c > 0 {
                    plug_in += c as f64 / nf * pmi(i, j);
                }
            }
        }
        let second: f64 = bx.iter().zip(&by).map(|(&i, &j)| pmi(i, j).powi(2)).sum::<f64>() / nf;
        let std_error = ((second - plug_in * plug_in).max(0.0) / nf).sqrt();
        let correction = (occupied(&joint) - occupied(&mx) - occupied(&my) + 1.0) / (2.0 * nf);
        Ok(MiEstimate {
            value: plug_in - correction,
            bias_correction: correction.abs(),
            std_error,
        })
    }
}

/// `ψ(n)` for positive integers from harmonic sums.
fn digamma_table(max: usize) -> Vec<f64> {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut t = vec![f64::NAN; max + 1];
    let mut h = 0.0;
    for (n, slot) in t.iter_mut().enumerate().skip(1) {
        *slot = -EULER_GAMMA + h;
        h += 1.0 / n as f64;
    }
    t
}

/// Kraskov–Stögbauer–Grassberger estimator (first variant, max-norm).
/// Quadratic in the sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsgMi {
    pub k: usize,
}

impl Default for KsgMi {
    fn default() -> Self {
        Self { k: 3 }
    }
}

impl MiEstimator for KsgMi {
    fn name(&self) -> &'static str {
        "ksg"
    }

    fn estimate(&self, x: &[f64], y: &[f64]) -> Result<MiEstimate> {
        check(x, y, self.k + 2)?;
        ksg_joint(x, 1, y, 1, self.k)
    }
}

/// KSG estimate of `I(x : y)` for row-major samples of widths `dx` and `dy`.
pub fn ksg_joint(x: &[f64], dx: usize, y: &[f64], dy: usize, k: usize) -> Result<MiEstimate> {
    if dx == 0 || dy == 0 || x.len() % dx != 0 || y.len() % dy != 0 || x.len() / dx != y.len() / dy {
        return Err(Error::Invalid("ksg: inconsistent sample shapes".into()));
    }
    let n = x.len() / dx;
    if k == 0 || n < k + 2 {
        return Err(Error::Invalid(format!("ksg: need at least {} samples", k + 2)));
    }
    let dist = |v: &[f64], w: usize, i: usize, j: usize| {
        (0..w).fold(0.0f64, |acc, c| acc.max((v[i * w + c] - v[j * w + c]).abs()))
    };
    let psi = digamma_table(n + 1);
    let mut dists = Vec::with_capacity(n);
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        dists.clear();
        dists.extend((0..n).filter(|&j| j != i).map(|j| dist(x, dx, i, j).max(dist(y, dy, i, j))));
        let (_, eps, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *eps;
        let nx = (0..n).filter(|&j| j != i && dist(x, dx, i, j) < eps).count();
        let ny = (0..n).filter(|&j| j != i && dist(y, dy, i, j) < eps).count();
        terms.push(psi[nx + 1] + psi[ny + 1]);
    }
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(MiEstimate {
        value: psi[k] + psi[n] - mean,
        bias_correction: 0.0,
        std_error: (var / n as f64).sqrt(),
    })
}

pub fn estimators() -> Vec<Box<dyn MiEstimator>> {
    vec![Box::new(BinnedMi::default()), Box::new(KsgMi::default())]
}

pub fn estimator(name: &str) -> Result<Box<dyn MiEstimator>> {
    estimators()
        .into_iter()
        .find(|e| e.name() == name)
        .ok_or_else(|| Error::Invalid(format!("unknown MI estimator `{name}`")))
}
