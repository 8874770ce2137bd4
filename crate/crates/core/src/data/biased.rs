//! Gaussian testbed with a controllable coupling between `y` and `s`.
//!
//! `f_y = 2y − 1` and `f_s = 2s − 1` with `P[s = y] = correlation`;
//! `x = α f_y u + β f_s v + σ ε` for orthonormal `u ⟂ v` and standard normal `ε`.

use forgetnet_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataBundle, DataError, Dataset, DatasetManifest, SKind};

#[derive(Debug, Clone, PartialEq)]
pub struct BiasedSpec {
    pub correlation: f64,
    pub width: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub train: usize,
    pub test: usize,
}

impl Default for BiasedSpec {
    fn default() -> Self {
        Self {
            correlation: 0.5,
            width: 8,
            alpha: 1.0,
            beta: 2.0,
            sigma: 1.0,
            train: 8000,
            test: 2000,
        }
    }
}

impl BiasedSpec {
    fn directions(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.width as f64;
        let u = vec![1.0 / w.sqrt(); self.width];
        let v = (0..self.width)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / w.sqrt())
            .collect();
        (u, v)
    }

    /// Accuracy of the Bayes classifier of `y` that sees only the
    /// `s`-free direction `u`: `Φ(α / σ)`.
    pub fn no_s_bayes_rate(&self) -> f64 {
        0.5 * libm::erfc(-(self.alpha / self.sigma) / std::f64::consts::SQRT_2)
    }

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset, DataError> {
        let (u, v) = self.directions();
        let mut x = Vec::with_capacity(n * self.width);
        let mut y = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        for _ in 0..n {
            let yi = usize::from(rng.gen_bool(0.5));
            let si = if rng.gen_bool(self.correlation) { yi } else { 1 - yi };
            let fy = 2.0 * yi as f64 - 1.0;
            let fs = 2.0 * si as f64 - 1.0;
            for j in 0..self.width {
                let e: f64 = rng.sample(StandardNormal);
                x.push(self.alpha * fy * u[j] + self.beta * fs * v[j] + self.sigma * e);
            }
            y.push(yi);
            s.push(si);
        }
        let x = Tensor::new(vec![n, self.width], x).map_err(|e| DataError::Invalid(e.to_string()))?;
        Dataset::new(x, vec![y], vec![s])
    }
}

pub fn gen_biased_tabular(spec: &BiasedSpec, seed: u64) -> Result<DataBundle, DataError> {
    if spec.train == 0 || spec.test == 0 || spec.width < 2 || spec.width % 2 != 0 {
        return Err(DataError::Invalid(
            "biased: nonempty splits and an even width ≥ 2 required".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.correlation) || spec.sigma <= 0.0 {
        return Err(DataError::Invalid("biased: correlation in [0, 1], sigma > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = spec.sample(spec.train, &mut rng)?;
    let test = spec.sample(spec.test, &mut rng)?;
    let recipe = format!("biased v1; {spec:?}; seed {seed}");
    let mut manifest =
        DatasetManifest::new("biased", spec.width, vec![2], vec![2], vec![SKind::Bias], recipe);
    manifest
        .notes
        .push(format!("no-s-information Bayes rate {:.4}", spec.no_s_bayes_rate()));
    DataBundle::new(manifest, train, test, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_correlation_copies_y() {
        let spec = BiasedSpec {
            correlation: 1.0,
            train: 500,
            test: 10,
            ..Default::default()
        };
        let b = gen_biased_tabular(&spec, 2).unwrap();
        assert_eq!(b.train.y(0), b.train.s(0));
    }

    #[test]
    fn bayes_rate_of_unit_snr() {
        // Φ(1) to 10 digits.
        assert!((BiasedSpec::default().no_s_bayes_rate() - 0.8413447461).abs() < 1e-9);
    }
}
