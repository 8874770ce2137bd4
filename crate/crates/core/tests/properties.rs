//! Property tests for the bounds, estimators, projections, resampling and
//! the mask regularizer.

use forgetnet_core::diagnostics::{
    fixed_mask_bound, multivariate_bound, random_mask_bound, variance_inequality_check, BinnedMi, MiEstimator,
};
use forgetnet_core::model::{ArchSpec, ForgettingModel, ObjectiveWeights, Phase, TaskArch};
use forgetnet_core::projection::pca_2d;
use forgetnet_core::trainer::{sample_random_s, EmpiricalSDistribution};
use forgetnet_tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fixed_bound_zero_at_closed_gate(var_z in 0.0f64..10.0, var_eps in 1e-6f64..10.0) {
        prop_assert_eq!(fixed_mask_bound(0.0, var_z, var_eps).unwrap(), 0.0);
    }

    #[test]
    fn fixed_bound_increasing_in_mask(a in 0.0f64..1.0, b in 0.0f64..1.0, var_z in 0.01f64..10.0, var_eps in 1e-4f64..10.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(fixed_mask_bound(lo, var_z, var_eps).unwrap() < fixed_mask_bound(hi, var_z, var_eps).unwrap());
    }

    #[test]
    fn halving_noise_raises_bounds(m in 0.01f64..1.0, var_z in 0.01f64..10.0, sigma in 0.01f64..3.0) {
        let wide = fixed_mask_bound(m, var_z, sigma * sigma).unwrap();
        let narrow = fixed_mask_bound(m, var_z, sigma * sigma / 4.0).unwrap();
        prop_assert!(narrow > wide);
    }

    #[test]
    fn constant_mask_random_bound_doubles_gain(c in 0.0f64..1.0, seed in any::<u64>(), var_eps in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = normals(&mut rng, 200);
        let m = vec![c; 200];
        let mean = z.iter().sum::<f64>() / 200.0;
        let var_z = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 200.0;
        let expect = 0.5 * (2.0 * c * c * var_z / var_eps).ln_1p();
        let got = random_mask_bound(&m, &z, var_eps).unwrap();
        prop_assert!((got - expect).abs() < 1e-9, "{} vs {}", got, expect);
    }

    #[test]
    fn variance_inequality_is_an_identity_on_samples(seed in any::<u64>(), n in 3usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = normals(&mut rng, n);
        let m: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-2.0 * v).exp()) * rng.gen_range(0.5..1.0)).collect();
        let c = variance_inequality_check(&m, &z).unwrap();
        prop_assert!(c.lhs <= c.rhs + 1e-12 * (1.0 + c.rhs));
        prop_assert!(c.holds);
    }

    #[test]
    fn hadamard_never_below_full_log_det(seed in any::<u64>(), d in 1usize..5, rho in 0.0f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 300;
        let mut z = Vec::new();
        for _ in 0..n {
            let common: f64 = rng.sample(StandardNormal);
            for _ in 0..d {
                let own: f64 = rng.sample(StandardNormal);
                z.push(rho.sqrt() * common + (1.0 - rho).sqrt() * own);
            }
        }
        let m: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b = multivariate_bound(&Tensor::from_vec(&[n, d], m), &Tensor::from_vec(&[n, d], z), 0.1).unwrap();
        prop_assert!(b.full_log_det <= b.diagonal_log_det + 1e-9);
        prop_assert!(b.information_bound <= b.per_dimension_sum + 1e-9);
        prop_assert_eq!(b.printed, b.diagonal_log_det);
    }

    #[test]
    fn binned_mi_is_symmetric_and_nonnegative_in_plug_in(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normals(&mut rng, 500);
        let y: Vec<f64> = x.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        let e = BinnedMi { bins: 8 };
        let a = e.estimate(&x, &y).unwrap();
        let b = e.estimate(&y, &x).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        prop_assert!(a.value + a.bias_correction >= -1e-12);
    }

    #[test]
    fn pca_is_translation_invariant(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (40, 4);
        let data: Vec<f64> = (0..n * d).map(|i| rng.sample::<f64, _>(StandardNormal) * (1.0 + (i % d) as f64)).collect();
        let a = pca_2d(&Tensor::from_vec(&[n, d], data.clone())).unwrap();
        let b = pca_2d(&Tensor::from_vec(&[n, d], data.iter().map(|v| v + shift).collect())).unwrap();
        prop_assert!(a.explained[0] >= a.explained[1]);
        for (p, q) in a.coords.data().iter().zip(b.coords.data()) {
            prop_assert!((p - q).abs() < 1e-8);
        }
        for c in 0..2 {
            let mean: f64 = (0..n).map(|i| a.coords.row(i)[c]).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mask_regularizer_within_quarter_d(seed in any::<u64>(), d in 1usize..10, n in 1usize..20) {
        let mut arch = ArchSpec::tabular(5, vec![TaskArch { y_classes: 2, s_classes: 2 }]);
        arch.latent_dim = d;
        let model = ForgettingModel::new(arch, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_vec(&[n, 5], (0..n * 5).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let labels = vec![vec![0; n]];
        let mut fwd = model.forward_all(&x, Phase::Main, None).unwrap();
        let t = fwd.objective(&x, &labels, &labels, ObjectiveWeights::default()).unwrap();
        prop_assert!(t.values.mask_reg >= 0.0 && t.values.mask_reg <= d as f64 / 4.0 + 1e-12);
    }

    #[test]
    fn resampled_s_concentrates_on_empirical_marginal(seed in any::<u64>(), classes in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..500).map(|_| rng.gen_range(0..classes).min(rng.gen_range(0..classes))).collect();
        let dist = EmpiricalSDistribution::fit(&labels, classes).unwrap();
        let n = 20000;
        let draws = sample_random_s(&dist, n, &mut rng);
        for (c, &p) in dist.freqs().iter().enumerate() {
            let share = draws.iter().filter(|&&v| v == c).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            prop_assert!((share - p).abs() <= 4.0 * se + 1e-12, "class {}: {} vs {}", c, share, p);
        }
    }
}
