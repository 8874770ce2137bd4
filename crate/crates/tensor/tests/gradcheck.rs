//! Analytic gradients against central finite differences.

use forgetnet_tensor::{
    adam_step, softmax_rows, AdamConfig, AdamState, LossKind, OpKind, ParamSet, Tape, Target,
    Tensor, Var,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;
/// Denominator floor for the relative error: below this magnitude the
/// comparison is effectively absolute, since central differences of an O(1)
/// loss carry ~1e-10 absolute round-off.
const FLOOR: f64 = 1e-3;

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
}

/// Reduces the op output to a scalar with fixed random weights so every
/// output element contributes a distinct amount.
fn scalar_loss(build: &Build, inputs: &[Tensor], weights_seed: u64) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(weights_seed);
    let w = tape.constant(random_tensor(&mut rng, &shape));
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss).unwrap();
    let g = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| grads.wrt_or_zeros(*v, t))
        .collect();
    (value, g)
}

fn max_relative_error(build: &Build, inputs: &[Tensor], seed: u64) -> f64 {
    let (_, analytic) = scalar_loss(build, inputs, seed);
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= STEP;
            let numeric =
                (scalar_loss(build, &plus, seed).0 - scalar_loss(build, &minus, seed).0) / (2.0 * STEP);
            let a = analytic[k].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

fn op(kind: OpKind) -> Box<Build> {
    Box::new(move |tape: &mut Tape, vars: &[Var]| tape.apply(kind, vars).unwrap())
}

/// Inputs for a given op with shape parameters `(n, k, m)`.
fn inputs_for(kind: OpKind, n: usize, k: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    match kind {
        OpKind::MatMul => vec![random_tensor(rng, &[n, k]), random_tensor(rng, &[k, m])],
        OpKind::AddBias => vec![random_tensor(rng, &[n, m]), random_tensor(rng, &[m])],
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            vec![random_tensor(rng, &[n, m]), random_tensor(rng, &[n, m])]
        }
        OpKind::Concat => vec![random_tensor(rng, &[n, k]), random_tensor(rng, &[n, m])],
        _ => vec![random_tensor(rng, &[n, m])],
    }
}

fn case_strategy() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..5, 1usize..5, 1usize..5, any::<u64>())
}

macro_rules! op_gradcheck {
    ($name:ident, $kind:expr) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn $name((n, k, m, seed) in case_strategy()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inputs = inputs_for($kind, n, k, m, &mut rng);
                let err = max_relative_error(&*op($kind), &inputs, seed ^ 0x5eed);
                prop_assert!(err <= REL_TOL, "relative error {err}");
            }
        }
    };
}

op_gradcheck!(matmul_gradients, OpKind::MatMul);
op_gradcheck!(add_bias_gradients, OpKind::AddBias);
op_gradcheck!(add_gradients, OpKind::Add);
op_gradcheck!(sub_gradients, OpKind::Sub);
op_gradcheck!(mul_gradients, OpKind::Mul);
op_gradcheck!(affine_gradients, OpKind::Affine { scale: -1.7, shift: 0.4 });
op_gradcheck!(sigmoid_gradients, OpKind::Sigmoid);
op_gradcheck!(relu_gradients, OpKind::Relu);
op_gradcheck!(softmax_gradients, OpKind::Softmax);
op_gradcheck!(concat_gradients, OpKind::Concat);
op_gradcheck!(sum_gradients, OpKind::Sum);
op_gradcheck!(mean_gradients, OpKind::Mean);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cross_entropy_gradients((n, _k, m, seed) in case_strategy()) {
        let classes = m + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_tensor(&mut rng, &[n, classes]);
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let soft = softmax_rows(&random_tensor(&mut rng, &[n, classes]));
        let hard = targets.clone();
        let by_class: Box<Build> = Box::new(move |tape, v| {
            tape.loss(LossKind::CrossEntropy, v[0], &Target::Classes(hard.clone())).unwrap()
        });
        let by_dense: Box<Build> = Box::new(move |tape, v| {
            tape.loss(LossKind::CrossEntropy, v[0], &Target::Dense(soft.clone())).unwrap()
        });
        prop_assert!(max_relative_error(&*by_class, &[logits.clone()], seed) <= REL_TOL);
        prop_assert!(max_relative_error(&*by_dense, &[logits], seed) <= REL_TOL);
    }

    #[test]
    fn mse_gradients((n, _k, m, seed) in case_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random_tensor(&mut rng, &[n, m]);
        let target = random_tensor(&mut rng, &[n, m]);
        let build: Box<Build> = Box::new(move |tape, v| {
            tape.loss(LossKind::Mse, v[0], &Target::Dense(target.clone())).unwrap()
        });
        prop_assert!(max_relative_error(&*build, &[pred], seed) <= REL_TOL);
    }

    /// Two-layer MLP with softmax cross-entropy, gradients w.r.t. all weights.
    #[test]
    fn two_layer_mlp_gradients((n, k, m, seed) in case_strategy()) {
        let hidden = k + 2;
        let classes = m + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[n, 3]);
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let inputs = vec![
            random_tensor(&mut rng, &[3, hidden]),
            random_tensor(&mut rng, &[hidden]),
            random_tensor(&mut rng, &[hidden, classes]),
            random_tensor(&mut rng, &[classes]),
        ];
        let build: Box<Build> = Box::new(move |tape, v| {
            let xv = tape.constant(x.clone());
            let h = tape.matmul(xv, v[0]).unwrap();
            let h = tape.add_bias(h, v[1]).unwrap();
            let h = tape.relu(h);
            let o = tape.matmul(h, v[2]).unwrap();
            let o = tape.add_bias(o, v[3]).unwrap();
            tape.cross_entropy(o, &Target::Classes(targets.clone())).unwrap()
        });
        prop_assert!(max_relative_error(&*build, &inputs, seed) <= REL_TOL);
    }

    #[test]
    fn softmax_rows_are_distributions((n, _k, m, seed) in case_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[n, m]).map(|v| v * 50.0);
        let s = softmax_rows(&x);
        for i in 0..n {
            prop_assert!(s.row(i).iter().all(|&v| v >= 0.0));
            prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    /// Any graph: nothing upstream of a stop-gradient receives gradient from it.
    #[test]
    fn stop_gradient_zeroes_upstream((n, _k, m, seed) in case_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let w = tape.param(random_tensor(&mut rng, &[n, m]));
        let other = tape.param(random_tensor(&mut rng, &[n, m]));
        let h = tape.sigmoid(w);
        let detached = tape.stop_gradient(h);
        let prod = tape.mul(detached, other).unwrap();
        let loss = tape.mean(prod);
        let grads = tape.backward(loss).unwrap();
        prop_assert!(grads.get(w).is_none());
        prop_assert!(grads.get(other).is_some());
    }

    #[test]
    fn adam_zero_gradient_never_moves(seed in any::<u64>(), steps in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        params.push("w", random_tensor(&mut rng, &[3, 2]));
        let before = params.clone();
        let mut state = AdamState::new(&params, AdamConfig::default());
        for _ in 0..steps {
            adam_step(&mut params, &[Tensor::zeros(&[3, 2])], &mut state).unwrap();
        }
        prop_assert!(params.bitwise_eq(&before));
    }
}

#[test]
fn backward_is_bitwise_repeatable() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tape = Tape::new();
        let x = tape.constant(random_tensor(&mut rng, &[16, 8]));
        let w = tape.param(random_tensor(&mut rng, &[8, 4]));
        let h = tape.matmul(x, w).unwrap();
        let s = tape.softmax(h).unwrap();
        let loss = tape.mean(s);
        let g = tape.backward(loss).unwrap();
        g.get(w).unwrap().clone()
    };
    assert!(run().bitwise_eq(&run()));
}
