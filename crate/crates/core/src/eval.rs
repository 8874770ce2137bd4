//! Evaluation: predictor accuracy, post-hoc adversary accuracy and the
//! relative error-rate improvement between two runs.

use std::fmt;

use forgetnet_tensor::{adam_step, AdamConfig, AdamState, Tape, Target, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{majority_share, Dataset, SKind};
use crate::error::{Error, Result};
use crate::model::ForgettingModel;
use crate::nn::{Activation, Mlp, MlpSpec};

/// Post-hoc adversary: one hidden ReLU layer and a softmax output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 128,
            seed: 0,
        }
    }
}

/// Trains a probe on `(train_x, train_labels)` and returns its predictions
/// on `test_x`.
pub fn train_probe(
    train_x: &Tensor,
    train_labels: &[usize],
    classes: usize,
    test_x: &Tensor,
    spec: &ProbeSpec,
) -> Result<Vec<usize>> {
    if train_x.rows() == 0 || train_x.rows() != train_labels.len() {
        return Err(Error::Empty("probe training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mlp_spec = MlpSpec {
        input: train_x.cols(),
        widths: vec![spec.hidden, classes],
        hidden: Activation::Relu,
        output: Activation::Identity,
    };
    let mut probe = Mlp::new(mlp_spec, &mut rng);
    let mut state = AdamState::new(probe.params(), AdamConfig::new(spec.learning_rate, 0.0));
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size.max(1)) {
            let xb = train_x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| train_labels[i]).collect();
            let mut tape = Tape::new();
            let bound = probe.bind(&mut tape, true);
            let xv = tape.constant(xb);
            let logits = probe.forward(&mut tape, &bound, xv)?;
            let loss = tape.cross_entropy(logits, &Target::Classes(yb))?;
            if !tape.value(loss).item().is_finite() {
                return Err(Error::ProbeFailed("non-finite probe loss".into()));
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = bound
                .iter()
                .map(|v| grads.wrt_or_zeros(*v, tape.value(*v)))
                .collect();
            adam_step(probe.params_mut(), &g, &mut state)
                .map_err(|e| Error::ProbeFailed(e.to_string()))?;
        }
    }
    let out = probe.predict(test_x)?;
    if !out.all_finite() {
        return Err(Error::ProbeFailed("non-finite probe output".into()));
    }
    Ok(out.argmax_rows())
}

/// Probe training with one retry under a fresh seed.
pub fn probe_accuracy(
    train_x: &Tensor,
    train_labels: &[usize],
    classes: usize,
    test_x: &Tensor,
    test_labels: &[usize],
    spec: &ProbeSpec,
) -> Result<(f64, Vec<usize>)> {
    let preds = match train_probe(train_x, train_labels, classes, test_x, spec) {
        Ok(p) => p,
        Err(Error::ProbeFailed(first)) => {
            log::warn!("probe failed ({first}); retrying with a new seed");
            let retry = ProbeSpec {
                seed: spec.seed.wrapping_add(0x5eed),
                ..*spec
            };
            train_probe(train_x, train_labels, classes, test_x, &retry)
                .map_err(|e| Error::ProbeFailed(format!("{first}; retry: {e}")))?
        }
        Err(e) => return Err(e),
    };
    Ok((accuracy(&preds, test_labels), preds))
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// `counts[true][predicted]`.
pub fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p < classes && t < classes {
            m[t][p] += 1;
        }
    }
    m
}

/// Optimal adversary accuracy: chance for a nuisance, majority share for a bias.
pub fn optimal_a_s(kind: SKind, s: &[usize], s_classes: usize) -> f64 {
    match kind {
        SKind::Nuisance => 1.0 / s_classes as f64,
        SKind::Bias => majority_share(s),
    }
}

/// Scorecard of one task of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: usize,
    pub a_y: f64,
    pub a_s: f64,
    pub a_s_optimal: f64,
    pub y_confusion: Vec<Vec<usize>>,
    pub s_confusion: Vec<Vec<usize>>,
    pub probe: Option<ProbeSpec>,
    pub seed: u64,
    pub config_hash: String,
}

impl EvalReport {
    /// A report carrying only the headline numbers, e.g. a published baseline.
    pub fn reference(a_y: f64, a_s: f64, a_s_optimal: f64) -> Self {
        Self {
            task: 0,
            a_y,
            a_s,
            a_s_optimal,
            y_confusion: Vec::new(),
            s_confusion: Vec::new(),
            probe: None,
            seed: 0,
            config_hash: String::new(),
        }
    }

    pub fn a_s_gap(&self) -> f64 {
        (self.a_s - self.a_s_optimal).abs()
    }
}

/// Evaluates every task: `A_y` from the model's predictor on `z̃`, `A_s`
/// from a probe trained on `train`'s `z̃` and tested on `test`'s.
pub fn evaluate(
    model: &ForgettingModel,
    train: &Dataset,
    test: &Dataset,
    probe: &ProbeSpec,
    s_kind: &[SKind],
) -> Result<Vec<EvalReport>> {
    if test.is_empty() || train.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let mut reports = Vec::with_capacity(model.task_count());
    for j in 0..model.task_count() {
        let arch = model.arch().tasks[j];
        let kind = *s_kind.get(j).ok_or(Error::MissingLabels { task: j })?;
        let tr = model.embed(train.x(), j)?;
        let te = model.embed(test.x(), j)?;
        let y_pred = te.y_logits.argmax_rows();
        let a_y = accuracy(&y_pred, test.y(j));
        let (a_s, s_pred) = probe_accuracy(
            &tr.z_tilde,
            train.s(j),
            arch.s_classes,
            &te.z_tilde,
            test.s(j),
            probe,
        )?;
        reports.push(EvalReport {
            task: j,
            a_y,
            a_s,
            a_s_optimal: optimal_a_s(kind, test.s(j), arch.s_classes),
            y_confusion: confusion(&y_pred, test.y(j), arch.y_classes),
            s_confusion: confusion(&s_pred, test.s(j), arch.s_classes),
            probe: Some(*probe),
            seed: probe.seed,
            config_hash: String::new(),
        });
    }
    Ok(reports)
}

/// Relative error-rate improvement, or undefined when the baseline error is
/// zero but ours is not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delta {
    Value(f64),
    Undefined,
}

impl Delta {
    fn of(err_base: f64, err_ours: f64) -> Self {
        if err_base == 0.0 {
            if err_ours == 0.0 {
                Delta::Value(0.0)
            } else {
                Delta::Undefined
            }
        } else {
            Delta::Value((err_base - err_ours) / err_base)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Delta::Value(v) => Some(v),
            Delta::Undefined => None,
        }
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delta::Value(v) => write!(f, "{:.1}%", v * 100.0),
            Delta::Undefined => f.write_str("–"),
        }
    }
}

/// `(Δ A_y, Δ A_s)` of `ours` over `baseline`.
pub fn delta_metric(ours: &EvalReport, baseline: &EvalReport) -> Result<(Delta, Delta)> {
    if (ours.a_s_optimal - baseline.a_s_optimal).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "reports disagree on optimal A_s: {} vs {}",
            ours.a_s_optimal, baseline.a_s_optimal
        )));
    }
    Ok((
        Delta::of(1.0 - baseline.a_y, 1.0 - ours.a_y),
        Delta::of(baseline.a_s_gap(), ours.a_s_gap()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(d: Delta, v: f64) -> bool {
        d.value().is_some_and(|x| (x - v).abs() < 1e-3)
    }

    #[test]
    fn delta_examples() {
        let base = EvalReport::reference(0.74, 0.34, 0.25);
        let ours = EvalReport::reference(0.84, 0.25, 0.25);
        let (dy, ds) = delta_metric(&ours, &base).unwrap();
        assert!(close(dy, 0.385));
        assert!(close(ds, 1.0));
        let (a, b) = delta_metric(&ours, &ours).unwrap();
        assert_eq!((a, b), (Delta::Value(0.0), Delta::Value(0.0)));
    }

    #[test]
    fn delta_sentinel_and_mismatch() {
        let perfect = EvalReport::reference(1.0, 0.5, 0.5);
        let worse = EvalReport::reference(0.9, 0.5, 0.5);
        let (dy, _) = delta_metric(&worse, &perfect).unwrap();
        assert_eq!(dy, Delta::Undefined);
        assert_eq!(dy.to_string(), "–");
        let other = EvalReport::reference(0.9, 0.5, 0.4);
        assert!(delta_metric(&worse, &other).is_err());
    }

    #[test]
    fn constant_embedding_probe_learns_majority() {
        let n = 200;
        let x = Tensor::zeros(&[n, 3]);
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i % 10 < 7)).collect();
        let spec = ProbeSpec {
            epochs: 20,
            ..Default::default()
        };
        let (acc, _) = probe_accuracy(&x, &labels, 2, &x, &labels, &spec).unwrap();
        assert!((acc - 0.7).abs() < 1e-12);
    }

    #[test]
    fn confusion_counts() {
        let c = confusion(&[0, 1, 1], &[0, 0, 1], 2);
        assert_eq!(c, vec![vec![1, 1], vec![0, 1]]);
    }
}
