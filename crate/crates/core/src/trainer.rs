//! Alternating adversarial training.
//!
//! Each cycle performs `k` discriminator updates against the true `s`
//! (everything else frozen) followed by one update of encoder, decoder,
//! forget-gates and predictors with the discriminators frozen and their
//! targets resampled from the empirical `s` marginal.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use forgetnet_tensor::{adam_step, AdamConfig, AdamState, Tensor, TensorError};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::TrainConfig;
use crate::data::{lookup, DataBundle, Dataset, SKind};
use crate::error::{Error, Result};
use crate::eval::{accuracy, optimal_a_s, probe_accuracy, ProbeSpec};
use crate::model::{ArchSpec, ForgettingModel, NetId, Phase, TaskArch};

/// Class frequencies of `s` on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSDistribution {
    freqs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl EmpiricalSDistribution {
    pub fn fit(labels: &[usize], classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("s labels"));
        }
        let mut counts = vec![0usize; classes.max(1)];
        for &l in labels {
            if l >= counts.len() {
                counts.resize(l + 1, 0);
            }
            counts[l] += 1;
        }
        let n = labels.len() as f64;
        Self::from_freqs(counts.iter().map(|&c| c as f64 / n).collect())
    }

    pub fn from_freqs(freqs: Vec<f64>) -> Result<Self> {
        let sampler = WeightedIndex::new(&freqs)
            .map_err(|e| Error::Invalid(format!("s distribution: {e}")))?;
        Ok(Self { freqs, sampler })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }
}

/// I.i.d. draws from `dist`.
pub fn sample_random_s<R: Rng + ?Sized>(
    dist: &EmpiricalSDistribution,
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    (0..count).map(|_| dist.sampler.sample(rng)).collect()
}

/// One row per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    /// Main-model updates completed so far.
    pub cycle: u64,
    pub l_y: f64,
    pub l_x: f64,
    pub l_s_disc_phase: f64,
    pub l_s_main_phase: f64,
    pub mask_reg: f64,
    pub val_a_y: f64,
    pub val_a_s_probe: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "cycle,L_y,L_x,L_s_disc_phase,L_s_main_phase,mask_reg,val_Ay,val_As_probe";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.cycle,
                r.l_y,
                r.l_x,
                r.l_s_disc_phase,
                r.l_s_main_phase,
                r.mask_reg,
                r.val_a_y,
                r.val_a_s_probe
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    EarlyStopped { epoch: usize },
    /// Training hit a non-finite value; the returned model is the last
    /// epoch-end snapshot.
    Diverged { cycle: u64, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ForgettingModel,
    pub log: TrainLog,
    pub status: Status,
    pub epochs_run: usize,
    pub d_updates: u64,
    pub main_updates: u64,
}

impl TrainOutcome {
    /// Turns a divergence into an error.
    pub fn into_result(self) -> Result<Self> {
        match &self.status {
            Status::Diverged { cycle, reason } => Err(Error::Diverged {
                cycle: *cycle,
                reason: reason.clone(),
            }),
            _ => Ok(self),
        }
    }
}

/// Architecture, epoch budget and batch size after applying overrides to
/// the dataset's defaults.
pub fn resolve(config: &TrainConfig, data: &DataBundle) -> (ArchSpec, usize, usize) {
    let m = &data.manifest;
    let (mut arch, epochs, batch) = match lookup(&m.name) {
        Ok(src) => (src.arch(m), src.default_epochs(), src.default_batch_size()),
        Err(_) => {
            let tasks = m
                .y_classes
                .iter()
                .zip(&m.s_classes)
                .map(|(&y, &s)| TaskArch {
                    y_classes: y,
                    s_classes: s,
                })
                .collect();
            (ArchSpec::tabular(m.feature_width, tasks), 50, 128)
        }
    };
    config.arch.apply(&mut arch);
    (
        arch,
        config.epochs.unwrap_or(epochs),
        config.batch_size.unwrap_or(batch),
    )
}

/// `(fit, validation)` split used by training and grid search.
pub fn validation_split(config: &TrainConfig, train: &Dataset) -> (Dataset, Option<Dataset>) {
    if config.val_fraction <= 0.0 {
        return (train.clone(), None);
    }
    let (fit, val) = train.stratified_split(config.val_fraction, config.seed ^ 0x7a1d);
    if val.is_empty() {
        (train.clone(), None)
    } else {
        (fit, Some(val))
    }
}

struct Stream {
    order: Vec<usize>,
    pos: usize,
}

impl Stream {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next_batch<R: Rng>(&mut self, size: usize, rng: &mut R) -> Vec<usize> {
        if self.pos + size > self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let size = size.min(self.order.len());
        let b = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        b
    }
}

fn labels_of(cols: &[Vec<usize>], rows: &[usize]) -> Vec<Vec<usize>> {
    cols.iter()
        .map(|c| rows.iter().map(|&i| c[i]).collect())
        .collect()
}

fn gaussian(rows: usize, cols: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(
        &[rows, cols],
        (0..rows * cols)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn apply_grads(
    model: &mut ForgettingModel,
    optimizers: &mut BTreeMap<NetId, AdamState>,
    grads: Vec<(NetId, Vec<Tensor>)>,
) -> std::result::Result<(), TensorError> {
    for (id, g) in grads {
        let state = optimizers.get_mut(&id).expect("optimizer per network");
        adam_step(model.net_mut(id).params_mut(), &g, state).map_err(|e| match e {
            TensorError::NonFiniteGradient { block } => TensorError::NonFiniteGradient {
                block: format!("{}.{block}", id.prefix()),
            },
            other => other,
        })?;
    }
    Ok(())
}

/// Validation metrics: mean predictor accuracy, per-task discriminator
/// accuracy and its floor.
fn validate(model: &ForgettingModel, val: &Dataset, kinds: &[SKind]) -> Result<(f64, Vec<(f64, f64)>)> {
    let mut a_y = 0.0;
    let mut d = Vec::new();
    for j in 0..model.task_count() {
        let emb = model.embed(val.x(), j)?;
        a_y += accuracy(&emb.y_logits.argmax_rows(), val.y(j));
        let s_logits = model.tasks[j].discriminator.predict(&emb.z_tilde)?;
        let floor = optimal_a_s(kinds[j], val.s(j), model.arch().tasks[j].s_classes);
        d.push((accuracy(&s_logits.argmax_rows(), val.s(j)), floor));
    }
    Ok((a_y / model.task_count() as f64, d))
}

/// Trains a fresh model on `data.train` (minus the validation holdout).
pub fn train(config: &TrainConfig, data: &DataBundle) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let (arch, epochs, batch_size) = resolve(config, data);
    let (fit, val) = validation_split(config, &data.train);
    let model = ForgettingModel::new(arch, config.seed)?;
    train_model(config, model, &fit, val.as_ref(), &data.manifest.s_kind, epochs, batch_size)
}

/// Trains `model` on `fit`, validating on `val` when given.
pub fn train_model(
    config: &TrainConfig,
    mut model: ForgettingModel,
    fit: &Dataset,
    val: Option<&Dataset>,
    s_kind: &[SKind],
    epochs: usize,
    batch_size: usize,
) -> Result<TrainOutcome> {
    config.validate()?;
    if fit.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if fit.width() != model.arch().input_width {
        return Err(Error::Width {
            what: "training features",
            expected: model.arch().input_width,
            got: fit.width(),
        });
    }
    let tasks = model.task_count();
    if fit.tasks() < tasks || s_kind.len() < tasks {
        return Err(Error::MissingLabels {
            task: fit.tasks().min(s_kind.len()),
        });
    }
    let s_dists: Vec<EmpiricalSDistribution> = (0..tasks)
        .map(|j| EmpiricalSDistribution::fit(fit.s(j), model.arch().tasks[j].s_classes))
        .collect::<Result<_>>()?;

    let adam = AdamConfig::new(config.learning_rate, config.decay);
    let mut optimizers: BTreeMap<NetId, AdamState> = model
        .net_ids()
        .into_iter()
        .map(|id| (id, AdamState::new(model.net(id).params(), adam)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x00c0_ffee));
    let mut main_stream = Stream::new(fit.len());
    let mut d_stream = Stream::new(fit.len());
    let batches_per_epoch = fit.len().div_ceil(batch_size);
    let noise = config.noise_sigma;
    let d = model.latent_dim();

    let mut log = TrainLog::default();
    let mut last_good = model.clone();
    let (mut d_updates, mut main_updates) = (0u64, 0u64);
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut status = Status::Completed;
    let mut epochs_run = 0;

    'epochs: for epoch in 0..epochs {
        let mut sums = [0.0f64; 5];
        let mut count = 0.0;
        for _ in 0..batches_per_epoch {
            let mut ls_disc = 0.0;
            for _ in 0..config.k {
                let rows = d_stream.next_batch(batch_size, &mut rng);
                let xb = fit.x().select_rows(&rows);
                let eps = (noise > 0.0).then(|| gaussian(rows.len(), d, noise, &mut rng));
                let mut fwd = model.forward_all(&xb, Phase::Discriminator, eps.as_ref())?;
                let (loss, value) = fwd.discriminator_loss(&labels_of(fit.ss(), &rows))?;
                if !value.is_finite() {
                    status = Status::Diverged {
                        cycle: main_updates,
                        reason: "non-finite discriminator loss".into(),
                    };
                    break 'epochs;
                }
                let grads = fwd.gradients(loss)?;
                if let Err(e) = apply_grads(&mut model, &mut optimizers, grads) {
                    status = Status::Diverged {
                        cycle: main_updates,
                        reason: e.to_string(),
                    };
                    break 'epochs;
                }
                ls_disc += value;
                d_updates += 1;
            }

            let rows = main_stream.next_batch(batch_size, &mut rng);
            let xb = fit.x().select_rows(&rows);
            let eps = (noise > 0.0).then(|| gaussian(rows.len(), d, noise, &mut rng));
            let mut fwd = model.forward_all(&xb, Phase::Main, eps.as_ref())?;
            let s_random: Vec<Vec<usize>> = s_dists
                .iter()
                .map(|dist| sample_random_s(dist, rows.len(), &mut rng))
                .collect();
            let y = labels_of(fit.ys(), &rows);
            let terms = fwd.objective(&xb, &y, &s_random, config.weights)?;
            if !terms.values.total.is_finite() {
                status = Status::Diverged {
                    cycle: main_updates,
                    reason: "non-finite objective".into(),
                };
                break 'epochs;
            }
            let grads = fwd.gradients(terms.total)?;
            if let Err(e) = apply_grads(&mut model, &mut optimizers, grads) {
                status = Status::Diverged {
                    cycle: main_updates,
                    reason: e.to_string(),
                };
                break 'epochs;
            }
            main_updates += 1;
            let v = terms.values;
            for (acc, x) in sums.iter_mut().zip([
                v.l_y,
                v.l_x,
                ls_disc / config.k as f64,
                v.l_s,
                v.mask_reg,
            ]) {
                *acc += x;
            }
            count += 1.0;
        }
        epochs_run = epoch + 1;
        last_good = model.clone();

        let (val_a_y, d_acc) = match val {
            Some(v) => {
                let (a, d) = validate(&model, v, s_kind)?;
                (a, Some(d))
            }
            None => (f64::NAN, None),
        };
        let probe_due = config.val_probe_every > 0
            && ((epoch + 1) % config.val_probe_every == 0 || epoch + 1 == epochs);
        let val_a_s_probe = match (val, probe_due) {
            (Some(v), true) => {
                let spec = ProbeSpec {
                    epochs: config.val_probe_epochs,
                    seed: config.seed ^ epoch as u64,
                    ..ProbeSpec::default()
                };
                let emb_fit = model.embed(fit.x(), 0)?;
                let emb_val = model.embed(v.x(), 0)?;
                probe_accuracy(
                    &emb_fit.z_tilde,
                    fit.s(0),
                    model.arch().tasks[0].s_classes,
                    &emb_val.z_tilde,
                    v.s(0),
                    &spec,
                )
                .map(|(a, _)| a)
                .unwrap_or(f64::NAN)
            }
            _ => f64::NAN,
        };
        log.rows.push(LogRow {
            cycle: main_updates,
            l_y: sums[0] / count,
            l_x: sums[1] / count,
            l_s_disc_phase: sums[2] / count,
            l_s_main_phase: sums[3] / count,
            mask_reg: sums[4] / count,
            val_a_y,
            val_a_s_probe,
        });
        log::info!(
            "epoch {} cycle {} L_y {:.4} L_x {:.4} L_s(D) {:.4} reg {:.3} val A_y {:.4}",
            epoch + 1,
            main_updates,
            sums[0] / count,
            sums[1] / count,
            sums[2] / count,
            sums[4] / count,
            val_a_y
        );

        if let (true, Some(d_acc)) = (config.early_stop, d_acc) {
            if val_a_y > best_val + 1e-4 {
                best_val = val_a_y;
                since_best = 0;
            } else {
                since_best += 1;
            }
            let d_at_floor = d_acc.iter().all(|(acc, floor)| *acc <= floor + 0.02);
            if since_best >= config.patience && d_at_floor && epoch + 1 >= config.min_epochs {
                status = Status::EarlyStopped { epoch: epoch + 1 };
                break;
            }
        }
    }

    let model = if matches!(status, Status::Diverged { .. }) {
        last_good
    } else {
        model
    };
    Ok(TrainOutcome {
        model,
        log,
        status,
        epochs_run,
        d_updates,
        main_updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_class_always_drawn() {
        let dist = EmpiricalSDistribution::fit(&[2, 2, 2], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_random_s(&dist, 100, &mut rng).iter().all(|&s| s == 2));
        assert_eq!(dist.freqs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_labels_rejected() {
        assert!(EmpiricalSDistribution::fit(&[], 2).is_err());
    }

    #[test]
    fn stream_covers_every_row_each_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = Stream::new(10);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| s.next_batch(2, &mut rng)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn log_header_is_stable() {
        let csv = TrainLog::default().to_csv();
        assert_eq!(csv.trim_end(), LOG_HEADER);
    }
}
