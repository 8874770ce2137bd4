//! Encoder / forget-gate / predictor / decoder / discriminator assembly.
//!
//! The encoder `E` maps `x` to `z`; each task's forget-gate `F` maps `x` to a
//! mask `m ∈ (0, 1)^d`; the predictor `P` reads `z̃ = z ⊙ m`; the decoder `R`
//! reconstructs `x` from `z` (never from `z̃`); and the discriminator `D`
//! reads `stop_gradient(z) ⊙ m`, so adversarial gradients reach the
//! forget-gate but never the encoder.

use forgetnet_tensor::{ParamSet, Tape, Target, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpSpec};

/// Class cardinalities of one prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskArch {
    pub y_classes: usize,
    pub s_classes: usize,
}

/// Architecture metadata. Layer counts are numbers of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub input_width: usize,
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub encoder_layers: usize,
    pub forget_gate_layers: usize,
    pub predictor_layers: usize,
    pub decoder_layers: usize,
    pub discriminator_layers: usize,
    pub encoder_output: Activation,
    pub decoder_output: Activation,
    pub tasks: Vec<TaskArch>,
}

impl ArchSpec {
    /// Depths used for the tabular datasets: 2-layer encoder and forget-gate,
    /// 1-layer predictor, 2-layer decoder, 2-layer discriminator.
    pub fn tabular(input_width: usize, tasks: Vec<TaskArch>) -> Self {
        Self {
            input_width,
            latent_dim: 32,
            hidden_width: 64,
            encoder_layers: 2,
            forget_gate_layers: 2,
            predictor_layers: 1,
            decoder_layers: 2,
            discriminator_layers: 2,
            encoder_output: Activation::Relu,
            decoder_output: Activation::Identity,
            tasks,
        }
    }

    fn encoder_spec(&self) -> MlpSpec {
        MlpSpec::stack(
            self.input_width,
            self.hidden_width,
            self.encoder_layers,
            self.latent_dim,
            self.encoder_output,
        )
    }

    fn forget_gate_spec(&self) -> MlpSpec {
        MlpSpec::stack(
            self.input_width,
            self.hidden_width,
            self.forget_gate_layers,
            self.latent_dim,
            Activation::Sigmoid,
        )
    }

    fn decoder_spec(&self) -> MlpSpec {
        MlpSpec::stack(
            self.latent_dim,
            self.hidden_width,
            self.decoder_layers,
            self.input_width,
            self.decoder_output,
        )
    }

    fn predictor_spec(&self, task: &TaskArch) -> MlpSpec {
        MlpSpec::stack(
            self.latent_dim,
            self.hidden_width,
            self.predictor_layers,
            task.y_classes,
            Activation::Identity,
        )
    }

    fn discriminator_spec(&self, task: &TaskArch) -> MlpSpec {
        MlpSpec::stack(
            self.latent_dim,
            self.hidden_width,
            self.discriminator_layers,
            task.s_classes,
            Activation::Identity,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_width", self.input_width),
            ("latent_dim", self.latent_dim),
            ("hidden_width", self.hidden_width),
            ("encoder_layers", self.encoder_layers),
            ("forget_gate_layers", self.forget_gate_layers),
            ("predictor_layers", self.predictor_layers),
            ("decoder_layers", self.decoder_layers),
            ("discriminator_layers", self.discriminator_layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.tasks.is_empty() {
            return Err(Error::Invalid("model needs at least one task".into()));
        }
        if self
            .tasks
            .iter()
            .any(|t| t.y_classes < 2 || t.s_classes < 1)
        {
            return Err(Error::Invalid("task class counts too small".into()));
        }
        Ok(())
    }
}

/// Identifies one of the component networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NetId {
    Encoder,
    Decoder,
    ForgetGate(usize),
    Predictor(usize),
    Discriminator(usize),
}

impl NetId {
    pub fn prefix(self) -> String {
        match self {
            NetId::Encoder => "encoder".into(),
            NetId::Decoder => "decoder".into(),
            NetId::ForgetGate(j) => format!("task{j}.forget_gate"),
            NetId::Predictor(j) => format!("task{j}.predictor"),
            NetId::Discriminator(j) => format!("task{j}.discriminator"),
        }
    }

    pub fn is_discriminator(self) -> bool {
        matches!(self, NetId::Discriminator(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNets {
    pub forget_gate: Mlp,
    pub predictor: Mlp,
    pub discriminator: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingModel {
    arch: ArchSpec,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub tasks: Vec<TaskNets>,
}

/// Which networks a forward pass records as trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Only the discriminators train; encoder and gates are frozen and the
    /// decoder/predictors are skipped.
    Discriminator,
    /// Encoder, decoder, gates and predictors train; discriminators are frozen.
    Main,
    /// Everything is trainable; for gradient introspection.
    Inspect,
}

impl Phase {
    fn trains(self, id: NetId) -> bool {
        match self {
            Phase::Discriminator => id.is_discriminator(),
            Phase::Main => !id.is_discriminator(),
            Phase::Inspect => true,
        }
    }
}

/// Per-task handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardBundle {
    pub z: Var,
    pub m: Var,
    pub z_tilde: Var,
    pub z_tilde_detached: Var,
    /// Absent in the discriminator phase.
    pub x_hat: Option<Var>,
    /// Absent in the discriminator phase.
    pub y_logits: Option<Var>,
    pub s_logits: Var,
}

/// A recorded forward pass: the tape, bound parameters and per-task bundles.
#[derive(Debug)]
pub struct Forward {
    pub tape: Tape,
    pub x: Var,
    pub phase: Phase,
    pub bindings: Vec<(NetId, Vec<Var>)>,
    pub tasks: Vec<ForwardBundle>,
}

/// Loss weights of the min-max objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectiveWeights {
    pub rho: f64,
    pub delta: f64,
    pub lambda: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            rho: 1.0,
            delta: 1.0,
            lambda: 1.0,
        }
    }
}

/// Objective handle plus its components (summed over tasks).
#[derive(Debug, Clone)]
pub struct ObjectiveTerms {
    pub total: Var,
    pub l_y: Vec<Var>,
    pub l_x: Var,
    pub l_s: Vec<Var>,
    pub mask_reg: Vec<Var>,
    pub values: ObjectiveValues,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveValues {
    pub total: f64,
    pub l_y: f64,
    pub l_x: f64,
    pub l_s: f64,
    pub mask_reg: f64,
}

/// Per-dimension summary of forget-mask values over a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSummary {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Per dimension: fraction of samples with `m_i ∈ (0.1, 0.9)`.
    pub mid_fraction: Vec<f64>,
    /// Fraction of dimensions whose mean mask lies in `(0.1, 0.9)`.
    pub undecided_dims: f64,
}

/// Tape-free outputs for a batch of inputs, for one task.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub z: Tensor,
    pub m: Tensor,
    pub z_tilde: Tensor,
    pub y_logits: Tensor,
}

const MASK_LOW: f64 = 0.1;
const MASK_HIGH: f64 = 0.9;
const EMBED_CHUNK: usize = 4096;

impl ForgettingModel {
    /// Fresh model. Every component is initialized from its own stream
    /// derived from `seed`.
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut stream = 0u64;
        let mut next = || {
            stream += 1;
            ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        };
        let encoder = Mlp::new(arch.encoder_spec(), &mut next());
        let decoder = Mlp::new(arch.decoder_spec(), &mut next());
        let tasks = arch
            .tasks
            .iter()
            .map(|t| TaskNets {
                forget_gate: Mlp::new(arch.forget_gate_spec(), &mut next()),
                predictor: Mlp::new(arch.predictor_spec(t), &mut next()),
                discriminator: Mlp::new(arch.discriminator_spec(t), &mut next()),
            })
            .collect();
        Ok(Self {
            arch,
            encoder,
            decoder,
            tasks,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    /// All component ids in a fixed order.
    pub fn net_ids(&self) -> Vec<NetId> {
        let mut ids = vec![NetId::Encoder, NetId::Decoder];
        for j in 0..self.tasks.len() {
            ids.extend([
                NetId::ForgetGate(j),
                NetId::Predictor(j),
                NetId::Discriminator(j),
            ]);
        }
        ids
    }

    pub fn net(&self, id: NetId) -> &Mlp {
        match id {
            NetId::Encoder => &self.encoder,
            NetId::Decoder => &self.decoder,
            NetId::ForgetGate(j) => &self.tasks[j].forget_gate,
            NetId::Predictor(j) => &self.tasks[j].predictor,
            NetId::Discriminator(j) => &self.tasks[j].discriminator,
        }
    }

    pub fn net_mut(&mut self, id: NetId) -> &mut Mlp {
        match id {
            NetId::Encoder => &mut self.encoder,
            NetId::Decoder => &mut self.decoder,
            NetId::ForgetGate(j) => &mut self.tasks[j].forget_gate,
            NetId::Predictor(j) => &mut self.tasks[j].predictor,
            NetId::Discriminator(j) => &mut self.tasks[j].discriminator,
        }
    }

    /// Every parameter block, named `<net prefix>.<block>`.
    pub fn named_params(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for id in self.net_ids() {
            let prefix = id.prefix();
            for (name, t) in self.net(id).params().iter() {
                out.push(format!("{prefix}.{name}"), t.clone());
            }
        }
        out
    }

    /// Rebuilds a model from `arch` and blocks named as in [`named_params`](Self::named_params).
    pub fn from_named_params(arch: ArchSpec, params: &ParamSet) -> Result<Self> {
        let mut model = Self::new(arch, 0)?;
        for id in model.net_ids() {
            let prefix = id.prefix();
            let spec = model.net(id).spec().clone();
            let mut set = ParamSet::new();
            for name in model.net(id).params().names().to_vec() {
                let full = format!("{prefix}.{name}");
                let t = params.by_name(&full).ok_or_else(|| {
                    Error::Invalid(format!("missing parameter block `{full}`"))
                })?;
                set.push(name, t.clone());
            }
            *model.net_mut(id) = Mlp::from_params(spec, set)?;
        }
        if params.len() != model.named_params().len() {
            return Err(Error::Invalid(format!(
                "{} parameter blocks supplied, architecture has {}",
                params.len(),
                model.named_params().len()
            )));
        }
        Ok(model)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 2 || x.cols() != self.arch.input_width {
            return Err(Error::Width {
                what: "input batch",
                expected: self.arch.input_width,
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Records the forward pass of every task.
    ///
    /// `noise`, when given, is added to every `z̃` (same shape as `z`).
    pub fn forward_all(&self, x: &Tensor, phase: Phase, noise: Option<&Tensor>) -> Result<Forward> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let mut bindings = Vec::new();
        let mut bind = |tape: &mut Tape, id: NetId| {
            let vars = self.net(id).bind(tape, phase.trains(id));
            bindings.push((id, vars.clone()));
            vars
        };

        let xv = tape.constant(x.clone());
        let enc = bind(&mut tape, NetId::Encoder);
        let z = self.encoder.forward(&mut tape, &enc, xv)?;
        let x_hat = if phase == Phase::Discriminator {
            None
        } else {
            let dec = bind(&mut tape, NetId::Decoder);
            Some(self.decoder.forward(&mut tape, &dec, z)?)
        };
        let eps = match noise {
            Some(n) => {
                let zshape = tape.value(z).shape();
                if n.shape() != zshape {
                    return Err(Error::Width {
                        what: "noise",
                        expected: tape.value(z).len(),
                        got: n.len(),
                    });
                }
                Some(tape.constant(n.clone()))
            }
            None => None,
        };
        let z_detached = tape.stop_gradient(z);

        let mut tasks = Vec::with_capacity(self.tasks.len());
        for (j, nets) in self.tasks.iter().enumerate() {
            let fg = bind(&mut tape, NetId::ForgetGate(j));
            let m = nets.forget_gate.forward(&mut tape, &fg, xv)?;
            let mut z_tilde = tape.mul(z, m)?;
            let mut z_tilde_detached = tape.mul(z_detached, m)?;
            if let Some(e) = eps {
                z_tilde = tape.add(z_tilde, e)?;
                z_tilde_detached = tape.add(z_tilde_detached, e)?;
            }
            let y_logits = if phase == Phase::Discriminator {
                None
            } else {
                let p = bind(&mut tape, NetId::Predictor(j));
                Some(nets.predictor.forward(&mut tape, &p, z_tilde)?)
            };
            let d = bind(&mut tape, NetId::Discriminator(j));
            let s_logits = nets.discriminator.forward(&mut tape, &d, z_tilde_detached)?;
            tasks.push(ForwardBundle {
                z,
                m,
                z_tilde,
                z_tilde_detached,
                x_hat,
                y_logits,
                s_logits,
            });
        }
        Ok(Forward {
            tape,
            x: xv,
            phase,
            bindings,
            tasks,
        })
    }

    /// Single-task forward pass (task 0).
    pub fn forward(&self, x: &Tensor, phase: Phase) -> Result<(Forward, ForwardBundle)> {
        let fwd = self.forward_all(x, phase, None)?;
        let bundle = fwd.tasks[0];
        Ok((fwd, bundle))
    }

    /// All task bundles; they share `z` and `x_hat`.
    pub fn multi_task_forward(&self, x: &Tensor, phase: Phase) -> Result<Forward> {
        self.forward_all(x, phase, None)
    }

    /// Tape-free `z`, `m`, `z̃` and `y` logits for `task`, computed in chunks.
    pub fn embed(&self, x: &Tensor, task: usize) -> Result<Embeddings> {
        self.check_input(x)?;
        if task >= self.tasks.len() {
            return Err(Error::TaskIndex {
                index: task,
                tasks: self.tasks.len(),
            });
        }
        let nets = &self.tasks[task];
        let d = self.arch.latent_dim;
        let mut z = Vec::with_capacity(x.rows() * d);
        let mut m = Vec::with_capacity(x.rows() * d);
        let mut zt = Vec::with_capacity(x.rows() * d);
        let mut yl = Vec::new();
        let rows: Vec<usize> = (0..x.rows()).collect();
        for chunk in rows.chunks(EMBED_CHUNK) {
            let xb = x.select_rows(chunk);
            let zb = self.encoder.predict(&xb)?;
            let mb = nets.forget_gate.predict(&xb)?;
            let ztb = zb.zip_map(&mb, |a, b| a * b);
            let yb = nets.predictor.predict(&ztb)?;
            z.extend_from_slice(zb.data());
            m.extend_from_slice(mb.data());
            zt.extend_from_slice(ztb.data());
            yl.extend_from_slice(yb.data());
        }
        let n = x.rows();
        let classes = self.arch.tasks[task].y_classes;
        Ok(Embeddings {
            z: Tensor::from_vec(&[n, d], z),
            m: Tensor::from_vec(&[n, d], m),
            z_tilde: Tensor::from_vec(&[n, d], zt),
            y_logits: Tensor::from_vec(&[n, classes], yl),
        })
    }

    /// Mean, variance and mid-range occupancy of each mask dimension.
    pub fn mask_statistics(&self, x: &Tensor, task: usize) -> Result<MaskSummary> {
        if x.is_empty() || x.rank() != 2 {
            return Err(Error::Empty("mask_statistics"));
        }
        let m = self.embed(x, task)?.m;
        Ok(summarize_mask(&m))
    }
}

pub(crate) fn summarize_mask(m: &Tensor) -> MaskSummary {
    let (n, d) = (m.rows(), m.cols());
    let mut mean = vec![0.0; d];
    let mut mid = vec![0.0; d];
    for i in 0..n {
        for (j, &v) in m.row(i).iter().enumerate() {
            mean[j] += v;
            if v > MASK_LOW && v < MASK_HIGH {
                mid[j] += 1.0;
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    mid.iter_mut().for_each(|v| *v /= n as f64);
    let mut variance = vec![0.0; d];
    for i in 0..n {
        for (j, &v) in m.row(i).iter().enumerate() {
            variance[j] += (v - mean[j]).powi(2);
        }
    }
    variance.iter_mut().for_each(|v| *v /= n as f64);
    let undecided = mean
        .iter()
        .filter(|&&v| v > MASK_LOW && v < MASK_HIGH)
        .count() as f64
        / d as f64;
    MaskSummary {
        samples: n,
        mean,
        variance,
        mid_fraction: mid,
        undecided_dims: undecided,
    }
}

impl Forward {
    /// Adds the objective `L_y + ρ L_x + δ L_s + λ · mean_batch mᵀ(1 − m)`,
    /// summed over tasks (the reconstruction term is shared).
    ///
    /// `s_targets[j]` supervises discriminator `j`; the trainer passes
    /// resampled labels here during main-model updates.
    pub fn objective(
        &mut self,
        x: &Tensor,
        y: &[Vec<usize>],
        s_targets: &[Vec<usize>],
        weights: ObjectiveWeights,
    ) -> Result<ObjectiveTerms> {
        let n = x.rows();
        if self.phase == Phase::Discriminator {
            return Err(Error::Invalid(
                "objective needs a main or inspect forward pass".into(),
            ));
        }
        for j in 0..self.tasks.len() {
            let ok = s_targets.get(j).is_some_and(|s| s.len() == n);
            if !ok {
                return Err(Error::MissingLabels { task: j });
            }
            if y.get(j).map(Vec::len) != Some(n) {
                return Err(Error::Invalid(format!("missing y labels for task {j}")));
            }
        }
        let tape = &mut self.tape;
        let x_hat = self.tasks[0].x_hat.expect("main pass records x_hat");
        let l_x = tape.mse(x_hat, x)?;

        let mut l_y = Vec::new();
        let mut l_s = Vec::new();
        let mut regs = Vec::new();
        let mut total = tape.scale(l_x, weights.rho);
        let mut values = ObjectiveValues {
            l_x: tape.value(l_x).item(),
            ..Default::default()
        };
        for (j, b) in self.tasks.iter().enumerate() {
            let ly = tape.cross_entropy(
                b.y_logits.expect("main pass records y logits"),
                &Target::Classes(y[j].clone()),
            )?;
            let ls = tape.cross_entropy(b.s_logits, &Target::Classes(s_targets[j].clone()))?;
            let one_minus = tape.affine(b.m, -1.0, 1.0);
            let prod = tape.mul(b.m, one_minus)?;
            let summed = tape.sum(prod);
            let reg = tape.scale(summed, 1.0 / n as f64);

            values.l_y += tape.value(ly).item();
            values.l_s += tape.value(ls).item();
            values.mask_reg += tape.value(reg).item();

            let ws = tape.scale(ls, weights.delta);
            let wr = tape.scale(reg, weights.lambda);
            // L_y first so that zero weights leave the total equal to L_y.
            let t = tape.add(ly, total)?;
            let t = tape.add(t, ws)?;
            total = tape.add(t, wr)?;
            l_y.push(ly);
            l_s.push(ls);
            regs.push(reg);
        }
        values.total = tape.value(total).item();
        Ok(ObjectiveTerms {
            total,
            l_y,
            l_x,
            l_s,
            mask_reg: regs,
            values,
        })
    }

    /// Discriminator loss against the true `s` labels, summed over tasks.
    pub fn discriminator_loss(&mut self, s: &[Vec<usize>]) -> Result<(Var, f64)> {
        let mut total: Option<Var> = None;
        for (j, b) in self.tasks.iter().enumerate() {
            let labels = s.get(j).ok_or(Error::MissingLabels { task: j })?;
            let l = self
                .tape
                .cross_entropy(b.s_logits, &Target::Classes(labels.clone()))?;
            total = Some(match total {
                Some(t) => self.tape.add(t, l)?,
                None => l,
            });
        }
        let total = total.expect("at least one task");
        Ok((total, self.tape.value(total).item()))
    }

    /// Gradients of `loss` for every trainable network, zero-filled where
    /// no gradient arrived.
    pub fn gradients(&self, loss: Var) -> Result<Vec<(NetId, Vec<Tensor>)>> {
        let grads = self.tape.backward(loss)?;
        Ok(self
            .bindings
            .iter()
            .filter(|(_, vars)| vars.first().is_some_and(|v| self.tape.requires_grad(*v)))
            .map(|(id, vars)| {
                let g = vars
                    .iter()
                    .map(|v| grads.wrt_or_zeros(*v, self.tape.value(*v)))
                    .collect();
                (*id, g)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(d: usize, tasks: usize) -> ArchSpec {
        let mut a = ArchSpec::tabular(
            6,
            vec![
                TaskArch {
                    y_classes: 2,
                    s_classes: 3
                };
                tasks
            ],
        );
        a.latent_dim = d;
        a.hidden_width = 8;
        a
    }

    fn batch(n: usize) -> Tensor {
        Tensor::from_vec(
            &[n, 6],
            (0..n * 6).map(|i| ((i * 37 % 11) as f64 / 5.0) - 1.0).collect(),
        )
    }

    /// Forces the last forget-gate layer to a constant pre-activation.
    fn force_gate(model: &mut ForgettingModel, task: usize, logit: f64) {
        let gate = model.net_mut(NetId::ForgetGate(task));
        let blocks = gate.params().len();
        for t in gate.params_mut().tensors_mut()[blocks - 2..].iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let bias = gate.params_mut().get_mut(blocks - 1);
        bias.data_mut().iter_mut().for_each(|v| *v = logit);
    }

    #[test]
    fn open_gate_passes_z_through() {
        let mut model = ForgettingModel::new(arch(4, 1), 3).unwrap();
        force_gate(&mut model, 0, 40.0);
        let (fwd, b) = model.forward(&batch(5), Phase::Main).unwrap();
        let z = fwd.tape.value(b.z);
        let zt = fwd.tape.value(b.z_tilde);
        for (a, c) in z.data().iter().zip(zt.data()) {
            assert!((a - c).abs() <= 1e-7 * a.abs());
        }
    }

    #[test]
    fn closed_gate_zeroes_z_tilde_but_not_reconstruction() {
        let mut model = ForgettingModel::new(arch(4, 1), 3).unwrap();
        let x = batch(5);
        let (open, ob) = model.forward(&x, Phase::Main).unwrap();
        force_gate(&mut model, 0, -40.0);
        let (closed, cb) = model.forward(&x, Phase::Main).unwrap();
        let zt = closed.tape.value(cb.z_tilde);
        let z = closed.tape.value(cb.z);
        for (a, c) in zt.data().iter().zip(z.data()) {
            assert!(a.abs() <= 1e-6 * c.abs().max(1.0));
        }
        assert!(open
            .tape
            .value(ob.x_hat.unwrap())
            .bitwise_eq(closed.tape.value(cb.x_hat.unwrap())));
    }

    #[test]
    fn detached_and_attached_z_tilde_are_bitwise_equal() {
        let model = ForgettingModel::new(arch(8, 1), 9).unwrap();
        let (fwd, b) = model.forward(&batch(7), Phase::Main).unwrap();
        assert!(fwd
            .tape
            .value(b.z_tilde)
            .bitwise_eq(fwd.tape.value(b.z_tilde_detached)));
        let m = fwd.tape.value(b.m);
        assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_weights_leave_only_l_y() {
        let model = ForgettingModel::new(arch(4, 1), 1).unwrap();
        let x = batch(6);
        let (mut fwd, _) = model.forward(&x, Phase::Main).unwrap();
        let y = vec![vec![0, 1, 1, 0, 1, 0]];
        let s = vec![vec![0, 1, 2, 0, 1, 2]];
        let w = ObjectiveWeights {
            rho: 0.0,
            delta: 0.0,
            lambda: 0.0,
        };
        let terms = fwd.objective(&x, &y, &s, w).unwrap();
        assert_eq!(terms.values.total, terms.values.l_y);
    }

    #[test]
    fn half_mask_regularizer_is_d_over_four() {
        let mut model = ForgettingModel::new(arch(10, 1), 1).unwrap();
        force_gate(&mut model, 0, 0.0);
        let x = batch(4);
        let (mut fwd, _) = model.forward(&x, Phase::Main).unwrap();
        let y = vec![vec![0; 4]];
        let s = vec![vec![0; 4]];
        let terms = fwd
            .objective(&x, &y, &s, ObjectiveWeights::default())
            .unwrap();
        assert!((terms.values.mask_reg - 2.5).abs() < 1e-12);
    }

    #[test]
    fn saturated_mask_regularizer_is_near_zero() {
        let mut model = ForgettingModel::new(arch(10, 1), 1).unwrap();
        force_gate(&mut model, 0, 40.0);
        let x = batch(4);
        let (mut fwd, _) = model.forward(&x, Phase::Main).unwrap();
        let terms = fwd
            .objective(&x, &[vec![0; 4]], &[vec![0; 4]], ObjectiveWeights::default())
            .unwrap();
        assert!(terms.values.mask_reg < 1e-5);
    }

    #[test]
    fn missing_s_labels_rejected() {
        let model = ForgettingModel::new(arch(4, 2), 1).unwrap();
        let x = batch(3);
        let mut fwd = model.multi_task_forward(&x, Phase::Main).unwrap();
        let err = fwd
            .objective(&x, &[vec![0; 3], vec![0; 3]], &[vec![0; 3]], ObjectiveWeights::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingLabels { task: 1 }));
    }

    #[test]
    fn width_mismatch_rejected() {
        let model = ForgettingModel::new(arch(4, 1), 1).unwrap();
        assert!(matches!(
            model.forward(&Tensor::zeros(&[2, 5]), Phase::Main),
            Err(Error::Width { .. })
        ));
        assert!(matches!(
            model.embed(&batch(2), 3),
            Err(Error::TaskIndex { index: 3, .. })
        ));
    }

    #[test]
    fn zero_gate_weights_give_half_masks() {
        let mut model = ForgettingModel::new(arch(5, 1), 4).unwrap();
        force_gate(&mut model, 0, 0.0);
        let summary = model.mask_statistics(&batch(20), 0).unwrap();
        assert!(summary.mean.iter().all(|&v| v == 0.5));
        assert_eq!(summary.undecided_dims, 1.0);
        assert!(summary.mid_fraction.iter().all(|&f| (0.0..=1.0).contains(&f)));
    }

    #[test]
    fn single_task_multi_forward_matches_forward() {
        let model = ForgettingModel::new(arch(4, 1), 2).unwrap();
        let x = batch(5);
        let (a, ab) = model.forward(&x, Phase::Main).unwrap();
        let b = model.multi_task_forward(&x, Phase::Main).unwrap();
        assert_eq!(b.tasks.len(), 1);
        let bb = b.tasks[0];
        assert!(a
            .tape
            .value(ab.y_logits.unwrap())
            .bitwise_eq(b.tape.value(bb.y_logits.unwrap())));
    }

    #[test]
    fn perturbing_one_gate_leaves_other_task_alone() {
        let mut model = ForgettingModel::new(arch(4, 2), 2).unwrap();
        let x = batch(5);
        let before = model.multi_task_forward(&x, Phase::Main).unwrap();
        let gate = model.net_mut(NetId::ForgetGate(0));
        gate.params_mut().get_mut(0).data_mut()[0] += 0.5;
        let after = model.multi_task_forward(&x, Phase::Main).unwrap();
        let t2 = |f: &Forward| f.tape.value(f.tasks[1].z_tilde).clone();
        assert!(t2(&before).bitwise_eq(&t2(&after)));
        let t1 = |f: &Forward| f.tape.value(f.tasks[0].z_tilde).clone();
        assert!(!t1(&before).bitwise_eq(&t1(&after)));
    }

    #[test]
    fn named_params_round_trip() {
        let model = ForgettingModel::new(arch(4, 2), 5).unwrap();
        let rebuilt = ForgettingModel::from_named_params(model.arch().clone(), &model.named_params())
            .unwrap();
        assert_eq!(model, rebuilt);
    }
}
