//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles in
//! append order, so each node's inputs always precede it. [`Tape::backward`]
//! walks the nodes once in reverse and returns a [`Gradients`] table.
//!
//! Only nodes that depend on a [`Tape::param`] leaf carry gradients.
//! [`Tape::constant`] leaves and everything downstream of
//! [`OpKind::StopGradient`] are excluded, which is how frozen networks and
//! detached activations are expressed.

use crate::error::TensorError;
use crate::linalg::{gemm, Operand};
use crate::tensor::Tensor;

/// Lower/upper clamp of the sigmoid output, keeping it strictly inside (0, 1).
pub const SIGMOID_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operations that take only tensor inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    /// `(n × k) · (k × m)`.
    MatMul,
    /// Adds a length-`m` bias row to every row of an `n × m` matrix.
    AddBias,
    Add,
    Sub,
    /// Elementwise product of equal shapes.
    Mul,
    /// `scale * x + shift`, elementwise.
    Affine { scale: f64, shift: f64 },
    /// Logistic function, clamped to `[SIGMOID_EPS, 1 - SIGMOID_EPS]`.
    Sigmoid,
    Relu,
    /// Row-wise softmax of a matrix.
    Softmax,
    /// Column-wise concatenation of matrices with equal row counts.
    Concat,
    /// Identity in value; no gradient flows to the input.
    StopGradient,
    /// Sum of all elements, producing a scalar.
    Sum,
    /// Mean of all elements, producing a scalar.
    Mean,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::AddBias => "add_bias",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Affine { .. } => "affine",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::Softmax => "softmax",
            OpKind::Concat => "concat",
            OpKind::StopGradient => "stop_gradient",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
        }
    }
}

/// Loss functions; both reduce to a scalar mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy on logits, averaged over rows.
    CrossEntropy,
    /// Mean squared error over all elements.
    Mse,
}

/// Supervision for a loss.
#[derive(Debug, Clone)]
pub enum Target {
    /// One class index per row.
    Classes(Vec<usize>),
    /// Dense target of the prediction's shape (one-hot or soft labels for
    /// cross-entropy, regression targets for MSE).
    Dense(Tensor),
}

#[derive(Debug)]
enum Saved {
    None,
    /// Forward output reused by the backward rule (sigmoid, softmax).
    Output,
    Probs(Tensor),
    SoftTarget { probs: Tensor, target: Tensor },
    Dense(Tensor),
}

#[derive(Debug)]
struct Node {
    kind: NodeKind,
    inputs: Vec<usize>,
    value: Tensor,
    saved: Saved,
    requires_grad: bool,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf,
    Op(OpKind),
    CrossEntropy(Option<Vec<usize>>),
    Mse,
}

/// Append-only computation record.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: one optional gradient per node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`, or `None` when no gradient reached it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get), but returns zeros shaped like `like` when absent.
    pub fn wrt_or_zeros(&self, var: Var, like: &Tensor) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, inputs: &[&Tensor]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_EPS, 1.0 - SIGMOID_EPS)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let (rows, cols) = x.matrix_dims().unwrap_or((1, x.len()));
    let mut out = Vec::with_capacity(x.len());
    for i in 0..rows {
        let row = &x.data()[i * cols..(i + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    Tensor::from_vec(x.shape(), out)
}

/// Row-wise `log Σ exp`.
fn logsumexp_rows(x: &Tensor) -> Vec<f64> {
    let cols = x.cols();
    (0..x.rows())
        .map(|i| {
            let row = &x.data()[i * cols..(i + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        })
        .collect()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: gradients are reported for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(NodeKind::Leaf, vec![], value, Saved::None, true)
    }

    /// Non-trainable leaf (inputs, frozen weights).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(NodeKind::Leaf, vec![], value, Saved::None, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(
        &mut self,
        kind: NodeKind,
        inputs: Vec<usize>,
        value: Tensor,
        saved: Saved,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            kind,
            inputs,
            value,
            saved,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Applies `kind` to `inputs` and records the result.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, TensorError> {
        let op = kind.name();
        let expected = match kind {
            OpKind::MatMul | OpKind::AddBias | OpKind::Add | OpKind::Sub | OpKind::Mul => 2,
            OpKind::Concat => inputs.len().max(1),
            _ => 1,
        };
        if inputs.len() != expected || inputs.is_empty() {
            return Err(TensorError::Arity {
                op,
                expected,
                got: inputs.len(),
            });
        }
        let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (value, saved) = match kind {
            OpKind::MatMul => {
                let (Some((n, k)), Some((k2, m))) = (vals[0].matrix_dims(), vals[1].matrix_dims())
                else {
                    return Err(mismatch(op, &vals));
                };
                if k != k2 || vals[0].rank() != 2 || vals[1].rank() != 2 {
                    return Err(mismatch(op, &vals));
                }
                let mut out = vec![0.0; n * m];
                gemm(
                    Operand::new(vals[0].data(), n, k),
                    Operand::new(vals[1].data(), k, m),
                    &mut out,
                    0.0,
                );
                (Tensor::from_vec(&[n, m], out), Saved::None)
            }
            OpKind::AddBias => {
                let (x, b) = (vals[0], vals[1]);
                let Some((n, m)) = x.matrix_dims() else {
                    return Err(mismatch(op, &vals));
                };
                if b.len() != m || b.rows() != 1 {
                    return Err(mismatch(op, &vals));
                }
                let mut out = x.data().to_vec();
                for row in out.chunks_exact_mut(m) {
                    for (o, bv) in row.iter_mut().zip(b.data()) {
                        *o += bv;
                    }
                }
                (Tensor::from_vec(&[n, m], out), Saved::None)
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                if vals[0].shape() != vals[1].shape() {
                    return Err(mismatch(op, &vals));
                }
                let out = match kind {
                    OpKind::Add => vals[0].zip_map(vals[1], |a, b| a + b),
                    OpKind::Sub => vals[0].zip_map(vals[1], |a, b| a - b),
                    _ => vals[0].zip_map(vals[1], |a, b| a * b),
                };
                (out, Saved::None)
            }
            OpKind::Affine { scale, shift } => (vals[0].map(|v| scale * v + shift), Saved::None),
            OpKind::Sigmoid => (vals[0].map(sigmoid), Saved::Output),
            OpKind::Relu => (vals[0].map(|v| v.max(0.0)), Saved::None),
            OpKind::Softmax => {
                if vals[0].matrix_dims().is_none() {
                    return Err(mismatch(op, &vals));
                }
                (softmax_rows(vals[0]), Saved::Output)
            }
            OpKind::Concat => {
                let rows = vals[0].rows();
                if vals
                    .iter()
                    .any(|t| t.rank() != 2 || t.rows() != rows)
                {
                    return Err(mismatch(op, &vals));
                }
                let width: usize = vals.iter().map(|t| t.cols()).sum();
                let mut out = Vec::with_capacity(rows * width);
                for i in 0..rows {
                    for t in &vals {
                        out.extend_from_slice(t.row(i));
                    }
                }
                (Tensor::from_vec(&[rows, width], out), Saved::None)
            }
            OpKind::StopGradient => (vals[0].clone(), Saved::None),
            OpKind::Sum => (Tensor::scalar(vals[0].sum()), Saved::None),
            OpKind::Mean => (Tensor::scalar(vals[0].mean()), Saved::None),
        };
        let requires_grad = kind != OpKind::StopGradient
            && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(
            NodeKind::Op(kind),
            inputs.iter().map(|v| v.0).collect(),
            value,
            saved,
            requires_grad,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::AddBias, &[x, bias])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.apply(OpKind::Affine { scale, shift }, &[x])
            .expect("unary op cannot fail")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.apply(OpKind::Sigmoid, &[x]).expect("unary op cannot fail")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.apply(OpKind::Relu, &[x]).expect("unary op cannot fail")
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Softmax, &[x])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        self.apply(OpKind::Concat, parts)
    }

    pub fn stop_gradient(&mut self, x: Var) -> Var {
        self.apply(OpKind::StopGradient, &[x])
            .expect("unary op cannot fail")
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.apply(OpKind::Sum, &[x]).expect("unary op cannot fail")
    }

    pub fn mean(&mut self, x: Var) -> Var {
        self.apply(OpKind::Mean, &[x]).expect("unary op cannot fail")
    }

    /// Records a scalar loss of `prediction` against `target`.
    ///
    /// Cross-entropy treats `prediction` as logits (one row per example);
    /// the target may be class indices or a dense distribution per row.
    pub fn loss(
        &mut self,
        kind: LossKind,
        prediction: Var,
        target: &Target,
    ) -> Result<Var, TensorError> {
        match kind {
            LossKind::CrossEntropy => self.cross_entropy(prediction, target),
            LossKind::Mse => match target {
                Target::Dense(t) => self.mse(prediction, t),
                Target::Classes(_) => Err(TensorError::ShapeMismatch {
                    op: "mse",
                    shapes: vec![self.value(prediction).shape().to_vec()],
                }),
            },
        }
    }

    pub fn cross_entropy(&mut self, logits: Var, target: &Target) -> Result<Var, TensorError> {
        const OP: &str = "cross_entropy";
        let x = &self.nodes[logits.0].value;
        let Some((rows, classes)) = x.matrix_dims() else {
            return Err(mismatch(OP, &[x]));
        };
        let lse = logsumexp_rows(x);
        let probs = softmax_rows(x);
        let (loss, classes_saved, dense) = match target {
            Target::Classes(idx) => {
                if idx.len() != rows {
                    return Err(TensorError::TargetCount {
                        op: OP,
                        targets: idx.len(),
                        rows,
                    });
                }
                let mut total = 0.0;
                for (i, &c) in idx.iter().enumerate() {
                    if c >= classes {
                        return Err(TensorError::ClassOutOfRange {
                            op: OP,
                            index: c,
                            classes,
                        });
                    }
                    total += lse[i] - x.data()[i * classes + c];
                }
                (total / rows as f64, Some(idx.clone()), None)
            }
            Target::Dense(t) => {
                if t.shape() != x.shape() {
                    return Err(mismatch(OP, &[x, t]));
                }
                let mut total = 0.0;
                for i in 0..rows {
                    for j in 0..classes {
                        let tv = t.data()[i * classes + j];
                        if tv != 0.0 {
                            total += tv * (lse[i] - x.data()[i * classes + j]);
                        }
                    }
                }
                (total / rows as f64, None, Some(t.clone()))
            }
        };
        let requires_grad = self.nodes[logits.0].requires_grad;
        let saved = match dense {
            Some(target) => Saved::SoftTarget { probs, target },
            None => Saved::Probs(probs),
        };
        Ok(self.push(
            NodeKind::CrossEntropy(classes_saved),
            vec![logits.0],
            Tensor::scalar(loss),
            saved,
            requires_grad,
        ))
    }

    pub fn mse(&mut self, prediction: Var, target: &Tensor) -> Result<Var, TensorError> {
        let p = &self.nodes[prediction.0].value;
        if p.shape() != target.shape() {
            return Err(mismatch("mse", &[p, target]));
        }
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        let requires_grad = self.nodes[prediction.0].requires_grad;
        Ok(self.push(
            NodeKind::Mse,
            vec![prediction.0],
            Tensor::scalar(loss),
            Saved::Dense(target.clone()),
            requires_grad,
        ))
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::ones(loss_value.shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let contributions = self.input_grads(node, &upstream);
            grads[idx] = Some(upstream);
            for (input, g) in node.inputs.iter().zip(contributions) {
                let Some(g) = g else { continue };
                match &mut grads[*input] {
                    Some(acc) => acc.accumulate(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, input: usize) -> bool {
        self.nodes[input].requires_grad
    }

    fn input_grads(&self, node: &Node, up: &Tensor) -> Vec<Option<Tensor>> {
        let ins = &node.inputs;
        let val = |i: usize| &self.nodes[ins[i]].value;
        match &node.kind {
            NodeKind::Leaf => vec![],
            NodeKind::Op(kind) => match kind {
                OpKind::MatMul => {
                    let (a, b) = (val(0), val(1));
                    let (n, k) = (a.rows(), a.cols());
                    let m = b.cols();
                    let da = self.wants(ins[0]).then(|| {
                        let mut out = vec![0.0; n * k];
                        gemm(
                            Operand::new(up.data(), n, m),
                            Operand::new(b.data(), k, m).t(),
                            &mut out,
                            0.0,
                        );
                        Tensor::from_vec(a.shape(), out)
                    });
                    let db = self.wants(ins[1]).then(|| {
                        let mut out = vec![0.0; k * m];
                        gemm(
                            Operand::new(a.data(), n, k).t(),
                            Operand::new(up.data(), n, m),
                            &mut out,
                            0.0,
                        );
                        Tensor::from_vec(b.shape(), out)
                    });
                    vec![da, db]
                }
                OpKind::AddBias => {
                    let b = val(1);
                    let db = self.wants(ins[1]).then(|| {
                        let m = b.len();
                        let mut out = vec![0.0; m];
                        for row in up.data().chunks_exact(m) {
                            for (o, g) in out.iter_mut().zip(row) {
                                *o += g;
                            }
                        }
                        Tensor::from_vec(b.shape(), out)
                    });
                    vec![self.wants(ins[0]).then(|| up.clone()), db]
                }
                OpKind::Add => vec![
                    self.wants(ins[0]).then(|| up.clone()),
                    self.wants(ins[1]).then(|| up.clone()),
                ],
                OpKind::Sub => vec![
                    self.wants(ins[0]).then(|| up.clone()),
                    self.wants(ins[1]).then(|| up.map(|g| -g)),
                ],
                OpKind::Mul => vec![
                    self.wants(ins[0]).then(|| up.zip_map(val(1), |g, b| g * b)),
                    self.wants(ins[1]).then(|| up.zip_map(val(0), |g, a| g * a)),
                ],
                OpKind::Affine { scale, .. } => vec![Some(up.map(|g| g * scale))],
                OpKind::Sigmoid => {
                    vec![Some(up.zip_map(&node.value, |g, s| g * s * (1.0 - s)))]
                }
                OpKind::Relu => {
                    vec![Some(up.zip_map(val(0), |g, x| if x > 0.0 { g } else { 0.0 }))]
                }
                OpKind::Softmax => {
                    let s = &node.value;
                    let cols = s.cols();
                    let mut out = Vec::with_capacity(s.len());
                    for (srow, grow) in s.data().chunks_exact(cols).zip(up.data().chunks_exact(cols))
                    {
                        let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        out.extend(srow.iter().zip(grow).map(|(sv, gv)| sv * (gv - dot)));
                    }
                    vec![Some(Tensor::from_vec(s.shape(), out))]
                }
                OpKind::Concat => {
                    let rows = up.rows();
                    let width = up.cols();
                    let mut offset = 0;
                    ins.iter()
                        .map(|&i| {
                            let cols = self.nodes[i].value.cols();
                            let g = self.wants(i).then(|| {
                                let mut out = Vec::with_capacity(rows * cols);
                                for r in 0..rows {
                                    let start = r * width + offset;
                                    out.extend_from_slice(&up.data()[start..start + cols]);
                                }
                                Tensor::from_vec(&[rows, cols], out)
                            });
                            offset += cols;
                            g
                        })
                        .collect()
                }
                OpKind::StopGradient => vec![None],
                OpKind::Sum => vec![Some(Tensor::full(val(0).shape(), up.item()))],
                OpKind::Mean => {
                    let x = val(0);
                    vec![Some(Tensor::full(x.shape(), up.item() / x.len() as f64))]
                }
            },
            NodeKind::CrossEntropy(classes) => {
                let x = val(0);
                let (rows, cols) = (x.rows(), x.cols());
                let scale = up.item() / rows as f64;
                let grad = match (classes, &node.saved) {
                    (Some(idx), Saved::Probs(p)) => {
                        let mut g = p.data().to_vec();
                        for (i, &c) in idx.iter().enumerate() {
                            g[i * cols + c] -= 1.0;
                        }
                        g.iter_mut().for_each(|v| *v *= scale);
                        g
                    }
                    (None, Saved::SoftTarget { probs, target }) => {
                        let (p, t) = (probs.data(), target.data());
                        let mut g = Vec::with_capacity(rows * cols);
                        for i in 0..rows {
                            let trow = &t[i * cols..(i + 1) * cols];
                            let mass: f64 = trow.iter().sum();
                            for j in 0..cols {
                                g.push(scale * (p[i * cols + j] * mass - trow[j]));
                            }
                        }
                        g
                    }
                    _ => unreachable!("cross-entropy node saved state"),
                };
                vec![Some(Tensor::from_vec(x.shape(), grad))]
            }
            NodeKind::Mse => {
                let p = val(0);
                let Saved::Dense(t) = &node.saved else {
                    unreachable!("mse node saved state")
                };
                let scale = 2.0 * up.item() / p.len() as f64;
                vec![Some(p.zip_map(t, |a, b| scale * (a - b)))]
            }
        }
    }
}
