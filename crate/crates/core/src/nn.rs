//! Fully connected networks on top of the tape.

use forgetnet_tensor::{glorot_uniform, ParamSet, Tape, Tensor, TensorError, Var};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// Layer widths and activations of a dense network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input: usize,
    /// Output width of each layer; the last entry is the network output.
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    /// `layers` dense layers: `layers - 1` hidden layers of `hidden_width`
    /// followed by an output layer of `output_width`.
    pub fn stack(
        input: usize,
        hidden_width: usize,
        layers: usize,
        output_width: usize,
        output: Activation,
    ) -> Self {
        let layers = layers.max(1);
        let mut widths = vec![hidden_width; layers - 1];
        widths.push(output_width);
        Self {
            input,
            widths,
            hidden: Activation::Relu,
            output,
        }
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("mlp has at least one layer")
    }

    pub fn layers(&self) -> usize {
        self.widths.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamSet,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let mut fan_in = spec.input;
        for (i, &w) in spec.widths.iter().enumerate() {
            params.push(format!("layer{i}.weight"), glorot_uniform(fan_in, w, rng));
            params.push(format!("layer{i}.bias"), Tensor::zeros(&[w]));
            fan_in = w;
        }
        Self { spec, params }
    }

    /// Rebuilds a network from stored parameters, checking every block shape.
    pub fn from_params(spec: MlpSpec, params: ParamSet) -> Result<Self, TensorError> {
        let mut fan_in = spec.input;
        let mut expected = Vec::new();
        for &w in &spec.widths {
            expected.push(vec![fan_in, w]);
            expected.push(vec![w]);
            fan_in = w;
        }
        let actual: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
        if actual != expected {
            return Err(TensorError::ShapeMismatch {
                op: "mlp parameters",
                shapes: actual,
            });
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Puts the parameters on `tape` (trainable or frozen) and returns their handles.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    /// Records the forward pass using previously bound parameter handles.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, TensorError> {
        let got = tape.value(x).cols();
        if got != self.spec.input {
            return Err(TensorError::ShapeMismatch {
                op: "mlp input",
                shapes: vec![tape.value(x).shape().to_vec(), vec![self.spec.input]],
            });
        }
        let last = self.spec.layers() - 1;
        let mut h = x;
        for (i, pair) in bound.chunks_exact(2).enumerate() {
            h = tape.matmul(h, pair[0])?;
            h = tape.add_bias(h, pair[1])?;
            let act = if i == last {
                self.spec.output
            } else {
                self.spec.hidden
            };
            h = act.apply(tape, h);
        }
        Ok(h)
    }

    /// Tape-free inference.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stack_shapes_and_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(MlpSpec::stack(5, 8, 2, 3, Activation::Identity), &mut rng);
        let names: Vec<&str> = mlp.params().names().iter().map(String::as_str).collect();
        assert_eq!(
            names,
            ["layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias"]
        );
        assert_eq!(mlp.params().get(2).shape(), &[8, 3]);
        let out = mlp.predict(&Tensor::zeros(&[4, 5])).unwrap();
        assert_eq!(out.shape(), &[4, 3]);
        // zero input and zero biases
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(MlpSpec::stack(5, 8, 1, 3, Activation::Identity), &mut rng);
        assert!(mlp.predict(&Tensor::zeros(&[2, 4])).is_err());
    }

    #[test]
    fn from_params_checks_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = MlpSpec::stack(5, 8, 2, 3, Activation::Identity);
        let mlp = Mlp::new(spec.clone(), &mut rng);
        assert!(Mlp::from_params(spec.clone(), mlp.params().clone()).is_ok());
        let other = MlpSpec::stack(5, 7, 2, 3, Activation::Identity);
        assert!(Mlp::from_params(other, mlp.params().clone()).is_err());
    }
}
