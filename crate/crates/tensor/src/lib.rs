//! Small dense-tensor engine: row-major `f64` tensors, a reverse-mode tape,
//! Glorot initialization and Adam. Sized for few-layer MLPs on a CPU.

mod adam;
mod error;
mod init;
mod linalg;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::TensorError;
pub use init::glorot_uniform;
pub use params::ParamSet;
pub use tape::{softmax_rows, Gradients, LossKind, OpKind, Tape, Target, Var, SIGMOID_EPS};
pub use tensor::Tensor;
