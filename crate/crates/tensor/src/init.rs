use rand::Rng;

use crate::tensor::Tensor;

/// Glorot/Xavier uniform initialization for a `fan_in × fan_out` weight matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], data)
}
