//! Classical control models: small MLPs and a single-conv "MicroCNN".
//!
//! Both implement the same [`crate::model::Model`] contract as the quantum
//! model, so training stages and diagnostics never branch on the family.

mod cnn;
mod mlp;

pub use cnn::CnnModel;
pub use mlp::MlpModel;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Subgradient of ReLU, fixed to 0 at the kink for reproducibility.
pub(crate) fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Uniform ±1/√fan_in draws, the scaling used for every weight and bias.
pub(crate) fn fan_in_uniform(rng: &mut ChaCha8Rng, fan_in: usize, count: usize, out: &mut Vec<f64>) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for _ in 0..count {
        out.push(rng.random_range(-bound..bound));
    }
}
