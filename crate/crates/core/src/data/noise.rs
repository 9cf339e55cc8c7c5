//! Public-channel noise inputs.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{DataError, NoiseKind, NoiseSpec};
use crate::rng;

/// Generate `batches × batch_size` noise inputs in model input space:
/// `uniform_784` draws iid from `[−1, 1]^784`, `gaussian_state_1024` draws
/// iid standard normals in R^1024 and L2-normalizes each vector.
pub fn make_noise(spec: &NoiseSpec, seed: u64) -> Result<Vec<Vec<f64>>, DataError> {
    spec.validate()?;
    let mut r = rng::stream(seed, "noise", 0);
    let out = (0..spec.total())
        .map(|_| match spec.kind {
            NoiseKind::Uniform784 => (0..784).map(|_| r.random_range(-1.0..1.0)).collect(),
            NoiseKind::GaussianState1024 => {
                let v: Vec<f64> = (0..1024).map(|_| r.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect();
    Ok(out)
}
