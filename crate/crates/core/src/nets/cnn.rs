//! Minimal convolutional control model.
//!
//! One 7×7 stride-7 valid convolution over the 28×28 input grid (so a 4×4
//! activation map per filter), ReLU, then a dense layer to 20 logits.

use super::{fan_in_uniform, relu, relu_grad};
use crate::model::{LogitLayout, Model};
use crate::rng;

const SIDE: usize = 28;
const KERNEL: usize = 7;
const GRID: usize = 4;
const CELLS: usize = GRID * GRID;
const OUTPUTS: usize = 20;

/// Parameter layout: all kernels (filter-major, each 7×7 row-major), conv
/// biases, dense weights (row-major 20 × 16f), dense biases.
pub struct CnnModel {
    filters: usize,
}

impl CnnModel {
    pub fn new(filters: usize) -> Self {
        assert!(filters > 0, "cnn needs at least one filter");
        CnnModel { filters }
    }

    fn features(&self) -> usize {
        self.filters * CELLS
    }

    fn dense_offset(&self) -> usize {
        self.filters * (KERNEL * KERNEL + 1)
    }

    /// Pre-activation feature map (conv + bias, before ReLU).
    fn conv_pre(&self, input: &[f64], params: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), SIDE * SIDE, "input size mismatch");
        assert_eq!(params.len(), self.param_count(), "param size mismatch");
        let kernels = &params[..self.filters * KERNEL * KERNEL];
        let biases = &params[self.filters * KERNEL * KERNEL..self.dense_offset()];
        let mut pre = vec![0.0; self.features()];
        for k in 0..self.filters {
            let kern = &kernels[k * KERNEL * KERNEL..(k + 1) * KERNEL * KERNEL];
            for gr in 0..GRID {
                for gc in 0..GRID {
                    let mut s = biases[k];
                    for kr in 0..KERNEL {
                        let row = &input[(gr * KERNEL + kr) * SIDE + gc * KERNEL..];
                        for kc in 0..KERNEL {
                            s += kern[kr * KERNEL + kc] * row[kc];
                        }
                    }
                    pre[k * CELLS + gr * GRID + gc] = s;
                }
            }
        }
        pre
    }
}

impl Model for CnnModel {
    fn param_count(&self) -> usize {
        self.filters * (KERNEL * KERNEL + 1) + self.features() * OUTPUTS + OUTPUTS
    }

    fn logit_count(&self) -> usize {
        OUTPUTS
    }

    fn layout(&self) -> LogitLayout {
        LogitLayout::task()
    }

    fn forward(&self, input: &[f64], params: &[f64]) -> Vec<f64> {
        let feat: Vec<f64> = self.conv_pre(input, params).iter().map(|&z| relu(z)).collect();
        let nf = self.features();
        let w = &params[self.dense_offset()..self.dense_offset() + nf * OUTPUTS];
        let b = &params[self.dense_offset() + nf * OUTPUTS..];
        (0..OUTPUTS)
            .map(|o| {
                w[o * nf..(o + 1) * nf]
                    .iter()
                    .zip(&feat)
                    .map(|(wi, fi)| wi * fi)
                    .sum::<f64>()
                    + b[o]
            })
            .collect()
    }

    fn vjp(&self, input: &[f64], params: &[f64], cotangent: &[f64]) -> Vec<f64> {
        assert_eq!(cotangent.len(), OUTPUTS, "cotangent size mismatch");
        let pre = self.conv_pre(input, params);
        let feat: Vec<f64> = pre.iter().map(|&z| relu(z)).collect();
        let nf = self.features();
        let dense = self.dense_offset();
        let w = &params[dense..dense + nf * OUTPUTS];

        let mut grad = vec![0.0; params.len()];
        let mut dfeat = vec![0.0; nf];
        for o in 0..OUTPUTS {
            let d = cotangent[o];
            grad[dense + nf * OUTPUTS + o] = d;
            for i in 0..nf {
                grad[dense + o * nf + i] = d * feat[i];
                dfeat[i] += w[o * nf + i] * d;
            }
        }
        for (df, z) in dfeat.iter_mut().zip(&pre) {
            *df *= relu_grad(*z);
        }
        for k in 0..self.filters {
            let (kg, rest) = grad.split_at_mut(self.filters * KERNEL * KERNEL);
            let kg = &mut kg[k * KERNEL * KERNEL..(k + 1) * KERNEL * KERNEL];
            for gr in 0..GRID {
                for gc in 0..GRID {
                    let d = dfeat[k * CELLS + gr * GRID + gc];
                    if d == 0.0 {
                        continue;
                    }
                    rest[k] += d;
                    for kr in 0..KERNEL {
                        let row = &input[(gr * KERNEL + kr) * SIDE + gc * KERNEL..];
                        for kc in 0..KERNEL {
                            kg[kr * KERNEL + kc] += d * row[kc];
                        }
                    }
                }
            }
        }
        grad
    }

    fn jvp(&self, input: &[f64], params: &[f64], tangent: &[f64]) -> Vec<f64> {
        assert_eq!(tangent.len(), self.param_count(), "tangent size mismatch");
        let pre = self.conv_pre(input, params);
        let dpre = {
            // Tangent pass through the conv reuses the same arithmetic with
            // tangent kernels/biases; input is constant so no chain term.
            let mut fwd = vec![0.0; self.param_count()];
            fwd[..self.dense_offset()].copy_from_slice(&tangent[..self.dense_offset()]);
            self.conv_pre(input, &fwd)
        };
        let nf = self.features();
        let dense = self.dense_offset();
        let w = &params[dense..dense + nf * OUTPUTS];
        let dw = &tangent[dense..dense + nf * OUTPUTS];
        let db = &tangent[dense + nf * OUTPUTS..];

        let feat: Vec<f64> = pre.iter().map(|&z| relu(z)).collect();
        let dfeat: Vec<f64> = dpre
            .iter()
            .zip(&pre)
            .map(|(dz, z)| dz * relu_grad(*z))
            .collect();
        (0..OUTPUTS)
            .map(|o| {
                let mut s = db[o];
                for i in 0..nf {
                    s += dw[o * nf + i] * feat[i] + w[o * nf + i] * dfeat[i];
                }
                s
            })
            .collect()
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, "init", 0);
        let mut params = Vec::with_capacity(self.param_count());
        fan_in_uniform(&mut rng, KERNEL * KERNEL, self.dense_offset(), &mut params);
        fan_in_uniform(
            &mut rng,
            self.features(),
            self.features() * OUTPUTS + OUTPUTS,
            &mut params,
        );
        params
    }

    fn prepare<'a>(&'a self, params: &'a [f64]) -> Box<dyn crate::model::Prepared + 'a> {
        Box::new(crate::model::RefPrepared { model: self, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, "cnn-test", 0);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn param_counts_match_reference() {
        assert_eq!(CnnModel::new(1).param_count(), 390);
        assert_eq!(CnnModel::new(2).param_count(), 760);
    }

    #[test]
    fn constant_input_zero_weights_gives_bias_activations() {
        let m = CnnModel::new(2);
        let mut params = vec![0.0; m.param_count()];
        params[2 * 49] = 1.5; // filter 0 conv bias
        params[2 * 49 + 1] = -0.5; // filter 1 conv bias (ReLU kills it)
        // Dense row 0 sums every feature.
        for i in 0..m.features() {
            params[m.dense_offset() + i] = 1.0;
        }
        let logits = m.forward(&vec![0.3; 784], &params);
        assert!((logits[0] - 16.0 * 1.5).abs() < 1e-12);
        assert!(logits[1..].iter().all(|&l| l == 0.0));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let m = CnnModel::new(1);
        let params = m.init_params(2);
        let input = random_vec(784, 3);
        let cot = random_vec(20, 4);
        let grad = m.vjp(&input, &params, &cot);

        let scalar = |p: &[f64]| crate::linalg::dot(&m.forward(&input, p), &cot);
        let h = 1e-6;
        let mut shifted = params.clone();
        let mut fd = vec![0.0; params.len()];
        for k in 0..params.len() {
            shifted[k] = params[k] + h;
            let up = scalar(&shifted);
            shifted[k] = params[k] - h;
            let down = scalar(&shifted);
            shifted[k] = params[k];
            fd[k] = (up - down) / (2.0 * h);
        }
        let rel = crate::linalg::norm2(&crate::linalg::sub(&fd, &grad))
            / crate::linalg::norm2(&grad);
        assert!(rel < 1e-6, "relative FD error {rel}");
    }

    #[test]
    fn adjoint_identity_holds() {
        let m = CnnModel::new(2);
        let params = m.init_params(5);
        let input = random_vec(784, 6);
        for trial in 0..5u64 {
            let u = random_vec(20, 100 + trial);
            let v = random_vec(m.param_count(), 200 + trial);
            let lhs = crate::linalg::dot(&u, &m.jvp(&input, &params, &v));
            let rhs = crate::linalg::dot(&m.vjp(&input, &params, &u), &v);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn zero_tangent_and_cotangent_give_zero() {
        let m = CnnModel::new(1);
        let params = m.init_params(7);
        let input = random_vec(784, 8);
        assert!(m
            .jvp(&input, &params, &vec![0.0; m.param_count()])
            .iter()
            .all(|&x| x == 0.0));
        assert!(m
            .vjp(&input, &params, &vec![0.0; 20])
            .iter()
            .all(|&x| x == 0.0));
    }
}
