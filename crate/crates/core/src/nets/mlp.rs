//! Fully connected networks with ReLU hidden layers and linear outputs.

use super::{fan_in_uniform, relu, relu_grad};
use crate::model::{LogitLayout, Model};
use crate::rng;

/// MLP described by its layer sizes, e.g. `[784, 32, 16]`.
///
/// Parameter layout per layer transition (in → out): row-major weight matrix
/// `W[out][in]` followed by the bias vector `b[out]`.
pub struct MlpModel {
    layer_sizes: Vec<usize>,
}

impl MlpModel {
    pub fn new(layer_sizes: Vec<usize>) -> Self {
        assert!(
            layer_sizes.len() >= 2 && layer_sizes.iter().all(|&s| s > 0),
            "mlp needs at least input and output sizes"
        );
        MlpModel { layer_sizes }
    }

    fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_sizes.windows(2).map(|w| (w[0], w[1]))
    }

    /// Pre-activations and post-activations for every layer; the last
    /// post-activation is the logits (no output nonlinearity).
    fn run_forward(&self, input: &[f64], params: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        assert_eq!(input.len(), self.layer_sizes[0], "input size mismatch");
        assert_eq!(params.len(), self.param_count(), "param size mismatch");
        let last = self.layer_sizes.len() - 2;
        let mut pre = Vec::new();
        let mut post = Vec::new();
        let mut x = input.to_vec();
        let mut off = 0;
        for (t, (n_in, n_out)) in self.transitions().enumerate() {
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[o]
                })
                .collect();
            let a: Vec<f64> = if t == last {
                z.clone()
            } else {
                z.iter().map(|&v| relu(v)).collect()
            };
            pre.push(z);
            post.push(a.clone());
            x = a;
        }
        (pre, post)
    }
}

impl Model for MlpModel {
    fn param_count(&self) -> usize {
        self.transitions().map(|(i, o)| i * o + o).sum()
    }

    fn logit_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn layout(&self) -> LogitLayout {
        match self.logit_count() {
            16 => LogitLayout::auxiliary(),
            20 => LogitLayout::task(),
            n => LogitLayout::flat(n),
        }
    }

    fn forward(&self, input: &[f64], params: &[f64]) -> Vec<f64> {
        self.run_forward(input, params).1.pop().unwrap()
    }

    fn vjp(&self, input: &[f64], params: &[f64], cotangent: &[f64]) -> Vec<f64> {
        assert_eq!(cotangent.len(), self.logit_count(), "cotangent size mismatch");
        let (pre, post) = self.run_forward(input, params);
        let transitions: Vec<(usize, usize)> = self.transitions().collect();
        let offsets: Vec<usize> = transitions
            .iter()
            .scan(0, |acc, (i, o)| {
                let here = *acc;
                *acc += i * o + o;
                Some(here)
            })
            .collect();

        let mut grad = vec![0.0; params.len()];
        let mut delta = cotangent.to_vec();
        for t in (0..transitions.len()).rev() {
            let (n_in, n_out) = transitions[t];
            let off = offsets[t];
            let x = if t == 0 { input } else { &post[t - 1] };
            // delta is already in pre-activation space for the output layer;
            // hidden layers gate it through the ReLU derivative.
            if t != transitions.len() - 1 {
                for (d, z) in delta.iter_mut().zip(&pre[t]) {
                    *d *= relu_grad(*z);
                }
            }
            let (wg, bg) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                bg[o] = d;
                for (g, xi) in wg[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g = d * xi;
                }
            }
            if t > 0 {
                let w = &params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum())
                    .collect();
            }
        }
        grad
    }

    fn jvp(&self, input: &[f64], params: &[f64], tangent: &[f64]) -> Vec<f64> {
        assert_eq!(tangent.len(), self.param_count(), "tangent size mismatch");
        assert_eq!(input.len(), self.layer_sizes[0], "input size mismatch");
        let last = self.layer_sizes.len() - 2;
        let mut x = input.to_vec();
        let mut dx = vec![0.0; x.len()];
        let mut off = 0;
        for (t, (n_in, n_out)) in self.transitions().enumerate() {
            let w = &params[off..off + n_in * n_out];
            let dw = &tangent[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let db = &tangent[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut z = vec![0.0; n_out];
            let mut dz = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let drow = &dw[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                let mut ds = db[o];
                for i in 0..n_in {
                    s += row[i] * x[i];
                    ds += drow[i] * x[i] + row[i] * dx[i];
                }
                z[o] = s;
                dz[o] = ds;
            }
            if t == last {
                x = z;
                dx = dz;
            } else {
                dx = dz
                    .iter()
                    .zip(&z)
                    .map(|(d, zv)| d * relu_grad(*zv))
                    .collect();
                x = z.into_iter().map(relu).collect();
            }
        }
        dx
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, "init", 0);
        let mut params = Vec::with_capacity(self.param_count());
        for (n_in, n_out) in self.transitions() {
            fan_in_uniform(&mut rng, n_in, n_in * n_out + n_out, &mut params);
        }
        params
    }

    fn prepare<'a>(&'a self, params: &'a [f64]) -> Box<dyn crate::model::Prepared + 'a> {
        Box::new(crate::model::RefPrepared { model: self, params })
    }
}
