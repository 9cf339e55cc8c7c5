//! Uniform differentiable-model contract so diagnostics and training treat
//! the QNN and the classical controls identically.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::nets::{CnnModel, MlpModel};
use crate::qsim::{QnnConfig, QnnModel};

/// Input-space family; decides how `[0,1]` pixels are normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Classical,
    Quantum,
}

/// Index ranges of the logit blocks a model exposes.
///
/// The auxiliary setup partitions 16 logits into public task `[0,10)` and
/// auxiliary `[10,16)`. The task setup partitions 20 logits into public
/// `[0,10)` and hidden-task `[10,20)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogitLayout {
    pub mnist: Range<usize>,
    pub aux: Option<Range<usize>>,
    pub fashion: Option<Range<usize>>,
}

impl LogitLayout {
    pub fn auxiliary() -> Self {
        LogitLayout {
            mnist: 0..10,
            aux: Some(10..16),
            fashion: None,
        }
    }

    pub fn task() -> Self {
        LogitLayout {
            mnist: 0..10,
            aux: None,
            fashion: Some(10..20),
        }
    }

    /// Single-block layout for toy models.
    pub fn flat(len: usize) -> Self {
        LogitLayout {
            mnist: 0..len,
            aux: None,
            fashion: None,
        }
    }

    pub fn logit_count(&self) -> usize {
        [&Some(self.mnist.clone()), &self.aux, &self.fashion]
            .iter()
            .filter_map(|r| r.as_ref().map(|r| r.end))
            .max()
            .unwrap()
    }
}

/// A differentiable map from (input, flat parameter vector) to logits.
///
/// `vjp` and `jvp` are exact Jacobian contractions and satisfy
/// `⟨u, jvp(v)⟩ = ⟨vjp(u), v⟩`. Implementations are pure functions of their
/// arguments; shape mismatches are programmer errors and panic.
pub trait Model: Send + Sync {
    fn param_count(&self) -> usize;
    fn logit_count(&self) -> usize;
    fn layout(&self) -> LogitLayout;
    /// Logits at (input, params).
    fn forward(&self, input: &[f64], params: &[f64]) -> Vec<f64>;
    /// `Jᵀ·cotangent` where `J = ∂logits/∂params`.
    fn vjp(&self, input: &[f64], params: &[f64], cotangent: &[f64]) -> Vec<f64>;
    /// `J·tangent`.
    fn jvp(&self, input: &[f64], params: &[f64], tangent: &[f64]) -> Vec<f64>;
    /// Deterministic parameter initialization for a run seed.
    fn init_params(&self, seed: u64) -> Vec<f64>;
    /// Freezes the parameter point so repeated evaluations can share any
    /// per-point precomputation. Results are bit-identical to the plain
    /// `forward`/`vjp`/`jvp` methods.
    fn prepare<'a>(&'a self, params: &'a [f64]) -> Box<dyn Prepared + 'a>;
}

/// A model frozen at one parameter point, for batched evaluation.
pub trait Prepared: Sync {
    fn forward(&self, input: &[f64]) -> Vec<f64>;
    fn vjp(&self, input: &[f64], cotangent: &[f64]) -> Vec<f64>;
    fn jvp(&self, input: &[f64], tangent: &[f64]) -> Vec<f64>;

    /// Loss value and parameter gradient for one input, where `loss` maps
    /// logits to `(value, d value / d logits)`.
    fn loss_grad(
        &self,
        input: &[f64],
        loss: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    ) -> (f64, Vec<f64>) {
        let logits = self.forward(input);
        let (value, cotangent) = loss(&logits);
        (value, self.vjp(input, &cotangent))
    }

    /// One input's contribution `Jᵀ Mᵀ M J · v` to a Gauss-Newton product,
    /// where `M` keeps only the logits inside `block`.
    fn normal_term(&self, input: &[f64], v: &[f64], block: &Range<usize>) -> Vec<f64> {
        let d = self.jvp(input, v);
        let mut cotangent = vec![0.0; d.len()];
        for i in block.clone() {
            cotangent[i] = d[i];
        }
        self.vjp(input, &cotangent)
    }
}

/// Default `Prepared` for models with no per-point precomputation worth
/// caching: delegates straight back to the model.
pub(crate) struct RefPrepared<'a, M: Model + ?Sized> {
    pub model: &'a M,
    pub params: &'a [f64],
}

impl<M: Model + ?Sized> Prepared for RefPrepared<'_, M> {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.model.forward(input, self.params)
    }

    fn vjp(&self, input: &[f64], cotangent: &[f64]) -> Vec<f64> {
        self.model.vjp(input, self.params, cotangent)
    }

    fn jvp(&self, input: &[f64], tangent: &[f64]) -> Vec<f64> {
        self.model.jvp(input, self.params, tangent)
    }
}

/// Serializable model description; the single source of truth a checkpoint
/// carries to rebuild its model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelDesc {
    Mlp { layers: Vec<usize> },
    Cnn { filters: usize },
    Qnn { config: QnnConfig, init_scale: f64 },
}

impl ModelDesc {
    pub fn build(&self) -> Box<dyn Model> {
        match self {
            ModelDesc::Mlp { layers } => Box::new(MlpModel::new(layers.clone())),
            ModelDesc::Cnn { filters } => Box::new(CnnModel::new(*filters)),
            ModelDesc::Qnn { config, init_scale } => {
                Box::new(QnnModel::new(config.clone(), *init_scale))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelDesc::Mlp { layers } => layers
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum::<usize>(),
            ModelDesc::Cnn { filters } => filters * 50 + (16 * filters * 20 + 20),
            ModelDesc::Qnn { config, .. } => config.param_count(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelDesc::Mlp { layers } => {
                let parts: Vec<String> = layers.iter().map(|x| x.to_string()).collect();
                format!("mlp_{}", parts.join("-"))
            }
            ModelDesc::Cnn { filters } => format!("cnn_f{filters}"),
            ModelDesc::Qnn { config, .. } => format!(
                "qnn_d{}_k{}",
                config.depth, config.measured_qubits
            ),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            ModelDesc::Mlp { .. } | ModelDesc::Cnn { .. } => ModelFamily::Classical,
            ModelDesc::Qnn { .. } => ModelFamily::Quantum,
        }
    }

    /// Convenience for QNN descriptions with the default angle init.
    pub fn qnn(config: QnnConfig) -> Self {
        ModelDesc::Qnn {
            config,
            init_scale: crate::qsim::QnnModel::DEFAULT_INIT_SCALE,
        }
    }
}

/// Toy model whose input *is* its Jacobian: the input vector is a flattened
/// row-major `rows × params` matrix `M` and `logits = M · params`.
///
/// Useful for validating the ridge/chi diagnostics against dense linear
/// algebra, where the Jacobian must be known exactly.
pub struct LinearModel {
    pub rows: usize,
    pub params: usize,
}

impl LinearModel {
    pub fn new(rows: usize, params: usize) -> Self {
        LinearModel { rows, params }
    }
}

impl Model for LinearModel {
    fn param_count(&self) -> usize {
        self.params
    }

    fn logit_count(&self) -> usize {
        self.rows
    }

    fn layout(&self) -> LogitLayout {
        LogitLayout::flat(self.rows)
    }

    fn forward(&self, input: &[f64], params: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.rows * self.params);
        assert_eq!(params.len(), self.params);
        (0..self.rows)
            .map(|r| crate::linalg::dot(&input[r * self.params..(r + 1) * self.params], params))
            .collect()
    }

    fn vjp(&self, input: &[f64], _params: &[f64], cotangent: &[f64]) -> Vec<f64> {
        assert_eq!(cotangent.len(), self.rows);
        let mut out = vec![0.0; self.params];
        for r in 0..self.rows {
            crate::linalg::axpy(
                cotangent[r],
                &input[r * self.params..(r + 1) * self.params],
                &mut out,
            );
        }
        out
    }

    fn jvp(&self, input: &[f64], _params: &[f64], tangent: &[f64]) -> Vec<f64> {
        assert_eq!(tangent.len(), self.params);
        (0..self.rows)
            .map(|r| crate::linalg::dot(&input[r * self.params..(r + 1) * self.params], tangent))
            .collect()
    }

    fn prepare<'a>(&'a self, params: &'a [f64]) -> Box<dyn Prepared + 'a> {
        Box::new(RefPrepared { model: self, params })
    }

    fn init_params(&self, _seed: u64) -> Vec<f64> {
        vec![0.0; self.params]
    }
}
