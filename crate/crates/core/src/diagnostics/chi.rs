//! Cross-task susceptibility: how much of a hidden-objective drift the
//! public channel can carry.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::Model;
use crate::training::Examples;

use super::metrics::{task_gain_gradient, HiddenDirection};
use super::ridge::{public_reconstruction, PublicChannelSpec};
use super::DiagError;

/// Everything measured about one ridge reconstruction. `chi` and
/// `norm_visibility` are filled in once a hidden direction and drift are
/// applied to the raw reconstruction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChiReport {
    pub delta_theta_pub: Vec<f64>,
    pub chi: Option<f64>,
    pub norm_visibility: Option<f64>,
    pub cg_iters: usize,
    pub cg_residual: f64,
    pub cg_converged: bool,
    pub lambda: f64,
    pub probe_size: usize,
}

/// Ridge and CG settings for reconstructions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeOptions {
    pub lambda: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            lambda: 1e-6,
            cg_tol: 1e-8,
            cg_max_iters: 500,
        }
    }
}

/// χ = ⟨g, Δθ_pub⟩ / ⟨g, Δθ⟩. Undefined when the hidden direction is
/// (numerically) orthogonal to the drift.
pub fn susceptibility_chi(
    report: &ChiReport,
    g: &HiddenDirection,
    drift: &[f64],
) -> Result<f64, DiagError> {
    let denom = linalg::dot(&g.g, drift);
    let threshold = 1e-12 * linalg::norm2(&g.g) * linalg::norm2(drift);
    if denom.abs() <= threshold {
        return Err(DiagError::UndefinedChi {
            overlap: denom,
            threshold,
        });
    }
    Ok(linalg::dot(&g.g, &report.delta_theta_pub) / denom)
}

/// ‖Δθ_pub‖ / ‖Δθ‖.
pub fn norm_visibility(report: &ChiReport, drift: &[f64]) -> Result<f64, DiagError> {
    let n = linalg::norm2(drift);
    if n == 0.0 {
        return Err(DiagError::ZeroDrift);
    }
    Ok(linalg::norm2(&report.delta_theta_pub) / n)
}

/// Full χ pipeline for one channel: reconstruct the drift through the
/// public block, then score it against the hidden direction.
pub fn chi_channel(
    model: &dyn Model,
    params: &[f64],
    block: &Range<usize>,
    public_inputs: &[Vec<f64>],
    drift: &[f64],
    g: &HiddenDirection,
    opts: &RidgeOptions,
) -> Result<ChiReport, DiagError> {
    let spec = PublicChannelSpec {
        model,
        params,
        public_inputs,
        block: block.clone(),
    };
    let mut report =
        public_reconstruction(&spec, drift, opts.lambda, opts.cg_tol, opts.cg_max_iters)?;
    report.chi = Some(susceptibility_chi(&report, g, drift)?);
    report.norm_visibility = Some(norm_visibility(&report, drift)?);
    Ok(report)
}

/// Auxiliary-channel analogue: J over the auxiliary logits on noise inputs
/// at θ_0, drift = θ_T − θ_0, hidden direction = public-task gain gradient
/// at θ_0.
pub fn chi_aux(
    model: &dyn Model,
    theta0: &[f64],
    theta_teacher: &[f64],
    noise_inputs: &[Vec<f64>],
    mnist_train: &Examples,
    opts: &RidgeOptions,
) -> Result<ChiReport, DiagError> {
    let layout = model.layout();
    let aux_block = layout.aux.ok_or(DiagError::MissingBlock("aux"))?;
    let drift = linalg::sub(theta_teacher, theta0);
    let g = task_gain_gradient(model, theta0, mnist_train, &layout.mnist)?;
    chi_channel(model, theta0, &aux_block, noise_inputs, &drift, &g, opts)
}
