//! Classification metrics, drift norms, and hidden-direction gradients.

use std::ops::Range;

use crate::data::PoisonSpec;
use crate::linalg;
use crate::model::Model;
use crate::training::{ce_loss_block, forward_all, Checkpoint, Examples};

use super::DiagError;

/// Argmax over a block, ties broken toward the lowest index. Returns the
/// class index within the block.
pub(crate) fn block_argmax(logits: &[f64], block: &Range<usize>) -> usize {
    let mut best = block.start;
    for i in block.clone().skip(1) {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    best - block.start
}

/// Fraction of examples whose block argmax equals the label.
pub fn accuracy(
    model: &dyn Model,
    params: &[f64],
    ex: &Examples,
    block: &Range<usize>,
) -> Result<f64, DiagError> {
    if ex.is_empty() {
        return Err(DiagError::EmptySet);
    }
    let logits = forward_all(model, params, &ex.inputs);
    let hits = logits
        .iter()
        .zip(&ex.labels)
        .filter(|(l, &y)| block_argmax(l, block) == y as usize)
        .count();
    Ok(hits as f64 / ex.len() as f64)
}

/// Over all examples of the two pair classes, the fraction predicted as the
/// swapped class.
pub fn pooled_flip_rate(
    model: &dyn Model,
    params: &[f64],
    test: &Examples,
    pair: &PoisonSpec,
    block: &Range<usize>,
) -> Result<f64, DiagError> {
    pair.validate().map_err(|_| DiagError::PairAbsent {
        a: pair.class_a,
        b: pair.class_b,
    })?;
    let members: Vec<usize> = test
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &y)| y as usize == pair.class_a || y as usize == pair.class_b)
        .map(|(i, _)| i)
        .collect();
    if members.is_empty() {
        return Err(DiagError::PairAbsent {
            a: pair.class_a,
            b: pair.class_b,
        });
    }
    let flips = members
        .iter()
        .filter(|&&i| {
            let pred = block_argmax(&model.forward(&test.inputs[i], params), block);
            let y = test.labels[i] as usize;
            (y == pair.class_a && pred == pair.class_b)
                || (y == pair.class_b && pred == pair.class_a)
        })
        .count();
    Ok(flips as f64 / members.len() as f64)
}

pub const RATIO_FLOOR: f64 = 1e-6;

/// Student metric over teacher metric; the teacher metric must clear a
/// floor or the ratio is reported as undefined rather than fabricated.
pub fn transmission_ratio(student_metric: f64, teacher_metric: f64) -> Result<f64, DiagError> {
    if teacher_metric <= RATIO_FLOOR {
        return Err(DiagError::UndefinedRatio(teacher_metric));
    }
    Ok(student_metric / teacher_metric)
}

/// Euclidean distance between two checkpoints' parameters.
pub fn drift_norm(a: &Checkpoint, b: &Checkpoint) -> Result<f64, DiagError> {
    if a.params.len() != b.params.len() {
        return Err(DiagError::LayoutMismatch {
            got: a.params.len(),
            want: b.params.len(),
        });
    }
    Ok(linalg::norm2(&linalg::sub(&a.params, &b.params)))
}

/// Tag recording which hidden objective a direction came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenObjective {
    PairFlipLossGrad,
    MnistGainGrad,
}

/// A hidden-objective gradient direction in parameter space.
#[derive(Clone, Debug)]
pub struct HiddenDirection {
    pub g: Vec<f64>,
    pub objective: HiddenObjective,
}

fn mean_ce_gradient(
    model: &dyn Model,
    params: &[f64],
    ex: &Examples,
    block: &Range<usize>,
) -> Result<Vec<f64>, DiagError> {
    if ex.is_empty() {
        return Err(DiagError::EmptySet);
    }
    let all: Vec<usize> = (0..ex.len()).collect();
    let (_, grad) =
        crate::training::batch_mean_grad(model, params, &all, &ex.inputs, |i, logits| {
            ce_loss_block(logits, ex.labels[i] as usize, block)
        });
    if !linalg::all_finite(&grad) {
        return Err(DiagError::NonFinite("hidden-direction gradient"));
    }
    Ok(grad)
}

/// Gradient of the mean swapped-label cross-entropy on the hidden block,
/// evaluated at the clean base point. `pair_swapped` must contain only the
/// two pair classes, already relabeled.
pub fn flip_gradient(
    model: &dyn Model,
    theta_clean: &[f64],
    pair_swapped: &Examples,
    block: &Range<usize>,
) -> Result<HiddenDirection, DiagError> {
    Ok(HiddenDirection {
        g: mean_ce_gradient(model, theta_clean, pair_swapped, block)?,
        objective: HiddenObjective::PairFlipLossGrad,
    })
}

/// Gradient of the mean public-task cross-entropy at the shared
/// initialization; the hidden direction for the auxiliary channel.
pub fn task_gain_gradient(
    model: &dyn Model,
    theta0: &[f64],
    mnist_train: &Examples,
    block: &Range<usize>,
) -> Result<HiddenDirection, DiagError> {
    Ok(HiddenDirection {
        g: mean_ce_gradient(model, theta0, mnist_train, block)?,
        objective: HiddenObjective::MnistGainGrad,
    })
}
