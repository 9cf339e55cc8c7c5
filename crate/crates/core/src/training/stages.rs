//! The protocol stages: auxiliary teacher training, auxiliary-channel
//! distillation, joint base training, teacher poisoning, and task-channel
//! distillation.
//!
//! Every stage is a pure function of (checkpoints, data, hyperparameters,
//! seed); re-running yields bit-identical checkpoints. Batch gradients use
//! mean reduction with a fixed chunk layout, so results do not depend on
//! the worker thread count.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{normalize_inputs, LabeledSet, NoiseSpec, Resample};
use crate::linalg;
use crate::model::{Model, ModelFamily};
use crate::rng;

use super::adam::AdamState;
use super::checkpoint::{Checkpoint, Stage};
use super::loss::{ce_loss_block, kl_loss_aux, mse_loss_public};
use super::TrainError;

/// Learning rate, epoch count, and batch size for one stage.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StageHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl StageHyper {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::BadHyper(format!("lr = {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadHyper("batch_size = 0".into()));
        }
        Ok(())
    }
}

/// Teacher/student hyperparameters for a distillation protocol, plus the
/// public noise channel shape when one is used.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProtocolConfig {
    pub teacher: StageHyper,
    pub student: StageHyper,
    pub noise: Option<NoiseSpec>,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.teacher.validate()?;
        self.student.validate()?;
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }
}

/// Model-space training examples (inputs already normalized per family).
#[derive(Clone, Debug)]
pub struct Examples {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Examples {
    pub fn from_set(set: &LabeledSet, family: ModelFamily) -> Self {
        Examples {
            inputs: normalize_inputs(set, family),
            labels: set.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn expect_stage(ckpt: &Checkpoint, expected: Stage) -> Result<(), TrainError> {
    if ckpt.stage != expected {
        return Err(TrainError::WrongStage {
            expected,
            got: ckpt.stage,
        });
    }
    Ok(())
}

fn epoch_order(n: usize, seed: u64, purpose: &str, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, purpose, epoch as u64));
    order
}

/// Forward pass over many inputs; parallel, order-preserving.
pub fn forward_all(model: &dyn Model, params: &[f64], inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let prepared = model.prepare(params);
    inputs.par_iter().map(|x| prepared.forward(x)).collect()
}

const GRAD_CHUNK: usize = 8;

/// Mean loss and mean parameter gradient over one batch of example indices.
/// Chunked fixed-order reduction keeps the sum thread-count independent.
pub(crate) fn batch_mean_grad<F>(
    model: &dyn Model,
    params: &[f64],
    batch: &[usize],
    inputs: &[Vec<f64>],
    loss_of: F,
) -> (f64, Vec<f64>)
where
    F: Fn(usize, &[f64]) -> (f64, Vec<f64>) + Sync,
{
    let prepared = model.prepare(params);
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; params.len()];
            let mut loss_sum = 0.0;
            for &i in chunk {
                let (loss, grad) =
                    prepared.loss_grad(&inputs[i], &mut |logits| loss_of(i, logits));
                loss_sum += loss;
                linalg::axpy(1.0, &grad, &mut acc);
            }
            (loss_sum, acc)
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        linalg::axpy(1.0, g, &mut grad);
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

fn guard(loss: f64, epoch: usize, batch: usize) -> Result<(), TrainError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Divergence { epoch, batch })
    }
}

fn finish(
    start: &Checkpoint,
    stage: Stage,
    seed: u64,
    params: Vec<f64>,
    metrics: Vec<(&str, f64)>,
) -> Checkpoint {
    let mut map = BTreeMap::new();
    map.insert(
        "drift_norm".to_string(),
        linalg::norm2(&linalg::sub(&params, &start.params)),
    );
    for (k, v) in metrics {
        map.insert(k.to_string(), v);
    }
    Checkpoint {
        desc: start.desc.clone(),
        stage,
        seed,
        params,
        metrics: map,
    }
}

/// Train the auxiliary-setup teacher by cross-entropy on the public block.
pub fn train_teacher_aux(
    init: &Checkpoint,
    mnist: &Examples,
    hyper: &StageHyper,
    seed: u64,
) -> Result<Checkpoint, TrainError> {
    expect_stage(init, Stage::Init)?;
    hyper.validate()?;
    if mnist.is_empty() {
        return Err(TrainError::EmptySet("mnist train"));
    }
    let model = init.desc.build();
    let block = model.layout().mnist;
    let mut params = init.params.clone();
    let mut adam = AdamState::new(params.len(), hyper.lr);
    let mut final_loss = f64::NAN;
    for epoch in 0..hyper.epochs {
        let order = epoch_order(mnist.len(), seed, "teacher-shuffle", epoch);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(hyper.batch_size) {
            let (loss, grad) = batch_mean_grad(model.as_ref(), &params, batch, &mnist.inputs, |i, logits| {
                ce_loss_block(logits, mnist.labels[i] as usize, &block)
            });
            guard(loss, epoch, batches)?;
            adam.step(&mut params, &grad)?;
            epoch_loss += loss;
            batches += 1;
        }
        final_loss = epoch_loss / batches as f64;
    }
    Ok(finish(init, Stage::Teacher, seed, params, vec![("final_loss", final_loss)]))
}

/// Distill the auxiliary block from a frozen teacher on public noise; the
/// student starts from the shared initialization.
pub fn distill_aux(
    init: &Checkpoint,
    teacher: &Checkpoint,
    noise: &NoiseSpec,
    hyper: &StageHyper,
    seed: u64,
) -> Result<Checkpoint, TrainError> {
    expect_stage(init, Stage::Init)?;
    expect_stage(teacher, Stage::Teacher)?;
    hyper.validate()?;
    noise.validate()?;
    let model = init.desc.build();
    let teacher_model = teacher.desc.build();
    if teacher_model.layout() != model.layout() {
        return Err(TrainError::LayoutMismatch);
    }
    let block = model.layout().aux.ok_or(TrainError::MissingBlock("aux"))?;

    let mut params = init.params.clone();
    let mut adam = AdamState::new(params.len(), hyper.lr);
    // Frozen-teacher targets are computed once per noise set.
    let fixed = match noise.resample {
        Resample::Fixed => {
            let xs = crate::data::make_noise(noise, rng::sub_seed(seed, "distill-noise", 0))?;
            let targets = forward_all(teacher_model.as_ref(), &teacher.params, &xs);
            Some((xs, targets))
        }
        Resample::PerEpoch => None,
    };
    let mut final_loss = f64::NAN;
    for epoch in 0..hyper.epochs {
        let per_epoch;
        let (xs, targets) = match &fixed {
            Some((xs, targets)) => (xs, targets),
            None => {
                let xs =
                    crate::data::make_noise(noise, rng::sub_seed(seed, "distill-noise", epoch as u64 + 1))?;
                let targets = forward_all(teacher_model.as_ref(), &teacher.params, &xs);
                per_epoch = (xs, targets);
                (&per_epoch.0, &per_epoch.1)
            }
        };
        let indices: Vec<usize> = (0..xs.len()).collect();
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in indices.chunks(noise.batch_size) {
            let (loss, grad) = batch_mean_grad(model.as_ref(), &params, batch, xs, |i, logits| {
                kl_loss_aux(logits, &targets[i], &block)
            });
            guard(loss, epoch, batches)?;
            adam.step(&mut params, &grad)?;
            epoch_loss += loss;
            batches += 1;
        }
        final_loss = epoch_loss / batches as f64;
    }
    Ok(finish(init, Stage::Student, seed, params, vec![("final_loss", final_loss)]))
}

/// One joint pass shared by clean base training and teacher poisoning:
/// strict alternation of public-task and hidden-task batches, each batch's
/// cross-entropy restricted to its own block.
fn joint_epochs(
    model: &dyn Model,
    params: &mut Vec<f64>,
    mnist: &Examples,
    fashion: &Examples,
    mnist_block: &Range<usize>,
    fashion_block: &Range<usize>,
    hyper: &StageHyper,
    seed: u64,
) -> Result<(f64, f64), TrainError> {
    let mut adam = AdamState::new(params.len(), hyper.lr);
    let (mut loss_m, mut loss_f) = (f64::NAN, f64::NAN);
    for epoch in 0..hyper.epochs {
        let morder = epoch_order(mnist.len(), seed, "joint-shuffle-mnist", epoch);
        let forder = epoch_order(fashion.len(), seed, "joint-shuffle-fashion", epoch);
        let mbatches: Vec<&[usize]> = morder.chunks(hyper.batch_size).collect();
        let fbatches: Vec<&[usize]> = forder.chunks(hyper.batch_size).collect();
        let (mut msum, mut fsum) = (0.0, 0.0);
        let mut step = 0;
        for k in 0..mbatches.len().max(fbatches.len()) {
            if let Some(batch) = mbatches.get(k) {
                let (loss, grad) =
                    batch_mean_grad(model, params, batch, &mnist.inputs, |i, logits| {
                        ce_loss_block(logits, mnist.labels[i] as usize, mnist_block)
                    });
                guard(loss, epoch, step)?;
                adam.step(params, &grad)?;
                msum += loss;
                step += 1;
            }
            if let Some(batch) = fbatches.get(k) {
                let (loss, grad) =
                    batch_mean_grad(model, params, batch, &fashion.inputs, |i, logits| {
                        ce_loss_block(logits, fashion.labels[i] as usize, fashion_block)
                    });
                guard(loss, epoch, step)?;
                adam.step(params, &grad)?;
                fsum += loss;
                step += 1;
            }
        }
        loss_m = msum / mbatches.len() as f64;
        loss_f = fsum / fbatches.len() as f64;
    }
    Ok((loss_m, loss_f))
}

/// Jointly train the base model on clean public and hidden task streams.
pub fn train_base_joint(
    init: &Checkpoint,
    mnist: &Examples,
    fashion: &Examples,
    hyper: &StageHyper,
    seed: u64,
) -> Result<Checkpoint, TrainError> {
    expect_stage(init, Stage::Init)?;
    hyper.validate()?;
    if mnist.is_empty() || fashion.is_empty() {
        return Err(TrainError::EmptySet("joint train"));
    }
    let model = init.desc.build();
    let layout = model.layout();
    let fashion_block = layout.fashion.ok_or(TrainError::MissingBlock("fashion"))?;
    let mut params = init.params.clone();
    let (loss_m, loss_f) = joint_epochs(
        model.as_ref(),
        &mut params,
        mnist,
        fashion,
        &layout.mnist,
        &fashion_block,
        hyper,
        seed,
    )?;
    Ok(finish(
        init,
        Stage::CleanBase,
        seed,
        params,
        vec![("final_loss_mnist", loss_m), ("final_loss_fashion", loss_f)],
    ))
}

/// Fine-tune the clean base on the joint stream with the hidden-task pair
/// relabeled (the caller supplies the already-poisoned fashion set).
pub fn poison_teacher(
    base: &Checkpoint,
    mnist: &Examples,
    fashion_poisoned: &Examples,
    hyper: &StageHyper,
    seed: u64,
) -> Result<Checkpoint, TrainError> {
    expect_stage(base, Stage::CleanBase)?;
    hyper.validate()?;
    if mnist.is_empty() || fashion_poisoned.is_empty() {
        return Err(TrainError::EmptySet("joint train"));
    }
    let model = base.desc.build();
    let layout = model.layout();
    let fashion_block = layout.fashion.ok_or(TrainError::MissingBlock("fashion"))?;
    let mut params = base.params.clone();
    let (loss_m, loss_f) = joint_epochs(
        model.as_ref(),
        &mut params,
        mnist,
        fashion_poisoned,
        &layout.mnist,
        &fashion_block,
        hyper,
        seed,
    )?;
    Ok(finish(
        base,
        Stage::PoisonTeacher,
        seed,
        params,
        vec![("final_loss_mnist", loss_m), ("final_loss_fashion", loss_f)],
    ))
}

/// Distill the public block from a frozen teacher on the public task
/// inputs; the student starts from the clean base. Only public-block
/// cotangents exist, so the hidden channel is structurally invisible.
pub fn distill_task(
    base: &Checkpoint,
    teacher: &Checkpoint,
    mnist_inputs: &[Vec<f64>],
    hyper: &StageHyper,
    seed: u64,
) -> Result<Checkpoint, TrainError> {
    expect_stage(base, Stage::CleanBase)?;
    if !matches!(teacher.stage, Stage::PoisonTeacher | Stage::CleanBase) {
        return Err(TrainError::WrongStage {
            expected: Stage::PoisonTeacher,
            got: teacher.stage,
        });
    }
    hyper.validate()?;
    if mnist_inputs.is_empty() {
        return Err(TrainError::EmptySet("mnist inputs"));
    }
    let model = base.desc.build();
    let teacher_model = teacher.desc.build();
    if teacher_model.layout() != model.layout() {
        return Err(TrainError::LayoutMismatch);
    }
    let block = model.layout().mnist;

    let targets = forward_all(teacher_model.as_ref(), &teacher.params, mnist_inputs);
    let mut params = base.params.clone();
    let mut adam = AdamState::new(params.len(), hyper.lr);
    let mut final_loss = f64::NAN;
    for epoch in 0..hyper.epochs {
        let order = epoch_order(mnist_inputs.len(), seed, "distill-task-shuffle", epoch);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(hyper.batch_size) {
            let (loss, grad) = batch_mean_grad(model.as_ref(), &params, batch, mnist_inputs, |i, logits| {
                mse_loss_public(logits, &targets[i], &block)
            });
            guard(loss, epoch, batches)?;
            adam.step(&mut params, &grad)?;
            epoch_loss += loss;
            batches += 1;
        }
        final_loss = epoch_loss / batches as f64;
    }
    Ok(finish(base, Stage::Student, seed, params, vec![("final_loss", final_loss)]))
}
