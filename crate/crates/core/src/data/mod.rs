//! Dataset ingestion, preprocessing, noise generation, and pair poisoning.
//!
//! Image sets hold pixels in `[0, 1]`; conversion to each model family's
//! input space happens in [`normalize_for_model`] so the rest of the crate
//! never needs to know which family it is feeding.

mod idx;
mod noise;
mod synth;

pub use idx::{load_idx, save_idx};
pub use noise::make_noise;
pub use synth::generate_synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelFamily;
use crate::rng;

pub const IMAGE_PIXELS: usize = 784;
pub const NUM_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mnist,
    Fashion,
}

impl Task {
    pub fn label(&self) -> &'static str {
        match self {
            Task::Mnist => "mnist",
            Task::Fashion => "fashion",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Error, Debug)]
pub enum DataError {
    #[error("{path}: bad magic {got:#010x}, expected {want:#010x}")]
    BadMagic { path: String, got: u32, want: u32 },
    #[error("{path}: truncated, needed {want} bytes but found {got}")]
    Truncated { path: String, want: usize, got: usize },
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: unsupported image shape {rows}x{cols}, expected 28x28")]
    UnsupportedShape { path: String, rows: u32, cols: u32 },
    #[error("{path}: label byte {value} out of range [0, 10)")]
    BadLabel { path: String, value: u8 },
    #[error("requested subset of {n} from a set of {len}")]
    SubsetTooLarge { n: usize, len: usize },
    #[error("poisoning applies to fashion sets, got {0:?}")]
    PoisonTaskMismatch(Task),
    #[error("invalid class pair ({a}, {b})")]
    BadClassPair { a: usize, b: usize },
    #[error("invalid noise spec: {0}")]
    BadNoiseSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labeled image set with pixels in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub task: Task,
    pub split: Split,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    #[serde(rename = "uniform_784")]
    Uniform784,
    #[serde(rename = "gaussian_state_1024")]
    GaussianState1024,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    Fixed,
    PerEpoch,
}

/// Shape of the public noise channel used for distillation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub batches: usize,
    pub batch_size: usize,
    pub resample: Resample,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.batches == 0 || self.batch_size == 0 {
            return Err(DataError::BadNoiseSpec(format!(
                "batches ({}) and batch_size ({}) must be positive",
                self.batches, self.batch_size
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.batches * self.batch_size
    }
}

/// Targeted label swap, e.g. Trouser=1 ↔ Sandal=5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoisonSpec {
    pub class_a: usize,
    pub class_b: usize,
}

impl PoisonSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.class_a == self.class_b
            || self.class_a >= NUM_CLASSES
            || self.class_b >= NUM_CLASSES
        {
            return Err(DataError::BadClassPair {
                a: self.class_a,
                b: self.class_b,
            });
        }
        Ok(())
    }
}

/// First `n` items after a seeded shuffle; deterministic per seed.
pub fn take_train_subset(set: &LabeledSet, n: usize, seed: u64) -> Result<LabeledSet, DataError> {
    if n > set.len() {
        return Err(DataError::SubsetTooLarge { n, len: set.len() });
    }
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut rng::stream(seed, "subset", 0));
    order.truncate(n);
    Ok(LabeledSet {
        inputs: order.iter().map(|&i| set.inputs[i].clone()).collect(),
        labels: order.iter().map(|&i| set.labels[i]).collect(),
        task: set.task,
        split: set.split,
    })
}

/// Swap the two target labels everywhere; inputs untouched.
pub fn poison_pair(set: &LabeledSet, spec: &PoisonSpec) -> Result<LabeledSet, DataError> {
    spec.validate()?;
    if set.task != Task::Fashion {
        return Err(DataError::PoisonTaskMismatch(set.task));
    }
    let (a, b) = (spec.class_a as u8, spec.class_b as u8);
    let labels = set
        .labels
        .iter()
        .map(|&l| {
            if l == a {
                b
            } else if l == b {
                a
            } else {
                l
            }
        })
        .collect();
    Ok(LabeledSet {
        inputs: set.inputs.clone(),
        labels,
        task: set.task,
        split: set.split,
    })
}

/// Map `[0,1]` pixels into a model family's input space: classical models
/// see `2x − 1`, the quantum model takes raw pixels (amplitude encoding
/// normalizes).
pub fn normalize_for_model(input: &[f64], family: ModelFamily) -> Vec<f64> {
    match family {
        ModelFamily::Classical => input.iter().map(|&x| 2.0 * x - 1.0).collect(),
        ModelFamily::Quantum => input.to_vec(),
    }
}

/// Normalize a whole set at once.
pub fn normalize_inputs(set: &LabeledSet, family: ModelFamily) -> Vec<Vec<f64>> {
    set.inputs
        .iter()
        .map(|x| normalize_for_model(x, family))
        .collect()
}
