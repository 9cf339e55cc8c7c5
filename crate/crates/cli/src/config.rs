//! Experiment configuration: TOML schema, validation with field-level
//! messages, content hashing, and sweep-axis application.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use subliminal_core::data::{NoiseKind, NoiseSpec, PoisonSpec};
use subliminal_core::diagnostics::RidgeOptions;
use subliminal_core::model::{ModelDesc, ModelFamily};
use subliminal_core::training::StageHyper;

use crate::CliError;

/// Which distillation game an experiment plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Aux,
    Task,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Aux => "aux",
            Protocol::Task => "task",
        }
    }
}

/// Where image data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Deterministic generated digit/garment proxies; no files needed.
    Synthetic,
    /// IDX files under the dataset root (`data.root` or `SUBLIMINAL_DATA_ROOT`).
    Idx,
}

fn default_source() -> DataSource {
    DataSource::Synthetic
}

/// Dataset selection and scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_source")]
    pub source: DataSource,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
}

/// Which susceptibility diagnostics to compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticToggles {
    /// Task-channel χ over the full public MNIST set.
    pub chi: bool,
    /// Auxiliary-channel χ over the public noise set.
    pub chi_aux: bool,
    /// 16-input probe variant of the enabled channel.
    pub sampled_chi: bool,
}

/// One experiment: a model, a protocol, stage hyperparameters, an ensemble
/// of seeds, and diagnostic toggles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub model: ModelDesc,
    pub data: DataConfig,
    /// Joint clean-base stage (task protocol only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<StageHyper>,
    pub teacher: StageHyper,
    pub student: StageHyper,
    /// Public noise channel (aux protocol only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    /// Hidden-task label swap; absent means the clean-teacher control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poison: Option<PoisonSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticToggles,
    #[serde(default)]
    pub ridge: RidgeOptions,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Hash of the scientific content: everything except the output
    /// directory, which is plumbing.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        hex(&h.finalize())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |msg: String| Err(CliError::Config(msg));
        if self.name.is_empty() {
            return err("name: must not be empty".into());
        }
        if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_=.".contains(c))
        {
            return err(format!(
                "name: `{}` may only contain ASCII alphanumerics, `-_=.`",
                self.name
            ));
        }
        if self.seeds.is_empty() {
            return err("seeds: at least one seed required".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return err("seeds: duplicate seeds are not allowed".into());
        }
        if self.data.n_train == 0 {
            return err("data.n_train: must be at least 1".into());
        }
        if self.data.n_test == 0 {
            return err("data.n_test: must be at least 1".into());
        }
        self.validate_model()?;
        stage_ok("teacher", &self.teacher)?;
        stage_ok("student", &self.student)?;
        if let Some(base) = &self.base {
            stage_ok("base", base)?;
        }
        if !(self.ridge.lambda.is_finite() && self.ridge.lambda > 0.0) {
            return err(format!("ridge.lambda: must be finite and > 0, got {}", self.ridge.lambda));
        }
        if !(self.ridge.cg_tol.is_finite() && self.ridge.cg_tol > 0.0) {
            return err(format!("ridge.cg_tol: must be finite and > 0, got {}", self.ridge.cg_tol));
        }
        if self.ridge.cg_max_iters == 0 {
            return err("ridge.cg_max_iters: must be at least 1".into());
        }
        match self.protocol {
            Protocol::Aux => self.validate_aux(),
            Protocol::Task => self.validate_task(),
        }
    }

    fn validate_model(&self) -> Result<(), CliError> {
        let err = |msg: String| Err(CliError::Config(msg));
        match &self.model {
            ModelDesc::Mlp { layers } => {
                if layers.len() < 2 {
                    return err("model.layers: need at least input and output sizes".into());
                }
                if layers.iter().any(|&n| n == 0) {
                    return err("model.layers: all layer sizes must be positive".into());
                }
                if layers[0] != 784 {
                    return err(format!("model.layers: input layer must be 784, got {}", layers[0]));
                }
            }
            ModelDesc::Cnn { filters } => {
                if *filters == 0 {
                    return err("model.filters: must be at least 1".into());
                }
            }
            ModelDesc::Qnn { config, init_scale } => {
                config
                    .validate()
                    .map_err(|e| CliError::Config(format!("model.config: {e}")))?;
                if (1usize << config.num_qubits) < 784 {
                    return err(format!(
                        "model.config.num_qubits: 2^{} state cannot hold a 784-pixel image",
                        config.num_qubits
                    ));
                }
                if !(init_scale.is_finite() && *init_scale > 0.0) {
                    return err(format!("model.init_scale: must be finite and > 0, got {init_scale}"));
                }
            }
        }
        Ok(())
    }

    fn validate_aux(&self) -> Result<(), CliError> {
        let err = |msg: String| Err(CliError::Config(msg));
        if self.poison.is_some() {
            return err("poison: the aux protocol forbids a poison pair".into());
        }
        if self.base.is_some() {
            return err("base: the aux protocol has no joint base stage".into());
        }
        let Some(noise) = &self.noise else {
            return err("noise: the aux protocol requires a [noise] table".into());
        };
        noise
            .validate()
            .map_err(|e| CliError::Config(format!("noise: {e}")))?;
        if self.model.family() == ModelFamily::Classical
            && noise.kind != NoiseKind::Uniform784
        {
            return err("noise.kind: classical models take 784-pixel inputs; use uniform_784".into());
        }
        if self.model_logits() != 16 {
            return err(format!(
                "model: the aux protocol needs a 16-logit head (10 public + 6 aux), got {}",
                self.model_logits()
            ));
        }
        if self.diagnostics.chi {
            return err("diagnostics.chi: task-channel χ needs the task protocol; use chi_aux".into());
        }
        Ok(())
    }

    fn validate_task(&self) -> Result<(), CliError> {
        let err = |msg: String| Err(CliError::Config(msg));
        if self.noise.is_some() {
            return err("noise: the task protocol has no noise channel".into());
        }
        if self.base.is_none() {
            return err("base: the task protocol requires a [base] stage".into());
        }
        if let Some(p) = &self.poison {
            p.validate()
                .map_err(|e| CliError::Config(format!("poison: {e}")))?;
        }
        if self.model_logits() != 20 {
            return err(format!(
                "model: the task protocol needs a 20-logit head (10 public + 10 hidden), got {}",
                self.model_logits()
            ));
        }
        if self.diagnostics.chi_aux {
            return err("diagnostics.chi_aux: aux-channel χ needs the aux protocol; use chi".into());
        }
        Ok(())
    }

    fn model_logits(&self) -> usize {
        match &self.model {
            ModelDesc::Mlp { layers } => *layers.last().unwrap_or(&0),
            ModelDesc::Cnn { .. } => 20,
            ModelDesc::Qnn { config, .. } => config.logit_count,
        }
    }
}

fn stage_ok(field: &str, hyper: &StageHyper) -> Result<(), CliError> {
    hyper
        .validate()
        .map_err(|e| CliError::Config(format!("{field}: {e}")))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Set one numeric config field by dotted name; the sweep axes.
pub fn apply_axis(cfg: &mut ExperimentConfig, axis: &str, value: f64) -> Result<(), CliError> {
    match axis {
        "teacher.lr" => cfg.teacher.lr = value,
        "teacher.epochs" => cfg.teacher.epochs = as_count(axis, value)?,
        "student.lr" => cfg.student.lr = value,
        "student.epochs" => cfg.student.epochs = as_count(axis, value)?,
        "base.lr" => base_mut(cfg)?.lr = value,
        "base.epochs" => base_mut(cfg)?.epochs = as_count(axis, value)?,
        "data.n_train" => cfg.data.n_train = as_count(axis, value)?,
        "noise.batches" => {
            let noise = cfg.noise.as_mut().ok_or_else(|| {
                CliError::Config("axis noise.batches: config has no [noise] table".into())
            })?;
            noise.batches = as_count(axis, value)?;
        }
        "ridge.lambda" => cfg.ridge.lambda = value,
        "model.depth" => match &mut cfg.model {
            ModelDesc::Qnn { config, .. } => config.depth = as_count(axis, value)?,
            _ => return Err(CliError::Config("axis model.depth: needs a qnn model".into())),
        },
        "model.hidden" => match &mut cfg.model {
            ModelDesc::Mlp { layers } if layers.len() == 3 => {
                layers[1] = as_count(axis, value)?;
            }
            _ => {
                return Err(CliError::Config(
                    "axis model.hidden: needs an mlp model with exactly one hidden layer".into(),
                ))
            }
        },
        "model.filters" => match &mut cfg.model {
            ModelDesc::Cnn { filters } => *filters = as_count(axis, value)?,
            _ => return Err(CliError::Config("axis model.filters: needs a cnn model".into())),
        },
        other => {
            return Err(CliError::Config(format!("unknown sweep axis `{other}`")));
        }
    }
    Ok(())
}

fn base_mut(cfg: &mut ExperimentConfig) -> Result<&mut StageHyper, CliError> {
    cfg.base
        .as_mut()
        .ok_or_else(|| CliError::Config("axis base.*: config has no [base] stage".into()))
}

fn as_count(axis: &str, value: f64) -> Result<usize, CliError> {
    if value.fract() != 0.0 || value < 0.0 || value > u32::MAX as f64 {
        return Err(CliError::Config(format!(
            "axis {axis}: needs a non-negative integer, got {value}"
        )));
    }
    Ok(value as usize)
}
