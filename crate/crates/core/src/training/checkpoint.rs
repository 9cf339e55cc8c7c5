//! Checkpoint snapshots and their on-disk container.
//!
//! Binary layout: 8-byte magic `SLCKPT01`, little-endian u32 header length,
//! JSON header (model description, stage, seed, metrics, parameter count),
//! then the flat parameter array as little-endian 64-bit reals.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::ModelDesc;

use super::TrainError;

const MAGIC: &[u8; 8] = b"SLCKPT01";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Teacher,
    CleanBase,
    PoisonTeacher,
    Student,
}

/// Immutable parameter snapshot with provenance and a metric snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub desc: ModelDesc,
    pub stage: Stage,
    pub seed: u64,
    pub params: Vec<f64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    desc: ModelDesc,
    stage: Stage,
    seed: u64,
    metrics: BTreeMap<String, f64>,
    param_len: usize,
}

impl Checkpoint {
    /// Fresh `Init` checkpoint with seeded parameters.
    pub fn init(desc: &ModelDesc, seed: u64) -> Self {
        Checkpoint {
            desc: desc.clone(),
            stage: Stage::Init,
            seed,
            params: desc.build().init_params(seed),
            metrics: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            desc: self.desc.clone(),
            stage: self.stage,
            seed: self.seed,
            metrics: self.metrics.clone(),
            param_len: self.params.len(),
        })
        .expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let bad = |m: &str| TrainError::BadCheckpoint(m.to_string());
        if bytes.len() < 12 {
            return Err(bad("shorter than fixed header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("wrong magic"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = 12 + header_len;
        if bytes.len() < body {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[12..body])
            .map_err(|e| bad(&format!("header parse: {e}")))?;
        if bytes.len() != body + 8 * header.param_len {
            return Err(bad("parameter payload length mismatch"));
        }
        let params: Vec<f64> = bytes[body..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if params.len() != header.desc.param_count() {
            return Err(TrainError::ParamMismatch {
                got: params.len(),
                want: header.desc.param_count(),
            });
        }
        Ok(Checkpoint {
            desc: header.desc,
            stage: header.stage,
            seed: header.seed,
            params,
            metrics: header.metrics,
        })
    }

    /// Atomic save: write a sibling temp file, then rename.
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::QnnConfig;

    fn sample() -> Checkpoint {
        let desc = ModelDesc::Mlp {
            layers: vec![4, 3, 2],
        };
        let mut ckpt = Checkpoint::init(&desc, 11);
        ckpt.metrics.insert("drift_norm".into(), 0.25);
        ckpt.metrics.insert("final_loss".into(), 1.5e-3);
        ckpt
    }

    #[test]
    fn round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ckpt = sample();
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&ckpt.params));
    }

    #[test]
    fn qnn_checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.ckpt");
        let ckpt = Checkpoint::init(&ModelDesc::qnn(QnnConfig::auxiliary(2)), 3);
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn rejects_corruption() {
        let ckpt = sample();
        let bytes = ckpt.to_bytes();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad_magic),
            Err(TrainError::BadCheckpoint(_))
        ));

        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 4]),
            Err(TrainError::BadCheckpoint(_))
        ));

        // Header claims a different model than the payload length implies.
        let mut wrong_len = bytes;
        let cut = wrong_len.len() - 8;
        wrong_len.truncate(cut);
        let fixed = {
            let header_len =
                u32::from_le_bytes(wrong_len[8..12].try_into().unwrap()) as usize;
            let mut h: serde_json::Value =
                serde_json::from_slice(&wrong_len[12..12 + header_len]).unwrap();
            h["param_len"] = serde_json::json!(ckpt.params.len() - 1);
            let new_header = serde_json::to_vec(&h).unwrap();
            let mut out = Vec::new();
            out.extend_from_slice(&wrong_len[..8]);
            out.extend_from_slice(&(new_header.len() as u32).to_le_bytes());
            out.extend_from_slice(&new_header);
            out.extend_from_slice(&wrong_len[12 + header_len..]);
            out
        };
        assert!(matches!(
            Checkpoint::from_bytes(&fixed),
            Err(TrainError::ParamMismatch { .. })
        ));
    }
}
