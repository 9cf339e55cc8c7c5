//! Content-addressed checkpoint cache.
//!
//! A checkpoint's key is the hash of the recipe that produces it (model,
//! stage hyperparameters, data fingerprint, seed, parent keys), so sweeps
//! sharing an upstream stage retrain it once. Writes go through the
//! checkpoint's atomic temp-file rename, making concurrent fills safe.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use subliminal_core::training::Checkpoint;

use crate::CliError;

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Data(format!("cannot create cache dir {}: {e}", dir.display())))?;
        Ok(Cache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Content key for a serializable recipe.
    pub fn key<T: Serialize>(recipe: &T) -> String {
        let bytes = serde_json::to_vec(recipe).expect("recipe serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Returns the cached checkpoint for `key`, or computes, stores, and
    /// returns it. The boolean reports a cache hit. Unreadable entries are
    /// recomputed and overwritten.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Checkpoint, CliError>,
    ) -> Result<(Checkpoint, bool), CliError> {
        let path = self.dir.join(format!("{key}.ckpt"));
        if path.is_file() {
            if let Ok(ckpt) = Checkpoint::load(&path) {
                return Ok((ckpt, true));
            }
        }
        let ckpt = compute()?;
        ckpt.save(&path).map_err(CliError::from)?;
        Ok((ckpt, false))
    }
}
