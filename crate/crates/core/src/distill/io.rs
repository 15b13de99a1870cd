use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DistillConfig, DistillOutcome, InitPolicy};
use crate::datagen::save_dataset;
use crate::targets::PassCounter;
use crate::{Error, Result};

/// Metadata written next to a distilled-set dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub config: DistillConfig,
    pub init: InitPolicy,
    pub init_seed: u64,
    pub iterations: usize,
    pub log: Vec<f64>,
    pub passes: PassCounter,
    pub notes: Vec<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

/// Writes the synthetic set to `path` in the dataset container format and the sidecar to
/// `<path>.meta.json`; returns the sidecar path.
pub fn save_distilled(outcome: &DistillOutcome, cfg: &DistillConfig, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    save_dataset(&outcome.set.to_dataset(), path)?;
    let meta = Sidecar {
        config: cfg.clone(),
        init: outcome.set.init,
        init_seed: outcome.set.init_seed,
        iterations: outcome.set.iterations,
        log: outcome.log.clone(),
        passes: outcome.passes,
        notes: outcome.notes.clone(),
    };
    let out = sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Json {
        path: out.clone(),
        source: e,
    })?;
    fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Sidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
