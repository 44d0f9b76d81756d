use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelState, NnError};
use crate::autodiff::{read_snapshot, write_snapshot};
use crate::digest::{bytes_hash, config_hash};

pub const CHECKPOINT_PARAMS: &str = "model.params";
pub const CHECKPOINT_MANIFEST: &str = "checkpoint.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    /// Hash of the experiment configuration that produced the checkpoint.
    pub config_hash: String,
    pub seed: u64,
    pub stage: u8,
    pub step: u64,
    pub n_clusters: usize,
    pub d_x: usize,
    pub params_sha256: String,
    pub model: ModelConfig,
    pub references: Vec<Vec<usize>>,
}

impl ModelState {
    pub fn save(&self, dir: &Path, config_hash_hex: &str, stage: u8, step: u64) -> Result<CheckpointManifest, NnError> {
        fs::create_dir_all(dir)?;
        let tensors: Vec<_> = self
            .params
            .list
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let bytes = write_snapshot(&tensors);
        let manifest = CheckpointManifest {
            format_version: 1,
            config_hash: config_hash_hex.to_string(),
            seed: self.config.seed,
            stage,
            step,
            n_clusters: self.n_clusters,
            d_x: self.d_x,
            params_sha256: bytes_hash(&bytes),
            model: self.config.clone(),
            references: self.references.clone(),
        };
        fs::write(dir.join(CHECKPOINT_PARAMS), &bytes)?;
        let text = toml::to_string(&manifest).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        fs::write(dir.join(CHECKPOINT_MANIFEST), text)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointManifest), NnError> {
        let mpath = dir.join(CHECKPOINT_MANIFEST);
        let text = fs::read_to_string(&mpath)
            .map_err(|e| NnError::Checkpoint(format!("{}: {e}", mpath.display())))?;
        let manifest: CheckpointManifest =
            toml::from_str(&text).map_err(|e| NnError::Checkpoint(format!("{}: {e}", mpath.display())))?;
        let ppath = dir.join(CHECKPOINT_PARAMS);
        let bytes = fs::read(&ppath).map_err(|e| NnError::Checkpoint(format!("{}: {e}", ppath.display())))?;
        if bytes_hash(&bytes) != manifest.params_sha256 {
            return Err(NnError::Checkpoint(format!("{} does not match its manifest", ppath.display())));
        }
        let mut state = ModelState::new(manifest.model.clone(), manifest.n_clusters, manifest.d_x)?;
        let tensors = read_snapshot(&bytes)?;
        if tensors.len() != state.params.list.len() {
            return Err(NnError::Checkpoint(format!(
                "snapshot has {} tensors, model needs {}",
                tensors.len(),
                state.params.list.len()
            )));
        }
        for (p, (name, t)) in state.params.list.iter_mut().zip(tensors) {
            if p.name != name || p.value.shape() != t.shape() {
                return Err(NnError::Checkpoint(format!("tensor `{name}` does not fit parameter `{}`", p.name)));
            }
            p.value = t;
        }
        state.references = manifest.references.clone();
        Ok((state, manifest))
    }

    /// Hash of the parameter values, for reproducibility checks.
    pub fn fingerprint(&self) -> String {
        let tensors: Vec<_> = self
            .params
            .list
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut h = bytes_hash(&write_snapshot(&tensors));
        h.push_str(&config_hash(&self.references));
        bytes_hash(h.as_bytes())
    }
}

