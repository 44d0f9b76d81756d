//! Line-delimited episode files, the sealed latent file and dataset manifests.
//!
//! Episode lines carry `user_id`, `x`, `touches` (`touch_id`, `cluster_id`,
//! `timestamp`, `proxy_score`), `y` and `latent_handle`. Nothing derived from the
//! latent draws is written there.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Episode, LatentStore, ScmConfig, ScmError};
use crate::digest::config_hash;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub n_episodes: usize,
    pub episodes_sha256: String,
}

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const LATENTS_FILE: &str = "latents.sealed.jsonl";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn episodes_to_jsonl(episodes: &[Episode]) -> String {
    let mut out = String::new();
    for ep in episodes {
        out.push_str(&serde_json::to_string(ep).expect("episode serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_episodes(text: &str) -> Result<Vec<Episode>, ScmError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ScmError::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct LatentLine {
    handle: String,
    w: f64,
    m: f64,
    eps: f64,
}

pub fn latents_to_jsonl(store: &LatentStore) -> String {
    let mut out = String::new();
    for (handle, l) in &store.entries {
        let line = LatentLine {
            handle: handle.clone(),
            w: l.w,
            m: l.m,
            eps: l.eps,
        };
        out.push_str(&serde_json::to_string(&line).expect("latent serializes"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(
    dir: &Path,
    config: &ScmConfig,
    episodes: &[Episode],
    latents: &LatentStore,
) -> Result<DatasetManifest, ScmError> {
    fs::create_dir_all(dir)?;
    let body = episodes_to_jsonl(episodes);
    let manifest = DatasetManifest {
        format_version: 1,
        config_hash: config_hash(config),
        seed: config.seed,
        n_episodes: episodes.len(),
        episodes_sha256: crate::digest::bytes_hash(body.as_bytes()),
    };
    fs::File::create(dir.join(EPISODES_FILE))?.write_all(body.as_bytes())?;
    fs::write(dir.join(LATENTS_FILE), latents_to_jsonl(latents))?;
    fs::write(
        dir.join(MANIFEST_FILE),
        toml::to_string(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>, ScmError> {
    let file = fs::File::open(path).map_err(|e| ScmError::Missing(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ScmError::Parse(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Reads the sealed latent file. Only the oracle and evaluation paths call this.
pub fn read_latents(path: &Path) -> Result<LatentStore, ScmError> {
    let text = fs::read_to_string(path).map_err(|e| ScmError::Missing(format!("{}: {e}", path.display())))?;
    let mut store = LatentStore::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: LatentLine = serde_json::from_str(line).map_err(|e| ScmError::Parse(format!("line {}: {e}", i + 1)))?;
        store.entries.insert(
            l.handle,
            super::Latent {
                w: l.w,
                m: l.m,
                eps: l.eps,
            },
        );
    }
    Ok(store)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, ScmError> {
    let text = fs::read_to_string(path).map_err(|e| ScmError::Missing(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ScmError::Parse(e.to_string()))
}
