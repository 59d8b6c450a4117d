use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EpisodeRecord;
use crate::checkpoint::sha256_hex;
use crate::env::DecPomdpSpec;
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetMode {
    Medium,
    MediumReplay,
}

impl FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "medium" => Ok(Self::Medium),
            "medium-replay" => Ok(Self::MediumReplay),
            _ => Err(Error::Config(format!(
                "dataset mode must be medium or medium-replay, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Medium => "medium",
            Self::MediumReplay => "medium-replay",
        })
    }
}

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub env: String,
    pub n_agents: usize,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub mode: String,
    pub behavior_checkpoint: String,
    pub behavior_mean_return: f64,
    pub episodes: usize,
}

impl DatasetMeta {
    pub fn check_spec(&self, spec: &DecPomdpSpec) -> Result<()> {
        let ours = (
            self.n_agents,
            self.state_dim,
            self.obs_dim,
            self.action_dim,
            self.horizon,
        );
        let theirs = (
            spec.n_agents,
            spec.state_dim,
            spec.obs_dim,
            spec.action_dim,
            spec.horizon,
        );
        if ours != theirs {
            return Err(Error::Config(format!(
                "dataset dims {ours:?} do not match environment {theirs:?}"
            )));
        }
        Ok(())
    }
}

/// Offline episodes plus where they came from, stored as JSON lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub episodes: Vec<EpisodeRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn mean_return(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.episode_return).sum::<f64>() / self.episodes.len() as f64
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Config(format!("dataset metadata: {e}")))?;
        out.push(b'\n');
        for ep in &self.episodes {
            serde_json::to_writer(&mut out, ep)
                .map_err(|e| Error::Config(format!("episode {}: {e}", ep.seed)))?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::format(origin, "dataset is not UTF-8"))?;
        let mut lines = text.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::format(origin, "empty dataset file"))?;
        let meta: DatasetMeta = serde_json::from_str(head)
            .map_err(|e| Error::format(origin, format!("metadata line: {e}")))?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported dataset version {}", meta.format_version),
            ));
        }
        let episodes = lines
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str::<EpisodeRecord>(line)
                    .map_err(|e| Error::format(origin, format!("line {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if episodes.len() != meta.episodes {
            return Err(Error::format(
                origin,
                format!(
                    "metadata announces {} episodes, file holds {}",
                    meta.episodes,
                    episodes.len()
                ),
            ));
        }
        for ep in &episodes {
            ep.validate(meta.horizon)
                .map_err(|e| Error::format(origin, e.to_string()))?;
        }
        Ok(Self { meta, episodes })
    }

    /// Writes the file and returns its sha256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
