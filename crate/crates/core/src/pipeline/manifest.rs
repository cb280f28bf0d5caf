use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Per-purpose seed derived from the run seed and a stream name.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Logical name, e.g. `latent`.
    pub name: String,
    /// Workspace-relative path for stage outputs; as configured for external inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub tool_version: String,
    pub seed: u64,
    pub created: String,
    pub config: serde_json::Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

impl Manifest {
    pub fn output(&self, name: &str) -> Option<&Artifact> {
        self.outputs.iter().find(|a| a.name == name)
    }

    pub fn path(workspace: &Path, stage: Stage) -> std::path::PathBuf {
        workspace.join(stage.name()).join("manifest.json")
    }

    pub fn read(workspace: &Path, stage: Stage) -> Result<Option<Self>, PipelineError> {
        let path = Self::path(workspace, stage);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, workspace: &Path) -> Result<(), PipelineError> {
        let path = Self::path(workspace, self.stage);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }

    /// Re-hashes every listed file. Workspace-relative paths resolve against
    /// `workspace`; other inputs resolve as written.
    pub fn verify(&self, workspace: &Path) -> Result<(), PipelineError> {
        for (role, list) in [("input", &self.inputs), ("output", &self.outputs)] {
            for a in list {
                let path = resolve(workspace, &a.path);
                let actual = hash_file(&path)?;
                if actual != a.sha256 {
                    return Err(PipelineError::Tampered {
                        stage: self.stage,
                        path: path.display().to_string(),
                        role,
                    });
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn resolve(workspace: &Path, path: &str) -> std::path::PathBuf {
    let p = Path::new(path);
    if p.is_absolute() || !path.starts_with("ws:") {
        p.to_path_buf()
    } else {
        workspace.join(&path[3..])
    }
}
