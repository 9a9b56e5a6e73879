//! Content storage for build images and kernel logs. Every artifact is
//! a directory `<root>/<artifact_id>/` holding one payload file plus a
//! `meta.json` sidecar; logs are streamed through, never buffered whole.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact store I/O at {path}: {source}")]
    Storage {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("artifact {0} missing")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactRef {
    pub artifact_id: String,
}

impl ArtifactRef {
    pub fn new(id: impl Into<String>) -> ArtifactRef {
        ArtifactRef { artifact_id: id.into() }
    }
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn open(root: &Path) -> Result<ArtifactStore, ArtifactError> {
        fs::create_dir_all(root)
            .map_err(|e| ArtifactError::Storage { path: root.display().to_string(), source: e })?;
        Ok(ArtifactStore { root: root.to_path_buf() })
    }

    fn dir_of(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    /// Path of the payload file (`image` by default, `log` for streams).
    pub fn payload_path(&self, artifact: &ArtifactRef) -> PathBuf {
        let dir = self.dir_of(&artifact.artifact_id);
        let image = dir.join("image");
        if image.exists() { image } else { dir.join("log") }
    }

    pub fn exists(&self, artifact: &ArtifactRef) -> bool {
        self.dir_of(&artifact.artifact_id).is_dir()
    }

    pub fn put_bytes(
        &self,
        id: &str,
        payload_name: &str,
        bytes: &[u8],
        meta: &serde_json::Value,
    ) -> Result<ArtifactRef, ArtifactError> {
        let dir = self.dir_of(id);
        let wrap = |e: io::Error| ArtifactError::Storage { path: dir.display().to_string(), source: e };
        fs::create_dir_all(&dir).map_err(wrap)?;
        fs::write(dir.join(payload_name), bytes).map_err(wrap)?;
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(meta).expect("meta serializes"))
            .map_err(wrap)?;
        Ok(ArtifactRef::new(id))
    }

    /// Store a payload by copying from a reader in fixed-size chunks.
    pub fn put_stream(
        &self,
        id: &str,
        payload_name: &str,
        reader: &mut dyn Read,
        meta: &serde_json::Value,
    ) -> Result<ArtifactRef, ArtifactError> {
        let dir = self.dir_of(id);
        let wrap = |e: io::Error| ArtifactError::Storage { path: dir.display().to_string(), source: e };
        fs::create_dir_all(&dir).map_err(wrap)?;
        let file = File::create(dir.join(payload_name)).map_err(wrap)?;
        let mut out = BufWriter::new(file);
        io::copy(reader, &mut out).map_err(wrap)?;
        out.flush().map_err(wrap)?;
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(meta).expect("meta serializes"))
            .map_err(wrap)?;
        Ok(ArtifactRef::new(id))
    }

    pub fn read_bytes(&self, artifact: &ArtifactRef) -> Result<Vec<u8>, ArtifactError> {
        if !self.exists(artifact) {
            return Err(ArtifactError::Missing(artifact.artifact_id.clone()));
        }
        let path = self.payload_path(artifact);
        fs::read(&path)
            .map_err(|e| ArtifactError::Storage { path: path.display().to_string(), source: e })
    }

    pub fn open_stream(&self, artifact: &ArtifactRef) -> Result<Box<dyn Read>, ArtifactError> {
        if !self.exists(artifact) {
            return Err(ArtifactError::Missing(artifact.artifact_id.clone()));
        }
        let path = self.payload_path(artifact);
        let file = File::open(&path)
            .map_err(|e| ArtifactError::Storage { path: path.display().to_string(), source: e })?;
        Ok(Box::new(BufReader::new(file)))
    }

    pub fn read_meta(&self, artifact: &ArtifactRef) -> Result<serde_json::Value, ArtifactError> {
        let path = self.dir_of(&artifact.artifact_id).join("meta.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| ArtifactError::Storage { path: path.display().to_string(), source: e })?;
        Ok(serde_json::from_str(&text).unwrap_or(serde_json::Value::Null))
    }
}
