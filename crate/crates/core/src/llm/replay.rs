use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{request_hash, LlmClient, LlmError, LlmRequest, LlmResponse};

/// One recorded exchange, stored as `<hash>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub hash: String,
    pub request: LlmRequest,
    pub response: LlmResponse,
}

fn entry_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.json"))
}

/// Serves recorded responses by request hash. Never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    dir: PathBuf,
}

impl ReplayClient {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(LlmError::Transcript(format!(
                "replay directory {} does not exist",
                dir.display()
            )));
        }
        Ok(ReplayClient { dir })
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let hash = request_hash(request);
        let path = entry_path(&self.dir, &hash);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LlmError::TranscriptMiss { hash })
            }
            Err(e) => return Err(e.into()),
        };
        let entry: TranscriptEntry = serde_json::from_slice(&bytes)
            .map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        Ok(entry.response)
    }
}

/// Forwards to an inner client and persists every exchange.
pub struct RecordingClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(RecordingClient { inner, dir })
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let response = self.inner.complete(request)?;
        let hash = request_hash(request);
        let entry = TranscriptEntry {
            hash: hash.clone(),
            request: request.clone(),
            response: response.clone(),
        };
        let bytes = serde_json::to_vec_pretty(&entry).expect("transcript serializes");
        let path = entry_path(&self.dir, &hash);
        let tmp = path.with_extension("tmp~");
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)?;
        Ok(response)
    }
}
