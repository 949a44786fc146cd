use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

/// Content-addressed on-disk response cache: one JSON file per
/// `sha256(model || 0x00 || prompt)`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    model: String,
    prompt: String,
    response: String,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| LlmError::Cache {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(model: &str, prompt: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(model.as_bytes());
        hasher.update([0u8]);
        hasher.update(prompt.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn path_for(&self, model: &str, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(model, prompt)))
    }

    pub fn get(&self, model: &str, prompt: &str) -> Result<Option<String>, LlmError> {
        let path = self.path_for(model, prompt);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(LlmError::Cache {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            }
        };
        let entry: Entry = serde_json::from_str(&text).map_err(|e| LlmError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        // a hash collision or a hand-edited file must not serve a wrong answer
        if entry.model != model || entry.prompt != prompt {
            return Ok(None);
        }
        Ok(Some(entry.response))
    }

    /// Writes atomically: temp file in the cache directory, then rename.
    pub fn put(&self, model: &str, prompt: &str, response: &str) -> Result<(), LlmError> {
        let path = self.path_for(model, prompt);
        let fail = |e: &dyn std::fmt::Display| LlmError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let entry = Entry {
            model: model.to_string(),
            prompt: prompt.to_string(),
            response: response.to_string(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| fail(&e))?;
        serde_json::to_writer_pretty(&mut tmp, &entry).map_err(|e| fail(&e))?;
        tmp.write_all(b"\n").map_err(|e| fail(&e))?;
        tmp.persist(&path).map_err(|e| fail(&e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache.get("m", "p").unwrap(), None);
        cache.put("m", "p", "CWE-798").unwrap();
        assert_eq!(cache.get("m", "p").unwrap().as_deref(), Some("CWE-798"));
        assert_eq!(cache.get("other", "p").unwrap(), None);
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn key_separates_model_and_prompt() {
        assert_ne!(ResponseCache::key("ab", "c"), ResponseCache::key("a", "bc"));
        assert_eq!(ResponseCache::key("m", "p").len(), 64);
    }
}
