//! Content-addressed completion cache.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AugmentError, AugmentationKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub kind: AugmentationKind,
    pub prompt: String,
    pub response: String,
    pub model: String,
    pub temperature: f64,
    pub created_at: String,
}

pub fn cache_key(kind: AugmentationKind, prompt: &str, model: &str, temperature: f64) -> String {
    let mut h = Sha256::new();
    for part in [kind.as_str().as_bytes(), prompt.as_bytes(), model.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.update(temperature.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

/// Directory of `<key>.json` files. Writes go through a single lock.
#[derive(Debug)]
pub struct AugmentCache {
    dir: PathBuf,
    writer: Mutex<()>,
}

impl AugmentCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, AugmentError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| AugmentError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        Ok(Self {
            dir,
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Look up an entry, verifying that the stored prompt really is the one
    /// requested.
    pub fn get(
        &self,
        key: &str,
        kind: AugmentationKind,
        prompt: &str,
        model: &str,
    ) -> Result<Option<CacheEntry>, AugmentError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(AugmentError::Io {
                    path: path.display().to_string(),
                    source: e,
                })
            }
        };
        let corrupt = || AugmentError::CacheCorrupt(path.display().to_string());
        let entry: CacheEntry = serde_json::from_str(&text).map_err(|_| corrupt())?;
        if entry.kind != kind || entry.prompt != prompt || entry.model != model {
            return Err(corrupt());
        }
        Ok(Some(entry))
    }

    pub fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), AugmentError> {
        let _guard = self.writer.lock().unwrap();
        let path = self.path_for(key);
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let io = |e| AugmentError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let body = serde_json::to_string_pretty(entry).expect("cache entry serializes");
        fs::write(&tmp, body).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(Result::ok)
                    .filter(|e| e.path().extension().and_then(|x| x.to_str()) == Some("json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(prompt: &str) -> CacheEntry {
        CacheEntry {
            kind: AugmentationKind::Feedback,
            prompt: prompt.into(),
            response: "- ok".into(),
            model: "m".into(),
            temperature: 0.7,
            created_at: "t".into(),
        }
    }

    #[test]
    fn key_depends_on_every_component() {
        let base = cache_key(AugmentationKind::Feedback, "p", "m", 0.7);
        assert_eq!(base.len(), 64);
        assert_ne!(base, cache_key(AugmentationKind::Assumptions, "p", "m", 0.7));
        assert_ne!(base, cache_key(AugmentationKind::Feedback, "q", "m", 0.7));
        assert_ne!(base, cache_key(AugmentationKind::Feedback, "p", "n", 0.7));
        assert_ne!(base, cache_key(AugmentationKind::Feedback, "p", "m", 0.0));
    }

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = AugmentCache::open(dir.path()).unwrap();
        let key = cache_key(AugmentationKind::Feedback, "p", "m", 0.7);
        assert!(cache.get(&key, AugmentationKind::Feedback, "p", "m").unwrap().is_none());
        cache.put(&key, &entry("p")).unwrap();
        assert_eq!(cache.get(&key, AugmentationKind::Feedback, "p", "m").unwrap(), Some(entry("p")));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn mismatched_prompt_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = AugmentCache::open(dir.path()).unwrap();
        let key = cache_key(AugmentationKind::Feedback, "p", "m", 0.7);
        cache.put(&key, &entry("other prompt")).unwrap();
        assert!(matches!(
            cache.get(&key, AugmentationKind::Feedback, "p", "m"),
            Err(AugmentError::CacheCorrupt(_))
        ));
        fs::write(dir.path().join(format!("{key}.json")), "{not json").unwrap();
        assert!(matches!(
            cache.get(&key, AugmentationKind::Feedback, "p", "m"),
            Err(AugmentError::CacheCorrupt(_))
        ));
    }
}
