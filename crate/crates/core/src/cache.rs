//! Optional on-disk cache for oracle results, enabled by `PIROGOV_CACHE_DIR`.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const CACHE_ENV: &str = "PIROGOV_CACHE_DIR";

/// Content hash of a JSON key (serde_json writes object keys in sorted order).
pub fn content_hash(key: &Value) -> String {
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

fn path_for(kind: &str, key: &Value) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    Some(PathBuf::from(dir).join(format!("{kind}-{}.json", content_hash(key))))
}

/// Returns the cached value for `key`, computing and storing it on a miss.
/// Unreadable or stale entries are recomputed; write failures are ignored.
pub fn cached<T: Serialize + DeserializeOwned>(kind: &str, key: &Value, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let Some(path) = path_for(kind, key) else {
        return f();
    };
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(v) = serde_json::from_str::<T>(&text) {
            return Ok(v);
        }
    }
    let v = f()?;
    if let Some(parent) = path.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    if let Ok(text) = serde_json::to_string(&v) {
        let tmp = path.with_extension("tmp");
        if std::fs::write(&tmp, text).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hash_is_stable_and_key_sensitive() {
        let a = content_hash(&json!({"model": "hardcore", "n": 4}));
        let b = content_hash(&json!({"n": 4, "model": "hardcore"}));
        assert_eq!(a, b);
        assert_ne!(a, content_hash(&json!({"model": "hardcore", "n": 5})));
        assert_eq!(a.len(), 64);
    }
}
