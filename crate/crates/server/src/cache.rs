//! On-disk cache for derived per-image results (pre-segmentations, scores,
//! quality grades, enhanced renders), keyed by provider name and image
//! digest. Results are deterministic, so a cached file never goes stale.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::ApiError;

pub struct Cache {
    dir: PathBuf,
    counter: AtomicU64,
}

impl Cache {
    pub fn open(data_root: &Path) -> std::io::Result<Self> {
        let dir = data_root.join("cache");
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            counter: AtomicU64::new(0),
        })
    }

    fn path(&self, provider: &str, image_id: &str, suffix: &str) -> PathBuf {
        self.dir.join(provider).join(format!("{image_id}.{suffix}"))
    }

    pub fn get(&self, provider: &str, image_id: &str, suffix: &str) -> Option<Vec<u8>> {
        fs::read(self.path(provider, image_id, suffix)).ok()
    }

    /// Writes via a temporary file and rename, so readers never see a
    /// partial entry.
    pub fn put(&self, provider: &str, image_id: &str, suffix: &str, bytes: &[u8]) -> Result<(), ApiError> {
        let path = self.path(provider, image_id, suffix);
        let io = |e: std::io::Error| ApiError::internal(format!("cache write failed: {e}"));
        fs::create_dir_all(path.parent().expect("cache paths have a parent")).map_err(io)?;
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_extension(format!("tmp{}-{n}", std::process::id()));
        fs::write(&tmp, bytes).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }

    pub fn get_or_put(
        &self,
        provider: &str,
        image_id: &str,
        suffix: &str,
        compute: impl FnOnce() -> Result<Vec<u8>, ApiError>,
    ) -> Result<Vec<u8>, ApiError> {
        if let Some(hit) = self.get(provider, image_id, suffix) {
            return Ok(hit);
        }
        let bytes = compute()?;
        self.put(provider, image_id, suffix, &bytes)?;
        Ok(bytes)
    }
}
