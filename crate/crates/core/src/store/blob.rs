//! Content-addressed blob directory: `<root>/blobs/<first 2 hex>/<digest>`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::{is_hex_digest, sha256_hex};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlobRef {
    pub digest: String,
    pub size: u64,
}

pub struct BlobStore {
    root: PathBuf,
    tmp_counter: AtomicU64,
}

impl BlobStore {
    pub fn open(data_root: &Path) -> Result<Self, StoreError> {
        let root = data_root.join("blobs");
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn path_of(&self, digest: &str) -> PathBuf {
        self.root.join(&digest[..2]).join(digest)
    }

    /// Stores `bytes` under their digest. Existing blobs are not rewritten.
    pub fn put(&self, bytes: &[u8]) -> Result<BlobRef, StoreError> {
        let blob = BlobRef {
            digest: sha256_hex(bytes),
            size: bytes.len() as u64,
        };
        let path = self.path_of(&blob.digest);
        if fs::metadata(&path).map(|m| m.len() == blob.size).unwrap_or(false) {
            return Ok(blob);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir)?;
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = dir.join(format!(".{}.{}.{n}.tmp", blob.digest, std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(blob)
    }

    /// Reads a blob and re-verifies its digest.
    pub fn get(&self, blob: &BlobRef) -> Result<Vec<u8>, StoreError> {
        let bytes = self.get_digest(&blob.digest)?;
        if bytes.len() as u64 != blob.size {
            return Err(StoreError::CorruptBlob(blob.digest.clone()));
        }
        Ok(bytes)
    }

    pub fn get_digest(&self, digest: &str) -> Result<Vec<u8>, StoreError> {
        if !is_hex_digest(digest) {
            return Err(StoreError::UnknownBlob(digest.to_owned()));
        }
        let bytes = match fs::read(self.path_of(digest)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownBlob(digest.to_owned()))
            }
            Err(e) => return Err(e.into()),
        };
        if sha256_hex(&bytes) != digest {
            return Err(StoreError::CorruptBlob(digest.to_owned()));
        }
        Ok(bytes)
    }

    pub fn contains(&self, digest: &str) -> bool {
        is_hex_digest(digest) && self.path_of(digest).is_file()
    }
}
