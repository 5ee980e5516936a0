//! Content-addressed PNG store: `<root>/<first two hex>/<sha256>.png`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::ImageFormat;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("image store I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bytes are not a decodable PNG: {0}")]
    NotPng(String),
    #[error("`{0}` is not a 64-character hex SHA-256")]
    BadHash(String),
    #[error("no stored image with hash {0}")]
    Missing(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Fails unless `bytes` decode as a PNG image.
pub fn check_png(bytes: &[u8]) -> Result<(), StoreError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map(|_| ())
        .map_err(|e| StoreError::NotPng(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct ImageStore {
    root: PathBuf,
}

impl ImageStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, hash: &str) -> Result<PathBuf, StoreError> {
        if !is_hash(hash) {
            return Err(StoreError::BadHash(hash.to_string()));
        }
        Ok(self.root.join(&hash[..2]).join(format!("{hash}.png")))
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.path_for(hash).map(|p| p.is_file()).unwrap_or(false)
    }

    /// Stores PNG bytes under their SHA-256 and returns the hash. Storing the
    /// same bytes again is a no-op. Writes go to a temporary file in the
    /// target directory and are renamed into place, so concurrent writers of
    /// the same content never expose a partial file.
    pub fn store(&self, bytes: &[u8]) -> Result<String, StoreError> {
        check_png(bytes)?;
        let hash = sha256_hex(bytes);
        let path = self.path_for(&hash)?;
        if path.is_file() {
            return Ok(hash);
        }
        let dir = path.parent().expect("hash path has a parent");
        let io = |source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(bytes).and_then(|_| tmp.as_file().sync_all()).map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(hash)
    }

    pub fn load(&self, hash: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.path_for(hash)?;
        fs::read(&path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                StoreError::Missing(hash.to_string())
            } else {
                StoreError::Io { path, source }
            }
        })
    }

    /// All hashes present in the store, sorted.
    pub fn hashes(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        let read = |p: &Path| {
            fs::read_dir(p).map_err(|source| StoreError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        if !self.root.is_dir() {
            return Ok(out);
        }
        for shard in read(&self.root)? {
            let shard = shard.map_err(|source| StoreError::Io {
                path: self.root.clone(),
                source,
            })?;
            if !shard.path().is_dir() {
                continue;
            }
            for entry in read(&shard.path())?.flatten() {
                let name = entry.file_name();
                if let Some(hash) = name.to_str().and_then(|n| n.strip_suffix(".png")) {
                    if is_hash(hash) {
                        out.push(hash.to_string());
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }
}
