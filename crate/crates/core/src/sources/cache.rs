//! Content-addressed store of unpacked sources.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::util::{remove_dir_if_exists, sha256_hex, temp_sibling};

pub const CACHE_ENV: &str = "COHORT_CACHE";

#[derive(Debug, Clone)]
pub struct SourceCache {
    root: PathBuf,
}

impl SourceCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key(parts: &[&str]) -> String {
        sha256_hex(&parts.iter().map(|p| p.as_bytes()).collect::<Vec<_>>())
    }

    pub fn object_path(&self, key: &str) -> PathBuf {
        self.root.join("objects").join(key)
    }

    /// Returns the directory stored under `key`, filling it with `fill` on
    /// first use. `fill` writes into a private temporary directory which is
    /// then renamed into place; when two callers race, the loser's copy is
    /// discarded and both see the winner's.
    pub fn get_or_create<E>(
        &self,
        key: &str,
        fill: impl FnOnce(&Path) -> Result<(), E>,
    ) -> Result<PathBuf, E>
    where
        E: From<io::Error>,
    {
        let dest = self.object_path(key);
        if dest.is_dir() {
            return Ok(dest);
        }
        fs::create_dir_all(self.root.join("objects"))?;
        let tmp = temp_sibling(&dest, "fill");
        fs::create_dir_all(&tmp)?;
        if let Err(e) = fill(&tmp) {
            let _ = remove_dir_if_exists(&tmp);
            return Err(e);
        }
        match fs::rename(&tmp, &dest) {
            Ok(()) => Ok(dest),
            Err(_) if dest.is_dir() => {
                remove_dir_if_exists(&tmp)?;
                Ok(dest)
            }
            Err(e) => {
                let _ = remove_dir_if_exists(&tmp);
                Err(e.into())
            }
        }
    }
}
