//! Package repositories: transient ones built for a single install, and
//! validated ones built incrementally from a manifest.

mod builder;
pub mod index;
mod state;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::resolver::{InstallPlan, ResolveError};
use crate::util::{pack_dir, remove_dir_if_exists, write_atomic};

pub use builder::{
    compute_dirty_set, make_repo, probe_targets, BuildOptions, BuildOutcome, Probe,
    CHECK_SRC_PLACEHOLDER,
};
pub use index::{RepoIndex, CONTRIB_DIR};
pub use state::{BuildRecord, BuildReport, BuildState, BuildStatus, REPORT_HEADER};

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad build state: {reason}")]
    State { path: String, reason: String },
    #[error("{name}: {source}")]
    Package {
        name: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: repository already exists")]
    Exists(String),
    #[error(transparent)]
    Index(#[from] index::IndexError),
    #[error(transparent)]
    Resolve(Box<ResolveError>),
}

impl From<ResolveError> for RepoError {
    fn from(e: ResolveError) -> Self {
        Self::Resolve(Box::new(e))
    }
}

impl RepoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Writes every package of `plan` as `src/contrib/<name>_<version>.tar.gz`
/// under `workdir`, plus the `PACKAGES` index, and returns `workdir`.
///
/// `workdir` may exist but must not already hold a repository. On failure
/// everything this call created is removed.
pub fn build_jit_repo(plan: &InstallPlan, workdir: &Path) -> Result<PathBuf, RepoError> {
    let contrib = index::contrib_dir(workdir);
    if contrib.exists() {
        return Err(RepoError::Exists(workdir.display().to_string()));
    }
    let created_root = !workdir.exists();
    let cleanup = if created_root {
        workdir.to_path_buf()
    } else if workdir.join("src").exists() {
        contrib.clone()
    } else {
        workdir.join("src")
    };
    let result = (|| {
        fs::create_dir_all(&contrib).map_err(|e| RepoError::io(&contrib, e))?;
        let mut idx = RepoIndex::default();
        for pkg in plan.packages() {
            let dest = contrib.join(index::tarball_name(&pkg.name, &pkg.version));
            pack_dir(pkg.path(), &pkg.name, &dest).map_err(|source| RepoError::Package {
                name: pkg.name.clone(),
                source,
            })?;
            idx.upsert(&pkg.source.description);
        }
        let path = contrib.join(index::INDEX_FILE);
        write_atomic(&path, idx.to_text()).map_err(|e| RepoError::io(&path, e))
    })();
    match result {
        Ok(()) => Ok(workdir.to_path_buf()),
        Err(e) => {
            let _ = remove_dir_if_exists(&cleanup);
            Err(e)
        }
    }
}
