//! Installing resolved packages into a library with provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::manifest::{AnyManifest, ManifestEntry, SourceType, VersionPin};
use crate::metadata::{serialize_dcf, DcfRecord, PackageVersion};
use crate::repostore::{build_jit_repo, index::tarball_name, CONTRIB_DIR};
use crate::resolver::{ResolvedPackage, Resolver};
use crate::sources::Fetcher;
use crate::util::{
    remove_dir_if_exists, temp_sibling, timestamp_now, unpack_tarball, write_atomic,
};

use super::{LibError, LibraryStore};

pub const PROVENANCE_FIELDS: [&str; 6] = [
    "InstallSourceType",
    "InstallSourceLocation",
    "InstallBranch",
    "InstallSubdir",
    "InstallCommit",
    "InstallDate",
];

/// Where an installed package came from, stored in its DESCRIPTION.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source_type: SourceType,
    pub location: String,
    pub branch: Option<String>,
    pub subdir: Option<String>,
    /// Present exactly when the source is an SCM history.
    pub commit: Option<String>,
    pub date: String,
}

impl Provenance {
    pub fn for_package(pkg: &ResolvedPackage) -> Self {
        let origin = pkg.origin();
        let scm = origin.source_type.is_scm();
        Self {
            source_type: origin.source_type,
            location: origin.url.clone(),
            branch: scm.then(|| origin.branch_or_default().to_string()),
            subdir: scm.then(|| origin.subdir_or_root().to_string()),
            commit: if scm {
                pkg.commit().map(String::from)
            } else {
                None
            },
            date: timestamp_now(),
        }
    }

    pub fn stamp(&self, rec: &mut DcfRecord) {
        for f in PROVENANCE_FIELDS {
            rec.remove(f);
        }
        rec.set("InstallSourceType", self.source_type.as_str());
        rec.set("InstallSourceLocation", self.location.clone());
        if let Some(b) = &self.branch {
            rec.set("InstallBranch", b.clone());
        }
        if let Some(s) = &self.subdir {
            rec.set("InstallSubdir", s.clone());
        }
        if let Some(c) = &self.commit {
            rec.set("InstallCommit", c.clone());
        }
        rec.set("InstallDate", self.date.clone());
    }

    pub fn from_record(rec: &DcfRecord) -> Option<Self> {
        Some(Self {
            source_type: rec.get("InstallSourceType")?.parse().ok()?,
            location: rec.get("InstallSourceLocation")?.to_string(),
            branch: rec.get("InstallBranch").map(String::from),
            subdir: rec.get("InstallSubdir").map(String::from),
            commit: rec.get("InstallCommit").map(String::from),
            date: rec.get("InstallDate").unwrap_or_default().to_string(),
        })
    }

    /// The manifest entry that retrieves this package again.
    pub fn to_entry(&self, name: &str) -> ManifestEntry {
        let mut e = ManifestEntry::new(name, self.source_type, self.location.clone());
        if self.source_type.is_scm() {
            e.branch = self.branch.clone();
            e.subdir = self.subdir.clone();
        }
        e
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstallSummary {
    pub installed: Vec<(String, PackageVersion)>,
    /// Already present at the planned version.
    pub skipped: Vec<(String, PackageVersion)>,
}

/// Undo log for one install call.
struct Txn {
    lib: PathBuf,
    done: Vec<(String, Option<PathBuf>)>,
}

impl Txn {
    fn rollback(self) {
        for (name, backup) in self.done.into_iter().rev() {
            let dest = self.lib.join(&name);
            let _ = remove_dir_if_exists(&dest);
            if let Some(b) = backup {
                let _ = fs::rename(b, dest);
            }
        }
    }

    fn commit(self) {
        for (_, backup) in self.done {
            if let Some(b) = backup {
                let _ = remove_dir_if_exists(&b);
            }
        }
    }
}

impl LibraryStore {
    /// Resolves `targets` against `source`, builds a transient repository
    /// holding the plan, and unpacks each package into `lib` with its
    /// DESCRIPTION stamped with provenance. Packages already visible from
    /// `lib` at the planned version are skipped. If any package fails, the
    /// packages installed by this call are removed again.
    pub(super) fn install_unlocked(
        &self,
        lib: &str,
        targets: &BTreeMap<String, VersionPin>,
        source: &AnyManifest,
        fetcher: &Fetcher,
    ) -> Result<InstallSummary, LibError> {
        self.require_real(lib)?;
        let pins = match source {
            AnyManifest::Seeding(s) => s.pins().clone(),
            AnyManifest::Package(_) => BTreeMap::new(),
        };
        let plan = Resolver::new(source.base(), fetcher)
            .with_pins(pins)
            .resolve(targets, false)?;

        let tmp_root = self.root().join(".tmp");
        fs::create_dir_all(&tmp_root).map_err(|e| LibError::io(&tmp_root, e))?;
        let jit = temp_sibling(&tmp_root.join("jit"), "repo");
        let result = build_jit_repo(&plan, &jit)
            .map_err(LibError::from)
            .and_then(|repo| self.install_from_repo(lib, &plan.into_packages(), &repo));
        let _ = remove_dir_if_exists(&jit);
        result
    }

    fn install_from_repo(
        &self,
        lib: &str,
        plan: &[ResolvedPackage],
        repo: &Path,
    ) -> Result<InstallSummary, LibError> {
        let visible = self.available(lib)?;
        let lib_dir = self.lib_dir(lib);
        let mut summary = InstallSummary::default();
        let mut txn = Txn {
            lib: lib_dir.clone(),
            done: Vec::new(),
        };
        for pkg in plan {
            if visible
                .get(&pkg.name)
                .is_some_and(|p| p.version() == &pkg.version)
            {
                summary
                    .skipped
                    .push((pkg.name.clone(), pkg.version.clone()));
                continue;
            }
            match self.install_one(&lib_dir, pkg, repo) {
                Ok(backup) => {
                    txn.done.push((pkg.name.clone(), backup));
                    summary
                        .installed
                        .push((pkg.name.clone(), pkg.version.clone()));
                }
                Err(e) => {
                    txn.rollback();
                    return Err(e);
                }
            }
        }
        txn.commit();
        Ok(summary)
    }

    /// Returns the displaced previous install, if any.
    fn install_one(
        &self,
        lib_dir: &Path,
        pkg: &ResolvedPackage,
        repo: &Path,
    ) -> Result<Option<PathBuf>, LibError> {
        let fail = |reason: String| LibError::Install {
            name: pkg.name.clone(),
            reason,
        };
        let tarball = repo
            .join(CONTRIB_DIR)
            .join(tarball_name(&pkg.name, &pkg.version));
        let bytes = fs::read(&tarball).map_err(|e| fail(format!("{}: {e}", tarball.display())))?;
        let dest = lib_dir.join(&pkg.name);
        let staging = temp_sibling(&dest, "install");
        unpack_tarball(&bytes, &staging).map_err(|e| fail(e.to_string()))?;
        let unpacked = staging.join(&pkg.name);
        let stamped = (|| {
            let desc_path = unpacked.join("DESCRIPTION");
            let mut record = pkg.source.description.record.clone();
            Provenance::for_package(pkg).stamp(&mut record);
            write_atomic(&desc_path, serialize_dcf(&[record])).map_err(|e| fail(e.to_string()))?;
            let backup = if dest.exists() {
                let b = temp_sibling(&dest, "previous");
                fs::rename(&dest, &b).map_err(|e| fail(e.to_string()))?;
                Some(b)
            } else {
                None
            };
            if let Err(e) = fs::rename(&unpacked, &dest) {
                if let Some(b) = &backup {
                    let _ = fs::rename(b, &dest);
                }
                return Err(fail(e.to_string()));
            }
            Ok(backup)
        })();
        let _ = remove_dir_if_exists(&staging);
        stamped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::PackageManifest;
    use crate::sources::SourceCache;
    use cohort_testkit::{read_marker, write_package, FixtureRepo};

    #[test]
    fn provenance_round_trips_through_record() {
        let p = Provenance {
            source_type: SourceType::Git,
            location: "https://example.org/r.git".into(),
            branch: Some("main".into()),
            subdir: Some("pkgs/x".into()),
            commit: Some("abc123".into()),
            date: "2024-01-01T00:00:00Z".into(),
        };
        let mut rec = DcfRecord::new();
        rec.set("Package", "x");
        rec.set("InstallCommit", "stale");
        p.stamp(&mut rec);
        assert_eq!(Provenance::from_record(&rec).unwrap(), p);
        let e = p.to_entry("x");
        assert_eq!(e.branch.as_deref(), Some("main"));
        assert_eq!(e.subdir.as_deref(), Some("pkgs/x"));

        let local = Provenance {
            source_type: SourceType::LocalDir,
            location: "/src/x".into(),
            branch: None,
            subdir: None,
            commit: None,
            date: String::new(),
        };
        let mut rec = DcfRecord::new();
        local.stamp(&mut rec);
        assert!(!rec.contains_key("InstallCommit"));
        assert!(Provenance::from_record(&DcfRecord::new()).is_none());
    }

    #[test]
    fn failed_install_restores_previous_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut repo = FixtureRepo::create(&dir.path().join("repo"));
        repo.add("alpha", "1.2", &[], "alpha-new");
        repo.add("beta", "1.0", &[("Imports", "alpha (>= 1.1)")], "beta");
        let m = PackageManifest::with_dep_repos(vec![], vec![repo.url()]).unwrap();
        let fetcher = Fetcher::new(SourceCache::new(dir.path().join("cache")));

        let store = LibraryStore::open(dir.path().join("store")).unwrap();
        store.create("lib").unwrap();
        write_package(
            &store.lib_dir("lib").join("alpha"),
            "alpha",
            "1.0",
            &[],
            "alpha-old",
        );

        let plan = Resolver::new(&m, &fetcher)
            .resolve(
                &BTreeMap::from([("beta".to_string(), VersionPin::Latest)]),
                false,
            )
            .unwrap();
        assert_eq!(plan.names(), ["alpha", "beta"]);
        let jit = build_jit_repo(&plan, &dir.path().join("jit")).unwrap();
        fs::remove_file(jit.join(CONTRIB_DIR).join("beta_1.0.tar.gz")).unwrap();

        let err = store
            .install_from_repo("lib", &plan.into_packages(), &jit)
            .unwrap_err();
        assert!(
            matches!(err, LibError::Install { ref name, .. } if name == "beta"),
            "{err}"
        );
        let alpha = store.lookup("lib", "alpha").unwrap().unwrap();
        assert_eq!(alpha.version().to_string(), "1.0");
        assert_eq!(read_marker(&alpha.path), "alpha-old");
        assert!(store.lookup("lib", "beta").unwrap().is_none());
        let leftovers: Vec<_> = fs::read_dir(store.lib_dir("lib")).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
