//! Retrieving package sources from every supported location type.
//!
//! Retrieval happens in two steps. [`Fetcher::locate`] decides which exact
//! version, commit and file a request maps to, reading only metadata
//! (indexes, a DESCRIPTION at a commit, a tarball member). Then
//! [`Fetcher::materialize`] produces a local source tree, going through the
//! content-addressed cache. Only the second step counts as a fetch.

mod cache;
mod history;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

pub use cache::{SourceCache, CACHE_ENV};
pub use history::{
    description_path, earliest_commit_for_version, GitHistory, History, SnapshotHistory,
};

use crate::location::{Location, LocationError};
use crate::manifest::{ManifestEntry, SourceType, VersionPin};
use crate::metadata::{parse_dcf, Description, DescriptionError, PackageVersion};
use crate::repostore::index::{tarball_name, IndexError, RepoIndex, CONTRIB_DIR};
use crate::util::{read_tarball_member, unpack_tarball};

/// One place that was searched for a package, and what was found there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Searched {
    pub location: String,
    pub seen: Vec<PackageVersion>,
    pub note: Option<String>,
}

impl Searched {
    pub fn seen(location: impl Into<String>, seen: Vec<PackageVersion>) -> Self {
        Self {
            location: location.into(),
            seen,
            note: None,
        }
    }

    pub fn failed(location: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            seen: Vec::new(),
            note: Some(note.into()),
        }
    }
}

impl fmt::Display for Searched {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.location)?;
        if let Some(note) = &self.note {
            return f.write_str(note);
        }
        if self.seen.is_empty() {
            f.write_str("no versions")
        } else {
            let vs: Vec<_> = self.seen.iter().map(ToString::to_string).collect();
            write!(f, "versions {}", vs.join(", "))
        }
    }
}

fn format_searched(searched: &[Searched]) -> String {
    searched
        .iter()
        .map(|s| format!("\n  - {s}"))
        .collect::<String>()
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("{location}: unreachable: {message}")]
    Unreachable { location: String, message: String },
    #[error("{location}: branch `{branch}` not found")]
    BranchNotFound { location: String, branch: String },
    #[error("{command}: {message}")]
    Git { command: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("source cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error(transparent)]
    Location(#[from] LocationError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{location}: bad DESCRIPTION: {source}")]
    Description {
        location: String,
        #[source]
        source: DescriptionError,
    },
    #[error("{location}: DESCRIPTION names package `{found}`, expected `{expected}`")]
    NameMismatch {
        location: String,
        expected: String,
        found: String,
    },
    #[error("{location}: requested {name} {requested} but DESCRIPTION has {found}")]
    VersionMismatch {
        location: String,
        name: String,
        requested: PackageVersion,
        found: PackageVersion,
    },
    #[error("{name} {requested} not found; searched:{}", format_searched(.searched))]
    NotFound {
        name: String,
        requested: VersionPin,
        searched: Vec<Searched>,
    },
}

impl SourceError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// What this error contributes to a not-found report.
    pub fn into_searched(self, location: &str) -> Vec<Searched> {
        match self {
            Self::NotFound { searched, .. } => searched,
            Self::VersionMismatch { found, .. } => vec![Searched::seen(location, vec![found])],
            other => vec![Searched::failed(location, other.to_string())],
        }
    }
}

/// How a located package is turned into a local tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Used in place.
    Dir(PathBuf),
    Tarball(String),
    Commit {
        url: String,
        rev: String,
        subdir: String,
    },
    Snapshot {
        root: PathBuf,
        rev: String,
        subdir: String,
    },
}

/// The outcome of [`Fetcher::locate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Located {
    /// The entry that was searched. Synthesized for repository and archive
    /// lookups that do not come from a manifest.
    pub entry: ManifestEntry,
    pub version: PackageVersion,
    pub commit: Option<String>,
    /// Metadata read while locating: the DESCRIPTION itself, or the
    /// repository index row when the package came from an index.
    pub description: Description,
    pub payload: Payload,
}

/// A local source directory with a DESCRIPTION at its root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceTree {
    pub path: PathBuf,
    pub origin: ManifestEntry,
    pub commit: Option<String>,
    pub resolved_version: PackageVersion,
    pub description: Description,
}

/// `<root>/<name>/<name>_<version>.tar.gz`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveLayout {
    pub root: String,
}

impl ArchiveLayout {
    pub fn new(root: impl Into<String>) -> Self {
        Self { root: root.into() }
    }

    pub fn tarball(&self, name: &str, version: &PackageVersion) -> Location {
        Location::parse(&self.root)
            .join(name)
            .join(&tarball_name(name, version))
    }
}

/// Versions of `name` in an archive tree, ascending. A missing package
/// directory yields an empty list; files that do not follow the naming
/// convention are ignored.
pub fn list_archive_versions(
    layout: &ArchiveLayout,
    name: &str,
) -> Result<Vec<PackageVersion>, SourceError> {
    let root = Location::parse(&layout.root);
    let root = root.local_or_err()?;
    if !root.is_dir() {
        return Err(SourceError::Unreachable {
            location: layout.root.clone(),
            message: "archive root is not a readable directory".into(),
        });
    }
    let dir = root.join(name);
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(SourceError::io(&dir, e)),
    };
    let prefix = format!("{name}_");
    let mut versions: Vec<PackageVersion> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let file = e.file_name().into_string().ok()?;
            let v = file.strip_prefix(&prefix)?.strip_suffix(".tar.gz")?;
            PackageVersion::parse(v).ok()
        })
        .collect();
    versions.sort();
    versions.dedup();
    Ok(versions)
}

/// SCM histories a repository declares for its packages, read from
/// `<repo>/scm.dcf` (records with Package, Type, URL, optional Branch and
/// Subdir). A repository without the file declares none.
pub fn read_scm_map(repo: &str) -> Result<Vec<ManifestEntry>, SourceError> {
    let loc = Location::parse(repo).join("scm.dcf");
    let Some(text) = loc.read_optional()? else {
        return Ok(Vec::new());
    };
    let bad = |message: String| SourceError::Unreachable {
        location: loc.to_string(),
        message,
    };
    let records = parse_dcf(&text).map_err(|e| bad(e.to_string()))?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let field = |k: &str| {
                r.get(k)
                    .map(String::from)
                    .ok_or_else(|| bad(format!("record {}: missing {k}", i + 1)))
            };
            let ty: SourceType = field("Type")?.parse().map_err(bad)?;
            if !ty.is_scm() {
                return Err(bad(format!("record {}: `{ty}` is not an SCM type", i + 1)));
            }
            let mut e = ManifestEntry::new(field("Package")?, ty, field("URL")?);
            e.branch = Some(
                r.get("Branch")
                    .unwrap_or(crate::manifest::DEFAULT_BRANCH)
                    .to_string(),
            );
            e.subdir = Some(r.get("Subdir").unwrap_or(".").to_string());
            Ok(e)
        })
        .collect()
}

fn check_name(desc: &Description, expected: &str, location: &str) -> Result<(), SourceError> {
    if desc.name != expected {
        return Err(SourceError::NameMismatch {
            location: location.to_string(),
            expected: expected.to_string(),
            found: desc.name.clone(),
        });
    }
    Ok(())
}

fn parse_description(text: &str, location: &str) -> Result<Description, SourceError> {
    Description::parse(text).map_err(|source| SourceError::Description {
        location: location.to_string(),
        source,
    })
}

/// Finds the top-level `<dir>/DESCRIPTION` member of a package tarball.
fn tarball_description(bytes: &[u8], location: &str) -> Result<Description, SourceError> {
    let io_err = |e| SourceError::Io {
        path: location.to_string(),
        source: e,
    };
    let mut archive = tar::Archive::new(flate2::read::GzDecoder::new(bytes));
    let mut member = None;
    for entry in archive.entries().map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let path = entry.path().map_err(io_err)?.into_owned();
        let comps: Vec<_> = path.components().collect();
        if comps.len() == 2 && path.file_name().is_some_and(|f| f == "DESCRIPTION") {
            member = Some(path.display().to_string());
            break;
        }
    }
    let member = member.ok_or_else(|| SourceError::Unreachable {
        location: location.to_string(),
        message: "tarball has no top-level DESCRIPTION".into(),
    })?;
    let text = read_tarball_member(bytes, &member)
        .map_err(io_err)?
        .unwrap_or_default();
    parse_description(&text, location)
}

fn select_version<'a>(
    available: impl IntoIterator<Item = &'a PackageVersion>,
    pin: &VersionPin,
) -> Option<PackageVersion> {
    match pin {
        VersionPin::Latest => available.into_iter().max().cloned(),
        VersionPin::Exact(v) => available.into_iter().find(|a| *a == v).cloned(),
    }
}

/// Locates and materializes package sources, counting materializations.
#[derive(Debug)]
pub struct Fetcher {
    cache: SourceCache,
    refreshed: Mutex<HashSet<String>>,
    fetched: Mutex<Vec<String>>,
}

impl Fetcher {
    pub fn new(cache: SourceCache) -> Self {
        Self {
            cache,
            refreshed: Mutex::new(HashSet::new()),
            fetched: Mutex::new(Vec::new()),
        }
    }

    pub fn cache(&self) -> &SourceCache {
        &self.cache
    }

    /// Names materialized so far, in order.
    pub fn fetch_log(&self) -> Vec<String> {
        self.fetched.lock().unwrap().clone()
    }

    pub fn fetch_count(&self) -> usize {
        self.fetched.lock().unwrap().len()
    }

    /// Makes the next use of each git mirror fetch from its remote again.
    pub fn reset_refreshes(&self) {
        self.refreshed.lock().unwrap().clear();
    }

    /// Git mirrors are fetched at most once per `Fetcher`, or per
    /// [`Fetcher::reset_refreshes`].
    pub fn git_history(&self, url: &str) -> Result<GitHistory, SourceError> {
        let refresh = self.refreshed.lock().unwrap().insert(url.to_string());
        GitHistory::open(&self.cache, url, refresh)
    }

    pub fn earliest_commit_for_version(
        &self,
        url: &str,
        branch: &str,
        name: &str,
        subdir: &str,
        version: &PackageVersion,
    ) -> Result<String, SourceError> {
        let h = self.git_history(url)?;
        earliest_commit_for_version(&h, branch, name, subdir, version)
    }

    pub fn fetch_source(
        &self,
        entry: &ManifestEntry,
        pin: &VersionPin,
    ) -> Result<SourceTree, SourceError> {
        let located = self.locate(entry, pin)?;
        self.materialize(&located)
    }

    pub fn locate(&self, entry: &ManifestEntry, pin: &VersionPin) -> Result<Located, SourceError> {
        match entry.source_type {
            SourceType::LocalDir => self.locate_dir(entry, pin),
            SourceType::Tarball => self.locate_tarball(entry, pin),
            SourceType::Repository => self.locate_repository(entry, pin),
            SourceType::Archive => self.locate_archive(entry, pin),
            SourceType::Git => {
                let h = self.git_history(&entry.url)?;
                self.locate_history(&h, entry, pin, |rev| Payload::Commit {
                    url: entry.url.clone(),
                    rev: rev.to_string(),
                    subdir: entry.subdir_or_root().to_string(),
                })
            }
            SourceType::Svn => {
                let root = Location::parse(&entry.url).local_or_err()?.to_path_buf();
                let h = SnapshotHistory::open(&root)?;
                self.locate_history(&h, entry, pin, |rev| Payload::Snapshot {
                    root: root.clone(),
                    rev: rev.to_string(),
                    subdir: entry.subdir_or_root().to_string(),
                })
            }
        }
    }

    fn exact_check(
        &self,
        entry: &ManifestEntry,
        pin: &VersionPin,
        desc: &Description,
        location: &str,
    ) -> Result<(), SourceError> {
        check_name(desc, &entry.name, location)?;
        if let VersionPin::Exact(want) = pin {
            if &desc.version != want {
                return Err(SourceError::VersionMismatch {
                    location: location.to_string(),
                    name: entry.name.clone(),
                    requested: want.clone(),
                    found: desc.version.clone(),
                });
            }
        }
        Ok(())
    }

    fn locate_dir(&self, entry: &ManifestEntry, pin: &VersionPin) -> Result<Located, SourceError> {
        let dir = Location::parse(&entry.url).local_or_err()?.to_path_buf();
        let desc_path = dir.join("DESCRIPTION");
        let text = fs::read_to_string(&desc_path).map_err(|e| SourceError::Unreachable {
            location: entry.url.clone(),
            message: e.to_string(),
        })?;
        let desc = parse_description(&text, &desc_path.display().to_string())?;
        self.exact_check(entry, pin, &desc, &entry.url)?;
        Ok(Located {
            entry: entry.clone(),
            version: desc.version.clone(),
            commit: None,
            description: desc,
            payload: Payload::Dir(dir),
        })
    }

    fn locate_tarball(
        &self,
        entry: &ManifestEntry,
        pin: &VersionPin,
    ) -> Result<Located, SourceError> {
        let bytes =
            Location::parse(&entry.url)
                .read_bytes()
                .map_err(|e| SourceError::Unreachable {
                    location: entry.url.clone(),
                    message: e.to_string(),
                })?;
        let desc = tarball_description(&bytes, &entry.url)?;
        self.exact_check(entry, pin, &desc, &entry.url)?;
        Ok(Located {
            entry: entry.clone(),
            version: desc.version.clone(),
            commit: None,
            description: desc,
            payload: Payload::Tarball(entry.url.clone()),
        })
    }

    /// Looks `entry.name` up in the `PACKAGES` index of the repository at
    /// `repo` only.
    pub fn locate_in_index(
        &self,
        name: &str,
        repo: &str,
        pin: &VersionPin,
    ) -> Result<Located, SourceError> {
        let index = RepoIndex::read(repo).map_err(|e| SourceError::Unreachable {
            location: repo.to_string(),
            message: e.to_string(),
        })?;
        let rows: Vec<&Description> = index.versions_of(name).collect();
        let Some(version) = select_version(rows.iter().map(|r| &r.version), pin) else {
            return Err(SourceError::NotFound {
                name: name.to_string(),
                requested: pin.clone(),
                searched: vec![Searched::seen(
                    format!("{repo} (index)"),
                    rows.iter().map(|r| r.version.clone()).collect(),
                )],
            });
        };
        let row = rows
            .into_iter()
            .find(|r| r.version == version)
            .expect("selected from rows");
        let tarball = Location::parse(repo)
            .join(CONTRIB_DIR)
            .join(&tarball_name(name, &version));
        Ok(Located {
            entry: ManifestEntry::new(name, SourceType::Repository, repo),
            version,
            commit: None,
            description: row.clone(),
            payload: Payload::Tarball(tarball.to_string()),
        })
    }

    /// Index first, then the repository's own `Archive/` tree for exact
    /// versions no longer current.
    fn locate_repository(
        &self,
        entry: &ManifestEntry,
        pin: &VersionPin,
    ) -> Result<Located, SourceError> {
        let index_miss = match self.locate_in_index(&entry.name, &entry.url, pin) {
            Ok(mut found) => {
                found.entry = entry.clone();
                return Ok(found);
            }
            Err(e @ SourceError::NotFound { .. }) => e,
            Err(e) => return Err(e),
        };
        let mut searched = index_miss.into_searched(&entry.url);
        if let VersionPin::Exact(_) = pin {
            let archive = ManifestEntry::new(
                entry.name.clone(),
                SourceType::Archive,
                crate::repostore::index::archive_root(&entry.url),
            );
            match self.locate_archive(&archive, pin) {
                Ok(mut found) => {
                    found.entry = entry.clone();
                    return Ok(found);
                }
                Err(e) => searched.extend(e.into_searched(&archive.url)),
            }
        }
        Err(SourceError::NotFound {
            name: entry.name.clone(),
            requested: pin.clone(),
            searched,
        })
    }

    fn locate_archive(
        &self,
        entry: &ManifestEntry,
        pin: &VersionPin,
    ) -> Result<Located, SourceError> {
        let layout = ArchiveLayout::new(entry.url.clone());
        let versions = match Location::parse(&entry.url) {
            Location::Local(_) => list_archive_versions(&layout, &entry.name)?,
            // Remote archives cannot be listed; only exact requests work.
            Location::Remote(_) => pin.exact().cloned().into_iter().collect(),
        };
        let Some(version) = select_version(&versions, pin) else {
            return Err(SourceError::NotFound {
                name: entry.name.clone(),
                requested: pin.clone(),
                searched: vec![Searched::seen(entry.url.clone(), versions)],
            });
        };
        let tarball = layout.tarball(&entry.name, &version);
        let bytes = tarball.read_bytes().map_err(|e| {
            if e.is_not_found() {
                SourceError::NotFound {
                    name: entry.name.clone(),
                    requested: pin.clone(),
                    searched: vec![Searched::seen(entry.url.clone(), Vec::new())],
                }
            } else {
                e.into()
            }
        })?;
        let desc = tarball_description(&bytes, &tarball.to_string())?;
        self.exact_check(
            entry,
            &VersionPin::Exact(version.clone()),
            &desc,
            &tarball.to_string(),
        )?;
        Ok(Located {
            entry: entry.clone(),
            version,
            commit: None,
            description: desc,
            payload: Payload::Tarball(tarball.to_string()),
        })
    }

    fn locate_history(
        &self,
        history: &dyn History,
        entry: &ManifestEntry,
        pin: &VersionPin,
        payload: impl Fn(&str) -> Payload,
    ) -> Result<Located, SourceError> {
        let branch = entry.branch_or_default();
        let subdir = entry.subdir_or_root();
        let rev = match pin {
            VersionPin::Latest => history.head(branch)?,
            VersionPin::Exact(v) => {
                earliest_commit_for_version(history, branch, &entry.name, subdir, v)?
            }
        };
        let path = description_path(subdir);
        let location = format!("{}@{rev}:{path}", history.location());
        let text = history
            .read_at(std::slice::from_ref(&rev), &path)?
            .pop()
            .flatten()
            .ok_or_else(|| SourceError::Unreachable {
                location: location.clone(),
                message: "no DESCRIPTION at this revision".into(),
            })?;
        let desc = parse_description(&text, &location)?;
        check_name(&desc, &entry.name, &location)?;
        Ok(Located {
            entry: entry.clone(),
            version: desc.version.clone(),
            commit: Some(rev.clone()),
            description: desc,
            payload: payload(&rev),
        })
    }

    /// Produces the local tree for a located package and verifies that its
    /// DESCRIPTION matches what was located.
    pub fn materialize(&self, located: &Located) -> Result<SourceTree, SourceError> {
        let name = &located.entry.name;
        let version = located.version.to_string();
        let path = match &located.payload {
            Payload::Dir(dir) => dir.clone(),
            Payload::Tarball(url) => {
                let key = SourceCache::key(&["tarball", url, name, &version]);
                let obj = self
                    .cache
                    .get_or_create(&key, |tmp| -> Result<(), SourceError> {
                        let bytes = Location::parse(url).read_bytes()?;
                        unpack_tarball(&bytes, tmp).map_err(|e| SourceError::io(tmp, e))
                    })?;
                single_subdir(&obj)?
            }
            Payload::Commit { url, rev, subdir } => {
                let key = SourceCache::key(&["git", url, rev, subdir]);
                self.cache
                    .get_or_create(&key, |tmp| -> Result<(), SourceError> {
                        self.git_history(url)?.export(rev, subdir, tmp)
                    })?
            }
            Payload::Snapshot { root, rev, subdir } => {
                let key = SourceCache::key(&["snapshot", &root.display().to_string(), rev, subdir]);
                self.cache
                    .get_or_create(&key, |tmp| -> Result<(), SourceError> {
                        SnapshotHistory::open(root)?.export(rev, subdir, tmp)
                    })?
            }
        };

        let desc_path = path.join("DESCRIPTION");
        let text = fs::read_to_string(&desc_path).map_err(|e| SourceError::io(&desc_path, e))?;
        let loc = desc_path.display().to_string();
        let description = parse_description(&text, &loc)?;
        check_name(&description, name, &loc)?;
        if description.version != located.version {
            return Err(SourceError::VersionMismatch {
                location: loc,
                name: name.clone(),
                requested: located.version.clone(),
                found: description.version,
            });
        }
        self.fetched.lock().unwrap().push(name.clone());
        Ok(SourceTree {
            path,
            origin: located.entry.clone(),
            commit: located.commit.clone(),
            resolved_version: located.version.clone(),
            description,
        })
    }
}

/// Package tarballs unpack to one top-level directory.
fn single_subdir(dir: &Path) -> Result<PathBuf, SourceError> {
    let mut dirs = fs::read_dir(dir)
        .map_err(|e| SourceError::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir());
    match (dirs.next(), dirs.next()) {
        (Some(only), None) => Ok(only.path()),
        _ => Err(SourceError::Unreachable {
            location: dir.display().to_string(),
            message: "tarball must contain exactly one top-level directory".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cohort_testkit::{read_marker, write_package, Ecosystem, FixtureRepo};

    fn v(s: &str) -> PackageVersion {
        s.parse().unwrap()
    }

    fn exact(s: &str) -> VersionPin {
        VersionPin::Exact(v(s))
    }

    fn fetcher(dir: &Path) -> Fetcher {
        Fetcher::new(SourceCache::new(dir.join("cache")))
    }

    #[test]
    fn local_dir_exact_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let pkg = dir.path().join("pkgA");
        write_package(&pkg, "pkgA", "1.0", &[], "a");
        let f = fetcher(dir.path());
        let entry = ManifestEntry::new("pkgA", SourceType::LocalDir, pkg.display().to_string());
        let tree = f.fetch_source(&entry, &exact("1.0")).unwrap();
        assert_eq!(tree.resolved_version, v("1.0"));
        assert_eq!(tree.path, pkg);
        assert!(matches!(
            f.fetch_source(&entry, &exact("2.0")),
            Err(SourceError::VersionMismatch { .. })
        ));
        let wrong = ManifestEntry::new("pkgZ", SourceType::LocalDir, pkg.display().to_string());
        assert!(matches!(
            f.fetch_source(&wrong, &VersionPin::Latest),
            Err(SourceError::NameMismatch { .. })
        ));
        let gone = ManifestEntry::new("pkgA", SourceType::LocalDir, "/no/such/dir");
        assert!(matches!(
            f.fetch_source(&gone, &VersionPin::Latest),
            Err(SourceError::Unreachable { .. })
        ));
    }

    #[test]
    fn archive_path_convention() {
        let dir = tempfile::tempdir().unwrap();
        let repo = FixtureRepo::create(&dir.path().join("repo"));
        repo.archive("pkgB", "0.9-1", &[], "old");
        repo.archive("pkgB", "1.0", &[], "newer");
        let root = repo.archive_root().display().to_string();
        // Oracle: the convention spelled out by hand.
        let expected = format!("{root}/pkgB/pkgB_0.9-1.tar.gz");
        assert!(Path::new(&expected).is_file());

        let f = fetcher(dir.path());
        let entry = ManifestEntry::new("pkgB", SourceType::Archive, root.clone());
        let located = f.locate(&entry, &exact("0.9-1")).unwrap();
        assert_eq!(located.payload, Payload::Tarball(expected));
        let tree = f.materialize(&located).unwrap();
        assert_eq!(read_marker(&tree.path), "old");
        assert_eq!(
            f.fetch_source(&entry, &VersionPin::Latest)
                .unwrap()
                .resolved_version,
            v("1.0")
        );
        match f.fetch_source(&entry, &exact("2.0")) {
            Err(SourceError::NotFound { searched, .. }) => {
                assert_eq!(searched[0].seen, vec![v("0.9-1"), v("1.0")])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn list_archive_versions_cases() {
        let dir = tempfile::tempdir().unwrap();
        let repo = FixtureRepo::create(&dir.path().join("repo"));
        repo.archive("pkgB", "1.0", &[], "x");
        repo.archive("pkgB", "0.9-1", &[], "x");
        fs::write(repo.archive_root().join("pkgB/README"), "hi").unwrap();
        fs::write(repo.archive_root().join("pkgB/pkgB_bad.tar.gz"), "").unwrap();
        let layout = ArchiveLayout::new(repo.archive_root().display().to_string());
        assert_eq!(
            list_archive_versions(&layout, "pkgB").unwrap(),
            vec![v("0.9-1"), v("1.0")]
        );
        assert!(list_archive_versions(&layout, "absent").unwrap().is_empty());
        let missing = ArchiveLayout::new(dir.path().join("nope").display().to_string());
        assert!(list_archive_versions(&missing, "pkgB").is_err());
    }

    #[test]
    fn git_latest_is_head_and_exact_uses_earliest_commit() {
        let dir = tempfile::tempdir().unwrap();
        let g = cohort_testkit::GitFixture::init(&dir.path().join("g"));
        g.commit_package(".", "pkg", "1.0", &[], "m1");
        let c11 = g.commit_package(".", "pkg", "1.1", &[], "m2");
        g.commit_package(".", "pkg", "1.1", &[], "m3");
        let head = g.commit_package(".", "pkg", "2.0", &[], "m4");
        let f = fetcher(dir.path());
        let entry = ManifestEntry::git("pkg", g.url(), "HEAD", ".");

        let latest = f.fetch_source(&entry, &VersionPin::Latest).unwrap();
        assert_eq!(
            (latest.commit.as_deref(), read_marker(&latest.path).as_str()),
            (Some(head.as_str()), "m4")
        );

        let old = f.fetch_source(&entry, &exact("1.1")).unwrap();
        assert_eq!(old.commit.as_deref(), Some(c11.as_str()));
        assert_eq!(read_marker(&old.path), "m2");
        assert_eq!(old.resolved_version, v("1.1"));
        assert_eq!(f.fetch_count(), 2);
    }

    #[test]
    fn ecosystem_sources_of_every_kind() {
        let dir = tempfile::tempdir().unwrap();
        let eco = Ecosystem::build(&dir.path().join("eco"));
        let f = fetcher(dir.path());

        let lazy = ManifestEntry::git("lazyeval", eco.lazyverse.url(), "main", "pkgs/lazyeval");
        let t = f.fetch_source(&lazy, &exact("0.1")).unwrap();
        assert_eq!(t.commit.as_ref(), Some(&eco.lazyeval_commits[0]));
        assert_eq!(read_marker(&t.path), "lazyeval-0.1");

        let eps = ManifestEntry::new(
            "epsilon",
            SourceType::Tarball,
            eco.epsilon_tarball.display().to_string(),
        );
        assert_eq!(
            read_marker(&f.fetch_source(&eps, &VersionPin::Latest).unwrap().path),
            "epsilon-1.0"
        );

        let repo = ManifestEntry::new("alpha", SourceType::Repository, eco.cran.url());
        assert_eq!(
            f.fetch_source(&repo, &VersionPin::Latest)
                .unwrap()
                .resolved_version,
            v("1.2.0")
        );
        // Not in the index any more, but in the repository's archive.
        let old = f.fetch_source(&repo, &exact("1.1.0")).unwrap();
        assert_eq!(read_marker(&old.path), "alpha-1.1.0");
        assert!(matches!(
            f.fetch_source(&repo, &exact("9.9")),
            Err(SourceError::NotFound { .. })
        ));
    }

    #[test]
    fn materialize_is_cached_by_commit() {
        let dir = tempfile::tempdir().unwrap();
        let eco = Ecosystem::build(&dir.path().join("eco"));
        let f = fetcher(dir.path());
        let entry = ManifestEntry::git("rpath", eco.rpath.url(), "HEAD", ".");
        let a = f.fetch_source(&entry, &exact("0.2.0")).unwrap();
        let b = f.fetch_source(&entry, &exact("0.2.0")).unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.commit.as_ref(), Some(&eco.rpath_commits[1]));
    }

    #[test]
    fn scm_map_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let repo = FixtureRepo::create(&dir.path().join("r"));
        assert!(read_scm_map(&repo.url()).unwrap().is_empty());
        repo.write_scm_map(&[
            ("p", "git", "/x", "dev", "sub"),
            ("q", "svn", "/y", "HEAD", "."),
        ]);
        let m = read_scm_map(&repo.url()).unwrap();
        assert_eq!(m[0], ManifestEntry::git("p", "/x", "dev", "sub"));
        assert_eq!(m[1].source_type, SourceType::Svn);
        repo.write_scm_map(&[("p", "local", "/x", "HEAD", ".")]);
        assert!(read_scm_map(&repo.url()).is_err());
    }

    #[test]
    fn not_found_message_lists_locations() {
        let err = SourceError::NotFound {
            name: "p".into(),
            requested: exact("1.0"),
            searched: vec![
                Searched::seen("a", vec![v("0.9")]),
                Searched::failed("b", "unreachable"),
                Searched::seen("c", vec![]),
            ],
        };
        assert_eq!(
            err.to_string(),
            "p 1.0 not found; searched:\n  - a: versions 0.9\n  - b: unreachable\n  - c: no versions"
        );
    }
}
