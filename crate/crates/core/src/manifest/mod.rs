//! Package manifests and seeding manifests.
//!
//! A [`PackageManifest`] maps package names to the places their sources can
//! be retrieved from, plus an ordered list of fallback repositories for
//! anything not listed. A [`SeedingManifest`] filters a manifest down to a set
//! of names, each pinned to an exact version or left floating at `latest`.

mod shorthand;
mod tsv;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::location::LocationError;
use crate::metadata::{PackageVersion, VersionError};

pub use shorthand::manifest_from_shorthand;
pub use tsv::{
    load_manifest, manifest_to_string, parse_manifest, publish_manifest, serialize_manifest,
    DirTarget, FileTarget, ManifestTarget,
};

pub const DEFAULT_DEP_REPOS: &[&str] = &["https://cloud.r-project.org"];

/// Branch sentinel meaning "whatever the remote's default branch is".
pub const DEFAULT_BRANCH: &str = "HEAD";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("invalid package name `{0}`")]
    InvalidName(String),
    #[error("entry `{name}`: {reason}")]
    InvalidEntry { name: String, reason: String },
    #[error("invalid dependency repository `{0}`")]
    InvalidRepo(String),
    #[error("duplicate package `{0}`")]
    DuplicateName(String),
    #[error("malformed shorthand `{spec}`: {reason}")]
    Shorthand { spec: String, reason: &'static str },
    #[error("{location}: line {line}: {reason}")]
    Load {
        location: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Version(#[from] VersionError),
    #[error(transparent)]
    Location(#[from] LocationError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceType {
    Git,
    /// Linear revision history exported as numbered snapshot directories.
    Svn,
    Tarball,
    LocalDir,
    Repository,
    Archive,
}

impl SourceType {
    pub const ALL: [SourceType; 6] = [
        Self::Git,
        Self::Svn,
        Self::Tarball,
        Self::LocalDir,
        Self::Repository,
        Self::Archive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Git => "git",
            Self::Svn => "svn",
            Self::Tarball => "tarball",
            Self::LocalDir => "local",
            Self::Repository => "repository",
            Self::Archive => "archive",
        }
    }

    pub fn is_scm(self) -> bool {
        matches!(self, Self::Git | Self::Svn)
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown source type `{s}`"))
    }
}

pub fn is_valid_package_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_')
        && name != "NA"
}

/// Values stored in one cell of the tab-delimited manifest format.
fn check_cell(value: &str) -> Result<(), String> {
    if value.is_empty() {
        Err("empty value".into())
    } else if value == "NA" {
        Err("`NA` is reserved for absent values".into())
    } else if value.contains(['\t', '\n', '\r']) {
        Err("tabs and newlines are not allowed".into())
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ManifestEntry {
    pub name: String,
    pub source_type: SourceType,
    pub url: String,
    /// SCM only.
    pub branch: Option<String>,
    /// SCM only; `None` means the repository root.
    pub subdir: Option<String>,
    /// Opaque per-entry information, carried through untouched.
    pub extra: Option<String>,
}

impl ManifestEntry {
    pub fn new(name: impl Into<String>, source_type: SourceType, url: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            source_type,
            url: url.into(),
            branch: None,
            subdir: None,
            extra: None,
        }
    }

    pub fn git(
        name: impl Into<String>,
        url: impl Into<String>,
        branch: &str,
        subdir: &str,
    ) -> Self {
        Self {
            branch: Some(branch.to_string()),
            subdir: Some(subdir.to_string()),
            ..Self::new(name, SourceType::Git, url)
        }
    }

    pub fn branch_or_default(&self) -> &str {
        self.branch.as_deref().unwrap_or(DEFAULT_BRANCH)
    }

    pub fn subdir_or_root(&self) -> &str {
        self.subdir.as_deref().unwrap_or(".")
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if !is_valid_package_name(&self.name) {
            return Err(ManifestError::InvalidName(self.name.clone()));
        }
        let bad = |reason: String| ManifestError::InvalidEntry {
            name: self.name.clone(),
            reason,
        };
        check_cell(&self.url).map_err(|r| bad(format!("url: {r}")))?;
        for (field, value) in [
            ("branch", &self.branch),
            ("subdir", &self.subdir),
            ("extra", &self.extra),
        ] {
            if let Some(v) = value {
                check_cell(v).map_err(|r| bad(format!("{field}: {r}")))?;
            }
        }
        if !self.source_type.is_scm() && (self.branch.is_some() || self.subdir.is_some()) {
            return Err(bad(format!(
                "branch/subdir are only meaningful for SCM sources, not `{}`",
                self.source_type
            )));
        }
        if let Some(sub) = &self.subdir {
            if sub.starts_with('/') || sub.split('/').any(|seg| seg == "..") {
                return Err(bad(
                    "subdir must be a relative path inside the source".into()
                ));
            }
        }
        Ok(())
    }
}

fn validate_repo(repo: &str) -> Result<(), ManifestError> {
    if repo.is_empty() || repo == "NA" || repo.contains([',', '\t', '\n', '\r', ' ']) {
        Err(ManifestError::InvalidRepo(repo.to_string()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageManifest {
    entries: Vec<ManifestEntry>,
    dep_repos: Vec<String>,
}

impl PackageManifest {
    /// A manifest falling back to [`DEFAULT_DEP_REPOS`].
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, ManifestError> {
        Self::with_dep_repos(
            entries,
            DEFAULT_DEP_REPOS.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// `dep_repos` may be empty here, which disables repository fallback.
    pub fn with_dep_repos(
        entries: Vec<ManifestEntry>,
        dep_repos: Vec<String>,
    ) -> Result<Self, ManifestError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            e.validate()?;
            if !seen.insert(e.name.as_str()) {
                return Err(ManifestError::DuplicateName(e.name.clone()));
            }
        }
        for r in &dep_repos {
            validate_repo(r)?;
        }
        Ok(Self { entries, dep_repos })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn dep_repos(&self) -> &[String] {
        &self.dep_repos
    }

    pub fn entry(&self, name: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// An exact version or the floating `latest` sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VersionPin {
    Latest,
    Exact(PackageVersion),
}

impl VersionPin {
    pub fn exact(&self) -> Option<&PackageVersion> {
        match self {
            Self::Latest => None,
            Self::Exact(v) => Some(v),
        }
    }
}

impl fmt::Display for VersionPin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Latest => f.write_str("latest"),
            Self::Exact(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for VersionPin {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "latest" {
            Ok(Self::Latest)
        } else {
            s.parse().map(Self::Exact)
        }
    }
}

impl From<PackageVersion> for VersionPin {
    fn from(v: PackageVersion) -> Self {
        Self::Exact(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedingManifest {
    base: PackageManifest,
    pins: BTreeMap<String, VersionPin>,
}

impl SeedingManifest {
    /// Pinned names need not be entries of `base`; they may be resolvable
    /// from its dependency repositories instead, which is checked when the
    /// manifest is materialized.
    pub fn new(
        base: PackageManifest,
        pins: BTreeMap<String, VersionPin>,
    ) -> Result<Self, ManifestError> {
        if let Some(bad) = pins.keys().find(|n| !is_valid_package_name(n)) {
            return Err(ManifestError::InvalidName(bad.clone()));
        }
        Ok(Self { base, pins })
    }

    pub fn base(&self) -> &PackageManifest {
        &self.base
    }

    pub fn pins(&self) -> &BTreeMap<String, VersionPin> {
        &self.pins
    }

    pub fn into_parts(self) -> (PackageManifest, BTreeMap<String, VersionPin>) {
        (self.base, self.pins)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyManifest {
    Package(PackageManifest),
    Seeding(SeedingManifest),
}

impl AnyManifest {
    pub fn base(&self) -> &PackageManifest {
        match self {
            Self::Package(m) => m,
            Self::Seeding(s) => s.base(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Package(_) => "package",
            Self::Seeding(_) => "seeding",
        }
    }

    /// Names this manifest asks to have installed, with their pins: every
    /// entry (floating) for a package manifest, the pins for a seeding one.
    pub fn targets(&self) -> BTreeMap<String, VersionPin> {
        match self {
            Self::Package(m) => m
                .names()
                .map(|n| (n.to_string(), VersionPin::Latest))
                .collect(),
            Self::Seeding(s) => s.pins().clone(),
        }
    }
}

impl From<PackageManifest> for AnyManifest {
    fn from(m: PackageManifest) -> Self {
        Self::Package(m)
    }
}

impl From<SeedingManifest> for AnyManifest {
    fn from(m: SeedingManifest) -> Self {
        Self::Seeding(m)
    }
}

/// Restricts `m` to `names`. Versions come from `pins` where given and float
/// at `latest` otherwise. Whether the names are resolvable is not checked
/// here.
pub fn subset_manifest(
    m: &PackageManifest,
    names: &BTreeSet<String>,
    pins: Option<&BTreeMap<String, PackageVersion>>,
) -> Result<SeedingManifest, ManifestError> {
    let selected = names
        .iter()
        .map(|n| {
            let pin = pins
                .and_then(|p| p.get(n))
                .cloned()
                .map_or(VersionPin::Latest, VersionPin::Exact);
            (n.clone(), pin)
        })
        .collect();
    SeedingManifest::new(m.clone(), selected)
}
