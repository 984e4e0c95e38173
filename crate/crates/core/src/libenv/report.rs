//! Describing an existing library: as a seeding manifest, and as a list of
//! available updates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::manifest::{
    ManifestEntry, PackageManifest, SeedingManifest, SourceType, VersionPin, DEFAULT_DEP_REPOS,
};
use crate::metadata::PackageVersion;
use crate::repostore::RepoIndex;
use crate::resolver::{reverse_closure, DepGraph, Resolver};
use crate::sources::Fetcher;

use super::{LibError, LibraryStore};

/// A library described as a seeding manifest, plus the packages whose
/// origin could not be worked out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibManifest {
    pub manifest: SeedingManifest,
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Magnitude {
    Major,
    Minor,
    Patch,
}

impl Magnitude {
    /// By the first version component that differs.
    pub fn between(installed: &PackageVersion, available: &PackageVersion) -> Option<Self> {
        installed.first_difference(available).map(|i| match i {
            0 => Self::Major,
            1 => Self::Minor,
            _ => Self::Patch,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Major => "major",
            Self::Minor => "minor",
            Self::Patch => "patch",
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An installed package with a newer version available. The magnitude and
/// dependent count are heuristics for how disruptive updating would be.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskRow {
    pub name: String,
    pub installed: PackageVersion,
    pub available: PackageVersion,
    pub magnitude: Magnitude,
    /// Packages in the library that depend on this one, directly or not.
    pub reverse_dependents: usize,
}

impl LibraryStore {
    /// Rebuilds a seeding manifest for everything visible from `lib`.
    ///
    /// Packages installed by this tool carry their origin in their
    /// DESCRIPTION. Others are matched by name against the dependency
    /// repositories' indexes, then against `fallback`'s entries. Dependency
    /// repositories are `fallback`'s, or the defaults without one.
    pub fn lib_manifest(
        &self,
        lib: &str,
        fallback: Option<&PackageManifest>,
    ) -> Result<LibManifest, LibError> {
        let _lock = self.lock_shared()?;
        let packages = self.available(lib)?;
        let dep_repos: Vec<String> = match fallback {
            Some(m) => m.dep_repos().to_vec(),
            None => DEFAULT_DEP_REPOS.iter().map(|s| s.to_string()).collect(),
        };
        let mut indexes: HashMap<&str, Option<RepoIndex>> = HashMap::new();
        let mut entries = Vec::new();
        let mut pins = BTreeMap::new();
        let mut unresolved = Vec::new();
        for (name, pkg) in &packages {
            let entry = if let Some(p) = pkg.provenance() {
                Some(p.to_entry(name))
            } else if let Some(repo) = dep_repos.iter().find(|r| {
                indexes
                    .entry(r.as_str())
                    .or_insert_with(|| RepoIndex::read(r).ok())
                    .as_ref()
                    .is_some_and(|idx| idx.get(name).is_some())
            }) {
                Some(ManifestEntry::new(
                    name.clone(),
                    SourceType::Repository,
                    repo.clone(),
                ))
            } else {
                fallback.and_then(|m| m.entry(name)).cloned()
            };
            match entry {
                Some(e) => {
                    entries.push(e);
                    pins.insert(name.clone(), VersionPin::Exact(pkg.version().clone()));
                }
                None => unresolved.push(name.clone()),
            }
        }
        let base = PackageManifest::with_dep_repos(entries, dep_repos)?;
        Ok(LibManifest {
            manifest: SeedingManifest::new(base, pins)?,
            unresolved,
        })
    }

    /// One row per package visible from `lib` for which `m` offers a
    /// strictly newer version, sorted by name.
    pub fn update_risk_report(
        &self,
        lib: &str,
        m: &PackageManifest,
        fetcher: &Fetcher,
    ) -> Result<Vec<RiskRow>, LibError> {
        let packages = {
            let _lock = self.lock_shared()?;
            self.available(lib)?
        };
        let graph: DepGraph = packages
            .iter()
            .map(|(n, p)| {
                let deps = p
                    .description
                    .hard_deps()
                    .unwrap_or_default()
                    .into_iter()
                    .map(|d| d.name)
                    .collect();
                (n.clone(), deps)
            })
            .collect();
        let resolver = Resolver::new(m, fetcher);
        let mut rows = Vec::new();
        for (name, pkg) in &packages {
            let Ok(found) = resolver.locate(name, &VersionPin::Latest) else {
                continue;
            };
            let available = found.located.version;
            if &available <= pkg.version() {
                continue;
            }
            let magnitude = Magnitude::between(pkg.version(), &available).expect("versions differ");
            let dependents = reverse_closure(&graph, &BTreeSet::from([name.clone()]));
            rows.push(RiskRow {
                name: name.clone(),
                installed: pkg.version().clone(),
                available,
                magnitude,
                reverse_dependents: dependents.len() - 1,
            });
        }
        Ok(rows)
    }
}
