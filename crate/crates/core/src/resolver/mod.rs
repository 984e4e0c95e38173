//! Turning package names and version pins into ordered install plans.
//!
//! A package is looked up in three stages and the first stage that has it
//! wins:
//!
//! 1. the manifest's own entries (SCM entries include their history);
//! 2. the first dependency repository's index, then its archive;
//! 3. the remaining dependency repositories (index, archive, and any SCM
//!    histories they declare in `scm.dcf`).
//!
//! For `latest`, the highest version within the winning stage is taken.

pub mod graph;
pub mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use thiserror::Error;

use crate::manifest::{ManifestEntry, PackageManifest, SourceType, VersionPin};
use crate::metadata::{ConstraintError, DepConstraint, PackageVersion};
use crate::repostore::index::archive_root;
use crate::sources::{read_scm_map, Fetcher, Located, Searched, SourceError, SourceTree};

pub use graph::{reverse_closure, topo_order, DepGraph};
pub use snapshot::{cohort_at_date, EventLogError, ReleaseEvent, RepoEventLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Manifest = 1,
    PrimaryRepo = 2,
    SecondaryRepos = 3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Self::Manifest, Self::PrimaryRepo, Self::SecondaryRepos];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self {
            Self::Manifest => "manifest",
            Self::PrimaryRepo => "primary repository",
            Self::SecondaryRepos => "secondary repositories",
        };
        write!(f, "stage {} ({what})", self.number())
    }
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("no packages requested")]
    NoTargets,
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("{name}: bad dependency field: {source}")]
    Dependencies {
        name: String,
        #[source]
        source: ConstraintError,
    },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("{requirer} requires {constraint} but {found} was resolved")]
    Unsatisfiable {
        requirer: String,
        constraint: DepConstraint,
        found: PackageVersion,
    },
}

/// A package pinned to one version and materialized locally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedPackage {
    pub name: String,
    pub version: PackageVersion,
    pub stage: Stage,
    pub source: SourceTree,
    /// Hard dependencies, from the fetched DESCRIPTION.
    pub deps: Vec<DepConstraint>,
    pub suggests: Vec<DepConstraint>,
}

impl ResolvedPackage {
    pub fn origin(&self) -> &ManifestEntry {
        &self.source.origin
    }

    pub fn commit(&self) -> Option<&str> {
        self.source.commit.as_deref()
    }

    pub fn path(&self) -> &Path {
        &self.source.path
    }
}

/// Packages in dependency order, each appearing once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstallPlan {
    packages: Vec<ResolvedPackage>,
}

impl InstallPlan {
    pub fn packages(&self) -> &[ResolvedPackage] {
        &self.packages
    }

    pub fn into_packages(self) -> Vec<ResolvedPackage> {
        self.packages
    }

    pub fn len(&self) -> usize {
        self.packages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.packages.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ResolvedPackage> {
        self.packages.iter().find(|p| p.name == name)
    }

    pub fn pairs(&self) -> BTreeSet<(String, PackageVersion)> {
        self.packages
            .iter()
            .map(|p| (p.name.clone(), p.version.clone()))
            .collect()
    }
}

/// Where a stage looks for one package.
#[derive(Debug, Clone)]
enum Candidate {
    Entry(ManifestEntry),
    Index(String),
}

impl Candidate {
    fn label(&self) -> String {
        match self {
            Self::Entry(e) if e.source_type.is_scm() => {
                format!(
                    "{} {} ({}:{})",
                    e.source_type,
                    e.url,
                    e.branch_or_default(),
                    e.subdir_or_root()
                )
            }
            Self::Entry(e) => format!("{} {}", e.source_type, e.url),
            Self::Index(repo) => format!("repository {repo}"),
        }
    }
}

/// A located package and the stage it was found in.
#[derive(Debug, Clone)]
pub struct Found {
    pub stage: Stage,
    pub located: Located,
}

pub struct Resolver<'a> {
    manifest: &'a PackageManifest,
    fetcher: &'a Fetcher,
    pins: BTreeMap<String, VersionPin>,
    jobs: usize,
    scm_maps: Mutex<HashMap<String, Result<Vec<ManifestEntry>, String>>>,
}

impl<'a> Resolver<'a> {
    pub fn new(manifest: &'a PackageManifest, fetcher: &'a Fetcher) -> Self {
        Self {
            manifest,
            fetcher,
            pins: BTreeMap::new(),
            jobs: 4,
            scm_maps: Mutex::new(HashMap::new()),
        }
    }

    /// Versions to use for dependencies reached during [`Resolver::resolve`]
    /// instead of `latest`.
    pub fn with_pins(mut self, pins: BTreeMap<String, VersionPin>) -> Self {
        self.pins = pins;
        self
    }

    /// Upper bound on concurrent fetches.
    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn manifest(&self) -> &PackageManifest {
        self.manifest
    }

    fn scm_map(&self, repo: &str) -> Result<Vec<ManifestEntry>, String> {
        let mut maps = self.scm_maps.lock().unwrap();
        maps.entry(repo.to_string())
            .or_insert_with(|| read_scm_map(repo).map_err(|e| e.to_string()))
            .clone()
    }

    /// Candidates of one stage, or a note on why it has none.
    fn candidates(&self, name: &str, stage: Stage) -> (Vec<Candidate>, Vec<Searched>) {
        let label = |what: &str| format!("{stage}: {what}");
        let repo_candidates = |repo: &String| {
            vec![
                Candidate::Index(repo.clone()),
                Candidate::Entry(ManifestEntry::new(
                    name,
                    SourceType::Archive,
                    archive_root(repo),
                )),
            ]
        };
        let repos = self.manifest.dep_repos();
        match stage {
            Stage::Manifest => match self.manifest.entry(name) {
                Some(e) => (vec![Candidate::Entry(e.clone())], Vec::new()),
                None => (
                    Vec::new(),
                    vec![Searched::failed(label("manifest"), "no entry")],
                ),
            },
            Stage::PrimaryRepo => match repos.first() {
                Some(repo) => (repo_candidates(repo), Vec::new()),
                None => (
                    Vec::new(),
                    vec![Searched::failed(
                        label("dependency repositories"),
                        "none configured",
                    )],
                ),
            },
            Stage::SecondaryRepos => {
                if repos.len() < 2 {
                    return (
                        Vec::new(),
                        vec![Searched::failed(
                            label("dependency repositories"),
                            "none configured",
                        )],
                    );
                }
                let mut out = Vec::new();
                let mut notes = Vec::new();
                for repo in &repos[1..] {
                    out.extend(repo_candidates(repo));
                    match self.scm_map(repo) {
                        Ok(entries) => out.extend(
                            entries
                                .into_iter()
                                .filter(|e| e.name == name)
                                .map(Candidate::Entry),
                        ),
                        Err(message) => {
                            notes.push(Searched::failed(label(&format!("{repo}/scm.dcf")), message))
                        }
                    }
                }
                (out, notes)
            }
        }
    }

    fn try_candidate(
        &self,
        name: &str,
        c: &Candidate,
        pin: &VersionPin,
    ) -> Result<Located, SourceError> {
        match c {
            Candidate::Entry(e) => self.fetcher.locate(e, pin),
            Candidate::Index(repo) => self.fetcher.locate_in_index(name, repo, pin),
        }
    }

    /// Runs the three-stage search without fetching any sources.
    pub fn locate(&self, name: &str, pin: &VersionPin) -> Result<Found, ResolveError> {
        let mut searched = Vec::new();
        for stage in Stage::ALL {
            let (candidates, notes) = self.candidates(name, stage);
            searched.extend(notes);
            let mut best: Option<Located> = None;
            for c in &candidates {
                match self.try_candidate(name, c, pin) {
                    Ok(found) => {
                        let better = best.as_ref().is_none_or(|b| found.version > b.version);
                        if better {
                            best = Some(found);
                        }
                        if matches!(pin, VersionPin::Exact(_)) {
                            break;
                        }
                    }
                    Err(e) => {
                        let label = format!("{stage}: {}", c.label());
                        searched.extend(e.into_searched(&label).into_iter().map(|mut s| {
                            if !s.location.starts_with("stage ") {
                                s.location = format!("{stage}: {}", s.location);
                            }
                            s
                        }));
                    }
                }
            }
            if let Some(located) = best {
                return Ok(Found { stage, located });
            }
        }
        Err(SourceError::NotFound {
            name: name.to_string(),
            requested: pin.clone(),
            searched,
        }
        .into())
    }

    /// Locates and fetches one package.
    pub fn find_version(
        &self,
        name: &str,
        pin: &VersionPin,
    ) -> Result<ResolvedPackage, ResolveError> {
        let Found { stage, located } = self.locate(name, pin)?;
        let source = self.fetcher.materialize(&located)?;
        let bad = |source| ResolveError::Dependencies {
            name: name.to_string(),
            source,
        };
        Ok(ResolvedPackage {
            name: name.to_string(),
            version: source.resolved_version.clone(),
            stage,
            deps: source.description.hard_deps().map_err(bad)?,
            suggests: source.description.suggests().map_err(bad)?,
            source,
        })
    }

    fn fetch_all(
        &self,
        batch: &[(String, VersionPin)],
    ) -> Vec<Result<ResolvedPackage, ResolveError>> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(self.jobs) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|(n, p)| s.spawn(move || self.find_version(n, p)))
                    .collect();
                out.extend(
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("fetch thread panicked")),
                );
            });
        }
        out
    }

    /// Dependency closure of `targets` in install order. Dependencies use
    /// the resolver's pins when present and `latest` otherwise. With
    /// `include_suggests`, Suggests of the targets (not of their
    /// dependencies) join the closure.
    pub fn resolve(
        &self,
        targets: &BTreeMap<String, VersionPin>,
        include_suggests: bool,
    ) -> Result<InstallPlan, ResolveError> {
        if targets.is_empty() {
            return Err(ResolveError::NoTargets);
        }
        let mut resolved: BTreeMap<String, ResolvedPackage> = BTreeMap::new();
        let mut queued: BTreeSet<String> = targets.keys().cloned().collect();
        let mut frontier: Vec<(String, VersionPin)> = targets
            .iter()
            .map(|(n, p)| (n.clone(), p.clone()))
            .collect();

        while !frontier.is_empty() {
            let mut next = Vec::new();
            for result in self.fetch_all(&frontier) {
                let pkg = result?;
                let mut wanted: Vec<&DepConstraint> = pkg.deps.iter().collect();
                if include_suggests && targets.contains_key(&pkg.name) {
                    wanted.extend(&pkg.suggests);
                }
                for dep in wanted {
                    if queued.insert(dep.name.clone()) {
                        let pin = self
                            .pins
                            .get(&dep.name)
                            .cloned()
                            .unwrap_or(VersionPin::Latest);
                        next.push((dep.name.clone(), pin));
                    }
                }
                resolved.insert(pkg.name.clone(), pkg);
            }
            next.sort_by(|a, b| a.0.cmp(&b.0));
            frontier = next;
        }

        for pkg in resolved.values() {
            let mut checked: Vec<&DepConstraint> = pkg.deps.iter().collect();
            if include_suggests && targets.contains_key(&pkg.name) {
                checked.extend(&pkg.suggests);
            }
            for c in checked {
                let found = &resolved[&c.name].version;
                if !c.is_satisfied_by(found) {
                    return Err(ResolveError::Unsatisfiable {
                        requirer: pkg.name.clone(),
                        constraint: c.clone(),
                        found: found.clone(),
                    });
                }
            }
        }

        let graph: DepGraph = resolved
            .values()
            .map(|p| {
                (
                    p.name.clone(),
                    p.deps.iter().map(|d| d.name.clone()).collect(),
                )
            })
            .collect();
        let order = topo_order(&graph).map_err(ResolveError::Cycle)?;
        Ok(InstallPlan {
            packages: order
                .into_iter()
                .map(|n| resolved.remove(&n).expect("ordered node was resolved"))
                .collect(),
        })
    }
}
