//! Named package libraries and switching between them.
//!
//! Store layout:
//!
//! ```text
//! <root>/<name>/lib/<pkg>/DESCRIPTION   installed packages
//! <root>/<name>/meta.dcf                Name, Parent, Created
//! <root>/.state/current                 active library
//! <root>/.state/stack                   previous libraries, oldest first
//! <root>/.lock                          held while the store is modified
//! ```
//!
//! The library named `original` stands for the environment as it was before
//! any switching. It has no directory and nothing can be installed into it.

mod install;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::manifest::{AnyManifest, ManifestError, VersionPin};
use crate::metadata::{parse_dcf, serialize_dcf, DcfRecord, Description};
use crate::repostore::RepoError;
use crate::resolver::ResolveError;
use crate::sources::Fetcher;
use crate::util::{copy_dir_all, remove_dir_if_exists, timestamp_now, write_atomic};

pub use install::{InstallSummary, Provenance, PROVENANCE_FIELDS};
pub use report::{LibManifest, Magnitude, RiskRow};

pub const ORIGINAL: &str = "original";
pub const ROOT_ENV: &str = "COHORT_ROOT";
pub const LIBRARY_PATH_VAR: &str = "COHORT_LIBRARY_PATH";

#[derive(Debug, Error)]
pub enum LibError {
    #[error("invalid library name `{0}`")]
    InvalidName(String),
    #[error("`{ORIGINAL}` is the pre-existing environment and cannot be modified")]
    Original,
    #[error("no library named `{0}`")]
    NotFound(String),
    #[error("library `{0}` already exists")]
    Exists(String),
    #[error("already at original environment")]
    AtOriginal,
    #[error("library parent chain loops: {}", .0.join(" -> "))]
    ParentCycle(Vec<String>),
    #[error("{path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("installing {name}: {reason}")]
    Install { name: String, reason: String },
    #[error(transparent)]
    Resolve(Box<ResolveError>),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

impl From<ResolveError> for LibError {
    fn from(e: ResolveError) -> Self {
        Self::Resolve(Box::new(e))
    }
}

impl LibError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub fn is_valid_library_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphanumeric())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeriveMode {
    /// Copy the installed packages.
    Branch,
    /// Start empty and fall back to the parent for anything not installed.
    Inherit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryInfo {
    pub name: String,
    pub parent: Option<String>,
    pub created: String,
}

/// An installed package as found in some library's `lib/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstalledPackage {
    pub library: String,
    pub path: PathBuf,
    pub description: Description,
}

impl InstalledPackage {
    pub fn name(&self) -> &str {
        &self.description.name
    }

    pub fn version(&self) -> &crate::metadata::PackageVersion {
        &self.description.version
    }

    pub fn provenance(&self) -> Option<Provenance> {
        Provenance::from_record(&self.description.record)
    }
}

/// The result of switching libraries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchResult {
    pub name: String,
    pub previous: String,
    /// `lib/` directories to load from, child first.
    pub lib_paths: Vec<PathBuf>,
    pub package_count: usize,
    pub created: bool,
    pub installed: Option<InstallSummary>,
}

fn sh_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

impl SwitchResult {
    /// Shell lines that make the library active.
    pub fn activation(&self) -> String {
        if self.lib_paths.is_empty() {
            return format!("unset {LIBRARY_PATH_VAR}\n");
        }
        let joined = self
            .lib_paths
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(":");
        format!("export {LIBRARY_PATH_VAR}={}\n", sh_quote(&joined))
    }

    /// `verb` is "Switched to" or "Reverted to".
    pub fn message(&self, verb: &str) -> String {
        format!(
            "{verb} the '{}' computing environment. {} packages are currently available.\n \
             To switch back to your previous environment type `cohort back`\n",
            self.name, self.package_count
        )
    }
}

/// Exclusive or shared hold on the store lock, released on drop.
pub struct StoreLock {
    _file: File,
}

#[derive(Debug, Clone)]
pub struct LibraryStore {
    root: PathBuf,
}

impl LibraryStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, LibError> {
        let root = root.into();
        let state = root.join(".state");
        fs::create_dir_all(&state).map_err(|e| LibError::io(&state, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock_file(&self) -> Result<File, LibError> {
        let path = self.root.join(".lock");
        File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| LibError::io(&path, e))
    }

    pub fn lock_exclusive(&self) -> Result<StoreLock, LibError> {
        let file = self.lock_file()?;
        file.lock()
            .map_err(|e| LibError::io(&self.root.join(".lock"), e))?;
        Ok(StoreLock { _file: file })
    }

    pub fn lock_shared(&self) -> Result<StoreLock, LibError> {
        let file = self.lock_file()?;
        file.lock_shared()
            .map_err(|e| LibError::io(&self.root.join(".lock"), e))?;
        Ok(StoreLock { _file: file })
    }

    fn check_name(name: &str) -> Result<(), LibError> {
        if is_valid_library_name(name) {
            Ok(())
        } else {
            Err(LibError::InvalidName(name.to_string()))
        }
    }

    pub fn library_dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn lib_dir(&self, name: &str) -> PathBuf {
        self.library_dir(name).join("lib")
    }

    fn meta_path(&self, name: &str) -> PathBuf {
        self.library_dir(name).join("meta.dcf")
    }

    pub fn exists(&self, name: &str) -> bool {
        name == ORIGINAL || self.meta_path(name).is_file()
    }

    fn require(&self, name: &str) -> Result<(), LibError> {
        if self.exists(name) {
            Ok(())
        } else {
            Err(LibError::NotFound(name.to_string()))
        }
    }

    fn require_real(&self, name: &str) -> Result<(), LibError> {
        if name == ORIGINAL {
            return Err(LibError::Original);
        }
        self.require(name)
    }

    pub fn info(&self, name: &str) -> Result<LibraryInfo, LibError> {
        if name == ORIGINAL {
            return Ok(LibraryInfo {
                name: ORIGINAL.into(),
                parent: None,
                created: String::new(),
            });
        }
        let path = self.meta_path(name);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => LibError::NotFound(name.to_string()),
            _ => LibError::io(&path, e),
        })?;
        let corrupt = |reason: String| LibError::Corrupt {
            path: path.display().to_string(),
            reason,
        };
        let rec = parse_dcf(&text)
            .map_err(|e| corrupt(e.to_string()))?
            .into_iter()
            .next()
            .ok_or_else(|| corrupt("empty".into()))?;
        Ok(LibraryInfo {
            name: name.to_string(),
            parent: rec.get("Parent").map(String::from),
            created: rec.get("Created").unwrap_or_default().to_string(),
        })
    }

    /// Every library in the store, sorted by name, `original` first.
    pub fn list(&self) -> Result<Vec<LibraryInfo>, LibError> {
        let mut out = vec![self.info(ORIGINAL)?];
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| LibError::io(&self.root, e))? {
            let entry = entry.map_err(|e| LibError::io(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if is_valid_library_name(&name) && self.meta_path(&name).is_file() {
                names.push(name);
            }
        }
        names.sort();
        for n in names {
            out.push(self.info(&n)?);
        }
        Ok(out)
    }

    fn state_path(&self, file: &str) -> PathBuf {
        self.root.join(".state").join(file)
    }

    pub fn current(&self) -> Result<String, LibError> {
        let path = self.state_path("current");
        match fs::read_to_string(&path) {
            Ok(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            Ok(_) => Ok(ORIGINAL.into()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ORIGINAL.into()),
            Err(e) => Err(LibError::io(&path, e)),
        }
    }

    pub fn stack(&self) -> Result<Vec<String>, LibError> {
        let path = self.state_path("stack");
        match fs::read_to_string(&path) {
            Ok(s) => Ok(s
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().to_string())
                .collect()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(LibError::io(&path, e)),
        }
    }

    fn write_state(&self, current: &str, stack: &[String]) -> Result<(), LibError> {
        let stack_path = self.state_path("stack");
        let text: String = stack.iter().map(|s| format!("{s}\n")).collect();
        write_atomic(&stack_path, text).map_err(|e| LibError::io(&stack_path, e))?;
        let cur = self.state_path("current");
        write_atomic(&cur, format!("{current}\n")).map_err(|e| LibError::io(&cur, e))
    }

    /// Library names from `name` up its parent chain, child first.
    /// `original` has an empty chain.
    pub fn chain(&self, name: &str) -> Result<Vec<String>, LibError> {
        let mut out: Vec<String> = Vec::new();
        let mut at = Some(name.to_string());
        while let Some(n) = at {
            if n == ORIGINAL {
                break;
            }
            if out.contains(&n) {
                out.push(n);
                return Err(LibError::ParentCycle(out));
            }
            at = self.info(&n)?.parent;
            out.push(n);
        }
        Ok(out)
    }

    pub fn lib_paths(&self, name: &str) -> Result<Vec<PathBuf>, LibError> {
        Ok(self.chain(name)?.iter().map(|n| self.lib_dir(n)).collect())
    }

    /// Packages installed directly in `name`'s own `lib/`.
    pub fn installed(&self, name: &str) -> Result<Vec<InstalledPackage>, LibError> {
        if name == ORIGINAL {
            return Ok(Vec::new());
        }
        let dir = self.lib_dir(name);
        let mut out = Vec::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(LibError::io(&dir, e)),
        };
        for entry in entries {
            let entry = entry.map_err(|e| LibError::io(&dir, e))?;
            let fname = entry.file_name().to_string_lossy().into_owned();
            let desc_path = entry.path().join("DESCRIPTION");
            if fname.starts_with('.') || !desc_path.is_file() {
                continue;
            }
            let text = fs::read_to_string(&desc_path).map_err(|e| LibError::io(&desc_path, e))?;
            let description = Description::parse(&text).map_err(|e| LibError::Corrupt {
                path: desc_path.display().to_string(),
                reason: e.to_string(),
            })?;
            out.push(InstalledPackage {
                library: name.to_string(),
                path: entry.path(),
                description,
            });
        }
        out.sort_by(|a, b| a.name().cmp(b.name()));
        Ok(out)
    }

    /// Every package visible from `name`: its own, then its ancestors' for
    /// names it does not have.
    pub fn available(&self, name: &str) -> Result<BTreeMap<String, InstalledPackage>, LibError> {
        self.require(name)?;
        let mut out = BTreeMap::new();
        for lib in self.chain(name)? {
            for pkg in self.installed(&lib)? {
                out.entry(pkg.name().to_string()).or_insert(pkg);
            }
        }
        Ok(out)
    }

    pub fn lookup(&self, lib: &str, package: &str) -> Result<Option<InstalledPackage>, LibError> {
        Ok(self.available(lib)?.remove(package))
    }

    fn create_unlocked(&self, name: &str, parent: Option<&str>) -> Result<(), LibError> {
        Self::check_name(name)?;
        if name == ORIGINAL {
            return Err(LibError::Original);
        }
        if self.exists(name) {
            return Err(LibError::Exists(name.to_string()));
        }
        let lib = self.lib_dir(name);
        fs::create_dir_all(&lib).map_err(|e| LibError::io(&lib, e))?;
        let mut meta = DcfRecord::new();
        meta.set("Name", name);
        if let Some(p) = parent {
            meta.set("Parent", p);
        }
        meta.set("Created", timestamp_now());
        let path = self.meta_path(name);
        write_atomic(&path, serialize_dcf(&[meta])).map_err(|e| LibError::io(&path, e))
    }

    /// Creates an empty library.
    pub fn create(&self, name: &str) -> Result<(), LibError> {
        let _lock = self.lock_exclusive()?;
        self.create_unlocked(name, None)
    }

    pub fn remove_library(&self, name: &str) -> Result<(), LibError> {
        let _lock = self.lock_exclusive()?;
        self.require_real(name)?;
        let dir = self.library_dir(name);
        remove_dir_if_exists(&dir).map_err(|e| LibError::io(&dir, e))
    }

    pub fn derive_library(&self, new: &str, from: &str, mode: DeriveMode) -> Result<(), LibError> {
        let _lock = self.lock_exclusive()?;
        self.require_real(from)?;
        self.chain(from)?;
        match mode {
            DeriveMode::Branch => {
                self.create_unlocked(new, None)?;
                let (src, dst) = (self.lib_dir(from), self.lib_dir(new));
                copy_dir_all(&src, &dst).map_err(|e| {
                    let _ = remove_dir_if_exists(&self.library_dir(new));
                    LibError::io(&src, e)
                })
            }
            DeriveMode::Inherit => self.create_unlocked(new, Some(from)),
        }
    }

    fn switch_result(
        &self,
        name: &str,
        previous: String,
        created: bool,
    ) -> Result<SwitchResult, LibError> {
        Ok(SwitchResult {
            name: name.to_string(),
            previous,
            lib_paths: self.lib_paths(name)?,
            package_count: self.available(name)?.len(),
            created,
            installed: None,
        })
    }

    /// Makes `name` current, remembering the current library on the stack.
    ///
    /// A missing library is created and, when `seed` is given, populated
    /// with the seed's targets (or just `pkgs`, which may also name
    /// packages only found in the seed's dependency repositories). If
    /// seeding fails the new library is removed and nothing changes. An
    /// existing library is used as is and `seed` is ignored.
    pub fn switch_to(
        &self,
        name: &str,
        seed: Option<&AnyManifest>,
        pkgs: Option<&BTreeSet<String>>,
        fetcher: &Fetcher,
    ) -> Result<SwitchResult, LibError> {
        Self::check_name(name)?;
        let _lock = self.lock_exclusive()?;
        let previous = self.current()?;
        let mut created = false;
        let mut installed = None;
        if !self.exists(name) {
            self.create_unlocked(name, None)?;
            created = true;
            if let Some(seed) = seed {
                let targets = seed_targets(seed, pkgs);
                match self.install_unlocked(name, &targets, seed, fetcher) {
                    Ok(summary) => installed = Some(summary),
                    Err(e) => {
                        let _ = remove_dir_if_exists(&self.library_dir(name));
                        return Err(e);
                    }
                }
            }
        }
        let mut stack = self.stack()?;
        stack.push(previous.clone());
        self.write_state(name, &stack)?;
        let mut result = self.switch_result(name, previous, created)?;
        result.installed = installed;
        Ok(result)
    }

    /// Returns to the library that was current before the last switch.
    pub fn switch_back(&self) -> Result<SwitchResult, LibError> {
        let _lock = self.lock_exclusive()?;
        let mut stack = self.stack()?;
        let Some(target) = stack.pop() else {
            return Err(LibError::AtOriginal);
        };
        let previous = self.current()?;
        let target = if self.exists(&target) {
            target
        } else {
            ORIGINAL.to_string()
        };
        self.write_state(&target, &stack)?;
        self.switch_result(&target, previous, false)
    }

    /// Resolves `targets` against `source` and installs the plan into
    /// `lib`. See [`install`] for details.
    pub fn install_packages(
        &self,
        lib: &str,
        targets: &BTreeMap<String, VersionPin>,
        source: &AnyManifest,
        fetcher: &Fetcher,
    ) -> Result<InstallSummary, LibError> {
        let _lock = self.lock_exclusive()?;
        self.install_unlocked(lib, targets, source, fetcher)
    }
}

/// What seeding installs: the manifest's targets, or `pkgs` with any pins
/// the manifest gives them.
pub fn seed_targets(
    seed: &AnyManifest,
    pkgs: Option<&BTreeSet<String>>,
) -> BTreeMap<String, VersionPin> {
    let all = seed.targets();
    match pkgs {
        None => all,
        Some(names) => names
            .iter()
            .map(|n| (n.clone(), all.get(n).cloned().unwrap_or(VersionPin::Latest)))
            .collect(),
    }
}
