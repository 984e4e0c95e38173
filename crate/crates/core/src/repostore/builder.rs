//! Incremental, validated repository builds.
//!
//! Every run probes each manifest package (version, commit, dependencies)
//! without fetching it, compares against the previous run's state, and
//! rebuilds only the dirty set: packages that changed or never passed, plus
//! everything depending on them. Packages that fail keep their last passing
//! tarball in the index.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::mpsc;

use crate::manifest::{AnyManifest, VersionPin};
use crate::metadata::{Description, PackageVersion};
use crate::resolver::{reverse_closure, DepGraph, Resolver};
use crate::sources::{Fetcher, Located, Payload};
use crate::util::{
    hash_tree, pack_dir, remove_dir_if_exists, timestamp_now, unpack_tarball, write_atomic,
};

use super::index::{contrib_dir, tarball_name, RepoIndex, INDEX_FILE};
use super::state::{BuildRecord, BuildReport, BuildState, BuildStatus};
use super::RepoError;

pub const CHECK_SRC_PLACEHOLDER: &str = "{src}";
const LOG_DIR: &str = "logs";
const STAGING_DIR: &str = ".cohort-staging";

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Shell command run in each unpacked package; `{src}` expands to its
    /// path. Without one, packages get structural validation only.
    pub check_cmd: Option<String>,
    pub parallelism: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            check_cmd: None,
            parallelism: 1,
        }
    }
}

/// What a manifest package currently looks like at its source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub name: String,
    pub version: Option<PackageVersion>,
    pub commit: Option<String>,
    pub fingerprint: Option<String>,
    pub deps: BTreeSet<String>,
    /// Set when the package could not be located.
    pub error: Option<String>,
    pub located: Option<Located>,
}

impl Probe {
    fn failed(name: &str, error: String) -> Self {
        Self {
            name: name.to_string(),
            version: None,
            commit: None,
            fingerprint: None,
            deps: BTreeSet::new(),
            error: Some(error),
            located: None,
        }
    }
}

/// Locates each target without fetching it.
pub fn probe_targets(
    resolver: &Resolver,
    targets: &BTreeMap<String, VersionPin>,
) -> BTreeMap<String, Probe> {
    targets
        .iter()
        .map(|(name, pin)| {
            let probe = match resolver.locate(name, pin) {
                Err(e) => Probe::failed(name, e.to_string()),
                Ok(found) => {
                    let located = found.located;
                    let deps = located.description.hard_deps();
                    let fingerprint = match &located.payload {
                        Payload::Dir(d) => {
                            hash_tree(d).map_err(|e| format!("{}: {e}", d.display()))
                        }
                        _ => Ok(String::new()),
                    };
                    match (deps, fingerprint) {
                        (Err(e), _) => Probe::failed(name, format!("bad dependency field: {e}")),
                        (_, Err(e)) => Probe::failed(name, e),
                        (Ok(deps), Ok(fp)) => Probe {
                            name: name.clone(),
                            version: Some(located.version.clone()),
                            commit: located.commit.clone(),
                            fingerprint: (!fp.is_empty()).then_some(fp),
                            deps: deps.into_iter().map(|d| d.name).collect(),
                            error: None,
                            located: Some(located),
                        },
                    }
                }
            };
            (name.clone(), probe)
        })
        .collect()
}

fn probe_graph(probes: &BTreeMap<String, Probe>) -> DepGraph {
    probes
        .iter()
        .map(|(n, p)| {
            let deps = p
                .deps
                .iter()
                .filter(|d| probes.contains_key(*d))
                .cloned()
                .collect();
            (n.clone(), deps)
        })
        .collect()
}

/// Packages needing a rebuild: those without a passing record, those whose
/// version, commit or content changed since that record, and everything
/// that transitively depends on one of them.
pub fn compute_dirty_set(probes: &BTreeMap<String, Probe>, state: &BuildState) -> BTreeSet<String> {
    let changed: BTreeSet<String> = probes
        .values()
        .filter(|p| {
            let Some(rec) = state.get(&p.name) else {
                return true;
            };
            p.error.is_some()
                || !rec.status.passed()
                || rec.version != p.version
                || rec.commit != p.commit
                || rec.fingerprint != p.fingerprint
        })
        .map(|p| p.name.clone())
        .collect();
    reverse_closure(&probe_graph(probes), &changed)
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub repo: PathBuf,
    pub report: BuildReport,
    pub dirty: BTreeSet<String>,
    /// Packages whose sources were fetched by this run, in fetch order.
    pub fetched: Vec<String>,
}

struct JobResult {
    record: BuildRecord,
    staged: Option<(PathBuf, Description)>,
}

struct Job<'a> {
    dest: &'a Path,
    staging: &'a Path,
    resolver: &'a Resolver<'a>,
    fetcher: &'a Fetcher,
    probes: &'a BTreeMap<String, Probe>,
    index: &'a RepoIndex,
    opts: &'a BuildOptions,
}

impl Job<'_> {
    fn run(&self, probe: &Probe) -> JobResult {
        let log_rel = format!("{LOG_DIR}/{}.log", probe.name);
        let mut log = format!("package: {}\n", probe.name);
        let mut record = BuildRecord {
            name: probe.name.clone(),
            version: probe.version.clone(),
            commit: probe.commit.clone(),
            fingerprint: probe.fingerprint.clone(),
            status: BuildStatus::BuildFail,
            timestamp: timestamp_now(),
            log: Some(log_rel.clone()),
        };
        let outcome = self.build(probe, &mut log);
        let staged = match outcome {
            Ok(staged) => {
                record.status = BuildStatus::Ok;
                Some(staged)
            }
            Err((status, message)) => {
                record.status = status;
                log.push_str(&format!("{status}: {message}\n"));
                None
            }
        };
        let _ = write_atomic(&self.dest.join(&log_rel), log);
        JobResult { record, staged }
    }

    fn build(
        &self,
        probe: &Probe,
        log: &mut String,
    ) -> Result<(PathBuf, Description), (BuildStatus, String)> {
        let fail = |m: String| (BuildStatus::BuildFail, m);
        if let Some(e) = &probe.error {
            return Err(fail(e.clone()));
        }
        let located = probe.located.as_ref().expect("located when no error");
        log.push_str(&format!(
            "version: {}\nsource: {} {}\n",
            located.version, located.entry.source_type, located.entry.url
        ));
        if let Some(c) = &located.commit {
            log.push_str(&format!("commit: {c}\n"));
        }
        let tree = self
            .fetcher
            .materialize(located)
            .map_err(|e| fail(e.to_string()))?;
        let tarball = self
            .staging
            .join(tarball_name(&probe.name, &located.version));
        pack_dir(&tree.path, &probe.name, &tarball).map_err(|e| fail(format!("packing: {e}")))?;
        log.push_str("built\n");

        let check_dir = self.staging.join(format!("check-{}", probe.name));
        let bytes = fs::read(&tarball).map_err(|e| fail(e.to_string()))?;
        unpack_tarball(&bytes, &check_dir).map_err(|e| fail(format!("unpacking: {e}")))?;
        let src = check_dir.join(&probe.name);
        let checked = match &self.opts.check_cmd {
            Some(cmd) => run_check(cmd, &src, log),
            None => self.structural_check(&src, probe),
        };
        let _ = remove_dir_if_exists(&check_dir);
        checked.map_err(|m| (BuildStatus::CheckFail, m))?;
        log.push_str("check passed\n");
        Ok((tarball, tree.description))
    }

    /// The DESCRIPTION parses, names the probed version, and every hard
    /// dependency is available from the build, the index or the
    /// dependency repositories at a version meeting its bound.
    fn structural_check(&self, src: &Path, probe: &Probe) -> Result<(), String> {
        let text =
            fs::read_to_string(src.join("DESCRIPTION")).map_err(|e| format!("DESCRIPTION: {e}"))?;
        let desc = Description::parse(&text).map_err(|e| format!("DESCRIPTION: {e}"))?;
        if desc.name != probe.name || Some(&desc.version) != probe.version.as_ref() {
            return Err(format!(
                "DESCRIPTION declares {} {}",
                desc.name, desc.version
            ));
        }
        for dep in desc.hard_deps().map_err(|e| e.to_string())? {
            let ok = if let Some(p) = self.probes.get(&dep.name) {
                p.version.as_ref().is_some_and(|v| dep.is_satisfied_by(v))
            } else if self
                .index
                .versions_of(&dep.name)
                .any(|r| dep.is_satisfied_by(&r.version))
            {
                true
            } else {
                self.resolver
                    .locate(&dep.name, &VersionPin::Latest)
                    .is_ok_and(|f| dep.is_satisfied_by(&f.located.version))
            };
            if !ok {
                return Err(format!("dependency {dep} is not available"));
            }
        }
        Ok(())
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn run_check(template: &str, src: &Path, log: &mut String) -> Result<(), String> {
    let cmd = template.replace(
        CHECK_SRC_PLACEHOLDER,
        &shell_quote(&src.display().to_string()),
    );
    log.push_str(&format!("check: {cmd}\n"));
    let out = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .current_dir(src)
        .output()
        .map_err(|e| format!("running check: {e}"))?;
    log.push_str(&String::from_utf8_lossy(&out.stdout));
    log.push_str(&String::from_utf8_lossy(&out.stderr));
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("check exited with {}", out.status))
    }
}

fn unbuilt(probe: &Probe, status: BuildStatus) -> BuildRecord {
    BuildRecord {
        name: probe.name.clone(),
        version: probe.version.clone(),
        commit: probe.commit.clone(),
        fingerprint: probe.fingerprint.clone(),
        status,
        timestamp: timestamp_now(),
        log: None,
    }
}

fn remove_tarball(contrib: &Path, name: &str, version: &PackageVersion) -> Result<(), RepoError> {
    let path = contrib.join(tarball_name(name, version));
    match fs::remove_file(&path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(RepoError::io(&path, e)),
        _ => Ok(()),
    }
}

/// Builds or updates the validated repository at `dest` from `manifest`.
///
/// The packages built are the manifest's targets: every entry of a package
/// manifest, or the pins of a seeding manifest. Their dependencies outside
/// the manifest are expected to come from its dependency repositories.
pub fn make_repo(
    manifest: &AnyManifest,
    dest: &Path,
    fetcher: &Fetcher,
    opts: &BuildOptions,
) -> Result<BuildOutcome, RepoError> {
    let contrib = contrib_dir(dest);
    fs::create_dir_all(&contrib).map_err(|e| RepoError::io(&contrib, e))?;
    let staging = dest.join(STAGING_DIR);
    remove_dir_if_exists(&staging).map_err(|e| RepoError::io(&staging, e))?;
    fs::create_dir_all(&staging).map_err(|e| RepoError::io(&staging, e))?;
    let fetched_before = fetcher.fetch_count();
    fetcher.reset_refreshes();

    let mut state = BuildState::load(dest)?;
    let mut index = RepoIndex::read_or_empty(&dest.display().to_string())?;
    // a passing record whose tarball went missing no longer counts
    state.records.retain(|name, rec| {
        !rec.status.passed()
            || rec
                .version
                .as_ref()
                .is_some_and(|v| contrib.join(tarball_name(name, v)).is_file())
    });

    let targets = manifest.targets();
    let resolver = Resolver::new(manifest.base(), fetcher).with_pins(targets.clone());
    let probes = probe_targets(&resolver, &targets);
    let dirty = compute_dirty_set(&probes, &state);
    let graph = probe_graph(&probes);

    let mut results: BTreeMap<String, BuildRecord> = BTreeMap::new();
    for name in probes.keys().filter(|n| !dirty.contains(*n)) {
        let mut rec = state
            .get(name)
            .expect("clean packages have a record")
            .clone();
        rec.status = BuildStatus::UpToDate;
        results.insert(name.clone(), rec);
    }

    let snapshot = index.clone();
    let job = Job {
        dest,
        staging: &staging,
        resolver: &resolver,
        fetcher,
        probes: &probes,
        index: &snapshot,
        opts,
    };
    let parallelism = opts.parallelism.max(1);
    let mut staged: Vec<(String, PathBuf, Description)> = Vec::new();
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<JobResult>();
        let mut pending: BTreeSet<String> = dirty.clone();
        let mut running = 0usize;
        loop {
            let ready: Vec<String> = pending
                .iter()
                .filter(|n| graph[*n].iter().all(|d| results.contains_key(d)))
                .cloned()
                .collect();
            let mut progressed = false;
            for name in ready {
                let probe = &probes[&name];
                if graph[&name].iter().any(|d| !results[d].status.passed()) {
                    pending.remove(&name);
                    results.insert(name, unbuilt(probe, BuildStatus::DepFail));
                    progressed = true;
                } else if running < parallelism {
                    pending.remove(&name);
                    running += 1;
                    progressed = true;
                    let tx = tx.clone();
                    let job = &job;
                    s.spawn(move || {
                        let _ = tx.send(job.run(probe));
                    });
                }
            }
            if progressed {
                continue;
            }
            if running == 0 {
                // whatever is left waits on itself
                for name in std::mem::take(&mut pending) {
                    results.insert(
                        name.clone(),
                        unbuilt(&probes[&name], BuildStatus::BuildFail),
                    );
                }
                break;
            }
            let done = rx.recv().expect("a job is running");
            running -= 1;
            if let Some((path, desc)) = done.staged {
                staged.push((done.record.name.clone(), path, desc));
            }
            results.insert(done.record.name.clone(), done.record);
        }
    });

    for (name, path, desc) in staged {
        if let Some(old) = index.get(&name).map(|r| r.version.clone()) {
            if old != desc.version {
                remove_tarball(&contrib, &name, &old)?;
            }
        }
        let target = contrib.join(tarball_name(&name, &desc.version));
        fs::rename(&path, &target).map_err(|e| RepoError::io(&target, e))?;
        index.upsert(&desc);
    }
    let stale: Vec<(String, PackageVersion)> = index
        .pairs()
        .into_iter()
        .filter(|(n, _)| !targets.contains_key(n))
        .collect();
    for (name, version) in stale {
        remove_tarball(&contrib, &name, &version)?;
        index.remove(&name);
    }
    state.records.retain(|n, _| targets.contains_key(n));
    for (name, rec) in &results {
        state.records.insert(name.clone(), rec.clone());
    }
    let index_path = contrib.join(INDEX_FILE);
    write_atomic(&index_path, index.to_text()).map_err(|e| RepoError::io(&index_path, e))?;
    state.save(dest)?;
    let report = BuildReport {
        rows: results.into_values().collect(),
    };
    let report_path = BuildReport::path(dest);
    write_atomic(&report_path, report.to_tsv()).map_err(|e| RepoError::io(&report_path, e))?;
    remove_dir_if_exists(&staging).map_err(|e| RepoError::io(&staging, e))?;

    Ok(BuildOutcome {
        repo: dest.to_path_buf(),
        report,
        dirty,
        fetched: fetcher.fetch_log()[fetched_before..].to_vec(),
    })
}
