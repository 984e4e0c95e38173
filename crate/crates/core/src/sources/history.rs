//! Linear SCM histories and the earliest-commit rule.
//!
//! Two transports share one contract: git, driven as an external program,
//! and an SVN-like layout where each revision is exported as a numbered
//! directory (`<root>/<rev>/...`).

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::cache::SourceCache;
use super::{Searched, SourceError};
use crate::manifest::{VersionPin, DEFAULT_BRANCH};
use crate::metadata::{Description, PackageVersion};
use crate::util::{copy_dir_all, remove_dir_if_exists, temp_sibling};

pub trait History: Send + Sync {
    /// Human-readable location, used in errors.
    fn location(&self) -> String;

    /// Tip revision of `branch`.
    fn head(&self, branch: &str) -> Result<String, SourceError>;

    /// Revisions reachable from `tip` along the first-parent line, oldest
    /// first.
    fn revisions(&self, tip: &str) -> Result<Vec<String>, SourceError>;

    /// Contents of `path` at each revision, `None` where it does not exist.
    fn read_at(&self, revs: &[String], path: &str) -> Result<Vec<Option<String>>, SourceError>;

    /// Writes the tree under `subdir` at `rev` into `dest`.
    fn export(&self, rev: &str, subdir: &str, dest: &Path) -> Result<(), SourceError>;
}

pub fn description_path(subdir: &str) -> String {
    match subdir.trim_matches('/') {
        "" | "." => "DESCRIPTION".to_string(),
        s => format!("{s}/DESCRIPTION"),
    }
}

/// The first revision, oldest first along the first-parent line of
/// `branch`, whose `<subdir>/DESCRIPTION` names `name` at `version`.
///
/// Revisions whose DESCRIPTION is missing or does not parse are skipped.
/// Later revisions carrying the same version, including a return to it after
/// a bump, never win.
pub fn earliest_commit_for_version(
    history: &dyn History,
    branch: &str,
    name: &str,
    subdir: &str,
    version: &PackageVersion,
) -> Result<String, SourceError> {
    let tip = history.head(branch)?;
    let revs = history.revisions(&tip)?;
    let texts = history.read_at(&revs, &description_path(subdir))?;
    let mut seen: Vec<PackageVersion> = Vec::new();
    for (rev, text) in revs.iter().zip(texts) {
        let Some(desc) = text.and_then(|t| Description::parse(&t).ok()) else {
            continue;
        };
        if desc.name != name {
            continue;
        }
        if &desc.version == version {
            return Ok(rev.clone());
        }
        if !seen.contains(&desc.version) {
            seen.push(desc.version);
        }
    }
    seen.sort();
    Err(SourceError::NotFound {
        name: name.to_string(),
        requested: VersionPin::Exact(version.clone()),
        searched: vec![Searched::seen(
            format!("{} ({branch}, {subdir})", history.location()),
            seen,
        )],
    })
}

fn run_git(dir: Option<&Path>, args: &[&str]) -> Result<Vec<u8>, SourceError> {
    let mut cmd = Command::new("git");
    if let Some(d) = dir {
        cmd.arg("-C").arg(d);
    }
    let out = cmd
        .args(args)
        .env("GIT_TERMINAL_PROMPT", "0")
        .stdin(Stdio::null())
        .output()
        .map_err(|e| SourceError::Git {
            command: format!("git {}", args.join(" ")),
            message: e.to_string(),
        })?;
    if !out.status.success() {
        return Err(SourceError::Git {
            command: format!("git {}", args.join(" ")),
            message: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(out.stdout)
}

fn git_text(dir: &Path, args: &[&str]) -> Result<String, SourceError> {
    Ok(String::from_utf8_lossy(&run_git(Some(dir), args)?)
        .trim()
        .to_string())
}

/// A bare mirror of a git repository kept in the source cache.
#[derive(Debug, Clone)]
pub struct GitHistory {
    url: String,
    mirror: PathBuf,
}

impl GitHistory {
    /// Opens (cloning on first use) the mirror of `url`. With `refresh`, an
    /// existing mirror is fetched first so new upstream commits are visible.
    pub fn open(cache: &SourceCache, url: &str, refresh: bool) -> Result<Self, SourceError> {
        let git_root = cache.root().join("git");
        fs::create_dir_all(&git_root).map_err(|e| SourceError::io(&git_root, e))?;
        let key = SourceCache::key(&["git", url]);
        let mirror = git_root.join(&key);
        let lock_path = git_root.join(format!("{key}.lock"));
        let lock = File::create(&lock_path).map_err(|e| SourceError::io(&lock_path, e))?;
        lock.lock().map_err(|e| SourceError::io(&lock_path, e))?;

        if mirror.is_dir() {
            if refresh {
                run_git(Some(&mirror), &["fetch", "--quiet", "--prune", "origin"])?;
            }
        } else {
            let tmp = temp_sibling(&mirror, "clone");
            let tmp_s = tmp.to_string_lossy().into_owned();
            let cloned = run_git(None, &["clone", "--quiet", "--mirror", url, &tmp_s]);
            if let Err(e) = cloned {
                let _ = remove_dir_if_exists(&tmp);
                return Err(SourceError::Unreachable {
                    location: url.to_string(),
                    message: e.to_string(),
                });
            }
            fs::rename(&tmp, &mirror).map_err(|e| SourceError::io(&mirror, e))?;
        }
        Ok(Self {
            url: url.to_string(),
            mirror,
        })
    }
}

impl History for GitHistory {
    fn location(&self) -> String {
        self.url.clone()
    }

    fn head(&self, branch: &str) -> Result<String, SourceError> {
        let rev = if branch == DEFAULT_BRANCH {
            "HEAD^{commit}".to_string()
        } else {
            format!("refs/heads/{branch}^{{commit}}")
        };
        git_text(&self.mirror, &["rev-parse", "--verify", "--quiet", &rev]).map_err(|_| {
            SourceError::BranchNotFound {
                location: self.url.clone(),
                branch: branch.to_string(),
            }
        })
    }

    fn revisions(&self, tip: &str) -> Result<Vec<String>, SourceError> {
        Ok(git_text(
            &self.mirror,
            &["rev-list", "--first-parent", "--reverse", tip],
        )?
        .lines()
        .map(String::from)
        .collect())
    }

    fn read_at(&self, revs: &[String], path: &str) -> Result<Vec<Option<String>>, SourceError> {
        if revs.is_empty() {
            return Ok(Vec::new());
        }
        let cmd_err = |message: String| SourceError::Git {
            command: "git cat-file --batch".into(),
            message,
        };
        let mut child = Command::new("git")
            .arg("-C")
            .arg(&self.mirror)
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| cmd_err(e.to_string()))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let requests: String = revs.iter().map(|r| format!("{r}:{path}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(requests.as_bytes()));

        let mut raw = Vec::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_end(&mut raw)
            .map_err(|e| cmd_err(e.to_string()))?;
        writer
            .join()
            .expect("writer thread")
            .map_err(|e| cmd_err(e.to_string()))?;
        child.wait().map_err(|e| cmd_err(e.to_string()))?;

        let mut out = Vec::with_capacity(revs.len());
        let mut pos = 0;
        for _ in revs {
            let nl = raw[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| cmd_err("truncated output".into()))?;
            let header = String::from_utf8_lossy(&raw[pos..pos + nl]).into_owned();
            pos += nl + 1;
            let parts: Vec<&str> = header.split(' ').collect();
            if parts.len() == 3 {
                let size: usize = parts[2].parse().map_err(|_| cmd_err(header.clone()))?;
                let body = raw
                    .get(pos..pos + size)
                    .ok_or_else(|| cmd_err("truncated object".into()))?;
                out.push((parts[1] == "blob").then(|| String::from_utf8_lossy(body).into_owned()));
                pos += size + 1;
            } else {
                out.push(None);
            }
        }
        Ok(out)
    }

    fn export(&self, rev: &str, subdir: &str, dest: &Path) -> Result<(), SourceError> {
        let tree = match subdir.trim_matches('/') {
            "" | "." => format!("{rev}^{{tree}}"),
            s => format!("{rev}:{s}"),
        };
        let bytes = run_git(Some(&self.mirror), &["archive", "--format=tar", &tree])?;
        let mut archive = tar::Archive::new(bytes.as_slice());
        archive.set_preserve_mtime(false);
        archive.unpack(dest).map_err(|e| SourceError::io(dest, e))
    }
}

/// Revision-ordered exports: `<root>[/<branch>]/<rev>/...` with integer
/// revision numbers.
#[derive(Debug, Clone)]
pub struct SnapshotHistory {
    root: PathBuf,
}

impl SnapshotHistory {
    pub fn open(root: &Path) -> Result<Self, SourceError> {
        if !root.is_dir() {
            return Err(SourceError::Unreachable {
                location: root.display().to_string(),
                message: "not a directory".into(),
            });
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    fn branch_root(&self, branch: &str) -> PathBuf {
        if branch == DEFAULT_BRANCH {
            self.root.clone()
        } else {
            self.root.join(branch)
        }
    }

    fn numbered(dir: &Path) -> Result<Vec<u64>, SourceError> {
        let mut revs: Vec<u64> = fs::read_dir(dir)
            .map_err(|e| SourceError::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().to_str()?.parse().ok())
            .collect();
        revs.sort_unstable();
        Ok(revs)
    }

    /// Revision ids are `<branch>@<n>` so they stay unique across branches.
    fn split_rev(rev: &str) -> (&str, &str) {
        rev.rsplit_once('@').unwrap_or((DEFAULT_BRANCH, rev))
    }

    fn rev_dir(&self, rev: &str) -> PathBuf {
        let (branch, n) = Self::split_rev(rev);
        self.branch_root(branch).join(n)
    }
}

impl History for SnapshotHistory {
    fn location(&self) -> String {
        self.root.display().to_string()
    }

    fn head(&self, branch: &str) -> Result<String, SourceError> {
        let dir = self.branch_root(branch);
        if !dir.is_dir() {
            return Err(SourceError::BranchNotFound {
                location: self.location(),
                branch: branch.to_string(),
            });
        }
        let last = Self::numbered(&dir)?
            .pop()
            .ok_or_else(|| SourceError::BranchNotFound {
                location: self.location(),
                branch: branch.to_string(),
            })?;
        Ok(format!("{branch}@{last}"))
    }

    fn revisions(&self, tip: &str) -> Result<Vec<String>, SourceError> {
        let (branch, n) = Self::split_rev(tip);
        let tip_n: u64 = n.parse().map_err(|_| SourceError::BranchNotFound {
            location: self.location(),
            branch: tip.to_string(),
        })?;
        Ok(Self::numbered(&self.branch_root(branch))?
            .into_iter()
            .filter(|r| *r <= tip_n)
            .map(|r| format!("{branch}@{r}"))
            .collect())
    }

    fn read_at(&self, revs: &[String], path: &str) -> Result<Vec<Option<String>>, SourceError> {
        Ok(revs
            .iter()
            .map(|r| fs::read_to_string(self.rev_dir(r).join(path)).ok())
            .collect())
    }

    fn export(&self, rev: &str, subdir: &str, dest: &Path) -> Result<(), SourceError> {
        let src = self.rev_dir(rev).join(subdir);
        copy_dir_all(&src, dest).map_err(|e| SourceError::io(&src, e))
    }
}
