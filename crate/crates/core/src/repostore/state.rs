//! Per-package build records and the build report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::metadata::{parse_dcf, serialize_dcf, DcfRecord, PackageVersion};
use crate::util::write_atomic;

use super::RepoError;

pub const STATE_FILE: &str = ".cohort-state.dcf";
pub const REPORT_FILE: &str = "buildreport.tsv";
pub const REPORT_HEADER: &str = "name\tversion\tcommit\tstatus\ttimestamp\tlog";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuildStatus {
    Ok,
    BuildFail,
    CheckFail,
    DepFail,
    UpToDate,
}

impl BuildStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::BuildFail => "build_fail",
            Self::CheckFail => "check_fail",
            Self::DepFail => "dep_fail",
            Self::UpToDate => "up_to_date",
        }
    }

    /// `ok` and `up_to_date` both mean the package passed and is in the
    /// index.
    pub fn passed(self) -> bool {
        matches!(self, Self::Ok | Self::UpToDate)
    }
}

impl fmt::Display for BuildStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuildStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Self::Ok,
            Self::BuildFail,
            Self::CheckFail,
            Self::DepFail,
            Self::UpToDate,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| format!("unknown build status `{s}`"))
    }
}

/// The outcome of the most recent build of one package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildRecord {
    pub name: String,
    pub version: Option<PackageVersion>,
    pub commit: Option<String>,
    /// Content digest for sources without commits (local directories).
    pub fingerprint: Option<String>,
    pub status: BuildStatus,
    pub timestamp: String,
    /// Relative to the repository root.
    pub log: Option<String>,
}

impl BuildRecord {
    fn to_dcf(&self) -> DcfRecord {
        let mut r = DcfRecord::new();
        r.set("Package", self.name.clone());
        if let Some(v) = &self.version {
            r.set("Version", v.to_string());
        }
        if let Some(c) = &self.commit {
            r.set("Commit", c.clone());
        }
        if let Some(f) = &self.fingerprint {
            r.set("Fingerprint", f.clone());
        }
        r.set("Status", self.status.as_str());
        r.set("Timestamp", self.timestamp.clone());
        if let Some(l) = &self.log {
            r.set("Log", l.clone());
        }
        r
    }

    fn from_dcf(r: &DcfRecord) -> Result<Self, String> {
        let name = r.get("Package").ok_or("missing Package")?.to_string();
        let version = r
            .get("Version")
            .map(str::parse)
            .transpose()
            .map_err(|e: crate::metadata::VersionError| e.to_string())?;
        Ok(Self {
            name,
            version,
            commit: r.get("Commit").map(String::from),
            fingerprint: r.get("Fingerprint").map(String::from),
            status: r.get("Status").ok_or("missing Status")?.parse()?,
            timestamp: r.get("Timestamp").unwrap_or_default().to_string(),
            log: r.get("Log").map(String::from),
        })
    }
}

/// Build records keyed by package, persisted at `<repo>/.cohort-state.dcf`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildState {
    pub records: BTreeMap<String, BuildRecord>,
}

impl BuildState {
    pub fn path(repo: &Path) -> PathBuf {
        repo.join(STATE_FILE)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let records = parse_dcf(text).map_err(|e| e.to_string())?;
        let mut out = Self::default();
        for (i, r) in records.iter().enumerate() {
            let rec = BuildRecord::from_dcf(r).map_err(|e| format!("record {}: {e}", i + 1))?;
            out.records.insert(rec.name.clone(), rec);
        }
        Ok(out)
    }

    /// A repository without a state file has an empty state.
    pub fn load(repo: &Path) -> Result<Self, RepoError> {
        let path = Self::path(repo);
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text).map_err(|reason| RepoError::State {
                path: path.display().to_string(),
                reason,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(RepoError::io(&path, e)),
        }
    }

    pub fn to_text(&self) -> String {
        serialize_dcf(
            &self
                .records
                .values()
                .map(BuildRecord::to_dcf)
                .collect::<Vec<_>>(),
        )
    }

    pub fn save(&self, repo: &Path) -> Result<(), RepoError> {
        let path = Self::path(repo);
        write_atomic(&path, self.to_text()).map_err(|e| RepoError::io(&path, e))
    }

    pub fn get(&self, name: &str) -> Option<&BuildRecord> {
        self.records.get(name)
    }
}

/// One row per package of the manifest, sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub rows: Vec<BuildRecord>,
}

fn cell(v: Option<&str>) -> &str {
    v.filter(|s| !s.is_empty()).unwrap_or("NA")
}

impl BuildReport {
    pub fn path(repo: &Path) -> PathBuf {
        super::index::contrib_dir(repo).join(REPORT_FILE)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let version = r.version.as_ref().map(|v| v.to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.name,
                cell(version.as_deref()),
                cell(r.commit.as_deref()),
                r.status,
                cell(Some(&r.timestamp)),
                cell(r.log.as_deref()),
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err("missing report header".into());
        }
        let na = |s: &str| (s != "NA").then(|| s.to_string());
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let c: Vec<&str> = line.split('\t').collect();
                if c.len() != 6 {
                    return Err(format!("line {}: expected 6 fields", i + 2));
                }
                Ok(BuildRecord {
                    name: c[0].to_string(),
                    version: na(c[1])
                        .map(|v| v.parse())
                        .transpose()
                        .map_err(|e: crate::metadata::VersionError| e.to_string())?,
                    commit: na(c[2]),
                    fingerprint: None,
                    status: c[3].parse()?,
                    timestamp: na(c[4]).unwrap_or_default(),
                    log: na(c[5]),
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(Self { rows })
    }

    pub fn status_of(&self, name: &str) -> Option<BuildStatus> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.status)
    }

    pub fn statuses(&self) -> BTreeMap<String, BuildStatus> {
        self.rows
            .iter()
            .map(|r| (r.name.clone(), r.status))
            .collect()
    }
}
