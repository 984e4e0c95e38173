//! Historical cohorts from a log of package release dates.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::manifest::VersionPin;
use crate::metadata::{parse_dcf, PackageVersion};

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("row {row}: duplicate release {name} {version}")]
    Duplicate {
        row: usize,
        name: String,
        version: PackageVersion,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseEvent {
    pub name: String,
    pub version: PackageVersion,
    pub date: NaiveDate,
}

/// Release events, unique by (name, version).
///
/// The text form is TSV, `name<TAB>version<TAB>YYYY-MM-DD` per row with an
/// optional `name<TAB>version<TAB>date` header. A DCF log with Package, Version
/// and Date fields is also accepted. Row numbers in errors are line numbers
/// for TSV and record numbers for DCF.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepoEventLog {
    events: Vec<ReleaseEvent>,
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

fn parse_version(s: &str) -> Result<PackageVersion, String> {
    s.trim()
        .parse()
        .map_err(|e: crate::metadata::VersionError| e.to_string())
}

impl RepoEventLog {
    pub fn new(events: Vec<ReleaseEvent>) -> Result<Self, EventLogError> {
        Self::from_rows(events.into_iter().enumerate().map(|(i, e)| (i + 1, e)))
    }

    fn from_rows(
        rows: impl IntoIterator<Item = (usize, ReleaseEvent)>,
    ) -> Result<Self, EventLogError> {
        let mut seen = HashSet::new();
        let mut events = Vec::new();
        for (row, e) in rows {
            if !seen.insert((e.name.clone(), e.version.clone())) {
                return Err(EventLogError::Duplicate {
                    row,
                    name: e.name,
                    version: e.version,
                });
            }
            events.push(e);
        }
        Ok(Self { events })
    }

    pub fn parse(text: &str) -> Result<Self, EventLogError> {
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        if !first.contains('\t') && first.contains(':') {
            Self::parse_dcf(text)
        } else {
            Self::parse_tsv(text)
        }
    }

    fn parse_tsv(text: &str) -> Result<Self, EventLogError> {
        let mut rows = Vec::new();
        let mut first = true;
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if std::mem::take(&mut first) && cells[0].trim().eq_ignore_ascii_case("name") {
                continue;
            }
            let err = |reason: String| EventLogError::Row { row, reason };
            if cells.len() != 3 {
                return Err(err(format!(
                    "expected 3 tab-separated fields, found {}",
                    cells.len()
                )));
            }
            let name = cells[0].trim();
            if name.is_empty() {
                return Err(err("empty package name".into()));
            }
            rows.push((
                row,
                ReleaseEvent {
                    name: name.to_string(),
                    version: parse_version(cells[1]).map_err(err)?,
                    date: parse_date(cells[2]).map_err(err)?,
                },
            ));
        }
        Self::from_rows(rows)
    }

    fn parse_dcf(text: &str) -> Result<Self, EventLogError> {
        let records = parse_dcf(text).map_err(|e| EventLogError::Row {
            row: 0,
            reason: e.to_string(),
        })?;
        let mut rows = Vec::new();
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            let err = |reason: String| EventLogError::Row { row, reason };
            let field = |k: &str| r.get(k).ok_or_else(|| err(format!("missing {k}")));
            rows.push((
                row,
                ReleaseEvent {
                    name: field("Package")?.to_string(),
                    version: parse_version(field("Version")?).map_err(err)?,
                    date: parse_date(field("Date")?).map_err(err)?,
                },
            ));
        }
        Self::from_rows(rows)
    }

    pub fn read(path: &Path) -> Result<Self, EventLogError> {
        let text = std::fs::read_to_string(path).map_err(|source| EventLogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn events(&self) -> &[ReleaseEvent] {
        &self.events
    }

    /// Events in date order, ties kept in log order.
    pub fn sorted(&self) -> Vec<&ReleaseEvent> {
        let mut v: Vec<&ReleaseEvent> = self.events.iter().collect();
        v.sort_by_key(|e| e.date);
        v
    }
}

/// For each package released on or before `date`, its highest version
/// released by then.
pub fn cohort_at_date(log: &RepoEventLog, date: NaiveDate) -> BTreeMap<String, VersionPin> {
    let mut best: BTreeMap<String, PackageVersion> = BTreeMap::new();
    for e in log.events().iter().filter(|e| e.date <= date) {
        match best.get(&e.name) {
            Some(v) if *v >= e.version => {}
            _ => {
                best.insert(e.name.clone(), e.version.clone());
            }
        }
    }
    best.into_iter()
        .map(|(n, v)| (n, VersionPin::Exact(v)))
        .collect()
}
