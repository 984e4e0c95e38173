//! Tab-delimited manifest files.
//!
//! ```text
//! # manifest_type: package|seeding
//! # dep_repos: url1,url2
//! name<TAB>url<TAB>type<TAB>branch<TAB>subdir<TAB>extra[<TAB>version]
//! ...one row per entry...
//! ```
//!
//! Absent cells are written as `NA`. Seeding manifests add a `version`
//! column: entries that are not pinned carry `NA`, and pins for names that
//! have no entry of their own are written after the entries with every
//! source cell `NA`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::{
    AnyManifest, ManifestEntry, ManifestError, PackageManifest, SeedingManifest, SourceType,
    VersionPin,
};
use crate::location::Location;
use crate::util::write_atomic;

const BASE_COLUMNS: [&str; 6] = ["name", "url", "type", "branch", "subdir", "extra"];
const NA: &str = "NA";

fn cell(v: Option<&str>) -> &str {
    v.unwrap_or(NA)
}

fn header(seeding: bool) -> String {
    let mut cols = BASE_COLUMNS.to_vec();
    if seeding {
        cols.push("version");
    }
    cols.join("\t")
}

fn entry_row(e: &ManifestEntry) -> String {
    [
        e.name.as_str(),
        e.url.as_str(),
        e.source_type.as_str(),
        cell(e.branch.as_deref()),
        cell(e.subdir.as_deref()),
        cell(e.extra.as_deref()),
    ]
    .join("\t")
}

/// The exact file contents `serialize_manifest` writes.
pub fn manifest_to_string(m: &AnyManifest) -> String {
    let base = m.base();
    let seeding = matches!(m, AnyManifest::Seeding(_));
    let mut out = format!(
        "# manifest_type: {}\n# dep_repos: {}\n{}\n",
        m.kind(),
        base.dep_repos().join(","),
        header(seeding)
    );
    match m {
        AnyManifest::Package(p) => {
            for e in p.entries() {
                out.push_str(&entry_row(e));
                out.push('\n');
            }
        }
        AnyManifest::Seeding(s) => {
            for e in base.entries() {
                let pin = s.pins().get(&e.name).map(ToString::to_string);
                out.push_str(&entry_row(e));
                out.push('\t');
                out.push_str(cell(pin.as_deref()));
                out.push('\n');
            }
            for (name, pin) in s.pins() {
                if base.entry(name).is_none() {
                    out.push_str(name);
                    out.push_str("\tNA\tNA\tNA\tNA\tNA\t");
                    out.push_str(&pin.to_string());
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// A place a manifest can be published to. Returns a location string the
/// manifest can later be loaded back from.
pub trait ManifestTarget {
    fn publish(&self, contents: &str) -> Result<String, ManifestError>;
}

pub struct FileTarget(pub PathBuf);

impl ManifestTarget for FileTarget {
    fn publish(&self, contents: &str) -> Result<String, ManifestError> {
        write_atomic(&self.0, contents).map_err(|source| ManifestError::Io {
            path: self.0.display().to_string(),
            source,
        })?;
        Ok(self.0.display().to_string())
    }
}

/// Writes `<dir>/<file_name>`.
pub struct DirTarget {
    pub dir: PathBuf,
    pub file_name: String,
}

impl DirTarget {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            file_name: "manifest.tsv".to_string(),
        }
    }
}

impl ManifestTarget for DirTarget {
    fn publish(&self, contents: &str) -> Result<String, ManifestError> {
        FileTarget(self.dir.join(&self.file_name)).publish(contents)
    }
}

pub fn publish_manifest(
    m: &AnyManifest,
    target: &dyn ManifestTarget,
) -> Result<String, ManifestError> {
    target.publish(&manifest_to_string(m))
}

pub fn serialize_manifest(m: &AnyManifest, dest: &Path) -> Result<(), ManifestError> {
    publish_manifest(m, &FileTarget(dest.to_path_buf())).map(drop)
}

pub fn load_manifest(src: &str) -> Result<AnyManifest, ManifestError> {
    let text = Location::parse(src).read_to_string()?;
    parse_manifest(&text, src)
}

fn opt(cell: &str) -> Option<String> {
    (cell != NA).then(|| cell.to_string())
}

pub fn parse_manifest(text: &str, location: &str) -> Result<AnyManifest, ManifestError> {
    let err = |line: usize, reason: String| ManifestError::Load {
        location: location.to_string(),
        line,
        reason,
    };

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut kind: Option<&str> = None;
    let mut dep_repos: Option<Vec<String>> = None;
    let mut header_line = None;

    for (no, line) in lines.by_ref() {
        let Some(comment) = line.strip_prefix('#') else {
            header_line = Some((no, line));
            break;
        };
        let Some((key, value)) = comment.split_once(':') else {
            continue;
        };
        match key.trim() {
            "manifest_type" => kind = Some(value.trim()),
            "dep_repos" => {
                dep_repos = Some(
                    value
                        .trim()
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect(),
                )
            }
            _ => {}
        }
    }

    let seeding = match kind {
        Some("package") => false,
        Some("seeding") => true,
        Some(other) => return Err(err(1, format!("unknown manifest_type `{other}`"))),
        None => return Err(err(1, "missing `# manifest_type` header".into())),
    };
    let Some((header_no, header_text)) = header_line else {
        return Err(err(
            text.lines().count() + 1,
            "missing column header".into(),
        ));
    };
    if header_text != header(seeding) {
        return Err(err(
            header_no,
            format!(
                "expected column header `{}`",
                header(seeding).replace('\t', "<TAB>")
            ),
        ));
    }
    let width = if seeding { 7 } else { 6 };

    let mut entries = Vec::new();
    let mut pins = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != width {
            return Err(err(
                no,
                format!("expected {width} columns, found {}", cells.len()),
            ));
        }
        let name = cells[0];
        if !seen.insert(name.to_string()) {
            return Err(err(no, format!("duplicate package `{name}`")));
        }

        if seeding {
            match cells[6] {
                NA => {}
                v => {
                    let pin: VersionPin = v.parse().map_err(|e| err(no, format!("{e}")))?;
                    pins.insert(name.to_string(), pin);
                }
            }
            if cells[1..6].iter().all(|c| *c == NA) {
                if cells[6] == NA {
                    return Err(err(
                        no,
                        format!("`{name}` has neither a source nor a version"),
                    ));
                }
                continue;
            }
        }

        let source_type: SourceType = cells[2].parse().map_err(|e: String| err(no, e))?;
        let entry = ManifestEntry {
            name: name.to_string(),
            source_type,
            url: cells[1].to_string(),
            branch: opt(cells[3]),
            subdir: opt(cells[4]),
            extra: opt(cells[5]),
        };
        entry.validate().map_err(|e| err(no, e.to_string()))?;
        entries.push(entry);
    }

    let base = PackageManifest::with_dep_repos(entries, dep_repos.unwrap_or_default())
        .map_err(|e| err(2, e.to_string()))?;
    Ok(if seeding {
        AnyManifest::Seeding(SeedingManifest::new(base, pins)?)
    } else {
        AnyManifest::Package(base)
    })
}
