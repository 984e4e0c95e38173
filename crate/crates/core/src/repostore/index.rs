//! `src/contrib/PACKAGES` repository indexes.

use std::path::{Path, PathBuf};

use crate::location::{Location, LocationError};
use crate::metadata::{
    parse_dcf, serialize_dcf, DcfError, DcfRecord, Description, DescriptionError, PackageVersion,
};

pub const CONTRIB_DIR: &str = "src/contrib";
pub const INDEX_FILE: &str = "PACKAGES";
pub const ARCHIVE_DIR: &str = "Archive";

/// Fields copied from a package's DESCRIPTION into its index row.
pub const INDEX_FIELDS: [&str; 5] = ["Package", "Version", "Depends", "Imports", "Suggests"];

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error(transparent)]
    Location(#[from] LocationError),
    #[error("{location}: {source}")]
    Parse {
        location: String,
        #[source]
        source: DcfError,
    },
    #[error("{location}: record {record}: {source}")]
    Row {
        location: String,
        record: usize,
        #[source]
        source: DescriptionError,
    },
}

pub fn contrib_dir(repo: &Path) -> PathBuf {
    repo.join(CONTRIB_DIR)
}

pub fn index_path(repo: &Path) -> PathBuf {
    contrib_dir(repo).join(INDEX_FILE)
}

pub fn tarball_name(name: &str, version: &PackageVersion) -> String {
    format!("{name}_{version}.tar.gz")
}

pub fn archive_root(repo: &str) -> String {
    Location::parse(repo)
        .join(CONTRIB_DIR)
        .join(ARCHIVE_DIR)
        .to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepoIndex {
    rows: Vec<Description>,
}

impl RepoIndex {
    pub fn parse(text: &str, location: &str) -> Result<Self, IndexError> {
        let records = parse_dcf(text).map_err(|source| IndexError::Parse {
            location: location.to_string(),
            source,
        })?;
        let rows = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                Description::from_record(r).map_err(|source| IndexError::Row {
                    location: location.to_string(),
                    record: i + 1,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rows })
    }

    /// Reads `<repo>/src/contrib/PACKAGES`.
    pub fn read(repo: &str) -> Result<Self, IndexError> {
        let loc = Location::parse(repo).join(CONTRIB_DIR).join(INDEX_FILE);
        let text = loc.read_to_string()?;
        Self::parse(&text, &loc.to_string())
    }

    /// Like [`RepoIndex::read`] but a repository without an index reads as
    /// empty.
    pub fn read_or_empty(repo: &str) -> Result<Self, IndexError> {
        match Self::read(repo) {
            Err(IndexError::Location(e)) if e.is_not_found() => Ok(Self::default()),
            other => other,
        }
    }

    pub fn rows(&self) -> &[Description] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn versions_of<'a, 'n>(
        &'a self,
        name: &'n str,
    ) -> impl Iterator<Item = &'a Description> + use<'a, 'n> {
        self.rows.iter().filter(move |r| r.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Description> {
        self.versions_of(name)
            .max_by(|a, b| a.version.cmp(&b.version))
    }

    /// Index row for a package: the index fields of its DESCRIPTION.
    pub fn row_for(desc: &Description) -> Description {
        let mut record = DcfRecord::new();
        for key in INDEX_FIELDS {
            if let Some(v) = desc.record.get(key) {
                record.set(key, v);
            }
        }
        Description {
            name: desc.name.clone(),
            version: desc.version.clone(),
            record,
        }
    }

    /// Replaces every row for `desc.name` with one row for `desc`.
    pub fn upsert(&mut self, desc: &Description) {
        self.remove(&desc.name);
        self.rows.push(Self::row_for(desc));
    }

    pub fn remove(&mut self, name: &str) {
        self.rows.retain(|r| r.name != name);
    }

    /// Rows sorted by name then version, so equal indexes serialize to equal
    /// bytes.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<&Description> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.version.cmp(&b.version)));
        serialize_dcf(
            &rows
                .into_iter()
                .map(|d| d.record.clone())
                .collect::<Vec<_>>(),
        )
    }

    pub fn pairs(&self) -> Vec<(String, PackageVersion)> {
        let mut v: Vec<_> = self
            .rows
            .iter()
            .map(|r| (r.name.clone(), r.version.clone()))
            .collect();
        v.sort();
        v
    }
}
