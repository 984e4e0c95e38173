//! DESCRIPTION/PACKAGES metadata: DCF records, package versions and
//! dependency constraints.

mod constraint;
mod dcf;
mod version;

pub use constraint::{
    format_dep_field, parse_dep_field, ConstraintError, ConstraintOp, DepConstraint, VersionBound,
};
pub use dcf::{is_valid_key, parse_dcf, serialize_dcf, DcfError, DcfRecord};
pub use version::{compare_versions, PackageVersion, VersionError};

use thiserror::Error;

/// Dependency fields whose entries must be installed before a package.
pub const HARD_DEP_FIELDS: [&str; 2] = ["Depends", "Imports"];

/// Names that appear in dependency fields but are provided by the runtime
/// itself and never resolved as packages.
pub const RUNTIME_PROVIDED: &[&str] = &[
    "R",
    "base",
    "compiler",
    "datasets",
    "grDevices",
    "graphics",
    "grid",
    "methods",
    "parallel",
    "splines",
    "stats",
    "stats4",
    "tcltk",
    "tools",
    "utils",
];

pub fn is_runtime_provided(name: &str) -> bool {
    RUNTIME_PROVIDED.contains(&name)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DescriptionError {
    #[error(transparent)]
    Dcf(#[from] DcfError),
    #[error("DESCRIPTION must contain exactly one record, found {0}")]
    RecordCount(usize),
    #[error("DESCRIPTION is missing the `{0}` field")]
    MissingField(&'static str),
    #[error(transparent)]
    Version(#[from] VersionError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// A parsed package DESCRIPTION with the fields the tool relies on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub name: String,
    pub version: PackageVersion,
    pub record: DcfRecord,
}

impl Description {
    pub fn parse(text: &str) -> Result<Self, DescriptionError> {
        let mut records = parse_dcf(text)?;
        if records.len() != 1 {
            return Err(DescriptionError::RecordCount(records.len()));
        }
        Self::from_record(records.remove(0))
    }

    pub fn from_record(record: DcfRecord) -> Result<Self, DescriptionError> {
        let name = record
            .get("Package")
            .ok_or(DescriptionError::MissingField("Package"))?
            .to_string();
        let version = record
            .get("Version")
            .ok_or(DescriptionError::MissingField("Version"))?
            .parse()?;
        Ok(Self {
            name,
            version,
            record,
        })
    }

    pub fn field_deps(&self, field: &str) -> Result<Vec<DepConstraint>, ConstraintError> {
        self.record
            .get(field)
            .map_or(Ok(Vec::new()), parse_dep_field)
    }

    /// Depends ∪ Imports, minus runtime-provided names.
    pub fn hard_deps(&self) -> Result<Vec<DepConstraint>, ConstraintError> {
        let mut out = Vec::new();
        for field in HARD_DEP_FIELDS {
            out.extend(
                self.field_deps(field)?
                    .into_iter()
                    .filter(|d| !is_runtime_provided(&d.name)),
            );
        }
        Ok(out)
    }

    pub fn suggests(&self) -> Result<Vec<DepConstraint>, ConstraintError> {
        Ok(self
            .field_deps("Suggests")?
            .into_iter()
            .filter(|d| !is_runtime_provided(&d.name))
            .collect())
    }
}
