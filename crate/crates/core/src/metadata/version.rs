use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid package version `{raw}`: {reason}")]
pub struct VersionError {
    pub raw: String,
    pub reason: &'static str,
}

/// A package version: integers separated by `.` or `-`.
///
/// Ordering is componentwise and numeric; when one version is a prefix of the
/// other the shorter one sorts first, so `1.2 < 1.2.0`. The two separators
/// are interchangeable, so `1-2-3 == 1.2.3`. Equality and hashing follow the
/// ordering and ignore the original spelling, which is kept for display.
#[derive(Debug, Clone)]
pub struct PackageVersion {
    components: Vec<u64>,
    raw: String,
}

impl PackageVersion {
    pub fn parse(raw: &str) -> Result<Self, VersionError> {
        let err = |reason| VersionError {
            raw: raw.to_string(),
            reason,
        };
        if raw.is_empty() {
            return Err(err("empty"));
        }
        let components = raw
            .split(['.', '-'])
            .map(|part| {
                if part.is_empty() {
                    Err(err("empty component"))
                } else if !part.bytes().all(|b| b.is_ascii_digit()) {
                    Err(err("components must be decimal integers"))
                } else {
                    part.parse::<u64>()
                        .map_err(|_| err("component out of range"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            components,
            raw: raw.to_string(),
        })
    }

    pub fn components(&self) -> &[u64] {
        &self.components
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Index of the first component where the two versions differ, counting a
    /// missing trailing component as a difference. `None` when equal.
    pub fn first_difference(&self, other: &Self) -> Option<usize> {
        let shared = self.components.len().min(other.components.len());
        (0..shared)
            .find(|&i| self.components[i] != other.components[i])
            .or_else(|| (self.components.len() != other.components.len()).then_some(shared))
    }
}

pub fn compare_versions(a: &PackageVersion, b: &PackageVersion) -> Ordering {
    a.cmp(b)
}

impl Ord for PackageVersion {
    fn cmp(&self, other: &Self) -> Ordering {
        // Slice ordering is lexicographic with prefix-is-less.
        self.components.as_slice().cmp(other.components.as_slice())
    }
}

impl PartialOrd for PackageVersion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for PackageVersion {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
    }
}

impl Eq for PackageVersion {}

impl Hash for PackageVersion {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.components.hash(state);
    }
}

impl FromStr for PackageVersion {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for PackageVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}
