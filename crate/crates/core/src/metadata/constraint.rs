use std::fmt;

use thiserror::Error;

use super::version::PackageVersion;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("dependency entry `{entry}`: unknown operator `{op}`")]
    UnknownOperator { entry: String, op: String },
    #[error("dependency entry `{entry}`: unparseable version `{version}`")]
    BadVersion { entry: String, version: String },
    #[error("dependency entry `{entry}`: malformed")]
    Malformed { entry: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintOp {
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
}

impl ConstraintOp {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            ">=" => Self::Ge,
            "<=" => Self::Le,
            ">" => Self::Gt,
            "<" => Self::Lt,
            "==" => Self::Eq,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ge => ">=",
            Self::Le => "<=",
            Self::Gt => ">",
            Self::Lt => "<",
            Self::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VersionBound {
    pub op: ConstraintOp,
    pub version: PackageVersion,
}

impl VersionBound {
    pub fn matches(&self, v: &PackageVersion) -> bool {
        match self.op {
            ConstraintOp::Ge => v >= &self.version,
            ConstraintOp::Le => v <= &self.version,
            ConstraintOp::Gt => v > &self.version,
            ConstraintOp::Lt => v < &self.version,
            ConstraintOp::Eq => v == &self.version,
        }
    }
}

impl fmt::Display for VersionBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.op.as_str(), self.version)
    }
}

/// One entry of a Depends/Imports/Suggests field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DepConstraint {
    pub name: String,
    pub bound: Option<VersionBound>,
}

impl DepConstraint {
    pub fn unbounded(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            bound: None,
        }
    }

    pub fn is_satisfied_by(&self, v: &PackageVersion) -> bool {
        self.bound.as_ref().is_none_or(|b| b.matches(v))
    }
}

impl fmt::Display for DepConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.bound {
            Some(b) => write!(f, "{} ({b})", self.name),
            None => f.write_str(&self.name),
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_'))
}

fn parse_entry(entry: &str) -> Result<DepConstraint, ConstraintError> {
    let malformed = || ConstraintError::Malformed {
        entry: entry.to_string(),
    };
    let Some(open) = entry.find('(') else {
        let name = entry.trim();
        return if valid_name(name) {
            Ok(DepConstraint::unbounded(name))
        } else {
            Err(malformed())
        };
    };

    let name = entry[..open].trim();
    let inner = entry[open + 1..]
        .trim_end()
        .strip_suffix(')')
        .ok_or_else(malformed)?
        .trim();
    if !valid_name(name) || inner.contains(['(', ')']) {
        return Err(malformed());
    }

    let op_len = inner
        .find(|c: char| c.is_ascii_digit() || c.is_whitespace())
        .unwrap_or(inner.len());
    let (op, version) = inner.split_at(op_len);
    let op = ConstraintOp::parse(op).ok_or_else(|| ConstraintError::UnknownOperator {
        entry: entry.to_string(),
        op: op.to_string(),
    })?;
    let version = version.trim();
    let version = PackageVersion::parse(version).map_err(|_| ConstraintError::BadVersion {
        entry: entry.to_string(),
        version: version.to_string(),
    })?;
    Ok(DepConstraint {
        name: name.to_string(),
        bound: Some(VersionBound { op, version }),
    })
}

/// Parses a comma-separated dependency field. Empty entries (e.g. from a
/// trailing comma) are skipped.
pub fn parse_dep_field(text: &str) -> Result<Vec<DepConstraint>, ConstraintError> {
    text.split(',')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(parse_entry)
        .collect()
}

pub fn format_dep_field(deps: &[DepConstraint]) -> String {
    deps.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bound(op: ConstraintOp, v: &str) -> Option<VersionBound> {
        Some(VersionBound {
            op,
            version: v.parse().unwrap(),
        })
    }

    #[test]
    fn bounded_entry() {
        assert_eq!(
            parse_dep_field("pkgA (>= 1.2)").unwrap(),
            vec![DepConstraint {
                name: "pkgA".into(),
                bound: bound(ConstraintOp::Ge, "1.2")
            }]
        );
    }

    #[test]
    fn bare_name() {
        assert_eq!(
            parse_dep_field("pkgB").unwrap(),
            vec![DepConstraint::unbounded("pkgB")]
        );
    }

    #[test]
    fn whitespace_tolerant() {
        let expected = vec![
            DepConstraint {
                name: "pkgC".into(),
                bound: bound(ConstraintOp::Eq, "2.0-1"),
            },
            DepConstraint::unbounded("pkgD"),
        ];
        assert_eq!(parse_dep_field("pkgC(==2.0-1), pkgD").unwrap(), expected);
        assert_eq!(
            parse_dep_field("  pkgC ( ==   2.0-1 )  ,\n    pkgD  ").unwrap(),
            expected
        );
        assert_eq!(parse_dep_field("pkgC (==2.0-1),pkgD,").unwrap(), expected);
    }

    #[test]
    fn every_operator() {
        for (text, op) in [
            (">=", ConstraintOp::Ge),
            ("<=", ConstraintOp::Le),
            (">", ConstraintOp::Gt),
            ("<", ConstraintOp::Lt),
            ("==", ConstraintOp::Eq),
        ] {
            let dep = &parse_dep_field(&format!("x ({text} 1.0)")).unwrap()[0];
            assert_eq!(dep.bound.as_ref().unwrap().op, op);
        }
    }

    #[test]
    fn unknown_operator_names_entry() {
        let err = parse_dep_field("ok, bad (~= 1.0)").unwrap_err();
        assert_eq!(
            err,
            ConstraintError::UnknownOperator {
                entry: "bad (~= 1.0)".into(),
                op: "~=".into()
            }
        );
        assert!(parse_dep_field("x (= 1.0)").is_err());
        assert!(parse_dep_field("x (!= 1.0)").is_err());
    }

    #[test]
    fn bad_version_names_entry() {
        let err = parse_dep_field("x (>= 1.0a)").unwrap_err();
        assert!(
            matches!(err, ConstraintError::BadVersion { ref entry, .. } if entry == "x (>= 1.0a)")
        );
        assert!(err.to_string().contains("x (>= 1.0a)"));
    }

    #[test]
    fn malformed_entries() {
        for bad in ["x (>= 1.0", "(>= 1.0)", "x y", "x ((>= 1))"] {
            assert!(parse_dep_field(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn satisfaction() {
        let dep = &parse_dep_field("x (> 1.0)").unwrap()[0];
        assert!(dep.is_satisfied_by(&"1.0.1".parse().unwrap()));
        assert!(!dep.is_satisfied_by(&"1.0".parse().unwrap()));
        assert!(DepConstraint::unbounded("x").is_satisfied_by(&"0".parse().unwrap()));
    }

    #[test]
    fn format_round_trips() {
        let deps = parse_dep_field("a (>= 1.2), b, c (< 3-1)").unwrap();
        assert_eq!(format_dep_field(&deps), "a (>= 1.2), b, c (< 3-1)");
        assert_eq!(parse_dep_field(&format_dep_field(&deps)).unwrap(), deps);
    }
}
