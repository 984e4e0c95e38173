//! Debian-control-format records, as used by DESCRIPTION files and
//! repository `PACKAGES` indexes.
//!
//! A record is a run of `Key: value` lines. Lines that begin with whitespace
//! continue the previous field; the continuation is trimmed and joined to the
//! value with a single `\n`. Records are separated by one or more blank
//! (or whitespace-only) lines.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DcfError {
    #[error("line {line}: expected `Key: value` or an indented continuation")]
    Malformed { line: usize },
    #[error("line {line}: continuation line with no field to continue")]
    OrphanContinuation { line: usize },
    #[error("line {line}: invalid field name `{key}`")]
    InvalidKey { line: usize, key: String },
    #[error("line {line}: duplicate field `{key}` in record")]
    DuplicateKey { line: usize, key: String },
}

/// One DCF paragraph: ordered, unique keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DcfRecord {
    fields: Vec<(String, String)>,
}

pub fn is_valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl DcfRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.fields.iter().any(|(k, _)| k == key)
    }

    /// Sets `key`, replacing an existing value in place or appending.
    ///
    /// Panics if `key` is not a valid field name; callers use fixed keys.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        assert!(is_valid_key(key), "invalid DCF key {key:?}");
        let value = value.into();
        match self.fields.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.fields.push((key.to_string(), value)),
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        let idx = self.fields.iter().position(|(k, _)| k == key)?;
        Some(self.fields.remove(idx).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

impl fmt::Display for DcfRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in &self.fields {
            let mut lines = value.split('\n');
            let first = lines.next().unwrap_or("");
            if first.is_empty() {
                writeln!(f, "{key}:")?;
            } else {
                writeln!(f, "{key}: {first}")?;
            }
            for cont in lines {
                writeln!(f, " {cont}")?;
            }
        }
        Ok(())
    }
}

fn is_blank(line: &str) -> bool {
    line.chars().all(char::is_whitespace)
}

pub fn parse_dcf(text: &str) -> Result<Vec<DcfRecord>, DcfError> {
    let mut records = Vec::new();
    let mut current = DcfRecord::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);

        if is_blank(line) {
            if !current.is_empty() {
                records.push(std::mem::take(&mut current));
            }
            continue;
        }

        if line.starts_with([' ', '\t']) {
            let Some(last) = current.fields.last_mut() else {
                return Err(DcfError::OrphanContinuation { line: line_no });
            };
            last.1.push('\n');
            last.1.push_str(line.trim());
            continue;
        }

        let Some((key, value)) = line.split_once(':') else {
            return Err(DcfError::Malformed { line: line_no });
        };
        if !is_valid_key(key) {
            return Err(DcfError::InvalidKey {
                line: line_no,
                key: key.to_string(),
            });
        }
        if current.contains_key(key) {
            return Err(DcfError::DuplicateKey {
                line: line_no,
                key: key.to_string(),
            });
        }
        current
            .fields
            .push((key.to_string(), value.trim().to_string()));
    }

    if !current.is_empty() {
        records.push(current);
    }
    Ok(records)
}

/// Records separated by a single blank line, each field on its own line.
pub fn serialize_dcf(records: &[DcfRecord]) -> String {
    records
        .iter()
        .map(DcfRecord::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}
