//! Read-only access to manifests, indexes and tarballs that may live on the
//! local filesystem, behind a `file://` URL, or on an HTTP(S) server.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LocationError {
    #[error("{location}: {source}")]
    Io {
        location: String,
        #[source]
        source: io::Error,
    },
    #[error("{location}: {message}")]
    Http { location: String, message: String },
    #[error("{location}: not found")]
    NotFound { location: String },
    #[error("{location}: operation requires a local path")]
    NotLocal { location: String },
}

impl LocationError {
    pub fn is_not_found(&self) -> bool {
        match self {
            Self::NotFound { .. } => true,
            Self::Io { source, .. } => source.kind() == io::ErrorKind::NotFound,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Location {
    Local(PathBuf),
    Remote(String),
}

impl Location {
    pub fn parse(s: &str) -> Self {
        if let Some(path) = s.strip_prefix("file://") {
            Self::Local(PathBuf::from(path))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Self::Remote(s.trim_end_matches('/').to_string())
        } else {
            Self::Local(PathBuf::from(s))
        }
    }

    pub fn join(&self, rel: &str) -> Self {
        match self {
            Self::Local(p) => Self::Local(p.join(rel)),
            Self::Remote(u) => Self::Remote(format!("{u}/{}", rel.trim_start_matches('/'))),
        }
    }

    pub fn as_local(&self) -> Option<&Path> {
        match self {
            Self::Local(p) => Some(p),
            Self::Remote(_) => None,
        }
    }

    pub fn local_or_err(&self) -> Result<&Path, LocationError> {
        self.as_local().ok_or_else(|| LocationError::NotLocal {
            location: self.to_string(),
        })
    }

    pub fn read_bytes(&self) -> Result<Vec<u8>, LocationError> {
        match self {
            Self::Local(p) => std::fs::read(p).map_err(|source| {
                if source.kind() == io::ErrorKind::NotFound {
                    LocationError::NotFound {
                        location: self.to_string(),
                    }
                } else {
                    LocationError::Io {
                        location: self.to_string(),
                        source,
                    }
                }
            }),
            Self::Remote(url) => http_get(url),
        }
    }

    pub fn read_to_string(&self) -> Result<String, LocationError> {
        let bytes = self.read_bytes()?;
        String::from_utf8(bytes).map_err(|e| LocationError::Io {
            location: self.to_string(),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })
    }

    /// Reads the resource, mapping "not found" to `Ok(None)`.
    pub fn read_optional(&self) -> Result<Option<String>, LocationError> {
        match self.read_to_string() {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.is_not_found() => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Local(p) => write!(f, "{}", p.display()),
            Self::Remote(u) => f.write_str(u),
        }
    }
}

const MAX_DOWNLOAD: u64 = 512 * 1024 * 1024;

fn agent() -> &'static ureq::Agent {
    static AGENT: std::sync::OnceLock<ureq::Agent> = std::sync::OnceLock::new();
    AGENT.get_or_init(|| {
        ureq::Agent::config_builder()
            .timeout_connect(Some(std::time::Duration::from_secs(15)))
            .timeout_global(Some(std::time::Duration::from_secs(300)))
            .build()
            .into()
    })
}

fn http_get(url: &str) -> Result<Vec<u8>, LocationError> {
    let mut response = match agent().get(url).call() {
        Ok(r) => r,
        Err(ureq::Error::StatusCode(404)) => {
            return Err(LocationError::NotFound {
                location: url.to_string(),
            })
        }
        Err(e) => {
            return Err(LocationError::Http {
                location: url.to_string(),
                message: e.to_string(),
            })
        }
    };
    response
        .body_mut()
        .with_config()
        .limit(MAX_DOWNLOAD)
        .read_to_vec()
        .map_err(|e| LocationError::Http {
            location: url.to_string(),
            message: e.to_string(),
        })
}
