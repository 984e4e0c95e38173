//! Settings shared by all commands.
//!
//! Each value comes from the first of: command-line flag, environment
//! variable, config file, built-in default. The config file is a single DCF
//! record:
//!
//! ```text
//! StoreRoot: /data/cohort
//! CacheRoot: /scratch/cohort-cache
//! DepRepos: https://cloud.r-project.org, /srv/local-repo
//! Parallelism: 4
//! CheckCmd: make -C {src} check
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use cohort_core::libenv::ROOT_ENV;
use cohort_core::manifest::DEFAULT_DEP_REPOS;
use cohort_core::metadata::parse_dcf;
use cohort_core::sources::CACHE_ENV;

pub const CONFIG_KEYS: [&str; 5] = [
    "StoreRoot",
    "CacheRoot",
    "DepRepos",
    "Parallelism",
    "CheckCmd",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliConfig {
    pub store_root: PathBuf,
    pub cache_root: PathBuf,
    pub dep_repos: Vec<String>,
    pub parallelism: usize,
    pub check_cmd: Option<String>,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub root: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no home directory to derive default paths from; set {0}")]
    NoHome(&'static str),
}

/// `$XDG_CONFIG_HOME/cohort/config.dcf` or the platform equivalent.
pub fn default_config_path() -> Option<PathBuf> {
    dirs::config_dir().map(|d| d.join("cohort").join("config.dcf"))
}

fn valid_repo(s: &str) -> bool {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return false;
    }
    match s.split_once("://") {
        Some((scheme, rest)) => matches!(scheme, "http" | "https" | "file") && !rest.is_empty(),
        None => true,
    }
}

impl CliConfig {
    /// `env` looks up environment variables; passing it in keeps this
    /// testable without touching the process environment.
    pub fn load(
        flags: &Overrides,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let (file_path, required) = match &flags.config {
            Some(p) => (Some(p.clone()), true),
            None => (default_config_path(), false),
        };
        let mut file = FileValues::default();
        if let Some(path) = file_path {
            match fs::read_to_string(&path) {
                Ok(text) => file = FileValues::parse(&text, &path)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound && !required => {}
                Err(source) => {
                    return Err(ConfigError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }

        let env_path = |var| env(var).filter(|v| !v.is_empty()).map(PathBuf::from);
        let store_root = match flags
            .root
            .clone()
            .or_else(|| env_path(ROOT_ENV))
            .or(file.store_root)
        {
            Some(p) => p,
            None => dirs::data_dir()
                .ok_or(ConfigError::NoHome(ROOT_ENV))?
                .join("cohort"),
        };
        let cache_root = match flags
            .cache
            .clone()
            .or_else(|| env_path(CACHE_ENV))
            .or(file.cache_root)
        {
            Some(p) => p,
            None => dirs::cache_dir()
                .ok_or(ConfigError::NoHome(CACHE_ENV))?
                .join("cohort"),
        };
        Ok(Self {
            store_root,
            cache_root,
            dep_repos: file
                .dep_repos
                .unwrap_or_else(|| DEFAULT_DEP_REPOS.iter().map(|s| s.to_string()).collect()),
            parallelism: file.parallelism.unwrap_or(1),
            check_cmd: file.check_cmd,
        })
    }
}

#[derive(Debug, Default)]
struct FileValues {
    store_root: Option<PathBuf>,
    cache_root: Option<PathBuf>,
    dep_repos: Option<Vec<String>>,
    parallelism: Option<usize>,
    check_cmd: Option<String>,
}

impl FileValues {
    fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let invalid = |reason: String| ConfigError::Invalid {
            path: path.display().to_string(),
            reason,
        };
        let records = parse_dcf(text).map_err(|e| invalid(e.to_string()))?;
        if records.len() > 1 {
            return Err(invalid("expected a single record".into()));
        }
        let mut out = Self::default();
        let Some(rec) = records.into_iter().next() else {
            return Ok(out);
        };
        for (key, value) in rec.iter() {
            let value = value.trim();
            match key {
                "StoreRoot" => out.store_root = Some(value.into()),
                "CacheRoot" => out.cache_root = Some(value.into()),
                "DepRepos" => {
                    let repos: Vec<String> = value
                        .split([',', '\n'])
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect();
                    if let Some(bad) = repos.iter().find(|r| !valid_repo(r)) {
                        return Err(invalid(format!("DepRepos: `{bad}` is not a path or URL")));
                    }
                    out.dep_repos = Some(repos);
                }
                "Parallelism" => match value.parse::<usize>() {
                    Ok(n) if n >= 1 => out.parallelism = Some(n),
                    _ => {
                        return Err(invalid(format!(
                            "Parallelism: `{value}` is not a positive integer"
                        )))
                    }
                },
                "CheckCmd" => out.check_cmd = Some(value.to_string()),
                other => {
                    return Err(invalid(format!(
                        "unknown key `{other}` (expected one of {})",
                        CONFIG_KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    fn with_file(text: &str) -> (tempfile::TempDir, Overrides) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.dcf");
        fs::write(&path, text).unwrap();
        let flags = Overrides {
            config: Some(path),
            ..Default::default()
        };
        (dir, flags)
    }

    #[test]
    fn defaults_without_any_source() {
        let (_d, flags) = with_file("");
        let c = CliConfig::load(&flags, env_of(&[])).unwrap();
        assert_eq!(c.dep_repos, DEFAULT_DEP_REPOS);
        assert_eq!(c.parallelism, 1);
        assert_eq!(c.check_cmd, None);
        assert!(c.store_root.ends_with("cohort"));
        assert!(c.cache_root.ends_with("cohort"));
    }

    #[test]
    fn precedence_flag_env_file() {
        let (_d, mut flags) = with_file("StoreRoot: /from/file\nCacheRoot: /cache/file\n");
        let c = CliConfig::load(&flags, env_of(&[])).unwrap();
        assert_eq!(c.store_root, PathBuf::from("/from/file"));

        let env = env_of(&[(ROOT_ENV, "/from/env"), (CACHE_ENV, "/cache/env")]);
        let c = CliConfig::load(&flags, &env).unwrap();
        assert_eq!(c.store_root, PathBuf::from("/from/env"));
        assert_eq!(c.cache_root, PathBuf::from("/cache/env"));

        flags.root = Some("/from/flag".into());
        let c = CliConfig::load(&flags, &env).unwrap();
        assert_eq!(c.store_root, PathBuf::from("/from/flag"));
        assert_eq!(c.cache_root, PathBuf::from("/cache/env"));
    }

    #[test]
    fn file_values() {
        let (_d, flags) = with_file(
            "DepRepos: https://a.example/cran,\n /srv/repo\nParallelism: 3\nCheckCmd: test -f {src}/DESCRIPTION\n",
        );
        let c = CliConfig::load(&flags, env_of(&[])).unwrap();
        assert_eq!(c.dep_repos, ["https://a.example/cran", "/srv/repo"]);
        assert_eq!(c.parallelism, 3);
        assert_eq!(c.check_cmd.as_deref(), Some("test -f {src}/DESCRIPTION"));
    }

    #[test]
    fn bad_files_are_rejected() {
        for text in [
            "Parallelism: 0\n",
            "Parallelism: many\n",
            "DepRepos: ftp://x\n",
            "Colour: blue\n",
            "not dcf at all",
            "StoreRoot: /a\n\nStoreRoot: /b\n",
        ] {
            let (_d, flags) = with_file(text);
            assert!(
                matches!(
                    CliConfig::load(&flags, env_of(&[])),
                    Err(ConfigError::Invalid { .. })
                ),
                "{text:?}"
            );
        }
        let flags = Overrides {
            config: Some("/nonexistent/cohort.dcf".into()),
            ..Default::default()
        };
        assert!(matches!(
            CliConfig::load(&flags, env_of(&[])),
            Err(ConfigError::Io { .. })
        ));
    }
}
