#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Runs the `cohort` binary against a private store, cache and config
/// directory so the caller's environment cannot leak in.
pub struct Cohort {
    pub home: PathBuf,
    pub root: PathBuf,
    pub cache: PathBuf,
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    fn from(out: Output) -> Self {
        Self {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        }
    }

    #[track_caller]
    pub fn ok(self) -> Self {
        assert_eq!(
            self.code, 0,
            "stdout:\n{}\nstderr:\n{}",
            self.stdout, self.stderr
        );
        self
    }
}

impl Cohort {
    pub fn new(dir: &Path) -> Self {
        let c = Self {
            home: dir.join("home"),
            root: dir.join("store"),
            cache: dir.join("cache"),
        };
        std::fs::create_dir_all(&c.home).unwrap();
        c
    }

    pub fn command(&self) -> Command {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_cohort"));
        cmd.env_remove("COHORT_ROOT")
            .env_remove("COHORT_CACHE")
            .env("HOME", &self.home)
            .env("XDG_CONFIG_HOME", self.home.join("config"))
            .env("XDG_DATA_HOME", self.home.join("data"))
            .env("XDG_CACHE_HOME", self.home.join("cachehome"));
        cmd
    }

    /// With `--root` and `--cache` pointing at this instance's directories.
    pub fn run(&self, args: &[&str]) -> Run {
        let mut cmd = self.command();
        cmd.arg("--root")
            .arg(&self.root)
            .arg("--cache")
            .arg(&self.cache)
            .args(args);
        Run::from(cmd.output().unwrap())
    }

    pub fn run_bare(&self, args: &[&str], env: &[(&str, &Path)]) -> Run {
        let mut cmd = self.command();
        for (k, v) in env {
            cmd.env(k, v);
        }
        Run::from(cmd.args(args).output().unwrap())
    }
}

/// Value of `COHORT_LIBRARY_PATH` after evaluating `activation` in a shell.
pub fn eval_activation(activation: &str) -> String {
    let script = format!(
        "COHORT_LIBRARY_PATH=stale\n{activation}\nprintf '%s' \"${{COHORT_LIBRARY_PATH-}}\""
    );
    let out = Command::new("sh").arg("-c").arg(script).output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

/// `(name, version, status)` from a build report on stdout.
pub fn report_statuses(tsv: &str) -> Vec<(String, String, String)> {
    let mut lines = tsv.lines();
    assert_eq!(
        lines.next(),
        Some("name\tversion\tcommit\tstatus\ttimestamp\tlog")
    );
    lines
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            assert_eq!(c.len(), 6, "{l}");
            (c[0].to_string(), c[1].to_string(), c[3].to_string())
        })
        .collect()
}
