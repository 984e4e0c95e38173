//! Fixture package ecosystems for tests.
//!
//! Everything here is written by hand (DESCRIPTION text, `PACKAGES`
//! indexes, manifest TSV, tarballs, git commits) rather than through
//! `cohort-core`, so tests can compare the library against fixtures it did
//! not produce.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use flate2::write::GzEncoder;
use flate2::Compression;

/// Writes `DESCRIPTION` and `R/marker.R` for a package into `dir`.
pub fn write_package(dir: &Path, name: &str, version: &str, fields: &[(&str, &str)], marker: &str) {
    fs::create_dir_all(dir.join("R")).unwrap();
    let mut desc = format!("Package: {name}\nVersion: {version}\n");
    for (k, v) in fields {
        desc.push_str(&format!("{k}: {v}\n"));
    }
    fs::write(dir.join("DESCRIPTION"), desc).unwrap();
    fs::write(dir.join("R/marker.R"), format!("marker <- \"{marker}\"\n")).unwrap();
}

/// Reads back the marker string written by [`write_package`].
pub fn read_marker(pkg_dir: &Path) -> String {
    let text = fs::read_to_string(pkg_dir.join("R/marker.R")).unwrap();
    text.trim()
        .trim_start_matches("marker <- \"")
        .trim_end_matches('"')
        .to_string()
}

/// Gzip tarball of `pkg_dir` with top-level directory `name/`.
pub fn tarball_bytes(pkg_dir: &Path, name: &str) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let gz = GzEncoder::new(&mut out, Compression::fast());
        let mut b = tar::Builder::new(gz);
        b.append_dir_all(name, pkg_dir).unwrap();
        b.into_inner().unwrap().finish().unwrap();
    }
    out
}

fn index_stanza(name: &str, version: &str, fields: &[(&str, &str)]) -> String {
    let mut s = format!("Package: {name}\nVersion: {version}\n");
    for (k, v) in fields {
        if matches!(*k, "Depends" | "Imports" | "Suggests") {
            s.push_str(&format!("{k}: {v}\n"));
        }
    }
    s
}

/// A repository with the standard `src/contrib` layout and an
/// `src/contrib/Archive/<name>/` tree for superseded versions.
#[derive(Clone)]
pub struct FixtureRepo {
    pub root: PathBuf,
    stanzas: Vec<(String, String)>,
}

impl FixtureRepo {
    pub fn create(root: &Path) -> Self {
        fs::create_dir_all(root.join("src/contrib")).unwrap();
        let repo = Self {
            root: root.to_path_buf(),
            stanzas: Vec::new(),
        };
        repo.write_index();
        repo
    }

    pub fn contrib(&self) -> PathBuf {
        self.root.join("src/contrib")
    }

    pub fn archive_root(&self) -> PathBuf {
        self.contrib().join("Archive")
    }

    pub fn url(&self) -> String {
        self.root.display().to_string()
    }

    fn write_index(&self) {
        let text = self
            .stanzas
            .iter()
            .map(|(_, s)| s.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        fs::write(self.contrib().join("PACKAGES"), text).unwrap();
    }

    fn build_tarball(name: &str, version: &str, fields: &[(&str, &str)], marker: &str) -> Vec<u8> {
        let tmp = tempdir_in_target();
        let pkg = tmp.join(name);
        write_package(&pkg, name, version, fields, marker);
        let bytes = tarball_bytes(&pkg, name);
        fs::remove_dir_all(&tmp).unwrap();
        bytes
    }

    /// Adds (or replaces) the current version of `name`.
    pub fn add(&mut self, name: &str, version: &str, fields: &[(&str, &str)], marker: &str) {
        if let Some(pos) = self.stanzas.iter().position(|(n, _)| n == name) {
            self.stanzas.remove(pos);
            for f in fs::read_dir(self.contrib()).unwrap() {
                let f = f.unwrap().file_name().into_string().unwrap();
                if f.starts_with(&format!("{name}_")) {
                    fs::remove_file(self.contrib().join(f)).unwrap();
                }
            }
        }
        let bytes = Self::build_tarball(name, version, fields, marker);
        fs::write(
            self.contrib().join(format!("{name}_{version}.tar.gz")),
            bytes,
        )
        .unwrap();
        self.stanzas
            .push((name.to_string(), index_stanza(name, version, fields)));
        self.write_index();
    }

    pub fn remove(&mut self, name: &str) {
        self.stanzas.retain(|(n, _)| n != name);
        for f in fs::read_dir(self.contrib()).unwrap() {
            let f = f.unwrap().file_name().into_string().unwrap();
            if f.starts_with(&format!("{name}_")) && f.ends_with(".tar.gz") {
                fs::remove_file(self.contrib().join(f)).unwrap();
            }
        }
        self.write_index();
    }

    pub fn archive(&self, name: &str, version: &str, fields: &[(&str, &str)], marker: &str) {
        let dir = self.archive_root().join(name);
        fs::create_dir_all(&dir).unwrap();
        let bytes = Self::build_tarball(name, version, fields, marker);
        fs::write(dir.join(format!("{name}_{version}.tar.gz")), bytes).unwrap();
    }

    pub fn remove_archive(&self, name: &str) {
        let _ = fs::remove_dir_all(self.archive_root().join(name));
    }

    /// Declares SCM histories searchable for packages of this repository.
    pub fn write_scm_map(&self, rows: &[(&str, &str, &str, &str, &str)]) {
        let text = rows
            .iter()
            .map(|(pkg, ty, url, branch, subdir)| {
                format!(
                    "Package: {pkg}\nType: {ty}\nURL: {url}\nBranch: {branch}\nSubdir: {subdir}\n"
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        fs::write(self.root.join("scm.dcf"), text).unwrap();
    }
}

fn tempdir_in_target() -> PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static N: AtomicU64 = AtomicU64::new(0);
    let p = std::env::temp_dir().join(format!(
        "cohort-testkit-{}-{}",
        std::process::id(),
        N.fetch_add(1, Ordering::Relaxed)
    ));
    fs::create_dir_all(&p).unwrap();
    p
}

pub fn git(dir: &Path, args: &[&str]) -> String {
    let out = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args([
            "-c",
            "user.name=Fixture",
            "-c",
            "user.email=fixture@example.org",
            "-c",
            "commit.gpgsign=false",
            "-c",
            "init.defaultBranch=main",
        ])
        .args(args)
        .env("GIT_AUTHOR_DATE", "2020-01-01T00:00:00Z")
        .env("GIT_COMMITTER_DATE", "2020-01-01T00:00:00Z")
        .output()
        .expect("git is installed");
    assert!(
        out.status.success(),
        "git {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

/// A working git repository holding one or more packages.
pub struct GitFixture {
    pub dir: PathBuf,
}

impl GitFixture {
    pub fn init(dir: &Path) -> Self {
        fs::create_dir_all(dir).unwrap();
        git(dir, &["init", "-q", "-b", "main"]);
        Self {
            dir: dir.to_path_buf(),
        }
    }

    pub fn url(&self) -> String {
        self.dir.display().to_string()
    }

    /// Writes the package into `subdir` (`"."` for the root), commits, and
    /// returns the commit id.
    pub fn commit_package(
        &self,
        subdir: &str,
        name: &str,
        version: &str,
        fields: &[(&str, &str)],
        marker: &str,
    ) -> String {
        write_package(&self.dir.join(subdir), name, version, fields, marker);
        git(&self.dir, &["add", "-A"]);
        git(
            &self.dir,
            &[
                "commit",
                "-q",
                "--allow-empty",
                "-m",
                &format!("{name} {version} {marker}"),
            ],
        );
        self.head()
    }

    pub fn commit_file(&self, path: &str, contents: &str) -> String {
        let p = self.dir.join(path);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, contents).unwrap();
        git(&self.dir, &["add", "-A"]);
        git(&self.dir, &["commit", "-q", "-m", &format!("edit {path}")]);
        self.head()
    }

    pub fn head(&self) -> String {
        git(&self.dir, &["rev-parse", "HEAD"])
    }
}

/// Linear history of a single root-level package, one commit per version.
pub fn version_history(dir: &Path, name: &str, versions: &[&str]) -> (GitFixture, Vec<String>) {
    let g = GitFixture::init(dir);
    let commits = versions
        .iter()
        .enumerate()
        .map(|(i, v)| g.commit_package(".", name, v, &[], &format!("c{}", i + 1)))
        .collect();
    (g, commits)
}

/// Package names in [`Ecosystem`] and the hard dependencies between them.
pub const ECOSYSTEM_PACKAGES: &[(&str, &[&str])] = &[
    ("alpha", &[]),
    ("beta", &["alpha"]),
    ("gamma", &["alpha"]),
    ("delta", &["beta"]),
    ("XML", &[]),
    ("rpath", &[]),
    ("lazyeval", &[]),
    ("epsilon", &["alpha"]),
    ("dplyr", &["lazyeval", "alpha", "beta"]),
    ("ggvis", &["dplyr", "lazyeval", "gamma"]),
];

/// A small, self-contained package world:
///
/// - `cran/`: repository with alpha 1.2.0, beta 2.0, gamma 0.5-1, delta 1.0,
///   XML 3.98-1; archive holds alpha 1.0.0 and 1.1.0, delta 0.9-1.
/// - `git/rpath`: rpath history 0.1.0, 0.2.0, 0.2.0, 0.3.0.
/// - `git/lazyverse`: lazyeval under `pkgs/lazyeval`, history 0.1, 0.2.
/// - `local/dplyr` 0.4.0 and `local/ggvis` 0.4.1 as plain directories.
/// - `tarballs/epsilon_1.0.tar.gz`.
/// - `manifest.tsv`: package manifest listing rpath, lazyeval, dplyr,
///   ggvis and epsilon, with `cran/` as its dependency repository.
pub struct Ecosystem {
    pub root: PathBuf,
    pub cran: FixtureRepo,
    pub rpath: GitFixture,
    pub rpath_commits: Vec<String>,
    pub lazyverse: GitFixture,
    pub lazyeval_commits: Vec<String>,
    pub dplyr_dir: PathBuf,
    pub ggvis_dir: PathBuf,
    pub epsilon_tarball: PathBuf,
    pub manifest_path: PathBuf,
}

impl Ecosystem {
    pub fn build(root: &Path) -> Self {
        let mut cran = FixtureRepo::create(&root.join("cran"));
        cran.add("alpha", "1.2.0", &[], "alpha-1.2.0");
        cran.archive("alpha", "1.0.0", &[], "alpha-1.0.0");
        cran.archive("alpha", "1.1.0", &[], "alpha-1.1.0");
        cran.add("beta", "2.0", &[("Imports", "alpha (>= 1.0)")], "beta-2.0");
        cran.add(
            "gamma",
            "0.5-1",
            &[("Depends", "R (>= 3.0), alpha")],
            "gamma-0.5-1",
        );
        cran.add("delta", "1.0", &[("Imports", "beta")], "delta-1.0");
        cran.archive("delta", "0.9-1", &[("Imports", "beta")], "delta-0.9-1");
        cran.add("XML", "3.98-1", &[], "XML-3.98-1");

        let rpath = GitFixture::init(&root.join("git/rpath"));
        let rpath_commits = ["0.1.0", "0.2.0", "0.2.0", "0.3.0"]
            .iter()
            .enumerate()
            .map(|(i, v)| rpath.commit_package(".", "rpath", v, &[], &format!("rpath-c{}", i + 1)))
            .collect();

        let lazyverse = GitFixture::init(&root.join("git/lazyverse"));
        lazyverse.commit_file("README", "several packages live here\n");
        let lazyeval_commits = ["0.1", "0.2"]
            .iter()
            .map(|v| {
                lazyverse.commit_package(
                    "pkgs/lazyeval",
                    "lazyeval",
                    v,
                    &[("Depends", "R (>= 3.1)")],
                    &format!("lazyeval-{v}"),
                )
            })
            .collect();

        let dplyr_dir = root.join("local/dplyr");
        write_package(
            &dplyr_dir,
            "dplyr",
            "0.4.0",
            &[("Imports", "lazyeval (>= 0.1), alpha, beta")],
            "dplyr-0.4.0",
        );
        let ggvis_dir = root.join("local/ggvis");
        write_package(
            &ggvis_dir,
            "ggvis",
            "0.4.1",
            &[
                ("Imports", "dplyr (>= 0.4), lazyeval, gamma"),
                ("Suggests", "XML"),
            ],
            "ggvis-0.4.1",
        );

        let eps_src = root.join("build/epsilon");
        write_package(
            &eps_src,
            "epsilon",
            "1.0",
            &[("Imports", "alpha")],
            "epsilon-1.0",
        );
        fs::create_dir_all(root.join("tarballs")).unwrap();
        let epsilon_tarball = root.join("tarballs/epsilon_1.0.tar.gz");
        fs::write(&epsilon_tarball, tarball_bytes(&eps_src, "epsilon")).unwrap();

        let manifest_path = root.join("manifest.tsv");
        let rows = [
            format!("rpath\t{}\tgit\tHEAD\t.\tNA", rpath.url()),
            format!(
                "lazyeval\t{}\tgit\tmain\tpkgs/lazyeval\tNA",
                lazyverse.url()
            ),
            format!("dplyr\t{}\tlocal\tNA\tNA\tNA", dplyr_dir.display()),
            format!("ggvis\t{}\tlocal\tNA\tNA\tNA", ggvis_dir.display()),
            format!(
                "epsilon\t{}\ttarball\tNA\tNA\tNA",
                epsilon_tarball.display()
            ),
        ];
        fs::write(
            &manifest_path,
            format!(
                "# manifest_type: package\n# dep_repos: {}\nname\turl\ttype\tbranch\tsubdir\textra\n{}\n",
                cran.url(),
                rows.join("\n")
            ),
        )
        .unwrap();

        Self {
            root: root.to_path_buf(),
            cran,
            rpath,
            rpath_commits,
            lazyverse,
            lazyeval_commits,
            dplyr_dir,
            ggvis_dir,
            epsilon_tarball,
            manifest_path,
        }
    }

    /// Hard dependencies restricted to the given package, transitively, in
    /// the fixture's own declared graph.
    pub fn hard_closure(names: &[&str]) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        let mut stack: Vec<&str> = names.to_vec();
        while let Some(n) = stack.pop() {
            if out.insert(n.to_string()) {
                let deps = ECOSYSTEM_PACKAGES
                    .iter()
                    .find(|(p, _)| *p == n)
                    .map(|(_, d)| *d)
                    .unwrap_or(&[]);
                stack.extend(deps.iter().copied());
            }
        }
        out
    }
}
