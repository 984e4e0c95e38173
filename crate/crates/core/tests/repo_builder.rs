use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use cohort_core::manifest::load_manifest;
use cohort_core::repostore::{
    make_repo, BuildOptions, BuildOutcome, BuildReport, BuildStatus, RepoIndex,
};
use cohort_core::sources::{Fetcher, SourceCache};
use cohort_core::{AnyManifest, ManifestEntry, PackageManifest, SourceType};
use cohort_testkit::{write_package, Ecosystem};

const CHECK: &str = "test ! -e {src}/FAIL";

/// Local packages A→B→C plus an independent D.
struct Chain {
    dir: tempfile::TempDir,
    fetcher: Fetcher,
}

const CHAIN: &[(&str, &[&str])] = &[("A", &["B"]), ("B", &["C"]), ("C", &[]), ("D", &[])];

impl Chain {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for (name, deps) in CHAIN {
            let imports = deps.join(", ");
            let fields: Vec<(&str, &str)> = if deps.is_empty() {
                vec![]
            } else {
                vec![("Imports", &imports)]
            };
            write_package(
                &dir.path().join("src").join(name),
                name,
                "1.0",
                &fields,
                &format!("{name}-1"),
            );
        }
        let fetcher = Fetcher::new(SourceCache::new(dir.path().join("cache")));
        Self { dir, fetcher }
    }

    fn pkg(&self, name: &str) -> PathBuf {
        self.dir.path().join("src").join(name)
    }

    fn repo(&self) -> PathBuf {
        self.dir.path().join("repo")
    }

    fn manifest(&self, names: &[&str]) -> AnyManifest {
        let entries = names
            .iter()
            .map(|n| {
                ManifestEntry::new(*n, SourceType::LocalDir, self.pkg(n).display().to_string())
            })
            .collect();
        PackageManifest::with_dep_repos(entries, vec![])
            .unwrap()
            .into()
    }

    fn build_into(&self, dest: &Path, names: &[&str], jobs: usize) -> BuildOutcome {
        let opts = BuildOptions {
            check_cmd: Some(CHECK.into()),
            parallelism: jobs,
        };
        make_repo(&self.manifest(names), dest, &self.fetcher, &opts).unwrap()
    }

    fn build(&self) -> BuildOutcome {
        self.build_into(&self.repo(), &["A", "B", "C", "D"], 2)
    }

    fn bump(&self, name: &str, version: &str) {
        let (_, deps) = CHAIN.iter().find(|(n, _)| *n == name).unwrap();
        let imports = deps.join(", ");
        let fields: Vec<(&str, &str)> = if deps.is_empty() {
            vec![]
        } else {
            vec![("Imports", &imports)]
        };
        write_package(
            &self.pkg(name),
            name,
            version,
            &fields,
            &format!("{name}-{version}"),
        );
    }
}

fn index_text(repo: &Path) -> String {
    fs::read_to_string(repo.join("src/contrib/PACKAGES")).unwrap()
}

fn index_pairs(repo: &Path) -> Vec<(String, String)> {
    RepoIndex::read(&repo.display().to_string())
        .unwrap()
        .pairs()
        .into_iter()
        .map(|(n, v)| (n, v.to_string()))
        .collect()
}

fn statuses(o: &BuildOutcome) -> BTreeMap<String, &'static str> {
    o.report
        .statuses()
        .into_iter()
        .map(|(n, s)| (n, s.as_str()))
        .collect()
}

fn expect(pairs: &[(&str, &'static str)]) -> BTreeMap<String, &'static str> {
    pairs.iter().map(|(n, s)| (n.to_string(), *s)).collect()
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Dependents of `seeds` in the fixture's declared graph, by repeated scan.
fn dependents_oracle(seeds: &[&str]) -> BTreeSet<String> {
    let mut out = set(seeds);
    loop {
        let before = out.len();
        for (n, deps) in CHAIN {
            if deps.iter().any(|d| out.contains(*d)) {
                out.insert(n.to_string());
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

#[test]
fn fresh_build_passes_everything() {
    let c = Chain::new();
    let o = c.build();
    assert_eq!(
        statuses(&o),
        expect(&[("A", "ok"), ("B", "ok"), ("C", "ok"), ("D", "ok")])
    );
    assert_eq!(index_pairs(&c.repo()).len(), 4);
    for n in ["A", "B", "C", "D"] {
        assert!(c
            .repo()
            .join(format!("src/contrib/{n}_1.0.tar.gz"))
            .is_file());
        assert!(c.repo().join(format!("logs/{n}.log")).is_file());
    }
    let report_text = fs::read_to_string(BuildReport::path(&c.repo())).unwrap();
    assert!(report_text.starts_with("name\tversion\tcommit\tstatus\ttimestamp\tlog\n"));
    assert_eq!(
        BuildReport::parse(&report_text).unwrap().statuses(),
        o.report.statuses()
    );
    assert_eq!(
        o.fetched.iter().cloned().collect::<BTreeSet<_>>(),
        set(&["A", "B", "C", "D"])
    );
}

#[test]
fn rerun_is_up_to_date_and_fetches_nothing() {
    let c = Chain::new();
    c.build();
    let before = index_text(&c.repo());
    let o = c.build();
    assert!(o
        .report
        .rows
        .iter()
        .all(|r| r.status == BuildStatus::UpToDate));
    assert!(o.fetched.is_empty());
    assert!(o.dirty.is_empty());
    assert_eq!(index_text(&c.repo()), before);
}

#[test]
fn leaf_edit_rebuilds_reverse_closure_only() {
    let c = Chain::new();
    c.build();
    c.bump("C", "1.1");
    let o = c.build();
    let expected = dependents_oracle(&["C"]);
    assert_eq!(o.dirty, expected);
    assert_eq!(o.fetched.iter().cloned().collect::<BTreeSet<_>>(), expected);
    assert_eq!(o.fetched.len(), expected.len());
    assert_eq!(
        statuses(&o),
        expect(&[("A", "ok"), ("B", "ok"), ("C", "ok"), ("D", "up_to_date")])
    );
    assert!(index_pairs(&c.repo()).contains(&("C".into(), "1.1".into())));
    assert!(!c.repo().join("src/contrib/C_1.0.tar.gz").exists());

    // content edits without a version bump count too
    fs::write(c.pkg("B").join("R/extra.R"), "x <- 1\n").unwrap();
    let o = c.build();
    assert_eq!(o.dirty, dependents_oracle(&["B"]));
}

#[test]
fn incremental_matches_from_scratch() {
    let c = Chain::new();
    c.build();
    c.bump("C", "1.1");
    c.build();
    c.bump("D", "2.0");
    c.bump("A", "1.0-1");
    c.build();
    let scratch = c.dir.path().join("scratch");
    let fresh = Fetcher::new(SourceCache::new(c.dir.path().join("cache2")));
    let opts = BuildOptions {
        check_cmd: Some(CHECK.into()),
        parallelism: 1,
    };
    make_repo(&c.manifest(&["A", "B", "C", "D"]), &scratch, &fresh, &opts).unwrap();
    assert_eq!(index_text(&c.repo()), index_text(&scratch));
}

#[test]
fn failing_check_keeps_last_passing_versions() {
    let c = Chain::new();
    c.build();
    c.bump("B", "1.1");
    fs::write(c.pkg("B").join("FAIL"), "").unwrap();
    let o = c.build();
    assert_eq!(
        statuses(&o),
        expect(&[
            ("A", "dep_fail"),
            ("B", "check_fail"),
            ("C", "up_to_date"),
            ("D", "up_to_date")
        ])
    );
    assert!(!o.fetched.contains(&"A".to_string()));
    let pairs = index_pairs(&c.repo());
    assert!(pairs.contains(&("B".into(), "1.0".into())), "{pairs:?}");
    assert!(pairs.contains(&("A".into(), "1.0".into())));
    assert!(c.repo().join("src/contrib/B_1.0.tar.gz").is_file());
    assert!(!c.repo().join("src/contrib/B_1.1.tar.gz").exists());
    let log = fs::read_to_string(c.repo().join("logs/B.log")).unwrap();
    assert!(log.contains("check_fail"), "{log}");

    // fixing it rebuilds B and A
    fs::remove_file(c.pkg("B").join("FAIL")).unwrap();
    let o = c.build();
    assert_eq!(o.dirty, set(&["A", "B"]));
    assert_eq!(statuses(&o)["B"], "ok");
    assert!(index_pairs(&c.repo()).contains(&("B".into(), "1.1".into())));
}

#[test]
fn fresh_failure_leaves_only_passing_packages() {
    let c = Chain::new();
    fs::write(c.pkg("B").join("FAIL"), "").unwrap();
    let o = c.build();
    assert_eq!(
        statuses(&o),
        expect(&[
            ("A", "dep_fail"),
            ("B", "check_fail"),
            ("C", "ok"),
            ("D", "ok")
        ])
    );
    assert_eq!(
        index_pairs(&c.repo()),
        [("C".into(), "1.0".into()), ("D".into(), "1.0".into())]
    );
}

#[test]
fn unfetchable_entry_is_build_fail_and_run_continues() {
    let c = Chain::new();
    fs::remove_dir_all(c.pkg("C")).unwrap();
    let o = c.build();
    assert_eq!(
        statuses(&o),
        expect(&[
            ("A", "dep_fail"),
            ("B", "dep_fail"),
            ("C", "build_fail"),
            ("D", "ok")
        ])
    );
}

#[test]
fn dropped_packages_leave_the_index() {
    let c = Chain::new();
    c.build();
    let o = c.build_into(&c.repo(), &["C", "D"], 1);
    assert_eq!(o.report.rows.len(), 2);
    assert_eq!(
        index_pairs(&c.repo()),
        [("C".into(), "1.0".into()), ("D".into(), "1.0".into())]
    );
    assert!(!c.repo().join("src/contrib/A_1.0.tar.gz").exists());
}

#[test]
fn parallelism_does_not_change_results() {
    let c = Chain::new();
    let serial = c.build_into(&c.dir.path().join("serial"), &["A", "B", "C", "D"], 1);
    let wide = c.build_into(&c.dir.path().join("wide"), &["A", "B", "C", "D"], 8);
    assert_eq!(serial.report.statuses(), wide.report.statuses());
    assert_eq!(
        index_text(&c.dir.path().join("serial")),
        index_text(&c.dir.path().join("wide"))
    );
}

#[test]
fn ecosystem_builds_with_structural_checks() {
    let dir = tempfile::tempdir().unwrap();
    let eco = Ecosystem::build(&dir.path().join("eco"));
    let m = load_manifest(&eco.manifest_path.display().to_string()).unwrap();
    let fetcher = Fetcher::new(SourceCache::new(dir.path().join("cache")));
    let dest = dir.path().join("validated");
    let o = make_repo(&m, &dest, &fetcher, &BuildOptions::default()).unwrap();
    for (name, status) in o.report.statuses() {
        assert_eq!(status, BuildStatus::Ok, "{name}");
    }
    let rpath = o.report.rows.iter().find(|r| r.name == "rpath").unwrap();
    assert_eq!(rpath.commit.as_deref(), Some(eco.rpath_commits[3].as_str()));

    eco.rpath
        .commit_package(".", "rpath", "0.4.0", &[], "rpath-c5");
    let o = make_repo(&m, &dest, &fetcher, &BuildOptions::default()).unwrap();
    assert_eq!(o.dirty, set(&["rpath"]));
    assert_eq!(o.fetched, ["rpath"]);
    assert!(index_pairs(&dest).contains(&("rpath".into(), "0.4.0".into())));
}

#[test]
fn missing_dependency_fails_structural_check() {
    let dir = tempfile::tempdir().unwrap();
    let pkg = dir.path().join("lonely");
    write_package(&pkg, "lonely", "1.0", &[("Imports", "ghost")], "x");
    let m: AnyManifest = PackageManifest::with_dep_repos(
        vec![ManifestEntry::new(
            "lonely",
            SourceType::LocalDir,
            pkg.display().to_string(),
        )],
        vec![],
    )
    .unwrap()
    .into();
    let fetcher = Fetcher::new(SourceCache::new(dir.path().join("cache")));
    let o = make_repo(
        &m,
        &dir.path().join("repo"),
        &fetcher,
        &BuildOptions::default(),
    )
    .unwrap();
    assert_eq!(o.report.status_of("lonely"), Some(BuildStatus::CheckFail));
    let log = fs::read_to_string(dir.path().join("repo/logs/lonely.log")).unwrap();
    assert!(log.contains("ghost"), "{log}");
}

mod properties {
    use super::*;
    use cohort_core::repostore::build_jit_repo;
    use cohort_core::resolver::Resolver;
    use cohort_core::VersionPin;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    enum Edit {
        Bump(usize),
        /// Content change without a version change.
        Touch(usize),
    }

    fn edit() -> impl Strategy<Value = Edit> {
        prop_oneof![
            (0..4usize).prop_map(Edit::Bump),
            (0..4usize).prop_map(Edit::Touch)
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn incremental_matches_full_rebuild(edits in prop::collection::vec(prop::collection::vec(edit(), 1..3), 1..4)) {
            let c = Chain::new();
            c.build();
            let mut versions = [1u32; 4];
            for (round, batch) in edits.iter().enumerate() {
                for e in batch {
                    match *e {
                        Edit::Bump(i) => {
                            versions[i] += 1;
                            c.bump(CHAIN[i].0, &format!("1.{}", versions[i]));
                        }
                        Edit::Touch(i) => {
                            fs::write(c.pkg(CHAIN[i].0).join("NOTES"), format!("round {round}\n")).unwrap();
                        }
                    }
                }
                let o = c.build();
                prop_assert!(o.report.rows.iter().all(|r| r.status.passed()));
                let fetched: BTreeSet<String> = o.fetched.iter().cloned().collect();
                prop_assert_eq!(&fetched, &o.dirty);
            }
            let scratch = c.dir.path().join("scratch");
            c.build_into(&scratch, &["A", "B", "C", "D"], 1);
            prop_assert_eq!(index_text(&c.repo()), index_text(&scratch));
        }
    }

    #[test]
    fn jit_rows_are_plan_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let eco = Ecosystem::build(&dir.path().join("eco"));
        let m = load_manifest(eco.manifest_path.to_str().unwrap()).unwrap();
        let fetcher = Fetcher::new(SourceCache::new(dir.path().join("cache")));
        let choices: Vec<(&str, Vec<&str>)> = vec![
            ("alpha", vec!["latest", "1.0.0", "1.1.0"]),
            ("delta", vec!["latest", "0.9-1"]),
            ("rpath", vec!["latest", "0.1.0", "0.2.0"]),
            ("lazyeval", vec!["latest", "0.1"]),
            ("ggvis", vec!["latest"]),
            ("epsilon", vec!["latest"]),
            ("XML", vec!["latest"]),
        ];
        let strategy = prop::collection::vec((0..choices.len(), 0..3usize), 1..4);
        let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(16));
        let case = std::sync::atomic::AtomicUsize::new(0);
        runner
            .run(&strategy, |picks| {
                let n = case.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let mut targets: BTreeMap<String, VersionPin> = BTreeMap::new();
                for (i, j) in picks {
                    let (name, pins) = &choices[i];
                    targets.insert(name.to_string(), pins[j % pins.len()].parse().unwrap());
                }
                let plan = match Resolver::new(m.base(), &fetcher).resolve(&targets, false) {
                    Ok(p) => p,
                    // e.g. alpha 1.0.0 pinned next to something needing newer
                    Err(_) => return Ok(()),
                };
                let repo = build_jit_repo(&plan, &dir.path().join(format!("jit{n}"))).unwrap();
                let rows: BTreeSet<(String, String)> = index_pairs(&repo).into_iter().collect();
                let want: BTreeSet<(String, String)> = plan
                    .pairs()
                    .into_iter()
                    .map(|(n, v)| (n, v.to_string()))
                    .collect();
                prop_assert_eq!(rows, want);
                Ok(())
            })
            .unwrap();
    }
}
