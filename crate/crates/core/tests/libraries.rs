use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use cohort_core::libenv::{LibraryStore, Magnitude};
use cohort_core::manifest::{load_manifest, SeedingManifest};
use cohort_core::resolver::Resolver;
use cohort_core::sources::{Fetcher, SourceCache};
use cohort_core::{AnyManifest, PackageManifest, PackageVersion, SourceType, VersionPin};
use cohort_testkit::{read_marker, Ecosystem};

struct World {
    _dir: tempfile::TempDir,
    eco: Ecosystem,
    manifest: PackageManifest,
    store: LibraryStore,
    fetcher: Fetcher,
}

fn world() -> World {
    let dir = tempfile::tempdir().unwrap();
    let eco = Ecosystem::build(&dir.path().join("eco"));
    let manifest = load_manifest(&eco.manifest_path.display().to_string())
        .unwrap()
        .base()
        .clone();
    let store = LibraryStore::open(dir.path().join("store")).unwrap();
    let fetcher = Fetcher::new(SourceCache::new(dir.path().join("cache")));
    World {
        _dir: dir,
        eco,
        manifest,
        store,
        fetcher,
    }
}

fn pins(pairs: &[(&str, &str)]) -> BTreeMap<String, VersionPin> {
    pairs
        .iter()
        .map(|(n, v)| (n.to_string(), v.parse().unwrap()))
        .collect()
}

fn installed_set(store: &LibraryStore, lib: &str) -> BTreeSet<(String, String)> {
    store
        .available(lib)
        .unwrap()
        .into_values()
        .map(|p| (p.name().to_string(), p.version().to_string()))
        .collect()
}

const FIVE_PINS: &[(&str, &str)] = &[
    ("rpath", "0.2.0"),
    ("lazyeval", "0.1"),
    ("ggvis", "0.4.1"),
    ("delta", "0.9-1"),
    ("epsilon", "1.0"),
];

#[test]
fn seeding_installs_pins_and_closure_exactly() {
    let w = world();
    let seed = SeedingManifest::new(w.manifest.clone(), pins(FIVE_PINS)).unwrap();
    let r = w
        .store
        .switch_to("L1", Some(&seed.clone().into()), None, &w.fetcher)
        .unwrap();
    assert!(r.created);

    let names: Vec<&str> = FIVE_PINS.iter().map(|(n, _)| *n).collect();
    let closure = Ecosystem::hard_closure(&names);
    let got = installed_set(&w.store, "L1");
    assert_eq!(
        got.iter().map(|(n, _)| n.clone()).collect::<BTreeSet<_>>(),
        closure
    );
    for (n, v) in FIVE_PINS {
        assert!(
            got.contains(&(n.to_string(), v.to_string())),
            "{n} {v}: {got:?}"
        );
    }
    assert_eq!(r.package_count, closure.len());

    // the plan the resolver would produce, independently
    let plan = Resolver::new(&w.manifest, &w.fetcher)
        .with_pins(pins(FIVE_PINS))
        .resolve(&pins(FIVE_PINS), false)
        .unwrap();
    let plan_set: BTreeSet<(String, String)> = plan
        .pairs()
        .into_iter()
        .map(|(n, v)| (n, v.to_string()))
        .collect();
    assert_eq!(got, plan_set);
}

#[test]
fn provenance_is_recorded() {
    let w = world();
    let seed: AnyManifest = SeedingManifest::new(w.manifest.clone(), pins(FIVE_PINS))
        .unwrap()
        .into();
    w.store
        .switch_to("L1", Some(&seed), None, &w.fetcher)
        .unwrap();
    let rpath = w.store.lookup("L1", "rpath").unwrap().unwrap();
    let p = rpath.provenance().unwrap();
    assert_eq!(p.source_type, SourceType::Git);
    assert_eq!(p.commit.as_deref(), Some(w.eco.rpath_commits[1].as_str()));
    assert_eq!(read_marker(&rpath.path), "rpath-c2");
    let text = fs::read_to_string(rpath.path.join("DESCRIPTION")).unwrap();
    assert!(
        text.contains(&format!("InstallCommit: {}", w.eco.rpath_commits[1])),
        "{text}"
    );

    let delta = w
        .store
        .lookup("L1", "delta")
        .unwrap()
        .unwrap()
        .provenance()
        .unwrap();
    assert_eq!(delta.source_type, SourceType::Archive);
    assert_eq!(delta.commit, None);
    let dplyr = w
        .store
        .lookup("L1", "dplyr")
        .unwrap()
        .unwrap()
        .provenance()
        .unwrap();
    assert_eq!(
        (dplyr.source_type, dplyr.commit),
        (SourceType::LocalDir, None)
    );
}

#[test]
fn lib_manifest_round_trip() {
    let w = world();
    let seed: AnyManifest = SeedingManifest::new(w.manifest.clone(), pins(FIVE_PINS))
        .unwrap()
        .into();
    w.store
        .switch_to("L1", Some(&seed), None, &w.fetcher)
        .unwrap();
    let lm = w.store.lib_manifest("L1", Some(&w.manifest)).unwrap();
    assert!(lm.unresolved.is_empty());
    let expected: BTreeMap<String, VersionPin> = installed_set(&w.store, "L1")
        .into_iter()
        .map(|(n, v)| (n, v.parse().unwrap()))
        .collect();
    assert_eq!(lm.manifest.pins(), &expected);

    let fresh = Fetcher::new(SourceCache::new(w.eco.root.join("cache-l2")));
    w.store
        .switch_to("L2", Some(&lm.manifest.into()), None, &fresh)
        .unwrap();
    assert_eq!(installed_set(&w.store, "L1"), installed_set(&w.store, "L2"));
}

#[test]
fn install_target_with_manifest_deps() {
    let w = world();
    w.store.create("work").unwrap();
    let targets = pins(&[("ggvis", "latest")]);
    let src: AnyManifest = w.manifest.clone().into();
    let s = w
        .store
        .install_packages("work", &targets, &src, &w.fetcher)
        .unwrap();
    let names: BTreeSet<&str> = s.installed.iter().map(|(n, _)| n.as_str()).collect();
    for n in ["ggvis", "dplyr", "lazyeval", "alpha", "beta", "gamma"] {
        assert!(names.contains(n), "{n}: {names:?}");
    }
    assert!(!names.contains("XML"));

    let again = w
        .store
        .install_packages("work", &targets, &src, &w.fetcher)
        .unwrap();
    assert!(again.installed.is_empty());
    assert_eq!(again.skipped.len(), s.installed.len());
}

#[test]
fn install_respects_restricted_seed_with_repo_only_package() {
    let w = world();
    let seed: AnyManifest = w.manifest.clone().into();
    let pkgs = BTreeSet::from(["XML".to_string(), "rpath".to_string()]);
    w.store
        .switch_to("few", Some(&seed), Some(&pkgs), &w.fetcher)
        .unwrap();
    let got = installed_set(&w.store, "few");
    assert_eq!(
        got,
        BTreeSet::from([
            ("XML".into(), "3.98-1".into()),
            ("rpath".into(), "0.3.0".into())
        ])
    );
}

#[test]
fn hand_installed_packages_are_matched_or_reported() {
    let w = world();
    w.store.create("hand").unwrap();
    for (name, version) in [("XML", "3.98-1"), ("mystery", "0.1"), ("dplyr", "0.4.0")] {
        let d = w.store.lib_dir("hand").join(name);
        fs::create_dir_all(&d).unwrap();
        fs::write(
            d.join("DESCRIPTION"),
            format!("Package: {name}\nVersion: {version}\n"),
        )
        .unwrap();
    }
    let lm = w.store.lib_manifest("hand", Some(&w.manifest)).unwrap();
    assert_eq!(lm.unresolved, ["mystery"]);
    let base = lm.manifest.base();
    assert_eq!(
        base.entry("XML").unwrap().source_type,
        SourceType::Repository
    );
    assert_eq!(base.entry("XML").unwrap().url, w.eco.cran.url());
    assert_eq!(
        base.entry("dplyr").unwrap(),
        w.manifest.entry("dplyr").unwrap()
    );
    assert!(!lm.manifest.pins().contains_key("mystery"));
}

#[test]
fn risk_report_lists_newer_versions() {
    let w = world();
    let seed: AnyManifest = SeedingManifest::new(
        w.manifest.clone(),
        pins(&[
            ("alpha", "1.0.0"),
            ("beta", "2.0"),
            ("rpath", "0.3.0"),
            ("lazyeval", "0.1"),
        ]),
    )
    .unwrap()
    .into();
    w.store
        .switch_to("old", Some(&seed), None, &w.fetcher)
        .unwrap();
    let rows = w
        .store
        .update_risk_report("old", &w.manifest, &w.fetcher)
        .unwrap();
    let summary: Vec<(String, String, String, Magnitude, usize)> = rows
        .into_iter()
        .map(|r| {
            (
                r.name,
                r.installed.to_string(),
                r.available.to_string(),
                r.magnitude,
                r.reverse_dependents,
            )
        })
        .collect();
    assert_eq!(
        summary,
        [
            (
                "alpha".into(),
                "1.0.0".into(),
                "1.2.0".into(),
                Magnitude::Minor,
                1
            ),
            (
                "lazyeval".into(),
                "0.1".into(),
                "0.2".into(),
                Magnitude::Minor,
                0
            ),
        ]
    );
    let v: PackageVersion = "1.0.0".parse().unwrap();
    assert_eq!(
        Magnitude::between(&v, &"2.0.0".parse().unwrap()),
        Some(Magnitude::Major)
    );
}

mod properties {
    use super::*;
    use cohort_core::libenv::{DeriveMode, ORIGINAL};
    use cohort_core::util::hash_tree;
    use cohort_testkit::write_package;
    use proptest::prelude::*;

    const POOL: [&str; 4] = ["A", "B", "C", "D"];

    fn planted_store() -> (tempfile::TempDir, LibraryStore, Fetcher) {
        let dir = tempfile::tempdir().unwrap();
        let store = LibraryStore::open(dir.path().join("store")).unwrap();
        for (i, name) in POOL.iter().enumerate() {
            store.create(name).unwrap();
            write_package(
                &store.lib_dir(name).join("p"),
                "p",
                &format!("1.{i}"),
                &[],
                name,
            );
        }
        let fetcher = Fetcher::new(SourceCache::new(dir.path().join("cache")));
        (dir, store, fetcher)
    }

    fn contents(store: &LibraryStore) -> Vec<String> {
        POOL.iter()
            .map(|n| hash_tree(&store.library_dir(n)).unwrap())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn stack_discipline(targets in prop::collection::vec(0..POOL.len(), 1..9)) {
            let (_d, store, fetcher) = planted_store();
            let before = contents(&store);
            let mut expected = vec![ORIGINAL.to_string()];
            for &t in &targets {
                let r = store.switch_to(POOL[t], None, None, &fetcher).unwrap();
                prop_assert_eq!(&r.previous, expected.last().unwrap());
                expected.push(POOL[t].to_string());
                prop_assert_eq!(store.stack().unwrap(), expected[..expected.len() - 1].to_vec());
            }
            for _ in &targets {
                expected.pop();
                let r = store.switch_back().unwrap();
                prop_assert_eq!(&r.name, expected.last().unwrap());
            }
            prop_assert_eq!(store.current().unwrap(), ORIGINAL);
            prop_assert!(store.switch_back().is_err());
            prop_assert_eq!(contents(&store), before);
        }

        /// Libraries L0 <- L1 <- ... each inheriting from the previous one,
        /// with package i installed in the libraries flagged in `placed[i]`.
        #[test]
        fn inheritance_shadowing(
            depth in 1usize..5,
            placed in prop::collection::vec(prop::collection::vec(any::<bool>(), 5), 4),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let store = LibraryStore::open(dir.path().join("store")).unwrap();
            let lib = |k: usize| format!("L{k}");
            store.create(&lib(0)).unwrap();
            for k in 1..depth {
                store.derive_library(&lib(k), &lib(k - 1), DeriveMode::Inherit).unwrap();
            }
            for (i, flags) in placed.iter().enumerate() {
                for k in (0..depth).filter(|&k| flags[k]) {
                    let name = format!("pkg{i}");
                    write_package(&store.lib_dir(&lib(k)).join(&name), &name, &format!("1.{k}"), &[], "x");
                }
            }
            for k in 0..depth {
                for (i, flags) in placed.iter().enumerate() {
                    // nearest library at or above k, walking towards the root
                    let want = (0..=k).rev().find(|&j| flags[j]).map(|j| format!("1.{j}"));
                    let got = store
                        .lookup(&lib(k), &format!("pkg{i}"))
                        .unwrap()
                        .map(|p| p.version().to_string());
                    prop_assert_eq!(got, want, "library L{} package pkg{}", k, i);
                }
            }
        }
    }
}
