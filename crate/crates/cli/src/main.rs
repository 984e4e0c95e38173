//! `cohort`: switchable package libraries built from manifests.
//!
//! Activation lines for `eval` go to stdout. Everything meant for people
//! goes to stderr.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use cohort_core::libenv::{seed_targets, DeriveMode, LibraryStore, SwitchResult, ORIGINAL};
use cohort_core::manifest::{load_manifest, manifest_to_string, serialize_manifest};
use cohort_core::repostore::{build_jit_repo, make_repo, BuildOptions, RepoIndex};
use cohort_core::resolver::{cohort_at_date, RepoEventLog, Resolver};
use cohort_core::sources::{Fetcher, SourceCache};
use cohort_core::{AnyManifest, PackageManifest, SeedingManifest, VersionPin};

use config::{CliConfig, ConfigError, Overrides};

#[derive(Parser, Debug)]
#[command(
    name = "cohort",
    version,
    about = "Reproducible package cohorts and switchable libraries"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Library store directory [env: COHORT_ROOT]
    #[arg(long, global = true, value_name = "DIR")]
    root: Option<PathBuf>,
    /// Source cache directory [env: COHORT_CACHE]
    #[arg(long, global = true, value_name = "DIR")]
    cache: Option<PathBuf>,
    /// Config file to use instead of the default one
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Show full error details
    #[arg(long, global = true)]
    debug: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Make a library current, creating and seeding it if needed
    Switch {
        name: String,
        /// Manifest path or URL, or a repository to take every package from
        #[arg(long, value_name = "PATH|URL")]
        seed: Option<String>,
        /// Only install these packages from the seed
        #[arg(long, value_delimiter = ',', value_name = "a,b")]
        pkgs: Option<Vec<String>>,
    },
    /// Return to the previously current library
    Back,
    /// List libraries
    Libs,
    /// Create a library from an existing one
    Derive {
        name: String,
        #[arg(long, value_name = "LIB")]
        from: String,
        /// Fall back to the parent for packages not installed here, instead of copying
        #[arg(long)]
        inherit: bool,
    },
    #[command(subcommand)]
    Manifest(ManifestCommand),
    /// Install packages and their dependencies into a library
    Install {
        #[arg(required = true)]
        pkgs: Vec<String>,
        /// Manifest path or URL, or a repository
        #[arg(long, value_name = "PATH|URL")]
        from: String,
        /// Versions for the packages, in the same order (or `latest`)
        #[arg(long = "version", num_args = 1.., value_name = "V")]
        versions: Vec<String>,
        /// Target library [default: the current one]
        #[arg(long, value_name = "NAME")]
        lib: Option<String>,
    },
    #[command(subcommand)]
    Repo(RepoCommand),
    /// Pin each package to its newest release on or before a date
    Snapshot {
        /// Release log: name, version and date per line
        #[arg(long, value_name = "PATH")]
        log: PathBuf,
        #[arg(long, value_name = "YYYY-MM-DD")]
        date: NaiveDate,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        output: PathBuf,
        /// Manifest whose entries and dependency repositories to keep
        #[arg(long, value_name = "PATH|URL")]
        manifest: Option<String>,
    },
    /// List installed packages with newer versions available
    Risk {
        #[arg(long, value_name = "NAME")]
        lib: Option<String>,
        #[arg(long, value_name = "PATH|URL")]
        manifest: String,
    },
}

#[derive(Subcommand, Debug)]
enum ManifestCommand {
    /// Describe a library as a seeding manifest
    Export {
        #[arg(long, value_name = "NAME")]
        lib: Option<String>,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        output: Option<PathBuf>,
        /// Manifest consulted for packages installed by other means
        #[arg(long, value_name = "PATH|URL")]
        fallback: Option<String>,
    },
    /// Check a manifest and print it in canonical form
    Load { src: String },
}

#[derive(Subcommand, Debug)]
enum RepoCommand {
    /// Build or update a validated repository
    Make {
        #[arg(long, value_name = "PATH|URL")]
        manifest: String,
        #[arg(long, value_name = "DIR")]
        dest: PathBuf,
        /// Check command run in each package; `{src}` is its directory
        #[arg(long, value_name = "CMD")]
        check: Option<String>,
        #[arg(short = 'j', long = "jobs", value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
        jobs: Option<u32>,
    },
    /// Build a repository holding the given packages and their dependencies
    Jit {
        #[arg(long, value_name = "PATH|URL")]
        manifest: String,
        #[arg(long, value_delimiter = ',', required = true, value_name = "a,b")]
        pkgs: Vec<String>,
        #[arg(long, value_name = "DIR")]
        dest: PathBuf,
    },
}

/// Bad invocation that clap cannot catch on its own.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    cfg: CliConfig,
}

impl Ctx {
    fn store(&self) -> Result<LibraryStore> {
        Ok(LibraryStore::open(&self.cfg.store_root)?)
    }

    fn fetcher(&self) -> Fetcher {
        Fetcher::new(SourceCache::new(&self.cfg.cache_root))
    }

    fn empty_manifest(&self) -> Result<PackageManifest> {
        Ok(PackageManifest::with_dep_repos(
            vec![],
            self.cfg.dep_repos.clone(),
        )?)
    }

    /// A manifest, or failing that a repository taken as a seeding manifest
    /// pinning every package it holds.
    fn load_source(&self, src: &str) -> Result<AnyManifest> {
        let err = match load_manifest(src) {
            Ok(m) => return Ok(m),
            Err(e) => e,
        };
        let Ok(index) = RepoIndex::read(src) else {
            return Err(anyhow::Error::new(err).context(format!("loading {src}")));
        };
        let mut repos = vec![src.to_string()];
        repos.extend(
            self.cfg
                .dep_repos
                .iter()
                .filter(|r| r.as_str() != src)
                .cloned(),
        );
        let base = PackageManifest::with_dep_repos(vec![], repos)?;
        let pins = index
            .pairs()
            .into_iter()
            .map(|(n, v)| (n, VersionPin::Exact(v)))
            .collect();
        Ok(SeedingManifest::new(base, pins)?.into())
    }

    fn lib_or_current(&self, store: &LibraryStore, lib: Option<String>) -> Result<String> {
        match lib {
            Some(l) => Ok(l),
            None => Ok(store.current()?),
        }
    }
}

fn announce(r: &SwitchResult, verb: &str) {
    print!("{}", r.activation());
    let _ = std::io::stdout().flush();
    eprint!("{}", r.message(verb));
}

fn run(cli: Cli) -> Result<()> {
    let flags = Overrides {
        config: cli.config,
        root: cli.root,
        cache: cli.cache,
    };
    let cfg = CliConfig::load(&flags, |k| std::env::var(k).ok())?;
    let ctx = Ctx { cfg };

    match cli.command {
        Command::Switch { name, seed, pkgs } => {
            let store = ctx.store()?;
            let pkgs: Option<BTreeSet<String>> = pkgs.map(|p| p.into_iter().collect());
            let seed = match seed {
                Some(_) if store.exists(&name) || name == ORIGINAL => {
                    eprintln!("Library '{name}' already exists; seed ignored.");
                    None
                }
                Some(src) => Some(ctx.load_source(&src)?),
                None => None,
            };
            let r = store
                .switch_to(&name, seed.as_ref(), pkgs.as_ref(), &ctx.fetcher())
                .with_context(|| format!("switching to '{name}'"))?;
            if let Some(s) = &r.installed {
                eprintln!("Installed {} packages into '{name}'.", s.installed.len());
            }
            announce(&r, "Switched to");
        }
        Command::Back => {
            let r = ctx.store()?.switch_back()?;
            announce(&r, "Reverted to");
        }
        Command::Libs => {
            let store = ctx.store()?;
            let current = store.current()?;
            for info in store.list()? {
                let mark = if info.name == current { '*' } else { ' ' };
                let count = store.available(&info.name)?.len();
                let parent = info
                    .parent
                    .map(|p| format!(", inherits '{p}'"))
                    .unwrap_or_default();
                println!("{mark} {} ({count} packages{parent})", info.name);
            }
        }
        Command::Derive {
            name,
            from,
            inherit,
        } => {
            let mode = if inherit {
                DeriveMode::Inherit
            } else {
                DeriveMode::Branch
            };
            ctx.store()?.derive_library(&name, &from, mode)?;
            eprintln!("Created '{name}' from '{from}'.");
        }
        Command::Manifest(ManifestCommand::Export {
            lib,
            output,
            fallback,
        }) => {
            let store = ctx.store()?;
            let lib = ctx.lib_or_current(&store, lib)?;
            let fallback = match fallback {
                Some(src) => ctx.load_source(&src)?.base().clone(),
                None => ctx.empty_manifest()?,
            };
            let lm = store.lib_manifest(&lib, Some(&fallback))?;
            let m: AnyManifest = lm.manifest.into();
            match output {
                Some(path) => {
                    serialize_manifest(&m, &path)?;
                    eprintln!("Wrote manifest for '{lib}' to {}.", path.display());
                }
                None => print!("{}", manifest_to_string(&m)),
            }
            if !lm.unresolved.is_empty() {
                eprintln!(
                    "Could not determine a source for: {}",
                    lm.unresolved.join(", ")
                );
            }
        }
        Command::Manifest(ManifestCommand::Load { src }) => {
            let m = load_manifest(&src)?;
            print!("{}", manifest_to_string(&m));
            let pins = match &m {
                AnyManifest::Seeding(s) => format!(", {} pins", s.pins().len()),
                AnyManifest::Package(_) => String::new(),
            };
            eprintln!(
                "{} manifest: {} entries{pins}; dependency repositories: {}",
                m.kind(),
                m.base().entries().len(),
                m.base().dep_repos().join(", ")
            );
        }
        Command::Install {
            pkgs,
            from,
            versions,
            lib,
        } => {
            if !versions.is_empty() && versions.len() != pkgs.len() {
                return Err(usage(format!(
                    "--version given {} times for {} packages",
                    versions.len(),
                    pkgs.len()
                )));
            }
            let mut targets = BTreeMap::new();
            for (i, name) in pkgs.iter().enumerate() {
                let pin: VersionPin = match versions.get(i) {
                    Some(v) => v
                        .parse()
                        .map_err(|e| usage(format!("version `{v}`: {e}")))?,
                    None => VersionPin::Latest,
                };
                targets.insert(name.clone(), pin);
            }
            let store = ctx.store()?;
            let lib = ctx.lib_or_current(&store, lib)?;
            let source = ctx.load_source(&from)?;
            let s = store.install_packages(&lib, &targets, &source, &ctx.fetcher())?;
            for (n, v) in &s.installed {
                println!("{n}\t{v}");
            }
            eprintln!(
                "Installed {} packages into '{lib}' ({} already present).",
                s.installed.len(),
                s.skipped.len()
            );
        }
        Command::Repo(RepoCommand::Make {
            manifest,
            dest,
            check,
            jobs,
        }) => {
            let m = load_manifest(&manifest).with_context(|| format!("loading {manifest}"))?;
            let opts = BuildOptions {
                check_cmd: check.or(ctx.cfg.check_cmd.clone()),
                parallelism: jobs.map_or(ctx.cfg.parallelism, |j| j as usize),
            };
            let out = make_repo(&m, &dest, &ctx.fetcher(), &opts)?;
            print!("{}", out.report.to_tsv());
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for row in &out.report.rows {
                *counts.entry(row.status.as_str()).or_default() += 1;
            }
            let summary: Vec<String> = counts.iter().map(|(s, n)| format!("{n} {s}")).collect();
            eprintln!("Repository {}: {}.", out.repo.display(), summary.join(", "));
            let failed = out
                .report
                .rows
                .iter()
                .filter(|r| !r.status.passed())
                .count();
            if failed > 0 {
                eprintln!("{failed} packages did not pass; see the build report.");
            }
        }
        Command::Repo(RepoCommand::Jit {
            manifest,
            pkgs,
            dest,
        }) => {
            let m = ctx.load_source(&manifest)?;
            let names: BTreeSet<String> = pkgs.into_iter().collect();
            let targets = seed_targets(&m, Some(&names));
            let fetcher = ctx.fetcher();
            let plan = Resolver::new(m.base(), &fetcher)
                .with_pins(m.targets())
                .with_jobs(ctx.cfg.parallelism)
                .resolve(&targets, false)?;
            let repo = build_jit_repo(&plan, &dest)?;
            println!("{}", repo.display());
            eprintln!(
                "Repository with {} packages at {}.",
                plan.len(),
                repo.display()
            );
        }
        Command::Snapshot {
            log,
            date,
            output,
            manifest,
        } => {
            let events = RepoEventLog::read(&log)?;
            let pins = cohort_at_date(&events, date);
            let base = match manifest {
                Some(src) => ctx.load_source(&src)?.base().clone(),
                None => ctx.empty_manifest()?,
            };
            let n = pins.len();
            serialize_manifest(&SeedingManifest::new(base, pins)?.into(), &output)?;
            eprintln!("Pinned {n} packages as of {date} in {}.", output.display());
        }
        Command::Risk { lib, manifest } => {
            let store = ctx.store()?;
            let lib = ctx.lib_or_current(&store, lib)?;
            let m = ctx.load_source(&manifest)?;
            let rows = store.update_risk_report(&lib, m.base(), &ctx.fetcher())?;
            println!("name\tinstalled\tavailable\tmagnitude\treverse_dependents");
            for r in &rows {
                println!(
                    "{}\t{}\t{}\t{}\t{}",
                    r.name, r.installed, r.available, r.magnitude, r.reverse_dependents
                );
            }
            eprintln!(
                "{} of the packages in '{lib}' have updates. Magnitude and dependent counts are estimates of impact.",
                rows.len()
            );
        }
    }
    Ok(())
}

/// Errors print as one line; `--debug` adds the full cause chain.
fn report(err: &anyhow::Error, debug: bool) {
    if debug {
        eprintln!("error: {err:?}");
        return;
    }
    let flat = format!("{err:#}")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ");
    eprintln!("error: {flat}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let debug = cli.debug;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, debug);
            if e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<ConfigError>().is_some()
            {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
