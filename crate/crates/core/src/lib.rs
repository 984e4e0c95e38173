//! Reproducible package cohorts.
//!
//! A cohort is described by a manifest (where each package's source lives)
//! and optionally a seeding manifest (which exact versions to use). From
//! there the crate can:
//!
//! - resolve exact versions from manifest sources, repositories, archives and
//!   SCM histories ([`resolver`]),
//! - materialize them as isolated, switchable libraries that record install
//!   provenance ([`libenv`]),
//! - or build them into standard repositories, either transient ones for a
//!   single install or validated ones built incrementally ([`repostore`]).

// Errors carry the versions and locations involved; they are cold paths.
#![allow(clippy::result_large_err)]

pub mod libenv;
pub mod location;
pub mod manifest;
pub mod metadata;
pub mod repostore;
pub mod resolver;
pub mod sources;
pub mod util;

pub use manifest::{
    AnyManifest, ManifestEntry, PackageManifest, SeedingManifest, SourceType, VersionPin,
};
pub use metadata::{DcfRecord, DepConstraint, PackageVersion};
