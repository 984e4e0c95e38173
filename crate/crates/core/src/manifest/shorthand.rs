use super::{is_valid_package_name, ManifestEntry, ManifestError, PackageManifest, DEFAULT_BRANCH};

struct Shorthand<'a> {
    owner: &'a str,
    repo: &'a str,
    branch: Option<&'a str>,
    subdir: Option<&'a str>,
}

fn parse(spec: &str) -> Result<Shorthand<'_>, &'static str> {
    let (owner, rest) = spec.split_once('/').ok_or("expected `owner/repo`")?;
    let repo_end = rest.find(['@', '/']).unwrap_or(rest.len());
    let (repo, mut rest) = rest.split_at(repo_end);

    let mut branch = None;
    if let Some(after) = rest.strip_prefix('@') {
        let end = after.find('/').unwrap_or(after.len());
        if end == 0 {
            return Err("empty branch after `@`");
        }
        branch = Some(&after[..end]);
        rest = &after[end..];
    }

    let subdir = match rest.strip_prefix('/') {
        None => None,
        Some(s) => {
            let s = s.trim_end_matches('/');
            if s.is_empty() || s.split('/').any(|seg| seg.is_empty() || seg == "..") {
                return Err("bad subdirectory");
            }
            Some(s)
        }
    };

    if owner.is_empty() || repo.is_empty() {
        return Err("owner and repo must be non-empty");
    }
    Ok(Shorthand {
        owner,
        repo,
        branch,
        subdir,
    })
}

/// Builds a git manifest from `owner/repo[@branch][/subdir]` specs hosted
/// under `host_base`. The package name is the subdirectory's last segment if
/// one is given, the repository name otherwise.
pub fn manifest_from_shorthand<S: AsRef<str>>(
    specs: &[S],
    host_base: &str,
) -> Result<PackageManifest, ManifestError> {
    let host = host_base.trim_end_matches('/');
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let spec = spec.as_ref();
        let err = |reason| ManifestError::Shorthand {
            spec: spec.to_string(),
            reason,
        };
        let sh = parse(spec).map_err(err)?;
        let repo = sh.repo.strip_suffix(".git").unwrap_or(sh.repo);
        let name = sh.subdir.and_then(|s| s.rsplit('/').next()).unwrap_or(repo);
        if !is_valid_package_name(name) {
            return Err(err("derived name is not a valid package name"));
        }
        entries.push(ManifestEntry::git(
            name,
            format!("{host}/{}/{}", sh.owner, sh.repo),
            sh.branch.unwrap_or(DEFAULT_BRANCH),
            sh.subdir.unwrap_or("."),
        ));
    }
    PackageManifest::new(entries)
}
