//! Filesystem helpers shared by the fetch cache, repository builder and
//! library store.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use sha2::{Digest, Sha256};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// A sibling path that no other thread or process in flight will pick.
pub fn temp_sibling(path: &Path, tag: &str) -> PathBuf {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{tag}.{}.{n}", std::process::id()))
}

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = temp_sibling(path, "tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn copy_dir_all(src: &Path, dst: &Path) -> io::Result<()> {
    fs::create_dir_all(dst)?;
    for entry in fs::read_dir(src)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        let target = dst.join(entry.file_name());
        if ty.is_dir() {
            copy_dir_all(&entry.path(), &target)?;
        } else if ty.is_symlink() {
            let link = fs::read_link(entry.path())?;
            std::os::unix::fs::symlink(link, target)?;
        } else {
            fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}

pub fn remove_dir_if_exists(path: &Path) -> io::Result<()> {
    match fs::remove_dir_all(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

fn sorted_entries(dir: &Path) -> io::Result<Vec<fs::DirEntry>> {
    let mut entries = fs::read_dir(dir)?.collect::<Result<Vec<_>, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn append_tree<W: io::Write>(
    builder: &mut tar::Builder<W>,
    dir: &Path,
    prefix: &Path,
) -> io::Result<()> {
    for entry in sorted_entries(dir)? {
        let name = entry.file_name();
        if name == ".git" || name == ".svn" {
            continue;
        }
        let path = entry.path();
        let rel = prefix.join(&name);
        if entry.file_type()?.is_dir() {
            builder.append_dir(&rel, &path)?;
            append_tree(builder, &path, &rel)?;
        } else {
            builder.append_path_with_name(&path, &rel)?;
        }
    }
    Ok(())
}

/// Digest of a directory's relative paths and file contents, ignoring VCS
/// metadata, timestamps and permissions.
pub fn hash_tree(dir: &Path) -> io::Result<String> {
    fn walk(h: &mut Sha256, dir: &Path, rel: &str) -> io::Result<()> {
        for entry in sorted_entries(dir)? {
            let name = entry.file_name();
            if name == ".git" || name == ".svn" {
                continue;
            }
            let path = rel.to_string() + "/" + &name.to_string_lossy();
            let ty = entry.file_type()?;
            h.update((path.len() as u64).to_le_bytes());
            h.update(path.as_bytes());
            if ty.is_dir() {
                h.update(b"d");
                walk(h, &entry.path(), &path)?;
            } else {
                let bytes = if ty.is_symlink() {
                    fs::read_link(entry.path())?
                        .to_string_lossy()
                        .into_owned()
                        .into_bytes()
                } else {
                    fs::read(entry.path())?
                };
                h.update(if ty.is_symlink() { b"l" } else { b"f" });
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(&bytes);
            }
        }
        Ok(())
    }
    let mut h = Sha256::new();
    walk(&mut h, dir, "")?;
    Ok(hex::encode(h.finalize()))
}

/// Packs `src` as a gzip tarball whose single top-level directory is
/// `top`. Entry order, timestamps and ownership are normalized so identical
/// trees give identical bytes.
pub fn pack_dir(src: &Path, top: &str, dest: &Path) -> io::Result<()> {
    let mut bytes = Vec::new();
    {
        let gz = GzEncoder::new(&mut bytes, Compression::default());
        let mut builder = tar::Builder::new(gz);
        builder.mode(tar::HeaderMode::Deterministic);
        builder.follow_symlinks(false);
        builder.append_dir(top, src)?;
        append_tree(&mut builder, src, Path::new(top))?;
        builder.into_inner()?.finish()?;
    }
    write_atomic(dest, bytes)
}

/// Unpacks a gzip tarball into `dest` (created if missing).
pub fn unpack_tarball(bytes: &[u8], dest: &Path) -> io::Result<()> {
    fs::create_dir_all(dest)?;
    let mut archive = tar::Archive::new(GzDecoder::new(bytes));
    archive.set_preserve_mtime(false);
    archive.unpack(dest)
}

/// Reads one member of a gzip tarball without extracting the rest.
pub fn read_tarball_member(bytes: &[u8], member: &str) -> io::Result<Option<String>> {
    let mut archive = tar::Archive::new(GzDecoder::new(bytes));
    for entry in archive.entries()? {
        let mut entry = entry?;
        if entry.path()?.as_ref() == Path::new(member) {
            let mut out = String::new();
            entry.read_to_string(&mut out)?;
            return Ok(Some(out));
        }
    }
    Ok(None)
}

/// Current UTC time, second precision, RFC 3339.
pub fn timestamp_now() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
