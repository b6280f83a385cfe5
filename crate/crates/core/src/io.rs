//! File helpers: staged atomic writes and content digests.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::file(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::file(path, e))
}

/// Collects output files and writes them only on [`StagedWrites::commit`].
///
/// Each file is written to a temporary sibling and renamed into place, so a
/// failed stage leaves no partial outputs behind.
#[derive(Debug, Default)]
pub struct StagedWrites {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl StagedWrites {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.push((path.into(), contents.into()));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, contents) in &self.files {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::file(dir, e))?;
            tmp.write_all(contents).map_err(|e| Error::file(path, e))?;
            tmp.as_file().sync_all().map_err(|e| Error::file(path, e))?;
            staged.push((tmp, path.clone()));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path)
                .map_err(|e| Error::file(&path, e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut w = StagedWrites::new();
    w.add(path, contents);
    w.commit().map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn staged_files_appear_on_commit_only() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("sub/a.txt");
        let b = dir.path().join("b.txt");
        let mut w = StagedWrites::new();
        w.add(&a, "alpha");
        w.add(&b, "beta");
        assert!(!a.exists() && !b.exists());
        w.commit().unwrap();
        assert_eq!(read_string(&a).unwrap(), "alpha");
        assert_eq!(read_string(&b).unwrap(), "beta");
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 2);
    }
}
