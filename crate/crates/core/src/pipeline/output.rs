use std::fs::{self, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const LOCK_NAME: &str = ".nsci-cd.lock";

/// An output directory held for the duration of one command.
///
/// Opening takes an advisory lock file. Files handed out by [`OutputDir::file`]
/// are deleted again unless [`OutputDir::finish`] is reached, so a failed run
/// leaves no partial artifacts behind.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
    finished: bool,
}

impl OutputDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let lock = root.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(Error::Config(format!(
                    "{} is in use by another run (delete {} if it is stale)",
                    root.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(Error::io(&lock, e)),
        }
        Ok(Self {
            root,
            written: Vec::new(),
            finished: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of an artifact to be written; it is removed if the run fails.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let path = self.root.join(name);
        if !self.written.contains(&path) {
            self.written.push(path.clone());
        }
        path
    }

    /// Keeps the artifacts, releases the lock and returns the artifact paths.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.finished = true;
        let lock = self.root.join(LOCK_NAME);
        fs::remove_file(&lock).map_err(|e| Error::io(&lock, e))?;
        Ok(std::mem::take(&mut self.written))
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.finished {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        let _ = fs::remove_file(self.root.join(LOCK_NAME));
    }
}
