use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use lacnn::{Error, Result};

const LOCK_NAME: &str = ".lacnn.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_NAME);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::InvalidData(format!(
                        "output directory {} is in use by another run (remove {} if that run died)",
                        dir.display(),
                        path.display()
                    ))
                } else {
                    e.into()
                }
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
