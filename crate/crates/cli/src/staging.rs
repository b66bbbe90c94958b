//! All-or-nothing command outputs.
//!
//! A command writes into a hidden staging directory inside `--out`. On
//! success each top-level entry is moved into place, replacing any older
//! copy; on failure (or panic) the staging directory is deleted, so a failed
//! command leaves no partial output behind.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let dir = out.join(format!(".staging-{command}-{}", std::process::id()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        Ok(Staging {
            out: out.to_path_buf(),
            dir,
            committed: false,
        })
    }

    /// Staged location of `rel`, with parent directories created.
    pub fn path(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    /// Moves every staged entry into the output directory.
    pub fn commit(mut self) -> Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for src in entries {
            let dst = self.out.join(src.file_name().expect("entry has a name"));
            if dst.is_dir() {
                std::fs::remove_dir_all(&dst)?;
            } else if dst.exists() {
                std::fs::remove_file(&dst)?;
            }
            std::fs::rename(&src, &dst).with_context(|| format!("moving output to {}", dst.display()))?;
        }
        std::fs::remove_dir_all(&self.dir)?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}
