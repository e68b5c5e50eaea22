use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::TempDir;

/// Scratch directory beside a destination. Nothing reaches the destination
/// until [`Staging::commit`]; dropping an uncommitted stage deletes it.
pub struct Staging {
    dir: TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let parent = target.parent().context("destination has no parent directory")?;
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let dir = tempfile::Builder::new().prefix(".staging-").tempdir_in(parent)?;
        Ok(Self { dir, target: target.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Replaces the destination with the staged directory.
    pub fn commit(self) -> Result<PathBuf> {
        let staged = self.dir.keep();
        if self.target.exists() {
            let old = staged.with_extension("old");
            fs::rename(&self.target, &old)?;
            fs::rename(&staged, &self.target)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&staged, &self.target)?;
        }
        Ok(self.target)
    }
}
