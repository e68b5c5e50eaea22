use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.csv";
pub const STATUS_OK: &str = "ok";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_id: String,
    pub class_id: usize,
    pub class: String,
    pub split: String,
    pub fold: u32,
    pub kind: String,
    /// FMAT file name relative to the manifest, empty for skipped clips.
    pub file: String,
    /// `ok`, or `skipped: <reason>`.
    pub status: String,
}

impl ManifestRow {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("opening {} (run `features` first)", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Class names by id, taken from the manifest; ids never seen get
/// `class<k>`.
pub fn class_names(rows: &[ManifestRow], classes: usize) -> Vec<String> {
    (0..classes)
        .map(|k| {
            rows.iter()
                .find(|r| r.class_id == k)
                .map_or_else(|| format!("class{k}"), |r| r.class.clone())
        })
        .collect()
}
