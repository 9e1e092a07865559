//! File-level helpers shared by the CLI and the pipeline.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use demorph_core::dataset::{parse_manifest, write_manifest, MorphRecord};

use crate::error::{HarnessError, Result};

/// Parses a manifest and resolves relative paths against its directory.
pub fn load_manifest(path: &Path) -> Result<Vec<MorphRecord>> {
    let records = parse_manifest(path)?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let rebase = |p: &PathBuf| -> PathBuf {
        if p.is_absolute() {
            p.clone()
        } else {
            base.join(p)
        }
    };
    Ok(records
        .into_iter()
        .map(|r| MorphRecord {
            morph_path: rebase(&r.morph_path),
            gt1_path: rebase(&r.gt1_path),
            gt2_path: rebase(&r.gt2_path),
            out1_path: rebase(&r.out1_path),
            out2_path: rebase(&r.out2_path),
            ..r
        })
        .collect())
}

pub fn save_manifest(records: &[MorphRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    write_manifest(records, &mut w).map_err(HarnessError::io(path))?;
    w.flush().map_err(HarnessError::io(path))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
    }
    fs::write(path, contents).map_err(HarnessError::io(path))
}
