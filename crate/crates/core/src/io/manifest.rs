//! Tab-separated dataset manifests.
//!
//! One entry per line: `clean-image-path  kernel-path  sigma  seed`.
//! Relative paths resolve against the manifest's directory. Lines starting
//! with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Noise levels of the three standard training sets.
pub const STANDARD_SIGMAS: [f64; 3] = [0.01, 0.03, 0.05];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub clean: PathBuf,
    pub kernel: PathBuf,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries with paths joined onto `base` where relative.
    pub fn resolved(&self, base: &Path) -> Vec<DatasetEntry> {
        self.entries
            .iter()
            .map(|e| DatasetEntry {
                clean: base.join(&e.clean),
                kernel: base.join(&e.kernel),
                ..e.clone()
            })
            .collect()
    }
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!("manifest line {}: {} fields, expected 4", n + 1, fields.len())));
        }
        let sigma: f64 = fields[2]
            .parse()
            .map_err(|e| Error::Format(format!("manifest line {}: sigma: {e}", n + 1)))?;
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Param(format!("manifest line {}: sigma {sigma} must be non-negative", n + 1)));
        }
        let seed: u64 = fields[3]
            .parse()
            .map_err(|e| Error::Format(format!("manifest line {}: seed: {e}", n + 1)))?;
        entries.push(DatasetEntry { clean: fields[0].into(), kernel: fields[1].into(), sigma, seed });
    }
    Ok(DatasetManifest { entries })
}

pub fn format_manifest(m: &DatasetManifest) -> String {
    let mut out = String::from("# clean\tkernel\tsigma\tseed\n");
    for e in &m.entries {
        writeln!(out, "{}\t{}\t{}\t{}", e.clean.display(), e.kernel.display(), e.sigma, e.seed).unwrap();
    }
    out
}

/// Reads a manifest and resolves its paths against the file's directory.
/// Fails if any referenced file is missing.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<DatasetEntry>> {
    let path = path.as_ref();
    let m = parse_manifest(&fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let entries = m.resolved(base);
    for e in &entries {
        for p in [&e.clean, &e.kernel] {
            if !p.is_file() {
                return Err(Error::Format(format!("manifest references missing file {}", p.display())));
            }
        }
    }
    Ok(entries)
}

pub fn write_manifest(path: impl AsRef<Path>, m: &DatasetManifest) -> Result<()> {
    fs::write(path, format_manifest(m))?;
    Ok(())
}

/// Reference/test image pairs for evaluation: `name  reference  test`.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>()[..] {
            [name, r, t] => out.push((name.to_string(), r.into(), t.into())),
            ref f => {
                return Err(Error::Format(format!("pairs line {}: {} fields, expected 3", n + 1, f.len())));
            }
        }
    }
    Ok(out)
}
