//! Run manifests: a JSON record written beside every run's outputs, from
//! which the run can be repeated.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(&bytes)) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub manifest_format: u32,
    pub subcommand: String,
    /// Every flag of the run with defaults filled in.
    pub command: Command,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Input and output files a run touched.
#[derive(Default)]
pub struct Touched {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Touched {
    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.inputs.push(p.into());
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }
}

impl RunManifest {
    pub fn new(command: &Command, threads: Option<usize>, touched: &Touched) -> Result<Self> {
        let digest = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>();
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            manifest_format: MANIFEST_FORMAT,
            subcommand: command.name().into(),
            command: command.clone(),
            seeds: command.seeds(),
            threads,
            inputs: digest(&touched.inputs)?,
            outputs: digest(&touched.outputs)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing run manifest {}", path.display()))?;
        if m.manifest_format != MANIFEST_FORMAT {
            bail!("run manifest format {} is not supported (expected {MANIFEST_FORMAT})", m.manifest_format);
        }
        Ok(m)
    }

    /// Output files whose current bytes differ from the recorded digests.
    pub fn mismatches(&self) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            if FileDigest::of(&o.path)? != *o {
                bad.push(o.path.clone());
            }
        }
        Ok(bad)
    }
}

/// `out.ext` → `out.ext.run.json`; a directory gets `run.json` inside.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("run.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".run.json");
        s.into()
    }
}
