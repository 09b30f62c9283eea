//! Run directories and manifests, plus dataset loading for the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use rankae::data::{load_csv, CsvSchema, Dataset, Sidecar};
use rankae::trainer::{Method, TrainConfig};
use rankae::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATE_FILE: &str = "state.json";
pub const NET_FILE: &str = "net.json";
pub const REPORT_FILE: &str = "report.json";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Path of the metadata file written next to a generated dataset.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// How a dataset CSV is read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

impl DataSource {
    /// Uses the sidecar when present (labels in the last column), otherwise
    /// the explicit label column.
    pub fn resolve(path: &Path, label_column: Option<usize>, has_header: bool) -> Result<Self> {
        let side = sidecar_path(path);
        let label = match (label_column, side.exists()) {
            (Some(c), _) => Some(c),
            (None, true) => {
                let meta = Sidecar::load(&side)?;
                meta.labelled.then_some(meta.dim)
            }
            (None, false) => None,
        };
        Ok(Self {
            path: std::path::absolute(path)?,
            schema: CsvSchema {
                features: None,
                label,
                has_header,
            },
        })
    }

    pub fn load(&self) -> Result<Dataset> {
        load_csv(&self.path, &self.schema)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub code: usize,
    pub net_seed: u64,
}

/// Self-description of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub method: Method,
    pub config: TrainConfig,
    pub architecture: Architecture,
    pub data: DataSource,
    pub seeds: Seeds,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub rounds_completed: usize,
    pub completed: bool,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub training: u64,
    pub network: u64,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(
            dir.join(MANIFEST_FILE),
        )?)?)
    }

    /// Writes the manifest after checking that every listed artifact exists.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let missing: Vec<&str> = self
            .artifacts
            .iter()
            .filter(|a| !dir.join(a).exists())
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Domain(format!(
                "manifest lists missing artifacts: {}",
                missing.join(", ")
            )));
        }
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }
}

/// Fresh directory `root/<UTC timestamp>-seed<seed>[-<n>]`.
pub fn create_run_dir(root: &Path, seed: u64, now: DateTime<Utc>) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    let base = format!("{}-seed{seed}", now.format("%Y%m%dT%H%M%SZ"));
    for n in 1.. {
        let name = if n == 1 {
            base.clone()
        } else {
            format!("{base}-{n}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

/// A network file, or a run directory holding one.
pub fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(NET_FILE)
    } else {
        p.to_path_buf()
    }
}
