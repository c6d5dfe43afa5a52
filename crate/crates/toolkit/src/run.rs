//! Run directory ownership and the run manifest.
//!
//! A run directory belongs to one process at a time (`run.lock`). The
//! manifest records the config, per-stage fingerprints and outputs with
//! their digests, oracle call counts and timings. A stage whose fingerprint
//! matches and whose outputs are intact is skipped on rerun.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, ToolError};
use crate::files::{file_digest, read_json, write_json};

pub const LOCK_FILE: &str = "run.lock";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_MANIFEST_FORMAT: &str = "seqmia-run-manifest/v1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub toolkit_version: String,
    pub config: Option<RunConfig>,
    pub config_digest: String,
    pub stages: BTreeMap<String, StageRecord>,
    /// Pairs sent to each oracle backend, keyed `stage/oracle_id`, summed
    /// over all invocations.
    pub oracle_calls: BTreeMap<String, u64>,
    /// Seconds spent in the last execution of each stage.
    pub timings: BTreeMap<String, f64>,
    /// sha256 of every recorded output, by relative path.
    pub outputs: BTreeMap<String, String>,
    /// Split manifest digests, by file.
    pub split_manifests: BTreeMap<String, String>,
    pub bleu_gap: Option<f64>,
    pub notes: Vec<String>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            format: RUN_MANIFEST_FORMAT.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config: None,
            config_digest: String::new(),
            stages: BTreeMap::new(),
            oracle_calls: BTreeMap::new(),
            timings: BTreeMap::new(),
            outputs: BTreeMap::new(),
            split_manifests: BTreeMap::new(),
            bleu_gap: None,
            notes: Vec::new(),
        }
    }
}

/// Removes the lock file when dropped.
#[derive(Debug)]
struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    pub manifest: RunManifest,
    _lock: Lock,
}

impl RunDir {
    /// Creates the directory if needed and takes the lock.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| ToolError::io(root, e))?;
        let lock_path = root.join(LOCK_FILE);
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(ToolError::Locked(root.to_path_buf())),
            Err(e) => return Err(ToolError::io(&lock_path, e)),
        };
        let _ = writeln!(f, "{}", std::process::id());
        let lock = Lock(lock_path);
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let m: RunManifest = read_json(&manifest_path)?;
            if m.format != RUN_MANIFEST_FORMAT {
                return Err(ToolError::corrupt(
                    &manifest_path,
                    format!("unknown manifest format {:?}", m.format),
                ));
            }
            m
        } else {
            RunManifest::default()
        };
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest,
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// True if `stage` last completed with `fingerprint` and its outputs
    /// are unchanged on disk.
    pub fn stage_done(&self, stage: &str, fingerprint: &str) -> bool {
        let Some(rec) = self.manifest.stages.get(stage) else {
            return false;
        };
        rec.fingerprint == fingerprint
            && rec.outputs.iter().all(|o| {
                let recorded = self.manifest.outputs.get(o);
                recorded.is_some() && file_digest(&self.path(o)).ok().as_ref() == recorded
            })
    }

    pub fn add_calls(&mut self, stage: &str, oracle_id: &str, n: u64) {
        if n > 0 {
            *self
                .manifest
                .oracle_calls
                .entry(format!("{stage}/{oracle_id}"))
                .or_insert(0) += n;
        }
    }

    /// Records a finished stage and rewrites the manifest.
    pub fn finish_stage(&mut self, stage: &str, fingerprint: &str, outputs: Vec<String>, seconds: f64) -> Result<()> {
        for o in &outputs {
            let d = file_digest(&self.path(o))?;
            self.manifest.outputs.insert(o.clone(), d);
        }
        self.manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                fingerprint: fingerprint.to_string(),
                outputs,
            },
        );
        self.manifest.timings.insert(stage.to_string(), seconds);
        self.save()
    }

    pub fn save(&self) -> Result<()> {
        write_json(&self.path(MANIFEST_FILE), &self.manifest)
    }
}
