//! Run directories and their provenance record (`run.json`).
//!
//! A run directory is written once: creating one over an existing `run.json`
//! fails, and artifacts refuse to overwrite files already present. Only the
//! `report/` subdirectory is regenerated on every render.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::protocol::AdapterInfo;

pub const RUN_RECORD: &str = "run.json";
pub const RECORD_VERSION: u32 = 1;

pub const STAGE_PROBING1: &str = "probing1";
pub const STAGE_PROBING2: &str = "probing2";
pub const STAGE_PROBING3: &str = "probing3";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl InputRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(InputRecord {
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }

    /// For inputs that exist only in memory (an in-process suite, say).
    pub fn of_bytes(label: &str, data: &[u8]) -> Self {
        InputRecord {
            path: PathBuf::from(label),
            sha256: hex(&Sha256::digest(data)),
            bytes: data.len() as u64,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `input = scored + flagged` for every pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub input: usize,
    pub scored: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    /// Stopped by the failure budget; partial artifacts are kept.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRunRecord {
    pub record_version: u32,
    pub run_id: String,
    pub stage: String,
    pub status: RunStatus,
    pub harness_version: String,
    pub created_unix: u64,
    pub config: Value,
    pub inputs: BTreeMap<String, InputRecord>,
    pub adapters: BTreeMap<String, AdapterInfo>,
    /// Paths relative to the run directory, in write order.
    pub artifacts: Vec<PathBuf>,
    pub timings_s: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_normalization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Counts>,
}

pub struct RunDir {
    root: PathBuf,
    record: ProbeRunRecord,
    started: Instant,
}

impl RunDir {
    /// Starts a run in `root`, which may exist but must not hold a record.
    /// The run id is the directory name.
    pub fn create(root: impl Into<PathBuf>, config: Value) -> Result<Self> {
        let root = root.into();
        let record_path = root.join(RUN_RECORD);
        if record_path.exists() {
            return Err(HarnessError::Invalid(format!(
                "{} already holds a run; choose a new run directory",
                root.display()
            )));
        }
        fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
        // adapters may run in another working directory
        let root = fs::canonicalize(&root).map_err(|e| HarnessError::io(&root, e))?;
        let run_id = root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        Ok(RunDir {
            record: ProbeRunRecord {
                record_version: RECORD_VERSION,
                run_id,
                stage: String::new(),
                status: RunStatus::Complete,
                harness_version: env!("CARGO_PKG_VERSION").to_string(),
                created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                config,
                inputs: BTreeMap::new(),
                adapters: BTreeMap::new(),
                artifacts: Vec::new(),
                timings_s: BTreeMap::new(),
                text_normalization: None,
                counts: None,
            },
            root,
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn record(&self) -> &ProbeRunRecord {
        &self.record
    }

    /// Set by the pipeline that fills the run.
    pub fn set_stage(&mut self, stage: &str) {
        self.record.stage = stage.to_string();
    }

    pub fn add_input(&mut self, name: &str, input: InputRecord) {
        self.record.inputs.insert(name.to_string(), input);
    }

    pub fn add_adapter(&mut self, name: &str, info: AdapterInfo) {
        self.record.adapters.insert(name.to_string(), info);
    }

    pub fn set_counts(&mut self, counts: Counts) {
        self.record.counts = Some(counts);
    }

    pub fn set_text_normalization(&mut self, name: &str) {
        self.record.text_normalization = Some(name.to_string());
    }

    /// Runs `f`, recording its wall-clock time under `name`.
    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self);
        self.record.timings_s.insert(name.to_string(), t.elapsed().as_secs_f64());
        out
    }

    /// Registers a file some other component wrote under the run directory.
    pub fn register(&mut self, rel: impl Into<PathBuf>) {
        self.record.artifacts.push(rel.into());
    }

    /// Writes a new artifact; refuses to replace an existing file.
    pub fn write(&mut self, rel: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let rel = rel.as_ref();
        let p = self.root.join(rel);
        if p.exists() {
            return Err(HarnessError::Invalid(format!("artifact {} already exists", p.display())));
        }
        if let Some(d) = p.parent() {
            fs::create_dir_all(d).map_err(|e| HarnessError::io(d, e))?;
        }
        fs::write(&p, contents).map_err(|e| HarnessError::io(&p, e))?;
        self.record.artifacts.push(rel.to_path_buf());
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        s.push('\n');
        self.write(rel, s)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, rel: impl AsRef<Path>, rows: &[T]) -> Result<PathBuf> {
        let mut s = String::new();
        for r in rows {
            s.push_str(&serde_json::to_string(r).map_err(|e| HarnessError::Invalid(e.to_string()))?);
            s.push('\n');
        }
        self.write(rel, s)
    }

    /// Writes `run.json`, closing the run.
    pub fn finish(mut self, status: RunStatus) -> Result<ProbeRunRecord> {
        self.record.status = status;
        self.record
            .timings_s
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let p = self.root.join(RUN_RECORD);
        let mut s = serde_json::to_string_pretty(&self.record).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        s.push('\n');
        fs::write(&p, s).map_err(|e| HarnessError::io(&p, e))?;
        Ok(self.record)
    }
}

pub fn load_record(run: &Path) -> Result<ProbeRunRecord> {
    let p = run.join(RUN_RECORD);
    let text = fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Invalid(format!("{}: {e}", p.display())))
}
