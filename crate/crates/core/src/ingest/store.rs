//! Content-addressed on-disk run store.
//!
//! Layout under the root directory:
//!
//! ```text
//! <root>/index.json          entries in creation order
//! <root>/runs/<run_id>.json  canonical run document
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::document::{build_run, parse_run_document, RunDocument};
use super::IngestError;
use crate::model::TrainingRun;

const INDEX_FILE: &str = "index.json";
const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub digest: String,
    /// Milliseconds since the Unix epoch.
    pub created_ms: u64,
    pub metadata: std::collections::BTreeMap<String, serde_json::Value>,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "E")]
    pub epochs: usize,
}

pub struct RunStore {
    root: PathBuf,
    // Guards the index; all writes go through it, reads of run files do not.
    index: Mutex<Vec<RunSummary>>,
}

impl RunStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let root = root.into();
        fs::create_dir_all(root.join(RUNS_DIR)).map_err(|e| storage(&root, e))?;
        let index_path = root.join(INDEX_FILE);
        let index = if index_path.exists() {
            let bytes = fs::read(&index_path).map_err(|e| storage(&index_path, e))?;
            serde_json::from_slice(&bytes).map_err(|e| IngestError::Storage {
                path: index_path.display().to_string(),
                message: format!("corrupt index: {e}"),
            })?
        } else {
            Vec::new()
        };
        Ok(RunStore {
            root,
            index: Mutex::new(index),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Persists `doc` and returns its content-derived id. Storing the same
    /// canonical document again is a no-op returning the same id.
    pub fn store_run(&self, doc: &RunDocument) -> Result<String, IngestError> {
        let run = build_run(doc)?;
        let run_id = run.run_id().to_string();
        let digest = doc.digest();

        let mut index = self.index.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(existing) = index.iter().find(|e| e.run_id == run_id) {
            if existing.digest != digest {
                return Err(IngestError::Storage {
                    path: self.run_path(&run_id).display().to_string(),
                    message: format!("run id collision for {run_id}"),
                });
            }
            return Ok(run_id);
        }

        write_atomic(&self.run_path(&run_id), &doc.canonical_bytes())?;
        let created_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or_default();
        index.push(RunSummary {
            run_id: run_id.clone(),
            digest,
            created_ms,
            metadata: doc.metadata.clone(),
            m: run.instance_count(),
            n: run.class_count(),
            epochs: run.epoch_count(),
        });
        let bytes = serde_json::to_vec_pretty(&*index).expect("index serializes");
        if let Err(e) = write_atomic(&self.root.join(INDEX_FILE), &bytes) {
            index.pop();
            return Err(e);
        }
        Ok(run_id)
    }

    pub fn load_run(&self, run_id: &str) -> Result<TrainingRun, IngestError> {
        self.load_document(run_id)
            .and_then(|doc| build_run(&doc).map_err(IngestError::from))
    }

    pub fn load_document(&self, run_id: &str) -> Result<RunDocument, IngestError> {
        if self.summary(run_id).is_none() {
            return Err(IngestError::NotFound(run_id.to_string()));
        }
        let path = self.run_path(run_id);
        let text = fs::read_to_string(&path).map_err(|e| storage(&path, e))?;
        parse_run_document(&text)
    }

    pub fn summary(&self, run_id: &str) -> Option<RunSummary> {
        self.index
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .find(|e| e.run_id == run_id)
            .cloned()
    }

    /// All stored runs in creation order.
    pub fn list_runs(&self) -> Vec<RunSummary> {
        self.index.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn run_path(&self, run_id: &str) -> PathBuf {
        self.root.join(RUNS_DIR).join(format!("{run_id}.json"))
    }
}

fn storage(path: &Path, err: std::io::Error) -> IngestError {
    IngestError::Storage {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    let tmp = path.with_extension("json.tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        storage(path, e)
    })
}
