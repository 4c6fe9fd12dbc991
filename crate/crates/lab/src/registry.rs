//! Run registry: a directory of per-run JSON records plus an index.
//!
//! ```text
//! <root>/index.json          ordered list of runs
//! <root>/runs/<id>.json      one RunRecord per run
//! <root>/<id>/...            artifacts of that run
//! ```
//!
//! Every file is written to a temporary name and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub kind: String,
    /// Relative to the registry root.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub scenario_hash: String,
    pub task: String,
    pub tool_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub config: Value,
    pub artifacts: Vec<ArtifactRef>,
    pub summary: Value,
}

impl RunRecord {
    pub fn kinds(&self) -> Vec<String> {
        let mut kinds: Vec<String> = self.artifacts.iter().map(|a| a.kind.clone()).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub task: String,
    pub scenario_hash: String,
    pub finished_unix: f64,
}

/// One artifact produced by a task, still in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: String,
    pub file_name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(kind: &str, file_name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            kind: kind.to_string(),
            file_name: file_name.into(),
            bytes,
        }
    }
}

pub struct Registry {
    root: PathBuf,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Pretty JSON with object keys in sorted order.
pub fn sorted_json<T: Serialize>(value: &T) -> Vec<u8> {
    // `serde_json::Value` keeps its maps sorted, so a round trip through it
    // fixes the key order regardless of struct field order.
    let v = serde_json::to_value(value).expect("value serializes");
    let mut out = serde_json::to_vec_pretty(&v).expect("json serializes");
    out.push(b'\n');
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| LabError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| LabError::io(path, e))
}

impl Registry {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("runs")).map_err(|e| LabError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{id}.json"))
    }

    pub fn index(&self) -> Result<Vec<IndexEntry>> {
        let path = self.index_path();
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| LabError::Registry {
                path,
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(LabError::io(path, e)),
        }
    }

    /// Stores the artifacts and the record, then appends to the index.
    pub fn commit(
        &self,
        scenario_hash: &str,
        task: &str,
        config: Value,
        artifacts: &[Artifact],
        summary: Value,
        started_unix: f64,
    ) -> Result<RunRecord> {
        let mut index = self.index()?;
        let mut seq = index.len() + 1;
        let mut id = format!("{}-{seq:04}", &scenario_hash[..12]);
        while self.record_path(&id).exists() {
            seq += 1;
            id = format!("{}-{seq:04}", &scenario_hash[..12]);
        }
        let mut refs = Vec::with_capacity(artifacts.len() + 1);
        for a in artifacts {
            let rel = PathBuf::from(&id).join(&a.file_name);
            write_atomic(&self.root.join(&rel), &a.bytes)?;
            refs.push(ArtifactRef {
                kind: a.kind.clone(),
                path: rel,
                sha256: sha256_hex(&a.bytes),
            });
        }
        let summary_bytes = sorted_json(&summary);
        let rel = PathBuf::from(&id).join("summary.json");
        write_atomic(&self.root.join(&rel), &summary_bytes)?;
        refs.push(ArtifactRef {
            kind: "summary".into(),
            path: rel,
            sha256: sha256_hex(&summary_bytes),
        });

        let record = RunRecord {
            id: id.clone(),
            scenario_hash: scenario_hash.to_string(),
            task: task.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix,
            finished_unix: now_unix(),
            config,
            artifacts: refs,
            summary,
        };
        write_atomic(&self.record_path(&id), &sorted_json(&record))?;
        index.push(IndexEntry {
            id,
            task: record.task.clone(),
            scenario_hash: record.scenario_hash.clone(),
            finished_unix: record.finished_unix,
        });
        write_atomic(&self.index_path(), &sorted_json(&index))?;
        Ok(record)
    }

    pub fn load(&self, id: &str) -> Result<RunRecord> {
        let path = self.record_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LabError::NotFound(id.to_string()))
            }
            Err(e) => return Err(LabError::io(path, e)),
        };
        serde_json::from_slice(&bytes).map_err(|e| LabError::Registry {
            path,
            message: e.to_string(),
        })
    }

    pub fn artifact_path(&self, a: &ArtifactRef) -> PathBuf {
        self.root.join(&a.path)
    }

    /// Every artifact of the run exists and matches its digest.
    pub fn verify(&self, record: &RunRecord) -> Result<()> {
        for a in &record.artifacts {
            let path = self.artifact_path(a);
            let bytes = fs::read(&path).map_err(|e| LabError::io(&path, e))?;
            if sha256_hex(&bytes) != a.sha256 {
                return Err(LabError::Integrity { path });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn commit_load_verify() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        let hash = "0123456789abcdef0123";
        let arts = [Artifact::new("sweep", "a.csv", b"# t\n1\n".to_vec())];
        let rec = reg
            .commit(hash, "solve", json!({"b": 1, "a": 2}), &arts, json!({"x": 1}), 0.0)
            .unwrap();
        assert_eq!(rec.id, "0123456789ab-0001");
        assert_eq!(reg.load(&rec.id).unwrap(), rec);
        reg.verify(&rec).unwrap();
        assert_eq!(rec.kinds(), ["summary", "sweep"]);

        let second = reg.commit(hash, "solve", json!({}), &arts, json!({}), 0.0).unwrap();
        assert_eq!(second.id, "0123456789ab-0002");
        assert_eq!(reg.index().unwrap().len(), 2);

        fs::write(reg.artifact_path(&rec.artifacts[0]), b"tampered").unwrap();
        assert!(matches!(reg.verify(&rec), Err(LabError::Integrity { .. })));
        assert!(matches!(reg.load("nope"), Err(LabError::NotFound(_))));
    }

    #[test]
    fn json_keys_are_sorted() {
        let text = String::from_utf8(sorted_json(&json!({"zeta": 1, "alpha": {"b": 2, "a": 1}}))).unwrap();
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
    }
}
