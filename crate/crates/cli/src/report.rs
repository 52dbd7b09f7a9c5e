use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Serialize)]
pub struct BlockError {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub name: String,
    pub status: BlockStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<BlockError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub input_hash: String,
    pub config: ExperimentConfig,
    pub workers: usize,
    pub blocks: Vec<Block>,
    pub verdicts: BTreeMap<String, String>,
    pub sidecars: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Git-style blob hash of the canonical JSON of everything that determines
/// the numeric payload.
pub fn input_hash(command: &str, config: &ExperimentConfig) -> String {
    let mut echo = config.clone();
    echo.output = PathBuf::new();
    echo.cache_dir = None;
    let body = serde_json::json!({ "command": command, "config": echo }).to_string();
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", body.len()).as_bytes());
    hasher.update(body.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Report {
    pub fn failed(&self) -> bool {
        self.blocks
            .iter()
            .any(|b| !matches!(b.status, BlockStatus::Ok))
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(REPORT_FILE);
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
