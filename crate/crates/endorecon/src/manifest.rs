//! Run manifest: config echo, input digests and output inventory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{fsx, Result};
use crate::report::write_json;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fsx::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: Tool,
    pub command: String,
    /// `completed` or `aborted`.
    pub status: String,
    pub abort: Option<Abort>,
    pub config: serde_json::Value,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<OutputEntry>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

impl Manifest {
    /// Digests of inputs whose content differs between two manifests, plus
    /// inputs present in only one of them.
    pub fn changed_inputs(&self, other: &Manifest) -> Vec<String> {
        let mut keys: Vec<&String> = self.inputs.keys().chain(other.inputs.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter(|k| self.inputs.get(*k) != other.inputs.get(*k))
            .cloned()
            .collect()
    }
}

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn display_path(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Hashes every output file and writes `<output_dir>/manifest.json`.
/// Outputs are listed once each, sorted by path.
pub fn write_run_manifest(
    output_dir: &Path,
    command: &str,
    config: &impl Serialize,
    input_digests: &BTreeMap<String, String>,
    outputs: &[PathBuf],
    abort: Option<Abort>,
) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(outputs.len());
    for path in outputs {
        let bytes = fsx::read(path)?;
        entries.push(OutputEntry {
            path: display_path(path, output_dir),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    entries.dedup_by(|a, b| a.path == b.path);

    let manifest = Manifest {
        tool: Tool {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        command: command.into(),
        status: if abort.is_some() { "aborted" } else { "completed" }.into(),
        abort,
        config: serde_json::to_value(config)?,
        inputs: input_digests.clone(),
        outputs: entries,
        timestamp: now(),
    };
    let path = output_dir.join(MANIFEST_NAME);
    write_json(&path, &manifest)?;
    Ok(path)
}
