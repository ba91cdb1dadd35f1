use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    /// Relative to the directory holding the manifest.
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Checks every output listed in `dir`'s manifest. A directory without a
/// manifest yields digests of `fallback` files instead.
pub fn verify_dir(dir: &Path, fallback: &[&str]) -> Result<Vec<FileDigest>, CliError> {
    let label = |rel: &str| dir.join(rel).display().to_string();
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return fallback
            .iter()
            .map(|f| Ok(FileDigest { path: label(f), sha256: sha256_file(&dir.join(f))? }))
            .collect();
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::with_capacity(m.outputs.len());
    for d in &m.outputs {
        let file = dir.join(&d.path);
        if !file.is_file() {
            return Err(CliError::Usage(format!("{} is listed in {} but missing", file.display(), path.display())));
        }
        let actual = sha256_file(&file)?;
        if actual != d.sha256 {
            return Err(CliError::Usage(format!("digest mismatch for {}", file.display())));
        }
        out.push(FileDigest { path: label(&d.path), sha256: actual });
    }
    Ok(out)
}

pub struct ManifestBuilder {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
    started_at: String,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.into(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
        }
    }

    pub fn output(&mut self, rel: impl Into<PathBuf>) {
        self.outputs.push(rel.into());
    }

    pub fn write(mut self, dir: &Path) -> Result<RunManifest, CliError> {
        self.outputs.sort();
        self.outputs.dedup();
        let outputs = self
            .outputs
            .iter()
            .map(|rel| {
                Ok(FileDigest {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(&dir.join(rel))?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let m = RunManifest {
            tool: "dilemma".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            started_at: self.started_at,
            finished_at: now(),
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(dir.join(MANIFEST), text + "\n").map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
        Ok(m)
    }
}
