//! Per-run provenance: the command, its resolved parameters, seeds and a
//! SHA-256 of every input file. No wall-clock data, so reruns match.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::store::{sha256_hex, write_atomic};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    /// Input path to SHA-256 of its bytes; directories are expanded to
    /// their regular files.
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            parameters: BTreeMap::new(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(
            key.into(),
            serde_json::to_value(value).expect("parameters serialize"),
        );
        self
    }

    pub fn seed(mut self, key: &str, seed: u64) -> Self {
        self.seeds.insert(key.into(), seed);
        self
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        for file in files_under(path)? {
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            self.inputs
                .insert(file.display().to_string(), sha256_hex(&bytes));
        }
        Ok(self)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn files_under(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().starts_with('.'))
            .unwrap_or(false);
        if name || p.file_name().is_some_and(|n| n == RUN_MANIFEST) {
            continue;
        }
        out.extend(files_under(&p)?);
    }
    Ok(out)
}
