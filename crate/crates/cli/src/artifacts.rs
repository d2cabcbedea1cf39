//! Output directories keyed by configuration hash, with a manifest per directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    sha256_bytes(&json)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputRecord>,
    /// Relative artifact path -> sha256.
    pub artifacts: BTreeMap<String, String>,
}

/// A directory of outputs for one configuration.
pub struct ArtifactDir {
    pub root: PathBuf,
    manifest: Manifest,
}

impl ArtifactDir {
    /// Opens `parent/<name>-<hash prefix>`. An existing directory must carry a manifest
    /// with the same hash; anything else is refused rather than overwritten.
    pub fn create<T: Serialize>(
        parent: &Path,
        name: &str,
        command: &str,
        config: &T,
        inputs: BTreeMap<String, InputRecord>,
    ) -> Result<Self, CliError> {
        let config = serde_json::to_value(config).expect("config serializes");
        let hash = config_hash(&(command, &config, &inputs));
        let root = parent.join(format!("{name}-{}", &hash[..12]));
        let manifest_path = root.join(MANIFEST_FILE);
        if root.exists() {
            match read_manifest(&manifest_path) {
                Ok(m) if m.config_hash == hash => {}
                Ok(_) => {
                    return Err(CliError::runtime(format!(
                        "{} holds outputs of a different configuration; remove it or choose another --out",
                        root.display()
                    )))
                }
                Err(_) if dir_is_empty(&root)? => {}
                Err(_) => {
                    return Err(CliError::runtime(format!(
                        "{} exists without a readable manifest; refusing to overwrite it",
                        root.display()
                    )))
                }
            }
        }
        fs::create_dir_all(&root)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(ArtifactDir {
            root,
            manifest: Manifest {
                tool: "music-intent".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config_hash: hash,
                config,
                inputs,
                artifacts: BTreeMap::new(),
            },
        })
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    /// Makes sure the parent directory of `relative` exists and returns the full path.
    pub fn prepare(&self, relative: &str) -> Result<PathBuf, CliError> {
        let path = self.path(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    /// Records an artifact that has been written.
    pub fn record(&mut self, relative: &str) -> Result<(), CliError> {
        let digest = sha256_file(&self.path(relative))?;
        self.manifest.artifacts.insert(relative.to_string(), digest);
        Ok(())
    }

    pub fn write_bytes(&mut self, relative: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.prepare(relative)?;
        fs::write(&path, bytes)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.record(relative)
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
        bytes.push(b'\n');
        self.write_bytes(relative, &bytes)
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        bytes.push(b'\n');
        fs::write(self.root.join(MANIFEST_FILE), bytes)?;
        Ok(self.root)
    }
}

fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::input(e.to_string()))
}

fn dir_is_empty(path: &Path) -> Result<bool, CliError> {
    Ok(fs::read_dir(path)?.next().is_none())
}

pub fn input_record(path: &Path) -> Result<InputRecord, CliError> {
    Ok(InputRecord {
        path: path.display().to_string(),
        sha256: sha256_file(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?,
    })
}
