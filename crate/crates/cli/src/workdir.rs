//! Output directory bookkeeping: artifacts, their configs and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ldcoh_core::matrix_file::MatrixFile;
use ldcoh_core::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
const CONFIG_DIR: &str = "configs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub sha256: String,
    pub config_hash: String,
    /// Config file, relative to the work directory.
    pub config: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, Entry>,
}

pub struct Workdir {
    root: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First line of every CSV artifact.
pub fn csv_stamp(config_hash: &str) -> String {
    format!("# config {config_hash}\n")
}

fn missing(path: &Path) -> anyhow::Error {
    Error::Validation(format!("{} does not exist", path.display())).into()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(missing(path));
    }
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

impl Workdir {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join(CONFIG_DIR)).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Reads an artifact and records its digest as an input of `config`.
    pub fn consume(&self, name: &str, config: &mut RunConfig) -> Result<Vec<u8>> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::Validation(format!(
                "{} is missing from {}; run the producing subcommand first",
                name,
                self.root.display()
            ))
            .into());
        }
        let bytes = read_file(&path)?;
        config.inputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let bytes = read_file(&path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())).into())
    }

    /// Writes the artifacts of one command, its config under `configs/`,
    /// and updates the manifest.
    pub fn commit(&self, label: &str, config: &RunConfig, artifacts: &[(String, Vec<u8>)]) -> Result<()> {
        let config_name = format!("{CONFIG_DIR}/{label}.json");
        write_atomic(&self.path(&config_name), config.to_json().as_bytes())?;
        let mut manifest = self.manifest()?;
        let hash = config.hash_hex();
        for (name, bytes) in artifacts {
            write_atomic(&self.path(name), bytes)?;
            manifest.artifacts.insert(
                name.clone(),
                Entry { sha256: sha256_hex(bytes), config_hash: hash.clone(), config: config_name.clone() },
            );
        }
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.path(MANIFEST), text.as_bytes())
    }

    /// Re-checks every manifest entry. Returns one message per problem.
    pub fn verify(&self) -> Result<(usize, Vec<String>)> {
        let manifest = self.manifest()?;
        if manifest.artifacts.is_empty() {
            return Err(Error::Validation(format!("no manifest in {}", self.root.display())).into());
        }
        let mut problems = Vec::new();
        for (name, entry) in &manifest.artifacts {
            let mut fail = |msg: String| problems.push(format!("{name}: {msg}"));
            let path = self.path(name);
            let Ok(bytes) = fs::read(&path) else {
                fail("missing".into());
                continue;
            };
            if sha256_hex(&bytes) != entry.sha256 {
                fail("content differs from the manifest digest".into());
                continue;
            }
            match embedded_hash(name, &bytes) {
                Ok(h) if h == entry.config_hash => {}
                Ok(h) => fail(format!("embeds config {h}, manifest says {}", entry.config_hash)),
                Err(e) => fail(e.to_string()),
            }
            let config: RunConfig = match fs::read(self.path(&entry.config))
                .map_err(anyhow::Error::from)
                .and_then(|b| serde_json::from_slice(&b).map_err(anyhow::Error::from))
            {
                Ok(c) => c,
                Err(e) => {
                    fail(format!("config {}: {e}", entry.config));
                    continue;
                }
            };
            if config.hash_hex() != entry.config_hash {
                fail(format!("config {} hashes to {}", entry.config, config.hash_hex()));
            }
            for (input, digest) in &config.inputs {
                match manifest.artifacts.get(input) {
                    Some(e) if &e.sha256 == digest => {}
                    Some(_) => fail(format!("input {input} changed after this artifact was written")),
                    None => {}
                }
            }
        }
        Ok((manifest.artifacts.len(), problems))
    }
}

/// The config hash an artifact carries inside itself.
pub fn embedded_hash(name: &str, bytes: &[u8]) -> Result<String> {
    if name.ends_with(".bin") {
        return Ok(hex::encode(MatrixFile::from_bytes(bytes)?.config_hash));
    }
    if name.ends_with(".json") {
        let v: serde_json::Value = serde_json::from_slice(bytes)?;
        return v
            .get("config_hash")
            .and_then(|h| h.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Format("no config_hash field".into()).into());
    }
    let first = bytes.split(|b| *b == b'\n').next().unwrap_or_default();
    std::str::from_utf8(first)
        .ok()
        .and_then(|l| l.strip_prefix("# config "))
        .map(|h| h.trim().to_string())
        .ok_or_else(|| Error::Format("no `# config` stamp on the first line".into()).into())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or_default()
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}
