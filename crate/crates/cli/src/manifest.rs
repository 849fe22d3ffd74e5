//! Output directories and their run manifests.
//!
//! Every stage writes into a fresh directory and finishes by writing
//! `manifest.json`, which records what produced the directory and the SHA-256
//! of each artifact. Reading a directory back verifies those hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use deconf::hashing::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TOOL_VERSION: &str = concat!("deconf ", env!("CARGO_PKG_VERSION"));

/// An upstream directory this run consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: String,
    pub command: String,
    /// Hash of the upstream manifest file, which pins all of its artifacts.
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub corpus_hash: Option<String>,
    pub lexicon_hash: Option<String>,
    /// Effective stage settings, so the run can be repeated from the manifest alone.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputRef>,
    /// Artifact file name to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed: None,
            config_hash: None,
            corpus_hash: None,
            lexicon_hash: None,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn with_config<T: Serialize>(mut self, effective: &T) -> Self {
        self.config_hash = Some(crate::config::config_hash(effective));
        self.config = serde_json::to_value(effective).expect("config serializes");
        self
    }

    pub fn input(&mut self, role: &str, stage: &Stage) {
        self.inputs.insert(
            role.to_string(),
            InputRef {
                path: stage.dir.display().to_string(),
                command: stage.manifest.command.clone(),
                manifest_sha256: stage.manifest_sha256.clone(),
            },
        );
    }
}

/// A directory being written by the current run.
pub struct OutDir {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl OutDir {
    /// Creates `dir`, refusing to touch a non-empty directory unless `force`.
    /// With `force`, files left over from an earlier run are removed so the
    /// directory holds exactly one manifest's worth of artifacts.
    pub fn create(dir: &Path, force: bool) -> Result<Self> {
        if dir.exists() {
            if !dir.is_dir() {
                return Err(CliError::validation(format!("{} exists and is not a directory", dir.display())));
            }
            let entries: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| io_error(dir, e))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()
                .map_err(|e| io_error(dir, e))?;
            if !entries.is_empty() {
                if !force {
                    return Err(CliError::validation(format!(
                        "output directory {} is not empty; pass --force to overwrite",
                        dir.display()
                    )));
                }
                for p in entries {
                    let r = if p.is_dir() { fs::remove_dir_all(&p) } else { fs::remove_file(&p) };
                    r.map_err(|e| io_error(&p, e))?;
                }
            }
        }
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(OutDir { dir: dir.to_path_buf(), artifacts: BTreeMap::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| io_error(&p, e))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(name, text)
    }

    /// Registers a file some library call already wrote into the directory.
    pub fn adopt(&mut self, name: &str) -> Result<()> {
        let p = self.path(name);
        let bytes = fs::read(&p).map_err(|e| io_error(&p, e))?;
        self.artifacts.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<()> {
        manifest.artifacts = self.artifacts;
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let p = self.dir.join(MANIFEST);
        fs::write(&p, text).map_err(|e| io_error(&p, e))
    }
}

/// A verified directory produced by an earlier stage.
#[derive(Debug, Clone)]
pub struct Stage {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub manifest_sha256: String,
}

impl Stage {
    /// Reads `dir/manifest.json`, checks that it was written by one of
    /// `commands`, and recomputes every artifact hash.
    pub fn open(dir: &Path, commands: &[&str]) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let bytes = fs::read(&mpath)
            .map_err(|e| CliError::validation(format!("{}: no readable manifest ({e})", dir.display())))?;
        let manifest: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::validation(format!("{}: malformed manifest: {e}", mpath.display())))?;
        if !commands.contains(&manifest.command.as_str()) {
            return Err(CliError::validation(format!(
                "{} was produced by `{}`, expected output of `{}`",
                dir.display(),
                manifest.command,
                commands.join("` or `")
            )));
        }
        for (name, want) in &manifest.artifacts {
            let p = dir.join(name);
            let got = fs::read(&p).map(|b| sha256_hex(&b)).map_err(|e| {
                CliError::validation(format!("{}: artifact listed in manifest is unreadable ({e})", p.display()))
            })?;
            if &got != want {
                return Err(CliError::validation(format!("{}: hash does not match its manifest", p.display())));
            }
        }
        Ok(Stage { dir: dir.to_path_buf(), manifest, manifest_sha256: sha256_hex(&bytes) })
    }

    pub fn path(&self, name: &str) -> Result<PathBuf> {
        if !self.manifest.artifacts.contains_key(name) {
            return Err(CliError::validation(format!("{}: manifest lists no `{name}`", self.dir.display())));
        }
        Ok(self.dir.join(name))
    }

    pub fn read_string(&self, name: &str) -> Result<String> {
        let p = self.path(name)?;
        fs::read_to_string(&p).map_err(|e| io_error(&p, e))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        let text = self.read_string(name)?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}/{name}: {e}", self.dir.display())))
    }
}
