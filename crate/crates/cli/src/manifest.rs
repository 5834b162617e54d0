//! Run manifests: the resolved config, versions and input hashes.

use std::path::{Path, PathBuf};

use anyhow::Context;
use piecegen::config::Config;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub grammar_hash: Option<String>,
    pub config: Config,
    pub inputs: Vec<InputFile>,
}

impl Manifest {
    pub fn new(command: &str, config: &Config) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            grammar_hash: None,
            config: config.clone(),
            inputs: Vec::new(),
        }
    }

    /// Records the hash of an input file read by this run.
    pub fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputFile {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    /// Writes to `explicit`, else beside `output`, else to stderr.
    pub fn emit(&self, explicit: Option<&Path>, output: Option<&Path>) -> anyhow::Result<()> {
        let target: Option<PathBuf> = explicit.map(Path::to_path_buf).or_else(|| {
            output.map(|o| {
                let mut name = o.as_os_str().to_owned();
                name.push(".manifest.json");
                PathBuf::from(name)
            })
        });
        match target {
            Some(path) => {
                let text = serde_json::to_string_pretty(self)? + "\n";
                std::fs::write(&path, text)
                    .with_context(|| format!("writing manifest {}", path.display()))
            }
            None => {
                eprintln!("manifest: {}", serde_json::to_string(self)?);
                Ok(())
            }
        }
    }
}
