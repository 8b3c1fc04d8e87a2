use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use egf_core::io::{list_files, write_json, IoError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const OUT_ROOT_VAR: &str = "EGF_OUT_ROOT";

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// `--out` if given, else `$EGF_OUT_ROOT/<command>/<hash prefix>`.
pub fn output_dir(explicit: Option<&Path>, command: &str, hash: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
            root.join(command).join(&hash[..16])
        }
    }
}

pub fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub code_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

impl RunManifest {
    pub fn start(command: &str, config_hash: String, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_seconds(),
            finished_unix: 0.0,
            files: Vec::new(),
        }
    }

    /// Lists every file under `dir` and writes the manifest there, last.
    pub fn finish(mut self, dir: &Path) -> Result<Self, IoError> {
        self.files = list_files(dir)?
            .into_iter()
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .filter(|p| p != MANIFEST)
            .collect();
        self.finished_unix = unix_seconds();
        write_json(&dir.join(MANIFEST), &self)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn explicit_out_wins() {
        let hash = sha256_hex("x");
        assert_eq!(output_dir(Some(Path::new("here")), "run-pde", &hash), PathBuf::from("here"));
        let auto = output_dir(None, "run-pde", &hash);
        assert!(auto.ends_with(Path::new("run-pde").join(&hash[..16])));
    }
}
