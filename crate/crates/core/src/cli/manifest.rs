use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Digest of a serializable configuration (after command-line overrides).
pub fn config_sha256<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configuration serializes");
    sha256_hex(&json)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

/// Provenance of one command run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<InputDigest>,
    /// Seconds; only in `manifest.json`, never in embedded headers.
    pub wall_time_secs: Option<f64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_sha256: String) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_sha256,
            inputs: Vec::new(),
            wall_time_secs: None,
            outputs: Vec::new(),
        }
    }

    /// Records the digest of an input file under its file name.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.inputs.push(InputDigest { name, sha256: file_sha256(path)? });
        Ok(())
    }

    /// Deterministic `# key: value` lines embedded at the top of CSV outputs.
    pub fn header_lines(&self) -> String {
        let mut out = format!(
            "# command: {}\n# version: {}\n# seed: {}\n# config_sha256: {}\n",
            self.command, self.version, self.seed, self.config_sha256
        );
        for input in &self.inputs {
            out.push_str(&format!("# input {}: {}\n", input.name, input.sha256));
        }
        out
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn header_is_deterministic_and_comment_only() {
        let mut m = RunManifest::new("fit", 7, "00".into());
        m.inputs.push(InputDigest { name: "d.csv".into(), sha256: "ff".into() });
        m.wall_time_secs = Some(1.5);
        let h = m.header_lines();
        assert!(h.lines().all(|l| l.starts_with("# ")));
        assert!(!h.contains("1.5"));
        assert!(h.contains("# input d.csv: ff"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
