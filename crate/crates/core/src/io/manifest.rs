//! Run manifests: everything needed to rerun a command and check that it
//! reproduces its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, Error, Result};

pub const MANIFEST_FORMAT: &str = "gplfd-manifest v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    pub seed: u64,
    /// Fully resolved configuration in TOML form.
    pub config: String,
    pub config_sha256: String,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!("{}: not a run manifest", path.display())));
        }
        Ok(m)
    }

    /// Outputs whose current content differs from the recorded digest.
    pub fn mismatched_outputs(&self) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            if !o.path.exists() || sha256_file(&o.path)? != o.sha256 {
                bad.push(o.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_round_trip_and_check() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.csv");
        std::fs::write(&out, "1,2\n").unwrap();
        let m = RunManifest {
            format: MANIFEST_FORMAT.into(),
            command: "query".into(),
            args: vec!["query".into()],
            seed: 1,
            config: String::new(),
            config_sha256: String::new(),
            version: "0".into(),
            inputs: vec![],
            outputs: vec![FileDigest::of(&out).unwrap()],
        };
        let path = dir.path().join("m.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
        assert!(m.mismatched_outputs().unwrap().is_empty());
        std::fs::write(&out, "1,3\n").unwrap();
        assert_eq!(m.mismatched_outputs().unwrap(), vec![out]);
    }
}
