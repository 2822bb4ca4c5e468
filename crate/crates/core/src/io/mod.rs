//! File formats, run configuration, synthetic datasets and run manifests.

pub mod config;
pub mod demo;
pub mod manifest;
pub mod synthetic;
pub mod tables;

use std::path::Path;

use crate::error::{io_error, Error, Result};
use crate::policy::{PolicySnapshot, TaskPolicy};

pub use config::RunConfig;
pub use demo::{load_demonstrations, read_demo, write_demo, DemoHeader, QuaternionConvention};
pub use manifest::{sha256_file, FileDigest, RunManifest};
pub use synthetic::{door_ground_truth, generate_shelf_set, generate_synthetic_door_set, DoorSetConfig};

pub const POLICY_FORMAT: &str = "gplfd-policy v1";

#[derive(serde::Serialize, serde::Deserialize)]
struct PolicyFile {
    format: String,
    policy: PolicySnapshot,
}

/// Stores the training data and hyperparameters; loading refits the GPs,
/// which reproduces the saved policy exactly.
pub fn save_policy(path: &Path, policy: &TaskPolicy) -> Result<()> {
    let file = PolicyFile { format: POLICY_FORMAT.into(), policy: policy.snapshot() };
    let text = serde_json::to_string(&file).expect("policy serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

pub fn load_policy(path: &Path) -> Result<TaskPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.format != POLICY_FORMAT {
        return Err(Error::Format(format!("{}: expected format '{POLICY_FORMAT}'", path.display())));
    }
    TaskPolicy::restore(file.policy)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}
