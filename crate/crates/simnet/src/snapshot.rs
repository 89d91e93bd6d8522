//! Snapshot files: the whole simulation as sorted-key JSON, sealed with a
//! SHA-256 digest of the state text.

use std::path::Path;

use serde_json::Value;
use witnet_core::HashDigest;

use crate::engine::Simulation;

/// Snapshots only load into the build that wrote them.
pub const SNAPSHOT_VERSION: &str = concat!("witnet-simnet/", env!("CARGO_PKG_VERSION"), "/snapshot-1");

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot written by `{found}`, this build reads `{expected}`")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
}

fn corrupt(e: impl ToString) -> SnapshotError {
    SnapshotError::CorruptSnapshot(e.to_string())
}

fn state_digest(state: &Value) -> HashDigest {
    HashDigest::of(state.to_string().as_bytes())
}

pub fn snapshot_string(sim: &Simulation) -> String {
    let state = serde_json::to_value(sim).expect("simulation state serializes");
    let envelope = serde_json::json!({
        "version": SNAPSHOT_VERSION,
        "digest": state_digest(&state).to_hex(),
        "state": state,
    });
    let mut text = serde_json::to_string_pretty(&envelope).expect("json value serializes");
    text.push('\n');
    text
}

pub fn restore_str(text: &str) -> Result<Simulation, SnapshotError> {
    let mut envelope: Value = serde_json::from_str(text).map_err(corrupt)?;
    let version = envelope
        .get("version")
        .and_then(Value::as_str)
        .ok_or_else(|| corrupt("missing version"))?;
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::VersionMismatch {
            found: version.to_string(),
            expected: SNAPSHOT_VERSION.to_string(),
        });
    }
    let digest = envelope
        .get("digest")
        .and_then(Value::as_str)
        .and_then(HashDigest::from_hex)
        .ok_or_else(|| corrupt("missing or malformed digest"))?;
    let state = envelope
        .get_mut("state")
        .map(Value::take)
        .ok_or_else(|| corrupt("missing state"))?;
    if state_digest(&state) != digest {
        return Err(corrupt("digest does not match state"));
    }
    serde_json::from_value(state).map_err(corrupt)
}

pub fn snapshot(sim: &Simulation, path: &Path) -> Result<(), SnapshotError> {
    std::fs::write(path, snapshot_string(sim))?;
    Ok(())
}

pub fn restore(path: &Path) -> Result<Simulation, SnapshotError> {
    restore_str(&std::fs::read_to_string(path)?)
}
