//! Snapshot files, run manifests and plotting exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymfun::{AsymFunction, SpaceMeta};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::remainder::Remainder;
use crate::tail::TailExpansion;

/// On-disk form of an [`AsymFunction`]. Remainder samples are stored as
/// little-endian `f64` bytes in base64, with a SHA-256 of those bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotFile {
    pub meta: SpaceMeta,
    pub tail: TailExpansion,
    pub grid: Grid,
    pub samples: String,
    pub checksum: String,
}

fn sample_bytes(samples: &[f64]) -> Vec<u8> {
    samples.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl SnapshotFile {
    pub fn from_function(u: &AsymFunction) -> Self {
        let bytes = sample_bytes(u.rem().samples());
        SnapshotFile {
            meta: u.meta(),
            tail: u.tail().clone(),
            grid: *u.grid(),
            checksum: sha256_hex(&bytes),
            samples: STANDARD.encode(&bytes),
        }
    }

    /// Decodes and verifies the checksum. The boundary certificate is not
    /// re-run, so partial output from a failed run can still be loaded.
    pub fn to_function(&self) -> Result<AsymFunction> {
        let bytes = STANDARD.decode(&self.samples).map_err(|e| Error::Io(format!("bad base64: {e}")))?;
        if sha256_hex(&bytes) != self.checksum {
            return Err(Error::Io("snapshot checksum mismatch".into()));
        }
        if bytes.len() % 8 != 0 {
            return Err(Error::Io("sample payload is not a whole number of f64".into()));
        }
        let grid = Grid::new(self.grid.half_width, self.grid.h)?;
        let samples = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let rem = Remainder::new(grid, samples, self.meta.decay)?;
        if let Some(k) = self.tail.max_index().filter(|k| *k > self.meta.decay) {
            return Err(Error::Io(format!("tail index {k} beyond the last index {}", self.meta.decay)));
        }
        Ok(AsymFunction::assemble(self.tail.clone(), rem, self.meta))
    }
}

pub fn write_snapshot(path: &Path, u: &AsymFunction) -> Result<String> {
    let file = SnapshotFile::from_function(u);
    fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(file.checksum)
}

pub fn read_snapshot(path: &Path) -> Result<AsymFunction> {
    let file: SnapshotFile = serde_json::from_slice(&fs::read(path)?)?;
    file.to_function()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub t: f64,
    pub step: usize,
    pub file: String,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: serde_json::Value,
    /// SHA-256 over the config text and the snapshot checksums in order.
    pub content_hash: String,
    pub wall_seconds: f64,
    pub steps: usize,
    pub completed: bool,
    pub certified_horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
    pub snapshots: Vec<SnapshotEntry>,
}

pub fn content_hash(config: &serde_json::Value, checksums: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(config.to_string().as_bytes());
    for c in checksums {
        h.update(c.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

/// `x,u` at every node.
pub fn write_profile_csv(path: &Path, u: &AsymFunction) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "x,u")?;
    let grid = *u.grid();
    for (i, v) in u.values().iter().enumerate() {
        writeln!(out, "{},{}", grid.x(i), v)?;
    }
    out.flush()?;
    Ok(())
}
