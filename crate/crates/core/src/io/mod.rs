//! Readers and writers for every on-disk format the toolkit touches.

pub mod coco;
pub mod detections;
pub mod embf;
pub mod jsonl;

use std::path::Path;

use crate::compositor::{FigureManifest, PanelPool, PoolEntry};
use crate::error::{Error, Result};

pub use coco::{export_coco, read_coco, write_coco, CocoDocument};
pub use detections::{read_detections, write_detections, DetectionSet, ScoredBox};
pub use embf::{read_embeddings, write_embeddings, EmbeddingMatrix, EmbfError};

/// Reads a figure manifest, validating every row.
pub fn read_manifest(path: &Path) -> Result<Vec<FigureManifest>> {
    jsonl::read_validated(path, |m: &FigureManifest| m.validate())
}

pub fn write_manifest(path: &Path, manifests: &[FigureManifest]) -> Result<()> {
    jsonl::write_all(path, manifests)
}

/// Reads a pool index (one `PoolEntry` per line).
pub fn read_pool(path: &Path) -> Result<PanelPool> {
    let entries: Vec<PoolEntry> = jsonl::read_all(path)?;
    PanelPool::new(entries)
}

pub fn write_pool(path: &Path, pool: &PanelPool) -> Result<()> {
    jsonl::write_all(path, &pool.entries)
}

/// Writes `value` as pretty JSON with object keys sorted.
pub fn write_json_sorted<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_sorted_json(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_sorted_json<T: serde::Serialize>(value: &T) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap
    let v = serde_json::to_value(value).map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    Ok(text)
}
