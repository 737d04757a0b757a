//! COCO-style annotation export with a single `subfigure` category.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compositor::FigureManifest;
use crate::error::{Error, Result};

pub const SUBFIGURE_CATEGORY_ID: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, w, h]`
    pub bbox: [u32; 4],
    pub area: u64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

/// Image and annotation ids are dense from 1, in manifest order.
pub fn export_coco(manifests: &[FigureManifest]) -> Result<CocoDocument> {
    let mut seen = HashSet::new();
    let mut images = Vec::with_capacity(manifests.len());
    let mut annotations = Vec::new();
    for (i, m) in manifests.iter().enumerate() {
        if !seen.insert(m.figure_id.as_str()) {
            return Err(Error::invalid(format!("duplicate figure_id {:?}", m.figure_id)));
        }
        let image_id = i as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: m.file.clone(),
            width: m.width,
            height: m.height,
        });
        for p in &m.panels {
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id,
                category_id: SUBFIGURE_CATEGORY_ID,
                bbox: [p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h],
                area: p.bbox.area(),
                iscrowd: 0,
            });
        }
    }
    Ok(CocoDocument {
        images,
        annotations,
        categories: vec![CocoCategory {
            id: SUBFIGURE_CATEGORY_ID,
            name: "subfigure".to_string(),
        }],
    })
}

pub fn write_coco(path: &Path, doc: &CocoDocument) -> Result<()> {
    let mut text = serde_json::to_string(doc).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_coco(path: &Path) -> Result<CocoDocument> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: format!("column {}: {e}", e.column()),
    })
}
