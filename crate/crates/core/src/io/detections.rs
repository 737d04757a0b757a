use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl;
use crate::bbox::BBox;
use crate::error::{Error, Result};

/// One detector output box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BBox, score: f64) -> Self {
        ScoredBox {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            score,
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }
}

/// Raw detections for one image. Boxes may overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSet {
    pub image_id: String,
    pub boxes: Vec<ScoredBox>,
}

impl DetectionSet {
    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.boxes.iter().enumerate() {
            if !(0.0..=1.0).contains(&b.score) {
                return Err(Error::invalid(format!(
                    "image {}: box {i} score {} outside [0,1]",
                    self.image_id, b.score
                )));
            }
            b.bbox().validate()?;
        }
        Ok(())
    }
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionSet>> {
    jsonl::read_validated(path, DetectionSet::validate)
}

pub fn write_detections(path: &Path, sets: &[DetectionSet]) -> Result<()> {
    jsonl::write_all(path, sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_out_of_range_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(
            &p,
            "{\"image_id\":\"a\",\"boxes\":[{\"x\":0,\"y\":0,\"w\":1,\"h\":1,\"score\":0.5}]}\n\
             {\"image_id\":\"b\",\"boxes\":[{\"x\":0,\"y\":0,\"w\":1,\"h\":1,\"score\":1.5}]}\n",
        )
        .unwrap();
        match read_detections(&p).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("score"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn file_order_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let sets: Vec<_> = ["z", "a", "m"]
            .iter()
            .map(|id| DetectionSet {
                image_id: id.to_string(),
                boxes: vec![],
            })
            .collect();
        write_detections(&p, &sets).unwrap();
        assert_eq!(read_detections(&p).unwrap(), sets);
    }
}
