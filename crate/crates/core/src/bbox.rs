use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned integer box: top-left corner plus extent, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::invalid(format!(
                "bbox ({},{},{},{}) has zero extent",
                self.x, self.y, self.w, self.h
            )));
        }
        Ok(())
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x.max(other.x) as u64;
        let y0 = self.y.max(other.y) as u64;
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            (x1 - x0) * (y1 - y0)
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0
    }

    pub fn contains_point(&self, px: u32, py: u32) -> bool {
        px >= self.x && (px as u64) < self.right() && py >= self.y && (py as u64) < self.bottom()
    }

    /// True when the box lies inside `[0,width) x [0,height)`.
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= width as u64 && self.bottom() <= height as u64
    }

    /// Clips to `[0,width) x [0,height)`; `None` when nothing remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let x1 = self.right().min(width as u64);
        let y1 = self.bottom().min(height as u64);
        if x1 <= self.x as u64 || y1 <= self.y as u64 {
            return None;
        }
        Some(BBox {
            x: self.x,
            y: self.y,
            w: (x1 - self.x as u64) as u32,
            h: (y1 - self.y as u64) as u32,
        })
    }

    /// Intersection of two boxes, if non-empty.
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 as u64 || y1 <= y0 as u64 {
            return None;
        }
        Some(BBox {
            x: x0,
            y: y0,
            w: (x1 - x0 as u64) as u32,
            h: (y1 - y0 as u64) as u32,
        })
    }
}

/// Intersection over union. Disjoint boxes give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox { x, y, w, h }
    }

    #[test]
    fn iou_identity() {
        assert_eq!(iou(&b(3, 4, 10, 7), &b(3, 4, 10, 7)), 1.0);
    }

    #[test]
    fn iou_disjoint() {
        assert_eq!(iou(&b(0, 0, 10, 10), &b(20, 20, 5, 5)), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // 50 shared over a 150 union
        assert_eq!(iou(&b(0, 0, 10, 10), &b(5, 0, 10, 10)), 1.0 / 3.0);
    }

    #[test]
    fn touching_edges_do_not_intersect() {
        assert!(!b(0, 0, 10, 10).intersects(&b(10, 0, 10, 10)));
    }

    #[test]
    fn clamp() {
        assert_eq!(b(90, 90, 20, 5).clamp_to(100, 100), Some(b(90, 90, 10, 5)));
        assert_eq!(b(100, 0, 5, 5).clamp_to(100, 100), None);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(BBox::new(0, 0, 0, 3).is_err());
    }
}
