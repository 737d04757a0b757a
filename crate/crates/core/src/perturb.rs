//! Low-level visual perturbations for robustness evaluation.
//!
//! Vacated pixels are filled by edge replication. Every perturbation keeps
//! the input dimensions.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Brightness,
    Shift,
    Rotation,
    Hflip,
    Zoom,
}

impl PerturbationKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Brightness => "brightness",
            PerturbationKind::Shift => "shift",
            PerturbationKind::Rotation => "rotation",
            PerturbationKind::Hflip => "hflip",
            PerturbationKind::Zoom => "zoom",
        }
    }
}

/// One perturbation.
///
/// `magnitude` means: brightness offset as a fraction of 255; horizontal
/// shift as a fraction of the width; rotation in degrees; zoom factor.
/// `vertical` is an optional shift fraction of the height. With `seed`
/// set, the magnitude actually applied is drawn uniformly from
/// `[-|magnitude|, |magnitude|]` (zoom: `[1, magnitude]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, magnitude: f64) -> Self {
        PerturbationSpec {
            kind,
            magnitude,
            vertical: None,
            seed: None,
        }
    }

    /// Default suite: brightness 0.2, shift 0.1, rotation 15°, hflip, zoom 1.2.
    pub fn default_suite() -> Vec<PerturbationSpec> {
        vec![
            PerturbationSpec::new(PerturbationKind::Brightness, 0.2),
            PerturbationSpec::new(PerturbationKind::Shift, 0.1),
            PerturbationSpec::new(PerturbationKind::Rotation, 15.0),
            PerturbationSpec::new(PerturbationKind::Hflip, 0.0),
            PerturbationSpec::new(PerturbationKind::Zoom, 1.2),
        ]
    }

    /// Short directory-safe name such as `rotation_15`.
    pub fn label(&self) -> String {
        match self.kind {
            PerturbationKind::Hflip => "hflip".to_string(),
            k => {
                let mut s = format!("{}_{}", k.name(), self.magnitude);
                if let Some(v) = self.vertical {
                    s.push_str(&format!("_{v}"));
                }
                if let Some(seed) = self.seed {
                    s.push_str(&format!("_s{seed}"));
                }
                s
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.magnitude;
        let ok = m.is_finite()
            && match self.kind {
                PerturbationKind::Brightness => (-1.0..=1.0).contains(&m),
                PerturbationKind::Shift => (-0.5..=0.5).contains(&m),
                PerturbationKind::Rotation => (-45.0..=45.0).contains(&m),
                PerturbationKind::Hflip => true,
                PerturbationKind::Zoom => m >= 1.0,
            };
        if !ok {
            return Err(Error::invalid(format!(
                "{} magnitude {m} is out of range",
                self.kind.name()
            )));
        }
        if let Some(v) = self.vertical {
            if self.kind != PerturbationKind::Shift {
                return Err(Error::invalid("`vertical` only applies to shift"));
            }
            if !(v.is_finite() && (-0.5..=0.5).contains(&v)) {
                return Err(Error::invalid(format!("vertical shift {v} is out of range")));
            }
        }
        Ok(())
    }

    /// Magnitudes actually applied: `(magnitude, vertical)`.
    pub fn effective(&self) -> (f64, f64) {
        let vertical = self.vertical.unwrap_or(0.0);
        let Some(s) = self.seed else {
            return (self.magnitude, vertical);
        };
        let mut rng = seed::rng(s);
        let mut symmetric = |bound: f64| {
            let b = bound.abs();
            if b == 0.0 {
                0.0
            } else {
                rng.gen_range(-b..=b)
            }
        };
        match self.kind {
            PerturbationKind::Zoom => {
                let m = if self.magnitude > 1.0 {
                    rng.gen_range(1.0..=self.magnitude)
                } else {
                    1.0
                };
                (m, 0.0)
            }
            PerturbationKind::Hflip => (self.magnitude, 0.0),
            _ => {
                let m = symmetric(self.magnitude);
                (m, symmetric(vertical))
            }
        }
    }
}

/// Applies `spec` to `img`. Output has the input's dimensions.
pub fn perturb(img: &RgbImage, spec: &PerturbationSpec) -> Result<RgbImage> {
    spec.validate()?;
    let (m, v) = spec.effective();
    Ok(match spec.kind {
        PerturbationKind::Brightness => brightness(img, m),
        PerturbationKind::Shift => shift(img, m, v),
        PerturbationKind::Rotation => rotate(img, m),
        PerturbationKind::Hflip => imageops::flip_horizontal(img),
        PerturbationKind::Zoom => zoom(img, m),
    })
}

fn brightness(img: &RgbImage, m: f64) -> RgbImage {
    let offset = m * 255.0;
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = (*c as f64 + offset).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Output `(x, y)` reads input `(x - dx, y - dy)`, clamped to the edges.
fn shift(img: &RgbImage, fx: f64, fy: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let dx = (fx * w as f64).round() as i64;
    let dy = (fy * h as f64).round() as i64;
    RgbImage::from_fn(w, h, |x, y| {
        let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as u32;
        let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as u32;
        *img.get_pixel(sx, sy)
    })
}

/// Counter-clockwise rotation about the image center with bilinear
/// sampling and clamped (edge-replicated) coordinates.
fn rotate(img: &RgbImage, degrees: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return img.clone();
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let max_x = w as f64 - 1.0;
    let max_y = h as f64 - 1.0;
    RgbImage::from_fn(w, h, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        // inverse mapping of an image-space counter-clockwise rotation
        let sx = (cos * dx - sin * dy + cx).clamp(0.0, max_x);
        let sy = (sin * dx + cos * dy + cy).clamp(0.0, max_y);
        bilinear(img, sx, sy)
    })
}

fn bilinear(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = img.get_pixel(x0, y0).0;
    let p10 = img.get_pixel(x1, y0).0;
    let p01 = img.get_pixel(x0, y1).0;
    let p11 = img.get_pixel(x1, y1).0;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

/// Center-crops `1/factor` of each dimension and resizes back.
fn zoom(img: &RgbImage, factor: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let cw = ((w as f64 / factor).round() as u32).clamp(1.min(w), w);
    let ch = ((h as f64 / factor).round() as u32).clamp(1.min(h), h);
    if (cw, ch) == (w, h) {
        return img.clone();
    }
    let crop = imageops::crop_imm(img, (w - cw) / 2, (h - ch) / 2, cw, ch).to_image();
    imageops::resize(&crop, w, h, FilterType::Triangle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([x as u8, y as u8, (x * 7 + y * 3) as u8]))
    }

    fn spec(kind: PerturbationKind, m: f64) -> PerturbationSpec {
        PerturbationSpec::new(kind, m)
    }

    #[test]
    fn hflip_involution() {
        let img = ramp(37, 21);
        let once = perturb(&img, &spec(PerturbationKind::Hflip, 0.0)).unwrap();
        assert_ne!(once, img);
        assert_eq!(perturb(&once, &spec(PerturbationKind::Hflip, 0.0)).unwrap(), img);
    }

    #[test]
    fn identities() {
        let img = ramp(40, 30);
        for s in [
            spec(PerturbationKind::Brightness, 0.0),
            spec(PerturbationKind::Rotation, 0.0),
            spec(PerturbationKind::Zoom, 1.0),
            spec(PerturbationKind::Shift, 0.0),
        ] {
            assert_eq!(perturb(&img, &s).unwrap(), img, "{s:?}");
        }
    }

    #[test]
    fn shift_reads_from_the_left() {
        let img = ramp(100, 5);
        let out = perturb(&img, &spec(PerturbationKind::Shift, 0.1)).unwrap();
        for y in 0..5 {
            for x in 0..100u32 {
                let src = x.saturating_sub(10);
                assert_eq!(out.get_pixel(x, y), img.get_pixel(src, y));
            }
        }
    }

    #[test]
    fn vertical_shift() {
        let img = ramp(10, 20);
        let mut s = spec(PerturbationKind::Shift, 0.0);
        s.vertical = Some(-0.25);
        let out = perturb(&img, &s).unwrap();
        assert_eq!(out.get_pixel(3, 0), img.get_pixel(3, 5));
        assert_eq!(out.get_pixel(3, 19), img.get_pixel(3, 19));
    }

    #[test]
    fn brightness_clamps() {
        let img = RgbImage::from_pixel(2, 2, Rgb([250, 10, 128]));
        let out = perturb(&img, &spec(PerturbationKind::Brightness, 0.2)).unwrap();
        assert_eq!(*out.get_pixel(0, 0), Rgb([255, 61, 179]));
        let out = perturb(&img, &spec(PerturbationKind::Brightness, -1.0)).unwrap();
        assert_eq!(*out.get_pixel(0, 0), Rgb([0, 0, 0]));
    }

    #[test]
    fn rotation_fixes_center() {
        let img = ramp(5, 5);
        let out = perturb(&img, &spec(PerturbationKind::Rotation, 45.0)).unwrap();
        assert_eq!(out.dimensions(), (5, 5));
        // center pixel is a fixed point
        assert_eq!(out.get_pixel(2, 2), img.get_pixel(2, 2));
    }

    #[test]
    fn zoom_magnifies_center() {
        let img = RgbImage::from_fn(40, 40, |x, y| {
            if (10..30).contains(&x) && (10..30).contains(&y) {
                Rgb([200, 0, 0])
            } else {
                Rgb([0, 0, 200])
            }
        });
        let out = perturb(&img, &spec(PerturbationKind::Zoom, 2.0)).unwrap();
        assert_eq!(*out.get_pixel(0, 0), Rgb([200, 0, 0]));
        assert_eq!(*out.get_pixel(39, 39), Rgb([200, 0, 0]));
    }

    #[test]
    fn range_checks() {
        let img = ramp(4, 4);
        for s in [
            spec(PerturbationKind::Brightness, 1.5),
            spec(PerturbationKind::Shift, 0.6),
            spec(PerturbationKind::Rotation, -50.0),
            spec(PerturbationKind::Zoom, 0.9),
        ] {
            assert!(perturb(&img, &s).is_err(), "{s:?}");
        }
    }

    #[test]
    fn seeded_magnitudes_stay_in_range() {
        for seed in 0..200 {
            let s = PerturbationSpec {
                seed: Some(seed),
                ..spec(PerturbationKind::Rotation, 15.0)
            };
            let (m, _) = s.effective();
            assert!((-15.0..=15.0).contains(&m));
            assert_eq!(s.effective(), (m, 0.0));
            let z = PerturbationSpec {
                seed: Some(seed),
                ..spec(PerturbationKind::Zoom, 1.3)
            };
            assert!((1.0..=1.3).contains(&z.effective().0));
        }
    }

    proptest! {
        #[test]
        fn dimensions_preserved(
            w in 1u32..40, h in 1u32..40,
            kind in proptest::sample::select(vec![
                PerturbationKind::Brightness, PerturbationKind::Shift, PerturbationKind::Rotation,
                PerturbationKind::Hflip, PerturbationKind::Zoom,
            ]),
            unit in -1.0f64..1.0,
        ) {
            let m = match kind {
                PerturbationKind::Brightness => unit,
                PerturbationKind::Shift => unit / 2.0,
                PerturbationKind::Rotation => unit * 45.0,
                PerturbationKind::Hflip => 0.0,
                PerturbationKind::Zoom => 1.0 + unit.abs() * 2.0,
            };
            let img = ramp(w, h);
            let s = spec(kind, m);
            let out = perturb(&img, &s).unwrap();
            prop_assert_eq!(out.dimensions(), (w, h));
            prop_assert_eq!(out, perturb(&img, &s).unwrap());
        }
    }
}
