//! Minimal 5x7 bitmap font for panel labels.
//!
//! Covers digits, ASCII letters (lowercase shares the capital glyphs) and
//! `-`. Unknown characters render as a blank cell.

use image::{Rgb, RgbImage};

use crate::bbox::BBox;
use crate::layout::Point;

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
/// Cell advance including one column of spacing.
const CELL_W: u32 = GLYPH_W + 1;
/// Padding around the text, in font units.
const PAD: u32 = 1;

/// Each row is 5 bits, MSB = leftmost column.
fn glyph(c: char) -> Option<[u8; 7]> {
    let g = match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        _ => return None,
    };
    Some(g)
}

/// Integer pixel scale for a nominal font size, limited so the label box
/// fits `max_height` when possible.
pub fn scale_for(font_px: u32, max_height: u32) -> u32 {
    let wanted = ((font_px as f64) / (GLYPH_H + 2 * PAD) as f64).round().max(1.0) as u32;
    let fits = (max_height / (GLYPH_H + 2 * PAD)).max(1);
    wanted.min(fits)
}

/// Box covered by a label of `text` at `anchor` and `scale`, clipped to
/// `clip`. `None` for empty text or when nothing remains after clipping.
pub fn label_box(text: &str, anchor: Point, scale: u32, clip: &BBox) -> Option<BBox> {
    let n = text.chars().count() as u32;
    if n == 0 {
        return None;
    }
    let w = (n * CELL_W + 2 * PAD - 1) * scale;
    let h = (GLYPH_H + 2 * PAD) * scale;
    BBox {
        x: anchor.x,
        y: anchor.y,
        w,
        h,
    }
    .intersect(clip)
}

/// Draws `text` on a filled background box at `anchor`, never touching
/// pixels outside `clip`.
pub fn draw_label(
    img: &mut RgbImage,
    text: &str,
    anchor: Point,
    scale: u32,
    clip: &BBox,
    color: Rgb<u8>,
    background: Option<Rgb<u8>>,
) {
    let Some(area) = label_box(text, anchor, scale, clip) else {
        return;
    };
    let Some(area) = area.clamp_to(img.width(), img.height()) else {
        return;
    };
    if let Some(bg) = background {
        for y in area.y..area.bottom() as u32 {
            for x in area.x..area.right() as u32 {
                img.put_pixel(x, y, bg);
            }
        }
    }
    for (i, c) in text.chars().enumerate() {
        let Some(rows) = glyph(c) else { continue };
        let gx = anchor.x as u64 + ((PAD + i as u32 * CELL_W) * scale) as u64;
        let gy = anchor.y as u64 + (PAD * scale) as u64;
        for (ry, bits) in rows.iter().enumerate() {
            for cx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - cx)) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let px = gx + (cx * scale + sx) as u64;
                        let py = gy + (ry as u32 * scale + sy) as u64;
                        if px <= u32::MAX as u64 && py <= u32::MAX as u64 && area.contains_point(px as u32, py as u32) {
                            img.put_pixel(px as u32, py as u32, color);
                        }
                    }
                }
            }
        }
    }
}
