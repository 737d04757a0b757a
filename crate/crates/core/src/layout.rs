//! Layout sampling: turns a [`LayoutConfig`] plus a seed into a fully
//! resolved [`LayoutSpec`] with exact panel rectangles and label anchors.
//!
//! Placement is row-major with left-aligned rows. Horizontal and vertical
//! margins are drawn once per figure, so every row is a regular strip:
//!
//! ```text
//! panel_h  = round(base / aspect)
//! x(c)     = border + c * (base + h_margin)
//! row_w    = cols * base + (cols - 1) * h_margin
//! canvas_w = max(row_w) + 2 * border
//! canvas_h = 2 * border + sum(band + panel_h) + (rows - 1) * v_margin
//! ```
//!
//! `band` is the label strip reserved above each row for outside labels
//! (16 px at a 100 px base, scaled with the base), and 0 otherwise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::seed;

/// Height of the outside label band at a 100 px panel base size.
pub const LABEL_BAND_AT_BASE_100: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    None,
    Numeric,
    LowerAlpha,
    UpperAlpha,
    /// "a1", "a2", "b1": row letter then column number.
    AlphaNumeric,
    /// "1a", "1b", "2a": row number then column letter.
    NumericAlpha,
    /// "a-1", "a-2", "b-1".
    Hyphenated,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 7] = [
        LabelScheme::None,
        LabelScheme::Numeric,
        LabelScheme::LowerAlpha,
        LabelScheme::UpperAlpha,
        LabelScheme::AlphaNumeric,
        LabelScheme::NumericAlpha,
        LabelScheme::Hyphenated,
    ];

    /// Label of the panel at `(row, col)`, which is the `index`-th panel in
    /// row-major order.
    pub fn label(self, index: usize, row: usize, col: usize) -> String {
        match self {
            LabelScheme::None => String::new(),
            LabelScheme::Numeric => (index + 1).to_string(),
            LabelScheme::LowerAlpha => alpha_label(index),
            LabelScheme::UpperAlpha => alpha_label(index).to_ascii_uppercase(),
            LabelScheme::AlphaNumeric => format!("{}{}", alpha_label(row), col + 1),
            LabelScheme::NumericAlpha => format!("{}{}", row + 1, alpha_label(col)),
            LabelScheme::Hyphenated => format!("{}-{}", alpha_label(row), col + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPosition {
    InsideTopLeft,
    OutsideAbove,
}

impl LabelPosition {
    pub const ALL: [LabelPosition; 2] = [LabelPosition::InsideTopLeft, LabelPosition::OutsideAbove];
}

/// Lowercase bijective base-26 label: 0 → "a", 25 → "z", 26 → "aa", 27 → "ab".
pub fn alpha_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        n -= 1;
        out.push(b'a' + (n % 26) as u8);
        n /= 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Configurable layout parameters. `label_scheme` and `label_position`
/// are sampled uniformly per figure when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub grid_rows: u32,
    pub grid_cols: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_rows: Option<Vec<u32>>,
    pub h_margin_range: [u32; 2],
    pub v_margin_range: [u32; 2],
    #[serde(default)]
    pub border: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_scheme: Option<LabelScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_position: Option<LabelPosition>,
    pub panel_aspect: f64,
    pub panel_base_size: u32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            grid_rows: 2,
            grid_cols: 2,
            custom_rows: None,
            h_margin_range: [4, 20],
            v_margin_range: [4, 20],
            border: 0,
            label_scheme: None,
            label_position: None,
            panel_aspect: 1.0,
            panel_base_size: 100,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.custom_rows {
            Some(rows) => {
                if rows.is_empty() {
                    return Err(Error::config("custom_rows must not be empty"));
                }
                if let Some(pos) = rows.iter().position(|&c| c == 0) {
                    return Err(Error::config(format!("custom_rows[{pos}] must be >= 1")));
                }
            }
            None => {
                if self.grid_rows == 0 || self.grid_cols == 0 {
                    return Err(Error::config("grid_rows and grid_cols must be >= 1"));
                }
            }
        }
        for (name, r) in [
            ("h_margin_range", self.h_margin_range),
            ("v_margin_range", self.v_margin_range),
        ] {
            if r[0] > r[1] {
                return Err(Error::config(format!("{name}: min {} exceeds max {}", r[0], r[1])));
            }
        }
        if !(self.panel_aspect.is_finite() && self.panel_aspect > 0.0) {
            return Err(Error::config(format!(
                "panel_aspect must be a positive finite number, got {}",
                self.panel_aspect
            )));
        }
        if self.panel_base_size == 0 {
            return Err(Error::config("panel_base_size must be > 0"));
        }
        let h = self.panel_height();
        if !(1.0..=u32::MAX as f64).contains(&h) {
            return Err(Error::config(format!(
                "panel height round({} / {}) is out of range",
                self.panel_base_size, self.panel_aspect
            )));
        }
        Ok(())
    }

    fn panel_height(&self) -> f64 {
        (self.panel_base_size as f64 / self.panel_aspect).round()
    }

    /// Columns per row, after applying `custom_rows`.
    pub fn row_columns(&self) -> Vec<u32> {
        match &self.custom_rows {
            Some(rows) => rows.clone(),
            None => vec![self.grid_cols; self.grid_rows as usize],
        }
    }

    pub fn panel_count(&self) -> usize {
        self.row_columns().iter().map(|&c| c as usize).sum()
    }

    /// Label band height reserved above each row for outside labels.
    pub fn label_band(&self) -> u32 {
        let scaled = (LABEL_BAND_AT_BASE_100 as f64 * self.panel_base_size as f64 / 100.0).round();
        (scaled as u32).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSlot {
    pub rect: BBox,
    pub label_text: String,
    pub label_anchor: Point,
    /// Area the label may be drawn into: the panel itself for inside
    /// labels, the band strip above it for outside labels.
    pub label_region: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub panels: Vec<PanelSlot>,
    pub seed: u64,
    pub label_scheme: LabelScheme,
    pub label_position: LabelPosition,
}

impl LayoutSpec {
    /// Checks containment, disjointness, uniform size and label uniqueness.
    pub fn check_invariants(&self) -> Result<()> {
        let Some(first) = self.panels.first() else {
            return Err(Error::invalid("layout has no panels"));
        };
        let mut labels = std::collections::HashSet::new();
        for (i, p) in self.panels.iter().enumerate() {
            if !p.rect.fits_within(self.canvas_w, self.canvas_h) {
                return Err(Error::invalid(format!("panel {i} leaves the canvas")));
            }
            if (p.rect.w, p.rect.h) != (first.rect.w, first.rect.h) {
                return Err(Error::invalid(format!("panel {i} size differs from panel 0")));
            }
            if !p.label_text.is_empty() && !labels.insert(p.label_text.as_str()) {
                return Err(Error::invalid(format!("duplicate label {:?}", p.label_text)));
            }
            for (j, q) in self.panels[..i].iter().enumerate() {
                if p.rect.intersects(&q.rect) {
                    return Err(Error::invalid(format!("panels {j} and {i} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// Resolves `config` into concrete geometry. Deterministic in `(config, seed)`.
pub fn resolve_layout(config: &LayoutConfig, seed: u64) -> Result<LayoutSpec> {
    config.validate()?;
    let mut rng = seed::rng(seed);

    let h_margin = rng.gen_range(config.h_margin_range[0]..=config.h_margin_range[1]) as u64;
    let v_margin = rng.gen_range(config.v_margin_range[0]..=config.v_margin_range[1]) as u64;
    let label_scheme = match config.label_scheme {
        Some(s) => s,
        None => LabelScheme::ALL[rng.gen_range(0..LabelScheme::ALL.len())],
    };
    let label_position = match config.label_position {
        Some(p) => p,
        None => LabelPosition::ALL[rng.gen_range(0..LabelPosition::ALL.len())],
    };

    let panel_w = config.panel_base_size as u64;
    let panel_h = config.panel_height() as u64;
    let band = if label_scheme != LabelScheme::None && label_position == LabelPosition::OutsideAbove {
        config.label_band() as u64
    } else {
        0
    };
    let border = config.border as u64;
    let rows = config.row_columns();

    let max_cols = *rows.iter().max().expect("validated non-empty") as u64;
    let canvas_w = max_cols * panel_w + (max_cols - 1) * h_margin + 2 * border;
    let n_rows = rows.len() as u64;
    let canvas_h = n_rows * (band + panel_h) + (n_rows - 1) * v_margin + 2 * border;
    if canvas_w > u32::MAX as u64 || canvas_h > u32::MAX as u64 {
        return Err(Error::config(format!("canvas {canvas_w}x{canvas_h} is too large")));
    }

    let mut panels = Vec::with_capacity(config.panel_count());
    let mut y = border;
    for (r, &cols) in rows.iter().enumerate() {
        let band_y = y;
        let panel_y = y + band;
        for c in 0..cols as u64 {
            let x = border + c * (panel_w + h_margin);
            let rect = BBox {
                x: x as u32,
                y: panel_y as u32,
                w: panel_w as u32,
                h: panel_h as u32,
            };
            let (label_anchor, label_region) = if band > 0 {
                let region = BBox {
                    x: rect.x,
                    y: band_y as u32,
                    w: rect.w,
                    h: band as u32,
                };
                (
                    Point {
                        x: rect.x,
                        y: band_y as u32,
                    },
                    region,
                )
            } else {
                (Point { x: rect.x, y: rect.y }, rect)
            };
            let index = panels.len();
            panels.push(PanelSlot {
                rect,
                label_text: label_scheme.label(index, r, c as usize),
                label_anchor,
                label_region,
            });
        }
        y = panel_y + panel_h + v_margin;
    }

    Ok(LayoutSpec {
        canvas_w: canvas_w as u32,
        canvas_h: canvas_h as u32,
        panels,
        seed,
        label_scheme,
        label_position,
    })
}
