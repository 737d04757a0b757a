//! Rendering of compound figures and parallel corpus generation.
//!
//! Each figure index `i` gets its own seed `seed::split(master_seed, i)`.
//! The layout is resolved from that seed directly; panel sources are drawn
//! from a second stream seeded with `seed::split(figure_seed, SOURCES)`.
//! Figures are rendered independently and the manifest is written by a
//! single writer in index order, so outputs never depend on worker count.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ImageFormat, Rgb, RgbImage};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::font;
use crate::layout::{resolve_layout, LayoutConfig, LayoutSpec};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Radiology,
    Histopathology,
    Dermatology,
    Retina,
    Plot,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Radiology,
        Modality::Histopathology,
        Modality::Dermatology,
        Modality::Retina,
        Modality::Plot,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    pub source_id: String,
    pub path: String,
    pub modality: Modality,
    pub split: Split,
}

/// Single-panel source images available for composition.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PanelPool {
    pub entries: Vec<PoolEntry>,
}

impl PanelPool {
    pub fn new(entries: Vec<PoolEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(e.source_id.as_str()) {
                return Err(Error::invalid(format!("duplicate source_id {:?} in pool", e.source_id)));
            }
        }
        Ok(PanelPool { entries })
    }

    /// Decodes every entry, resolving relative paths against `base`.
    pub fn load_images(&self, base: &Path) -> Result<Vec<RgbImage>> {
        self.entries
            .par_iter()
            .map(|e| {
                let path = base.join(&e.path);
                let img = image::open(&path).map_err(|err| Error::Panel {
                    source_id: e.source_id.clone(),
                    message: format!("cannot decode {}: {err}", path.display()),
                })?;
                Ok(img.to_rgb8())
            })
            .collect()
    }
}

/// Figure-kind selector: one of the pure modalities, or `mixed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixKey {
    Radiology,
    Histopathology,
    Dermatology,
    Retina,
    Plot,
    Mixed,
}

impl MixKey {
    pub const ALL: [MixKey; 6] = [
        MixKey::Radiology,
        MixKey::Histopathology,
        MixKey::Dermatology,
        MixKey::Retina,
        MixKey::Plot,
        MixKey::Mixed,
    ];

    pub fn modality(self) -> Option<Modality> {
        match self {
            MixKey::Radiology => Some(Modality::Radiology),
            MixKey::Histopathology => Some(Modality::Histopathology),
            MixKey::Dermatology => Some(Modality::Dermatology),
            MixKey::Retina => Some(Modality::Retina),
            MixKey::Plot => Some(Modality::Plot),
            MixKey::Mixed => None,
        }
    }
}

/// Per-kind sampling weights; missing keys weigh 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixPolicy(pub BTreeMap<MixKey, f64>);

impl MixPolicy {
    /// Equal weight on the five modalities and on `mixed`.
    pub fn uniform() -> Self {
        MixPolicy(MixKey::ALL.iter().map(|&k| (k, 1.0 / 6.0)).collect())
    }

    pub fn weight(&self, key: MixKey) -> f64 {
        self.0.get(&key).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = 0.0;
        for (k, &w) in &self.0 {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(format!(
                    "mix weight for {k:?} must be finite and >= 0, got {w}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("mix weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> MixKey {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for key in MixKey::ALL {
            let w = self.weight(key);
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(key);
            if u < acc {
                return key;
            }
        }
        last.expect("validated policy has positive mass")
    }
}

impl Default for MixPolicy {
    fn default() -> Self {
        MixPolicy::uniform()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelRecord {
    pub bbox: BBox,
    pub label_text: String,
    pub source_id: String,
    pub modality: Modality,
}

/// One compound figure's ground truth, one JSONL row per figure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureManifest {
    pub figure_id: String,
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub panels: Vec<PanelRecord>,
    pub caption: Option<String>,
}

impl FigureManifest {
    pub fn validate(&self) -> Result<()> {
        if self.panels.is_empty() {
            return Err(Error::invalid(format!("figure {} has no panels", self.figure_id)));
        }
        for (i, p) in self.panels.iter().enumerate() {
            p.bbox.validate()?;
            if !p.bbox.fits_within(self.width, self.height) {
                return Err(Error::invalid(format!(
                    "figure {}: panel {i} lies outside the {}x{} canvas",
                    self.figure_id, self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelStyle {
    pub font_px: u32,
    pub color: [u8; 3],
    /// Fill behind the glyphs; `None` draws glyphs only.
    pub background: Option<[u8; 3]>,
}

impl Default for LabelStyle {
    fn default() -> Self {
        LabelStyle {
            font_px: 18,
            color: [20, 20, 20],
            background: Some([255, 255, 255]),
        }
    }
}

impl LabelStyle {
    /// Pixel scale used for a label confined to `region`.
    pub fn scale_in(&self, region: &BBox) -> u32 {
        font::scale_for(self.font_px, region.h)
    }
}

/// Pixels that may hold label ink for each panel of `spec`.
pub fn label_boxes(spec: &LayoutSpec, style: &LabelStyle) -> Vec<Option<BBox>> {
    spec.panels
        .iter()
        .map(|p| {
            font::label_box(
                &p.label_text,
                p.label_anchor,
                style.scale_in(&p.label_region),
                &p.label_region,
            )
        })
        .collect()
}

/// One panel's source: identity plus the decoded pixels.
#[derive(Debug, Clone, Copy)]
pub struct PanelSource<'a> {
    pub source_id: &'a str,
    pub modality: Modality,
    pub image: &'a RgbImage,
}

/// Center-crops `src` to the `w:h` aspect, then resizes to exactly `w x h`.
pub fn fit_panel(src: &RgbImage, w: u32, h: u32) -> Result<RgbImage> {
    let (sw, sh) = src.dimensions();
    if sw == 0 || sh == 0 || w == 0 || h == 0 {
        return Err(Error::Generation(format!("cannot fit a {sw}x{sh} image into {w}x{h}")));
    }
    let (sw64, sh64, w64, h64) = (sw as u64, sh as u64, w as u64, h as u64);
    let (cw, ch) = if sw64 * h64 > sh64 * w64 {
        // source wider than target: keep full height
        (((sh64 * w64 + h64 / 2) / h64).min(sw64), sh64)
    } else {
        (sw64, ((sw64 * h64 + w64 / 2) / w64).min(sh64))
    };
    if cw == 0 || ch == 0 {
        return Err(Error::Generation(format!(
            "center crop of {sw}x{sh} to aspect {w}:{h} is empty"
        )));
    }
    let (cw, ch) = (cw as u32, ch as u32);
    let cropped = imageops::crop_imm(src, (sw - cw) / 2, (sh - ch) / 2, cw, ch).to_image();
    if (cw, ch) == (w, h) {
        return Ok(cropped);
    }
    Ok(imageops::resize(&cropped, w, h, FilterType::Triangle))
}

/// Renders one compound figure and its manifest.
pub fn compose_figure(
    spec: &LayoutSpec,
    sources: &[PanelSource<'_>],
    style: &LabelStyle,
    figure_id: &str,
    file: &str,
) -> Result<(RgbImage, FigureManifest)> {
    if sources.len() != spec.panels.len() {
        return Err(Error::invalid(format!(
            "{} panel images for {} layout slots",
            sources.len(),
            spec.panels.len()
        )));
    }
    let mut canvas = RgbImage::from_pixel(spec.canvas_w, spec.canvas_h, Rgb([255, 255, 255]));
    let mut panels = Vec::with_capacity(sources.len());
    for (slot, src) in spec.panels.iter().zip(sources) {
        let fitted = fit_panel(src.image, slot.rect.w, slot.rect.h).map_err(|e| Error::Panel {
            source_id: src.source_id.to_string(),
            message: e.to_string(),
        })?;
        imageops::replace(&mut canvas, &fitted, slot.rect.x as i64, slot.rect.y as i64);
        panels.push(PanelRecord {
            bbox: slot.rect,
            label_text: slot.label_text.clone(),
            source_id: src.source_id.to_string(),
            modality: src.modality,
        });
    }
    let color = Rgb(style.color);
    let background = style.background.map(Rgb);
    for slot in &spec.panels {
        font::draw_label(
            &mut canvas,
            &slot.label_text,
            slot.label_anchor,
            style.scale_in(&slot.label_region),
            &slot.label_region,
            color,
            background,
        );
    }
    let manifest = FigureManifest {
        figure_id: figure_id.to_string(),
        file: file.to_string(),
        width: spec.canvas_w,
        height: spec.canvas_h,
        seed: spec.seed,
        panels,
        caption: None,
    };
    Ok((canvas, manifest))
}

/// Everything the generator needs besides the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// Layout templates; one is drawn uniformly per figure.
    pub layouts: Vec<LayoutConfig>,
    #[serde(default)]
    pub mix: MixPolicy,
    #[serde(default)]
    pub label_style: LabelStyle,
    /// Restrict sources to one split.
    #[serde(default)]
    pub split: Option<Split>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            layouts: vec![LayoutConfig::default()],
            mix: MixPolicy::uniform(),
            label_style: LabelStyle::default(),
            split: None,
        }
    }
}

/// Pool entries eligible for generation, grouped by modality.
#[derive(Debug, Clone)]
pub struct SourceIndex {
    by_modality: BTreeMap<Modality, Vec<usize>>,
}

impl SourceIndex {
    pub fn new(pool: &PanelPool, config: &GenerationConfig) -> Result<Self> {
        config.mix.validate()?;
        if config.layouts.is_empty() {
            return Err(Error::config("at least one layout is required"));
        }
        for l in &config.layouts {
            l.validate()?;
        }
        let mut by_modality: BTreeMap<Modality, Vec<usize>> = BTreeMap::new();
        for (i, e) in pool.entries.iter().enumerate() {
            if config.split.is_none_or(|s| s == e.split) {
                by_modality.entry(e.modality).or_default().push(i);
            }
        }
        for key in MixKey::ALL {
            if config.mix.weight(key) <= 0.0 {
                continue;
            }
            match key.modality() {
                Some(m) if !by_modality.contains_key(&m) => {
                    return Err(Error::config(format!(
                        "mix policy draws {m:?} figures but the pool has no {m:?} entries"
                    )));
                }
                None if by_modality.is_empty() => {
                    return Err(Error::config("mix policy draws mixed figures from an empty pool"));
                }
                _ => {}
            }
        }
        Ok(SourceIndex { by_modality })
    }

    /// Modalities available to `mixed` figures, in fixed order.
    pub fn modalities(&self) -> Vec<Modality> {
        self.by_modality.keys().copied().collect()
    }
}

/// Everything random about one figure, resolved before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct FigurePlan {
    pub index: u64,
    pub seed: u64,
    pub kind: MixKey,
    pub layout: LayoutSpec,
    /// Pool entry index per panel.
    pub sources: Vec<usize>,
}

pub fn figure_id(index: u64) -> String {
    format!("fig_{index:08}")
}

pub fn figure_file(index: u64) -> String {
    format!("images/{}.png", figure_id(index))
}

/// Draws the plan of figure `index`. Pure in its arguments.
pub fn plan_figure(
    index: &SourceIndex,
    config: &GenerationConfig,
    master_seed: u64,
    figure: u64,
) -> Result<FigurePlan> {
    let fig_seed = seed::split(master_seed, figure);
    let mut rng = seed::rng(seed::split(fig_seed, seed::stream::SOURCES));
    let layout_cfg = if config.layouts.len() == 1 {
        &config.layouts[0]
    } else {
        &config.layouts[rng.gen_range(0..config.layouts.len())]
    };
    let layout = resolve_layout(layout_cfg, fig_seed)?;
    let kind = config.mix.sample(&mut rng);
    let mixed_pool = index.modalities();
    let sources = (0..layout.panels.len())
        .map(|_| {
            let modality = match kind.modality() {
                Some(m) => m,
                None => mixed_pool[rng.gen_range(0..mixed_pool.len())],
            };
            let candidates = &index.by_modality[&modality];
            candidates[rng.gen_range(0..candidates.len())]
        })
        .collect();
    Ok(FigurePlan {
        index: figure,
        seed: fig_seed,
        kind,
        layout,
        sources,
    })
}

/// Renders a planned figure against decoded pool images.
pub fn render_plan(
    plan: &FigurePlan,
    pool: &PanelPool,
    images: &[RgbImage],
    style: &LabelStyle,
) -> Result<(RgbImage, FigureManifest)> {
    let sources: Vec<PanelSource<'_>> = plan
        .sources
        .iter()
        .map(|&i| PanelSource {
            source_id: &pool.entries[i].source_id,
            modality: pool.entries[i].modality,
            image: &images[i],
        })
        .collect();
    compose_figure(
        &plan.layout,
        &sources,
        style,
        &figure_id(plan.index),
        &figure_file(plan.index),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationSummary {
    pub count: u64,
    pub manifest: PathBuf,
    pub kind_counts: BTreeMap<MixKey, u64>,
}

/// Figures rendered per parallel batch before their manifest rows are flushed.
const BATCH: u64 = 256;

/// Generates `count` figures into `out_dir/images/` and writes
/// `out_dir/manifest.jsonl`. Output bytes depend only on
/// `(pool order, config, master_seed, count)`.
pub fn generate_corpus(
    pool: &PanelPool,
    images: &[RgbImage],
    config: &GenerationConfig,
    count: u64,
    master_seed: u64,
    workers: usize,
    out_dir: &Path,
) -> Result<GenerationSummary> {
    if images.len() != pool.entries.len() {
        return Err(Error::invalid(format!(
            "{} decoded images for {} pool entries",
            images.len(),
            pool.entries.len()
        )));
    }
    let index = SourceIndex::new(pool, config)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest_path = out_dir.join("manifest.jsonl");
    let file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut writer = BufWriter::new(file);
    let mut kind_counts = BTreeMap::new();

    if count > 0 {
        let images_dir = out_dir.join("images");
        fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    }

    let thread_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Generation(format!("cannot start worker pool: {e}")))?;

    let mut start = 0;
    while start < count {
        let end = (start + BATCH).min(count);
        let batch: Vec<Result<(MixKey, FigureManifest)>> = thread_pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let plan = plan_figure(&index, config, master_seed, i)?;
                    let (img, manifest) = render_plan(&plan, pool, images, &config.label_style)?;
                    let path = out_dir.join(&manifest.file);
                    img.save_with_format(&path, ImageFormat::Png)
                        .map_err(|e| Error::Image {
                            path: path.clone(),
                            message: e.to_string(),
                        })?;
                    Ok((plan.kind, manifest))
                })
                .collect()
        });
        for item in batch {
            let (kind, manifest) = item?;
            *kind_counts.entry(kind).or_insert(0) += 1;
            crate::io::jsonl::write_line(&mut writer, &manifest).map_err(|e| Error::io(&manifest_path, e))?;
        }
        start = end;
    }
    writer.flush().map_err(|e| Error::io(&manifest_path, e))?;

    Ok(GenerationSummary {
        count,
        manifest: manifest_path,
        kind_counts,
    })
}
