use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CompositorError, Panorama, TransformedDetection};
use crate::analytics::arrow_chains_by_label;
use crate::geometry::Point;
use crate::math::{ceil, cos, floor, hypot, sin, sqrt};
use crate::raster::RgbaImage;

/// Bright, unnatural colours that stand out against indoor scenes.
pub const DEFAULT_PALETTE: [[u8; 3]; 12] = [
    [255, 0, 255],
    [0, 255, 0],
    [0, 255, 255],
    [255, 255, 0],
    [255, 64, 0],
    [128, 0, 255],
    [0, 128, 255],
    [255, 0, 128],
    [128, 255, 0],
    [0, 255, 160],
    [255, 160, 0],
    [160, 96, 255],
];

/// Reserved for the highlighted frame outline; never assigned to a label.
pub const HIGHLIGHT_COLOR: [u8; 3] = [255, 255, 255];

const LINE_HALF_WIDTH: f64 = 1.0;
const DISC_RADIUS: f64 = 4.0;
const NODE_RADIUS: f64 = 2.0;
const HIGHLIGHT_HALF_WIDTH: f64 = 1.5;
const ARROW_HEAD_LEN: f64 = 10.0;
const ARROW_HEAD_ANGLE: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayStyle {
    #[default]
    BoundingBoxes,
    Centroids,
    Arrows,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlaySpec {
    pub style: OverlayStyle,
    pub min_confidence: f64,
    /// Only these labels are drawn when set.
    pub label_filter: Option<BTreeSet<String>>,
    pub highlighted_frame: Option<u32>,
}

impl OverlaySpec {
    pub fn validate(&self) -> Result<(), CompositorError> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(CompositorError::InvalidParams("min_confidence must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn admits(&self, d: &TransformedDetection) -> bool {
        d.detection.confidence >= self.min_confidence
            && self
                .label_filter
                .as_ref()
                .is_none_or(|f| f.contains(&d.detection.label))
    }
}

/// Label colours in order of assignment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<(String, [u8; 3])>,
}

impl Palette {
    /// Assigns [`DEFAULT_PALETTE`] colours in the given order, cycling past
    /// the twelfth label; a warning names every reused colour.
    pub fn for_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> (Palette, Vec<String>) {
        let mut p = Palette::default();
        let mut warnings = Vec::new();
        for l in labels {
            if let Some(w) = p.assign(l) {
                warnings.push(w);
            }
        }
        (p, warnings)
    }

    pub fn get(&self, label: &str) -> Option<[u8; 3]> {
        self.entries.iter().find(|(l, _)| l == label).map(|e| e.1)
    }

    /// Adds `label` if missing. Returns a warning when its colour is reused.
    pub fn assign(&mut self, label: &str) -> Option<String> {
        if self.get(label).is_some() {
            return None;
        }
        let i = self.entries.len();
        let color = DEFAULT_PALETTE[i % DEFAULT_PALETTE.len()];
        self.entries.push((label.into(), color));
        (i >= DEFAULT_PALETTE.len()).then(|| {
            format!(
                "palette exhausted: label {label:?} reuses colour {} of {}",
                i % DEFAULT_PALETTE.len(),
                DEFAULT_PALETTE.len()
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayOutput {
    pub image: RgbaImage,
    pub warnings: Vec<String>,
}

/// Draws the admitted detections on a transparent canvas-sized raster.
/// Labels missing from `palette` get cycled colours and a warning.
pub fn render_overlay(
    panorama: &Panorama,
    transformed: &[TransformedDetection],
    spec: &OverlaySpec,
    palette: &Palette,
) -> Result<OverlayOutput, CompositorError> {
    spec.validate()?;
    let mut palette = palette.clone();
    let mut warnings = Vec::new();
    let mut canvas = RgbaImage::new(panorama.canvas_width, panorama.canvas_height);
    let shown: Vec<TransformedDetection> = transformed.iter().filter(|d| spec.admits(d)).cloned().collect();
    let mut color_of = |label: &str, warnings: &mut Vec<String>| {
        if let Some(w) = palette.assign(label) {
            warnings.push(w);
        }
        palette.get(label).expect("assigned above")
    };

    match spec.style {
        OverlayStyle::BoundingBoxes => {
            for d in &shown {
                let c = color_of(&d.detection.label, &mut warnings);
                draw_polygon(&mut canvas, &d.quad, LINE_HALF_WIDTH, c);
            }
        }
        OverlayStyle::Centroids => {
            for d in &shown {
                let c = color_of(&d.detection.label, &mut warnings);
                draw_disc(&mut canvas, d.centroid, DISC_RADIUS, c);
            }
        }
        OverlayStyle::Arrows => {
            for chain in arrow_chains_by_label(&shown) {
                let c = color_of(&chain.label, &mut warnings);
                if chain.nodes.len() == 1 {
                    draw_disc(&mut canvas, chain.nodes[0].centroid, NODE_RADIUS, c);
                }
                for w in chain.nodes.windows(2) {
                    draw_arrow(&mut canvas, w[0].centroid, w[1].centroid, c);
                }
            }
        }
    }

    if let Some(fid) = spec.highlighted_frame {
        match panorama.placement(fid).and_then(|p| p.quad) {
            Some(q) => draw_polygon(&mut canvas, &q, HIGHLIGHT_HALF_WIDTH, HIGHLIGHT_COLOR),
            None => warnings.push(format!("frame {fid} has no placement on the canvas")),
        }
    }
    Ok(OverlayOutput {
        image: canvas,
        warnings,
    })
}

fn paint(img: &mut RgbaImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u64) < img.width() as u64 && (y as u64) < img.height() as u64 {
        img.put_pixel(x as u32, y as u32, [c[0], c[1], c[2], 255]);
    }
}

fn pixel_span(lo: f64, hi: f64, limit: u32) -> Option<(i64, i64)> {
    let a = floor(lo).max(0.0);
    let b = ceil(hi).min(limit as f64 - 1.0);
    (a.is_finite() && b.is_finite() && a <= b).then_some((a as i64, b as i64))
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    hypot(p.0 - (a.0 + t * dx), p.1 - (a.1 + t * dy))
}

/// Pixels whose centre lies within `half_width` of the segment.
fn draw_segment(img: &mut RgbaImage, a: Point, b: Point, half_width: f64, c: [u8; 3]) {
    let Some((x0, x1)) = pixel_span(a.0.min(b.0) - half_width, a.0.max(b.0) + half_width, img.width()) else {
        return;
    };
    let Some((y0, y1)) = pixel_span(a.1.min(b.1) - half_width, a.1.max(b.1) + half_width, img.height()) else {
        return;
    };
    for y in y0..=y1 {
        for x in x0..=x1 {
            if segment_distance((x as f64, y as f64), a, b) <= half_width {
                paint(img, x, y, c);
            }
        }
    }
}

fn draw_polygon(img: &mut RgbaImage, quad: &[Point; 4], half_width: f64, c: [u8; 3]) {
    for i in 0..4 {
        draw_segment(img, quad[i], quad[(i + 1) % 4], half_width, c);
    }
}

fn draw_disc(img: &mut RgbaImage, centre: Point, r: f64, c: [u8; 3]) {
    let Some((x0, x1)) = pixel_span(centre.0 - r, centre.0 + r, img.width()) else {
        return;
    };
    let Some((y0, y1)) = pixel_span(centre.1 - r, centre.1 + r, img.height()) else {
        return;
    };
    for y in y0..=y1 {
        for x in x0..=x1 {
            if hypot(x as f64 - centre.0, y as f64 - centre.1) <= r {
                paint(img, x, y, c);
            }
        }
    }
}

fn draw_arrow(img: &mut RgbaImage, from: Point, to: Point, c: [u8; 3]) {
    draw_segment(img, from, to, LINE_HALF_WIDTH, c);
    let (dx, dy) = (from.0 - to.0, from.1 - to.1);
    let len = sqrt(dx * dx + dy * dy);
    if len == 0.0 {
        return;
    }
    let head = ARROW_HEAD_LEN.min(len / 2.0);
    let (ux, uy) = (dx / len, dy / len);
    for s in [ARROW_HEAD_ANGLE, -ARROW_HEAD_ANGLE] {
        let (cs, sn) = (cos(s), sin(s));
        let tip = (to.0 + head * (ux * cs - uy * sn), to.1 + head * (ux * sn + uy * cs));
        draw_segment(img, to, tip, LINE_HALF_WIDTH, c);
    }
}
