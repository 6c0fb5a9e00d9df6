//! Built-in detector: Harris maxima on an image pyramid, refined to
//! sub-pixel precision, oriented by the intensity centroid and described by
//! 256 steered intensity comparisons on a box-smoothed patch.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Descriptor, DetectorKind, FeatureDetector, FeatureError, Keypoint};
use crate::math::{atan2, cos, exp, ln, round, sin, sqrt};
use crate::raster::GrayImage;

pub const DESCRIPTOR_BITS: usize = 256;
/// Radius of the oriented patch; keypoints closer than `PATCH_RADIUS + 1` to
/// a border are discarded.
pub const PATCH_RADIUS: i32 = 15;
const BORDER: i32 = PATCH_RADIUS + 1;
// Sample offsets stay within this radius so that, after rotation and the
// 5×5 smoothing box, every read lands inside the patch.
const SAMPLE_RADIUS: f64 = 13.0;
const SMOOTH_RADIUS: i32 = 2;
const HARRIS_RADIUS: i32 = 3;
const NMS_RADIUS: i32 = 3;
const PATTERN_SEED: u64 = 0x005e_ed0f_b1ef;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub harris_k: f64,
    /// Minimum Harris response (intensity⁴ units, gradients normalized to
    /// intensity per pixel, structure tensor Gaussian-weighted over a 7×7
    /// window).
    pub harris_threshold: f64,
    pub n_levels: usize,
    pub scale_factor: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            harris_k: 0.04,
            harris_threshold: 10.0,
            n_levels: 4,
            scale_factor: 1.2,
        }
    }
}

pub struct OrientedCornerDetector {
    params: DetectorParams,
    pattern: Vec<[(f64, f64); 2]>,
}

impl OrientedCornerDetector {
    pub fn new(params: DetectorParams) -> Self {
        OrientedCornerDetector {
            params,
            pattern: sampling_pattern(),
        }
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    /// Smallest image side that still leaves an interior for descriptors.
    pub fn min_side() -> u32 {
        (2 * BORDER + 1) as u32
    }
}

impl FeatureDetector for OrientedCornerDetector {
    fn kind(&self) -> DetectorKind {
        DetectorKind::Orb
    }

    fn detect(
        &self,
        gray: &GrayImage,
        max_features: usize,
    ) -> Result<(Vec<Keypoint>, Vec<Descriptor>), FeatureError> {
        let min = Self::min_side();
        if gray.width() < min || gray.height() < min {
            return Err(FeatureError::ImageTooSmall {
                width: gray.width(),
                height: gray.height(),
                min,
            });
        }
        let pyramid = build_pyramid(gray, &self.params, min);
        let mut found: Vec<(Keypoint, Descriptor)> = Vec::new();
        for (level, lvl) in pyramid.iter().enumerate() {
            let harris = harris_response(&lvl.image, self.params.harris_k);
            let smooth = box_sums(&lvl.image, SMOOTH_RADIUS);
            for c in level_corners(&lvl.image, &harris, &self.params) {
                let (x, y, response) = (c.x, c.y, c.response);
                let orientation = intensity_centroid_angle(&lvl.image, x, y);
                let desc = describe(&smooth, lvl.image.width() as i32, x, y, orientation, &self.pattern);
                let (x0, y0) = lvl.to_base(x as f64 + c.dx, y as f64 + c.dy);
                found.push((
                    Keypoint {
                        x: x0,
                        y: y0,
                        response,
                        scale: lvl.scale,
                        orientation,
                        level: level as u8,
                    },
                    desc,
                ));
            }
        }
        found.sort_by(|a, b| {
            b.0.response
                .total_cmp(&a.0.response)
                .then(a.0.level.cmp(&b.0.level))
                .then(a.0.y.total_cmp(&b.0.y))
                .then(a.0.x.total_cmp(&b.0.x))
        });
        found.truncate(max_features);
        Ok(found.into_iter().unzip())
    }
}

fn sampling_pattern() -> Vec<[(f64, f64); 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
    let sigma = (2 * PATCH_RADIUS + 1) as f64 / 5.0;
    let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut point = move || loop {
        // Box–Muller
        let u1 = unit().max(f64::MIN_POSITIVE);
        let u2 = unit();
        let r = sqrt(-2.0 * ln(u1)) * sigma;
        let p = (r * cos(2.0 * PI * u2), r * sin(2.0 * PI * u2));
        if p.0 * p.0 + p.1 * p.1 <= SAMPLE_RADIUS * SAMPLE_RADIUS {
            return p;
        }
    };
    (0..DESCRIPTOR_BITS).map(|_| [point(), point()]).collect()
}

struct Level {
    image: GrayImage,
    // affine map level → base: x0 = ax * x + bx
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    scale: f64,
}

impl Level {
    fn to_base(&self, x: f64, y: f64) -> (f64, f64) {
        (self.ax * x + self.bx, self.ay * y + self.by)
    }
}

fn build_pyramid(gray: &GrayImage, params: &DetectorParams, min_side: u32) -> Vec<Level> {
    let mut levels = vec![Level {
        image: gray.clone(),
        ax: 1.0,
        bx: 0.0,
        ay: 1.0,
        by: 0.0,
        scale: 1.0,
    }];
    let factor = params.scale_factor.max(1.01);
    for _ in 1..params.n_levels.max(1) {
        let prev = levels.last().expect("pyramid has a base level");
        let w = round(prev.image.width() as f64 / factor) as u32;
        let h = round(prev.image.height() as f64 / factor) as u32;
        if w < min_side || h < min_side {
            break;
        }
        let rx = prev.image.width() as f64 / w as f64;
        let ry = prev.image.height() as f64 / h as f64;
        let image = downsample(&prev.image, w, h, rx, ry);
        // x_prev = rx * (x + 0.5) - 0.5
        let level = Level {
            image,
            ax: prev.ax * rx,
            bx: prev.ax * (0.5 * rx - 0.5) + prev.bx,
            ay: prev.ay * ry,
            by: prev.ay * (0.5 * ry - 0.5) + prev.by,
            scale: prev.scale * factor,
        };
        levels.push(level);
    }
    levels
}

fn downsample(src: &GrayImage, w: u32, h: u32, rx: f64, ry: f64) -> GrayImage {
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        let sy = ((y as f64 + 0.5) * ry - 0.5).clamp(0.0, src.height() as f64 - 1.0);
        for x in 0..w {
            let sx = ((x as f64 + 0.5) * rx - 0.5).clamp(0.0, src.width() as f64 - 1.0);
            let v = src.sample_bilinear(sx, sy).map_or(0.0, |p| p[0]);
            out.put_pixel(x, y, [round(v).clamp(0.0, 255.0) as u8]);
        }
    }
    out
}

/// Harris response per pixel; zero within `HARRIS_RADIUS + 1` of the border.
fn harris_response(img: &GrayImage, k: f64) -> Vec<f64> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let at = |x: i32, y: i32| img.get(x as u32, y as u32) as f64;
    let n = (w * h) as usize;
    let mut ixx = vec![0.0; n];
    let mut iyy = vec![0.0; n];
    let mut ixy = vec![0.0; n];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1))
                / 8.0;
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1))
                / 8.0;
            let i = (y * w + x) as usize;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let sxx = window_sum(&ixx, w, h, HARRIS_RADIUS);
    let syy = window_sum(&iyy, w, h, HARRIS_RADIUS);
    let sxy = window_sum(&ixy, w, h, HARRIS_RADIUS);
    let mut out = vec![0.0; n];
    let m = HARRIS_RADIUS + 1;
    for y in m..h - m {
        for x in m..w - m {
            let i = (y * w + x) as usize;
            let (a, b, c) = (sxx[i], syy[i], sxy[i]);
            out[i] = a * b - c * c - k * (a + b) * (a + b);
        }
    }
    out
}

// Separable weighted sum with a normalized Gaussian (σ = r / 2); entries
// within `r` of the border are left at zero.
fn window_sum(v: &[f64], w: i32, h: i32, r: i32) -> Vec<f64> {
    let sigma = r as f64 / 2.0;
    let raw: Vec<f64> = (-r..=r)
        .map(|d| exp(-((d * d) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let norm: f64 = raw.iter().sum();
    let kernel: Vec<f64> = raw.iter().map(|k| k / norm).collect();
    let mut rows = vec![0.0; v.len()];
    for y in 0..h {
        let base = (y * w) as usize;
        for x in r..w - r {
            rows[base + x as usize] = (x - r..=x + r)
                .zip(&kernel)
                .map(|(xx, k)| k * v[base + xx as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; v.len()];
    for y in r..h - r {
        for x in 0..w {
            out[(y * w + x) as usize] = (y - r..=y + r)
                .zip(&kernel)
                .map(|(yy, k)| k * rows[(yy * w + x) as usize])
                .sum();
        }
    }
    out
}

struct LevelCorner {
    x: i32,
    y: i32,
    /// Sub-pixel offset of the response peak, within ±0.5.
    dx: f64,
    dy: f64,
    response: f64,
}

/// Vertex of the parabola through three samples at -1, 0, 1.
fn parabola_peak(l: f64, c: f64, r: f64) -> f64 {
    let curv = l - 2.0 * c + r;
    if curv < 0.0 {
        (0.5 * (l - r) / curv).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Every pixel whose Harris response exceeds the threshold and is the
/// maximum of its (2·NMS_RADIUS+1)² neighbourhood. On equal responses the
/// first pixel in raster order wins.
fn level_corners(img: &GrayImage, harris: &[f64], params: &DetectorParams) -> Vec<LevelCorner> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let idx = |x: i32, y: i32| (y * w + x) as usize;
    let mut out = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let me = idx(x, y);
            let r = harris[me];
            if r <= params.harris_threshold {
                continue;
            }
            let dominated = (y - NMS_RADIUS..=y + NMS_RADIUS).any(|yy| {
                (x - NMS_RADIUS..=x + NMS_RADIUS).any(|xx| {
                    let j = idx(xx, yy);
                    harris[j] > r || (harris[j] == r && j < me)
                })
            });
            if !dominated {
                let (dx, dy) = (
                    parabola_peak(harris[me - 1], r, harris[me + 1]),
                    parabola_peak(harris[me - w as usize], r, harris[me + w as usize]),
                );
                out.push(LevelCorner { x, y, dx, dy, response: r });
            }
        }
    }
    out
}

fn intensity_centroid_angle(img: &GrayImage, x: i32, y: i32) -> f64 {
    let (mut m10, mut m01) = (0i64, 0i64);
    let r2 = PATCH_RADIUS * PATCH_RADIUS;
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let v = img.get((x + dx) as u32, (y + dy) as u32) as i64;
            m10 += dx as i64 * v;
            m01 += dy as i64 * v;
        }
    }
    let a = atan2(m01 as f64, m10 as f64);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

// Sum of the (2r+1)² box around each pixel; zero near the border.
fn box_sums(img: &GrayImage, r: i32) -> Vec<u32> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let mut rows = vec![0u32; (w * h) as usize];
    for y in 0..h {
        for x in r..w - r {
            rows[(y * w + x) as usize] = (x - r..=x + r).map(|xx| img.get(xx as u32, y as u32) as u32).sum();
        }
    }
    let mut out = vec![0u32; (w * h) as usize];
    for y in r..h - r {
        for x in 0..w {
            out[(y * w + x) as usize] = (y - r..=y + r).map(|yy| rows[(yy * w + x) as usize]).sum();
        }
    }
    out
}

fn describe(
    smooth: &[u32],
    w: i32,
    x: i32,
    y: i32,
    angle: f64,
    pattern: &[[(f64, f64); 2]],
) -> Descriptor {
    let (s, c) = (sin(angle), cos(angle));
    let rot = |p: (f64, f64)| -> usize {
        let rx = round(c * p.0 - s * p.1) as i32;
        let ry = round(s * p.0 + c * p.1) as i32;
        ((y + ry) * w + (x + rx)) as usize
    };
    let mut bytes = vec![0u8; DESCRIPTOR_BITS / 8];
    for (i, pair) in pattern.iter().enumerate() {
        if smooth[rot(pair[0])] < smooth[rot(pair[1])] {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    Descriptor(bytes)
}
