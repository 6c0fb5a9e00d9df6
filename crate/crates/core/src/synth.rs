//! Seeded synthetic data: textured scenes, crops with known homographies,
//! and complete sessions with detection streams. Used by tests, the
//! acceptance suite and the bundled fixture.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::geometry::{project_corners, project_point, Homography};
use crate::ingest::{BBox, Detection, DetectionSource, FrameRef, Session};
use crate::linalg::Mat3;
use crate::math::{cos, round, sin};
use crate::raster::RgbImage;

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn below(&mut self, n: u32) -> u32 {
        (self.unit() * n as f64) as u32 % n.max(1)
    }
}

/// Gradient background covered with random rectangles, discs and
/// triangles; rich in distinct corners.
pub fn textured_scene(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut rng = Rng::new(seed);
    let mut img = RgbImage::new(width, height);
    let (w, h) = (width as f64, height as f64);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64 / w, y as f64 / h);
            img.put_pixel(
                x,
                y,
                [
                    (60.0 + 80.0 * fx) as u8,
                    (70.0 + 60.0 * fy) as u8,
                    (90.0 + 40.0 * (1.0 - fx) * fy) as u8,
                ],
            );
        }
    }
    let shapes = (width as usize * height as usize) / 900;
    for _ in 0..shapes {
        let color = [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8];
        let cx = rng.range(0.0, w);
        let cy = rng.range(0.0, h);
        let size = rng.range(4.0, 28.0);
        match rng.below(3) {
            0 => {
                let aspect = rng.range(0.4, 2.5);
                let (hw, hh) = (size, size * aspect);
                fill(&mut img, cx - hw, cy - hh, cx + hw, cy + hh, color, |x, y| {
                    (x - cx).abs() <= hw && (y - cy).abs() <= hh
                });
            }
            1 => {
                fill(&mut img, cx - size, cy - size, cx + size, cy + size, color, |x, y| {
                    (x - cx) * (x - cx) + (y - cy) * (y - cy) <= size * size
                });
            }
            _ => {
                let a = rng.range(0.0, 2.0 * PI);
                let p: Vec<(f64, f64)> = (0..3)
                    .map(|k| {
                        let t = a + k as f64 * 2.0 * PI / 3.0 + rng.range(-0.4, 0.4);
                        (cx + size * cos(t), cy + size * sin(t))
                    })
                    .collect();
                fill(&mut img, cx - size, cy - size, cx + size, cy + size, color, |x, y| {
                    let s = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                    let (d0, d1, d2) = (s(p[0], p[1]), s(p[1], p[2]), s(p[2], p[0]));
                    (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
                });
            }
        }
    }
    img
}

fn fill(
    img: &mut RgbImage,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    color: [u8; 3],
    inside: impl Fn(f64, f64) -> bool,
) {
    let xa = x0.max(0.0) as u32;
    let ya = y0.max(0.0) as u32;
    let xb = (x1.max(0.0) as u32).min(img.width().saturating_sub(1));
    let yb = (y1.max(0.0) as u32).min(img.height().saturating_sub(1));
    for y in ya..=yb {
        for x in xa..=xb {
            if inside(x as f64, y as f64) {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// Rigid placement of a crop: its centre in scene pixels and its rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropPose {
    pub center: (f64, f64),
    /// Radians, counter-clockwise in image axes.
    pub angle: f64,
}

/// Homography mapping crop pixels to scene pixels.
pub fn crop_to_scene(pose: CropPose, width: u32, height: u32) -> Homography {
    let (c, s) = (cos(pose.angle), sin(pose.angle));
    let (hx, hy) = (width as f64 / 2.0, height as f64 / 2.0);
    // x_scene = R (u - half) + centre
    let tx = pose.center.0 - (c * hx - s * hy);
    let ty = pose.center.1 - (s * hx + c * hy);
    Homography::new(Mat3([[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]])).expect("rotation is invertible")
}

/// Samples `scene` through `to_scene`; out-of-scene pixels are black.
pub fn render_crop(scene: &RgbImage, to_scene: &Homography, width: u32, height: u32) -> RgbImage {
    let mut out = RgbImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            if let Ok((sx, sy)) = project_point(to_scene.matrix(), (x as f64, y as f64)) {
                if let Some(p) = scene.sample_bilinear(sx, sy) {
                    out.put_pixel(x, y, [round(p[0]) as u8, round(p[1]) as u8, round(p[2]) as u8]);
                }
            }
        }
    }
    out
}

/// Fraction of a `width × height` frame, mapped by `h`, that lands inside
/// another frame of the same size (grid estimate).
pub fn overlap_fraction(h: &Homography, width: u32, height: u32) -> f64 {
    const N: usize = 40;
    let mut inside = 0;
    for i in 0..N {
        for j in 0..N {
            let p = (
                (i as f64 + 0.5) / N as f64 * width as f64,
                (j as f64 + 0.5) / N as f64 * height as f64,
            );
            if let Ok((x, y)) = h.project(p) {
                if (0.0..=width as f64).contains(&x) && (0.0..=height as f64).contains(&y) {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / (N * N) as f64
}

#[derive(Debug, Clone)]
pub struct CropSet {
    pub scene: RgbImage,
    pub frames: Vec<RgbImage>,
    pub poses: Vec<CropPose>,
    /// Index of the base crop (the median).
    pub base_index: usize,
    /// Ground-truth homography of every crop onto the base crop.
    pub to_base: Vec<Homography>,
}

/// `n` crops of one seeded scene. Every crop is rotated by at most
/// `max_angle_deg`, lies inside the scene and overlaps the base crop by at
/// least `min_overlap`.
pub fn crop_set(
    seed: u64,
    scene_size: (u32, u32),
    crop_size: (u32, u32),
    n: usize,
    max_angle_deg: f64,
    min_overlap: f64,
) -> CropSet {
    assert!(n >= 1);
    let scene = textured_scene(scene_size.0, scene_size.1, seed);
    let mut rng = Rng::new(seed ^ 0xC0FF_EE00);
    let (sw, sh) = (scene_size.0 as f64, scene_size.1 as f64);
    let (cw, ch) = crop_size;
    let base_index = (n - 1) / 2;
    let base_pose = CropPose {
        center: (sw / 2.0, sh / 2.0),
        angle: 0.0,
    };
    let base_h = crop_to_scene(base_pose, cw, ch);
    let base_inv = base_h.inverse().expect("rigid");
    let max_angle = max_angle_deg.to_radians();
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        if i == base_index {
            poses.push(base_pose);
            continue;
        }
        let pose = loop {
            let pose = CropPose {
                center: (
                    base_pose.center.0 + rng.range(-0.45, 0.45) * cw as f64,
                    base_pose.center.1 + rng.range(-0.45, 0.45) * ch as f64,
                ),
                angle: rng.range(-max_angle, max_angle),
            };
            let h = crop_to_scene(pose, cw, ch);
            let corners = project_corners(&h, cw as f64, ch as f64).expect("affine");
            let in_scene = corners
                .iter()
                .all(|c| c.0 >= 1.0 && c.1 >= 1.0 && c.0 <= sw - 2.0 && c.1 <= sh - 2.0);
            let to_base = base_inv.compose(&h).expect("rigid");
            if in_scene && overlap_fraction(&to_base, cw, ch) >= min_overlap {
                break pose;
            }
        };
        poses.push(pose);
    }
    let frames = poses
        .iter()
        .map(|&p| render_crop(&scene, &crop_to_scene(p, cw, ch), cw, ch))
        .collect();
    let to_base = poses
        .iter()
        .map(|&p| base_inv.compose(&crop_to_scene(p, cw, ch)).expect("rigid"))
        .collect();
    CropSet {
        scene,
        frames,
        poses,
        base_index,
        to_base,
    }
}

/// A synthetic recording: a camera panning over a textured scene with
/// labelled objects, prediction and ground-truth streams.
#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub session: Session,
    pub images: Vec<RgbImage>,
    /// Frame pixels to scene pixels.
    pub frame_to_scene: Vec<Homography>,
}

struct SceneObject {
    label: &'static str,
    center: (f64, f64),
    velocity: (f64, f64),
    half: (f64, f64),
}

/// Builds a session of `n` frames sampled at 15 fps.
///
/// Predictions jitter the true boxes, drop some detections (so labels go
/// missing for a while) and add duplicates and false positives; ground
/// truth is the exact projected box of every visible object.
pub fn synthetic_session(seed: u64, n: usize, frame_size: (u32, u32)) -> SyntheticSession {
    let (fw, fh) = frame_size;
    let scene_w = fw * 2 + fw / 2;
    let scene_h = fh * 2;
    let scene = textured_scene(scene_w, scene_h, seed);
    let mut rng = Rng::new(seed ^ 0x5E55_1017);
    let objects = [
        SceneObject { label: "cup", center: (0.35, 0.45), velocity: (0.0, 0.0), half: (14.0, 18.0) },
        SceneObject { label: "laptop", center: (0.55, 0.55), velocity: (0.0, 0.0), half: (40.0, 26.0) },
        SceneObject { label: "knife", center: (0.45, 0.35), velocity: (1.5, 0.6), half: (16.0, 6.0) },
        SceneObject { label: "hand", center: (0.5, 0.65), velocity: (-1.2, -0.8), half: (20.0, 20.0) },
        SceneObject { label: "phone", center: (0.7, 0.4), velocity: (0.0, 0.0), half: (10.0, 16.0) },
    ];
    let (sw, sh) = (scene_w as f64, scene_h as f64);

    let mut frames = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n);
    let mut frame_to_scene = Vec::with_capacity(n);
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    for i in 0..n {
        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
        let pose = CropPose {
            center: (
                sw * (0.38 + 0.24 * t) + rng.range(-2.0, 2.0),
                sh * (0.5 + 0.06 * sin(2.0 * PI * t)) + rng.range(-2.0, 2.0),
            ),
            angle: (4.0 * sin(PI * t)).to_radians(),
        };
        let h = crop_to_scene(pose, fw, fh);
        let inv = h.inverse().expect("rigid");
        images.push(render_crop(&scene, &h, fw, fh));
        frame_to_scene.push(h);
        let timestamp = i as f64 / 15.0;
        frames.push(FrameRef {
            frame_id: i as u32,
            timestamp,
            width: fw,
            height: fh,
            image_path: format!("frames/{i:04}.png"),
        });

        for (k, o) in objects.iter().enumerate() {
            let c = (
                o.center.0 * sw + o.velocity.0 * i as f64,
                o.center.1 * sh + o.velocity.1 * i as f64,
            );
            let scene_box = BBox::new(c.0 - o.half.0, c.1 - o.half.1, c.0 + o.half.0, c.1 + o.half.1);
            let Some(b) = project_box(&inv, &scene_box, fw, fh) else {
                continue;
            };
            truths.push(Detection::new(timestamp, o.label, b, 1.0, DetectionSource::GroundTruth));
            // the phone drops out of the prediction stream mid-session
            let dropped = (k == 4 && (n / 3..n / 3 + 18).contains(&i)) || rng.unit() < 0.08;
            if dropped {
                continue;
            }
            let jitter = |rng: &mut Rng, b: &BBox, s: f64| {
                BBox::new(
                    b.x1 + rng.range(-s, s),
                    b.y1 + rng.range(-s, s),
                    b.x2 + rng.range(-s, s),
                    b.y2 + rng.range(-s, s),
                )
            };
            let jb = jitter(&mut rng, &b, 2.5);
            if jb.is_valid() {
                let conf = round(rng.range(0.55, 0.98) * 1000.0) / 1000.0;
                predictions.push(Detection::new(timestamp, o.label, jb, conf, DetectionSource::Prediction));
            }
            if k == 0 && i % 7 == 3 {
                let db = jitter(&mut rng, &b, 6.0);
                if db.is_valid() {
                    let conf = round(rng.range(0.3, 0.6) * 1000.0) / 1000.0;
                    predictions.push(Detection::new(timestamp, o.label, db, conf, DetectionSource::Prediction));
                }
            }
        }
        if i % 11 == 5 {
            let x = rng.range(10.0, fw as f64 - 40.0);
            let y = rng.range(10.0, fh as f64 - 40.0);
            let b = BBox::new(x, y, x + 24.0, y + 20.0);
            let conf = round(rng.range(0.2, 0.5) * 1000.0) / 1000.0;
            predictions.push(Detection::new(timestamp, "scissors", b, conf, DetectionSource::Prediction));
        }
    }
    let vocab = objects
        .iter()
        .map(|o| String::from(o.label))
        .chain([String::from("scissors"), String::from("bowl")])
        .collect();
    let session = Session::assemble(frames, predictions, truths, None, Some(vocab))
        .expect("generated session is valid");
    SyntheticSession {
        session,
        images,
        frame_to_scene,
    }
}

/// Axis-aligned box of a scene box seen in a frame, clipped to the frame;
/// `None` when less than a quarter of it is visible.
fn project_box(scene_to_frame: &Homography, b: &BBox, fw: u32, fh: u32) -> Option<BBox> {
    let pts: Vec<(f64, f64)> = b
        .corners()
        .iter()
        .map(|&c| project_point(scene_to_frame.matrix(), c).ok())
        .collect::<Option<_>>()?;
    let x1 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let y1 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let x2 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y2 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let full = (x2 - x1) * (y2 - y1);
    let c = BBox::new(x1.max(0.0), y1.max(0.0), x2.min(fw as f64), y2.min(fh as f64));
    let q = |v: f64| round(v * 10.0) / 10.0;
    let c = BBox::new(q(c.x1), q(c.y1), q(c.x2), q(c.y2));
    (c.is_valid() && c.area() >= 0.25 * full).then_some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crops_follow_their_pose() {
        let set = crop_set(3, (512, 512), (200, 150), 7, 10.0, 0.4);
        assert_eq!(set.frames.len(), 7);
        assert_eq!(set.to_base[set.base_index], Homography::IDENTITY);
        for (i, pose) in set.poses.iter().enumerate() {
            assert!(pose.angle.abs() <= 10f64.to_radians());
            assert!(overlap_fraction(&set.to_base[i], 200, 150) >= 0.4);
            // a crop pixel equals the scene pixel it maps to (up to rounding)
            let h = crop_to_scene(*pose, 200, 150);
            let (sx, sy) = h.project((100.0, 75.0)).unwrap();
            let want = set.scene.sample_bilinear(sx, sy).unwrap();
            let got = set.frames[i].pixel(100, 75);
            for c in 0..3 {
                assert!((got[c] as f64 - want[c]).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn session_is_deterministic_and_valid() {
        let a = synthetic_session(1, 30, (200, 150));
        let b = synthetic_session(1, 30, (200, 150));
        assert_eq!(a.session, b.session);
        assert_eq!(a.images, b.images);
        assert_eq!(a.session.frames.len(), 30);
        assert!(!a.session.predictions.is_empty());
        assert!(a.session.vocabulary.contains("bowl"));
    }
}
