//! Generators and brute-force reference implementations shared by the
//! integration tests. Nothing here calls into the library code it checks,
//! except to build inputs.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use egomosaic_core::analytics::{ClassificationCounts, Metric, PoiKind};
use egomosaic_core::geometry::Homography;
use egomosaic_core::linalg::Mat3;
use egomosaic_core::{BBox, Detection, DetectionSource, FrameRef, Session};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(r: &mut impl RngCore) -> f64 {
    (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn uniform(r: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(r)
}

pub fn below(r: &mut impl RngCore, n: usize) -> usize {
    (unit(r) * n as f64) as usize % n.max(1)
}

pub fn gaussian(r: &mut impl RngCore) -> f64 {
    let u1 = unit(r).max(1e-300);
    let u2 = unit(r);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------------------
// Homographies

pub fn mat(h: &Homography) -> [[f64; 3]; 3] {
    h.matrix().0
}

pub fn apply(m: &[[f64; 3]; 3], p: (f64, f64)) -> (f64, f64) {
    let u = m[0][0] * p.0 + m[0][1] * p.1 + m[0][2];
    let v = m[1][0] * p.0 + m[1][1] * p.1 + m[1][2];
    let w = m[2][0] * p.0 + m[2][1] * p.1 + m[2][2];
    (u / w, v / w)
}

/// A mild projective transform of a `w × h` frame: rotation, scale,
/// translation and a small perspective term.
pub fn random_homography(r: &mut impl RngCore, w: f64, h: f64) -> Homography {
    let a = uniform(r, -0.3, 0.3);
    let s = uniform(r, 0.8, 1.25);
    let (c, sn) = (a.cos() * s, a.sin() * s);
    let tx = uniform(r, -0.3, 0.3) * w;
    let ty = uniform(r, -0.3, 0.3) * h;
    let p = uniform(r, -3e-4, 3e-4);
    let q = uniform(r, -3e-4, 3e-4);
    Homography::new(Mat3([[c, -sn, tx], [sn, c, ty], [p, q, 1.0]])).unwrap()
}

pub fn scaled(h: &Homography, s: f64) -> Homography {
    let m = h.matrix().0;
    Homography::new(Mat3([
        [m[0][0] * s, m[0][1] * s, m[0][2] * s],
        [m[1][0] * s, m[1][1] * s, m[1][2] * s],
        [m[2][0], m[2][1], m[2][2]],
    ]))
    .unwrap()
}

// ---------------------------------------------------------------------------
// Sessions

/// A random session: up to `max_frames` frames, up to `max_labels` labels,
/// integer-coordinate boxes so IoU can be checked by counting cells.
pub fn random_session(r: &mut impl RngCore, max_frames: usize, max_labels: usize) -> Session {
    let n = 1 + below(r, max_frames);
    let labels = 1 + below(r, max_labels);
    let mut t = 0.0;
    let frames: Vec<FrameRef> = (0..n as u32)
        .map(|i| {
            if i > 0 && below(r, 8) != 0 {
                t += [0.05, 0.1, 0.0625][below(r, 3)];
            }
            FrameRef {
                frame_id: i,
                timestamp: t,
                width: 64,
                height: 48,
                image_path: format!("frames/{i:04}.png"),
            }
        })
        .collect();
    let t_max = t;
    let preds = random_stream(r, DetectionSource::Prediction, &frames, labels, t_max);
    let truths = random_stream(r, DetectionSource::GroundTruth, &frames, labels, t_max);
    let extra: Option<BTreeSet<String>> =
        (below(r, 2) == 0).then(|| (0..max_labels + 2).map(|i| format!("label{i}")).collect());
    Session::assemble(frames, preds, truths, None, extra).unwrap()
}

fn random_stream(
    r: &mut impl RngCore,
    source: DetectionSource,
    frames: &[FrameRef],
    labels: usize,
    t_max: f64,
) -> Vec<Detection> {
    let n = frames.len();
    let count = below(r, 4 * n + 1);
    (0..count)
        .map(|_| {
            let x1 = below(r, 15) as f64;
            let y1 = below(r, 15) as f64;
            let bbox = BBox::new(x1, y1, x1 + 1.0 + below(r, 8) as f64, y1 + 1.0 + below(r, 8) as f64);
            let time = if below(r, 3) == 0 {
                frames[below(r, n)].timestamp
            } else {
                uniform(r, -0.05, t_max + 0.05)
            };
            let conf = match source {
                DetectionSource::Prediction => below(r, 101) as f64 / 100.0,
                DetectionSource::GroundTruth => 1.0,
            };
            Detection::new(time, format!("label{}", below(r, labels)), bbox, conf, source)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Oracles

/// Frame index closest in time by exhaustive scan; the earlier frame wins ties.
pub fn nearest_frame(frames: &[FrameRef], t: f64) -> usize {
    let mut best = 0;
    for (i, f) in frames.iter().enumerate() {
        if (f.timestamp - t).abs() < (frames[best].timestamp - t).abs() {
            best = i;
        }
    }
    best
}

/// IoU of integer-coordinate boxes by counting unit cells.
pub fn iou_by_cells(a: &BBox, b: &BBox) -> f64 {
    let cells = |bb: &BBox| -> BTreeSet<(i64, i64)> {
        let mut s = BTreeSet::new();
        for y in bb.y1 as i64..bb.y2 as i64 {
            for x in bb.x1 as i64..bb.x2 as i64 {
                s.insert((x, y));
            }
        }
        s
    };
    let (ca, cb) = (cells(a), cells(b));
    let inter = ca.intersection(&cb).count();
    let union = ca.union(&cb).count();
    inter as f64 / union as f64
}

fn frame_of(session: &Session, d: &Detection) -> u32 {
    session.frames[nearest_frame(&session.frames, d.timestamp)].frame_id
}

pub fn dets_in<'a>(session: &'a Session, stream: &'a [Detection], fid: u32) -> Vec<&'a Detection> {
    stream.iter().filter(|d| frame_of(session, d) == fid).collect()
}

/// Row labels: scan frames in order, predictions then truths.
pub fn first_appearance(session: &Session) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for f in &session.frames {
        for d in dets_in(session, &session.predictions, f.frame_id)
            .into_iter()
            .chain(dets_in(session, &session.ground_truth, f.frame_id))
        {
            if !out.contains(&d.label) {
                out.push(d.label.clone());
            }
        }
    }
    out
}

/// `(labels, frame_ids, values)` by scanning every detection for every cell.
pub fn summary_by_scan(session: &Session, metric: Metric) -> (Vec<String>, Vec<u32>, Vec<Vec<Option<f64>>>) {
    let labels = first_appearance(session);
    let ids: Vec<u32> = session.frames.iter().map(|f| f.frame_id).collect();
    let mut values = vec![vec![None; ids.len()]; labels.len()];
    for (r, label) in labels.iter().enumerate() {
        for (c, &fid) in ids.iter().enumerate() {
            let preds: Vec<&Detection> = dets_in(session, &session.predictions, fid)
                .into_iter()
                .filter(|d| &d.label == label)
                .collect();
            let truths: Vec<&Detection> = dets_in(session, &session.ground_truth, fid)
                .into_iter()
                .filter(|d| &d.label == label)
                .collect();
            let mut cell: Option<f64> = None;
            match metric {
                Metric::Confidence => {
                    for p in &preds {
                        cell = Some(cell.map_or(p.confidence, |v| v.max(p.confidence)));
                    }
                }
                Metric::IoU => {
                    for p in &preds {
                        for t in &truths {
                            let v = iou_by_cells(&p.bbox, &t.bbox);
                            cell = Some(cell.map_or(v, |w| w.max(v)));
                        }
                    }
                }
            }
            values[r][c] = cell;
        }
    }
    (labels, ids, values)
}

/// Greedy matching by repeatedly taking the best remaining pair.
pub fn classify_by_scan(
    frame_id: u32,
    preds: &[&Detection],
    truths: &[&Detection],
    thr: f64,
    vocab: &BTreeSet<String>,
) -> ClassificationCounts {
    let mut pred_free = vec![true; preds.len()];
    let mut truth_free = vec![true; truths.len()];
    let mut tp = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..preds.len() {
            for j in 0..truths.len() {
                if !pred_free[i] || !truth_free[j] || preds[i].label != truths[j].label {
                    continue;
                }
                let v = iou_by_cells(&preds[i].bbox, &truths[j].bbox);
                if v < thr {
                    continue;
                }
                // strictly better IoU wins; earlier (i, j) wins ties
                if best.is_none_or(|b| v > b.0) {
                    best = Some((v, i, j));
                }
            }
        }
        match best {
            Some((_, i, j)) => {
                pred_free[i] = false;
                truth_free[j] = false;
                tp += 1;
            }
            None => break,
        }
    }
    let mut tn = 0;
    for l in vocab {
        if !preds.iter().chain(truths).any(|d| &d.label == l) {
            tn += 1;
        }
    }
    ClassificationCounts {
        frame_id,
        tp,
        fp: preds.len() - tp,
        fn_: truths.len() - tp,
        tn,
    }
}

/// `(kind, frame_id, label, detail)` derived from each label's presence runs.
pub fn poi_by_runs(session: &Session, thr: usize) -> Vec<(PoiKind, u32, String, String)> {
    let thr = thr.max(1);
    let ids: Vec<u32> = session.frames.iter().map(|f| f.frame_id).collect();
    let labels: BTreeSet<String> = session.predictions.iter().map(|d| d.label.clone()).collect();
    let mut out = Vec::new();
    for label in &labels {
        let counts: Vec<usize> = ids
            .iter()
            .map(|&fid| {
                dets_in(session, &session.predictions, fid)
                    .iter()
                    .filter(|d| &d.label == label)
                    .count()
            })
            .collect();
        let Some(first) = counts.iter().position(|&c| c > 0) else {
            continue;
        };
        out.push((PoiKind::NewLabel, ids[first], label.clone(), String::new()));
        for (i, &c) in counts.iter().enumerate() {
            if c >= 2 {
                out.push((PoiKind::DuplicateLabel, ids[i], label.clone(), c.to_string()));
            }
        }
        // maximal absence runs after the first sighting
        let mut i = first;
        while i < counts.len() {
            if counts[i] > 0 {
                i += 1;
                continue;
            }
            let start = i;
            while i < counts.len() && counts[i] == 0 {
                i += 1;
            }
            if i - start >= thr {
                out.push((
                    PoiKind::MissingLabel,
                    ids[start + thr - 1],
                    label.clone(),
                    format!("absent for {thr} frames"),
                ));
            }
        }
    }
    let pos: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    out.sort_by(|a, b| pos[&a.1].cmp(&pos[&b.1]).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));
    out
}

// ---------------------------------------------------------------------------
// Geometry harnesses

use egomosaic_core::geometry::{ransac_homography, refine_lm_report, PointPair, RansacParams};
use egomosaic_core::homfilter::{filter_frames, FilterOptions, FrameHomography, RemovalReason, SignatureForm};
use egomosaic_core::ingest::default_intrinsics;
use egomosaic_core::FlipClass;
use nalgebra::{Matrix3, SMatrix, SVector};

pub fn na(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

pub struct RansacTrial {
    pub true_inliers_flagged: usize,
    pub outliers_rejected: usize,
    /// Largest reprojection error of the refined model over the true inliers.
    pub max_inlier_error: f64,
    pub lm_initial_cost: f64,
    pub lm_final_cost: f64,
}

/// 100 exact correspondences from a random homography plus 30 uniform
/// outliers, fitted with RANSAC at 3 px then refined.
pub fn ransac_trial(seed: u64) -> RansacTrial {
    let mut r = rng(seed.wrapping_mul(7919).wrapping_add(1));
    let (w, h) = (640.0, 480.0);
    let truth = random_homography(&mut r, w, h);
    let t = mat(&truth);
    let mut pairs = Vec::new();
    for _ in 0..100 {
        let src = (uniform(&mut r, 0.0, w), uniform(&mut r, 0.0, h));
        pairs.push(PointPair { src, dst: apply(&t, src) });
    }
    for _ in 0..30 {
        let src = (uniform(&mut r, 0.0, w), uniform(&mut r, 0.0, h));
        let dst = (uniform(&mut r, -0.5 * w, 1.5 * w), uniform(&mut r, -0.5 * h, 1.5 * h));
        pairs.push(PointPair { src, dst });
    }
    let params = RansacParams {
        seed,
        ..Default::default()
    };
    let fit = ransac_homography(&pairs, &params).expect("ransac");
    let inliers: Vec<PointPair> = fit.inliers(&pairs).copied().collect();
    let lm = refine_lm_report(&fit.homography, &inliers).expect("lm");
    let m = mat(&lm.homography);
    let max_inlier_error = pairs[..100]
        .iter()
        .map(|p| {
            let q = apply(&m, p.src);
            (q.0 - p.dst.0).hypot(q.1 - p.dst.1)
        })
        .fold(0.0, f64::max);
    RansacTrial {
        true_inliers_flagged: fit.inlier_mask[..100].iter().filter(|&&b| b).count(),
        outliers_rejected: fit.inlier_mask[100..].iter().filter(|&&b| !b).count(),
        max_inlier_error,
        lm_initial_cost: lm.initial_cost,
        lm_final_cost: lm.final_cost,
    }
}

/// A random matrix with entries in [-10, 10].
pub fn random_matrix(r: &mut impl RngCore) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v = uniform(r, -10.0, 10.0);
        }
    }
    Mat3(m)
}

pub fn random_intrinsics(r: &mut impl RngCore) -> egomosaic_core::Intrinsics {
    egomosaic_core::Intrinsics {
        fx: uniform(r, 100.0, 2000.0),
        fy: uniform(r, 100.0, 2000.0),
        cx: uniform(r, 0.0, 800.0),
        cy: uniform(r, 0.0, 600.0),
        skew: uniform(r, -2.0, 2.0),
    }
}

/// Singular values as square roots of the eigenvalues of `mᵀm`, descending.
pub fn singular_values_by_eigen(m: &Mat3) -> [f64; 3] {
    let a = na(&m.0);
    let e = (a.transpose() * a).symmetric_eigenvalues();
    let mut s = [e[0].max(0.0).sqrt(), e[1].max(0.0).sqrt(), e[2].max(0.0).sqrt()];
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Homography taking the four `src` points onto `dst`, by solving the 8×8
/// system with `h33 = 1`.
pub fn homography_from_corners(src: [(f64, f64); 4], dst: [(f64, f64); 4]) -> Homography {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let ((x, y), (u, v)) = (src[i], dst[i]);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b).expect("non-degenerate corners");
    Homography::new(Mat3([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])).unwrap()
}

pub const FLIP_W: f64 = 760.0;
pub const FLIP_H: f64 = 428.0;

/// 60 constructed homographies with their intended class: ten each of
/// vertical, horizontal and double mirrors, twists, identity-like
/// translations and rotations up to 20° about the centre.
pub fn flip_table(seed: u64) -> Vec<(String, Homography, FlipClass)> {
    let mut r = rng(seed);
    let (w, h) = (FLIP_W, FLIP_H);
    let mut out = Vec::new();
    let similarity = |r: &mut ChaCha8Rng| {
        let a = uniform(r, -10f64, 10.0).to_radians();
        let s = uniform(r, 0.6, 1.6);
        Matrix3::new(
            s * a.cos(),
            -s * a.sin(),
            uniform(r, -300.0, 300.0),
            s * a.sin(),
            s * a.cos(),
            uniform(r, -300.0, 300.0),
            0.0,
            0.0,
            1.0,
        )
    };
    let mirror_v = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, h, 0.0, 0.0, 1.0);
    let mirror_h = Matrix3::new(-1.0, 0.0, w, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    let to_h = |m: Matrix3<f64>| Homography::new(Mat3(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))).unwrap();
    for i in 0..10 {
        out.push((format!("vertical mirror {i}"), to_h(similarity(&mut r) * mirror_v), FlipClass::VerticalFlip));
        out.push((format!("horizontal mirror {i}"), to_h(similarity(&mut r) * mirror_h), FlipClass::HorizontalFlip));
        out.push((
            format!("double mirror {i}"),
            to_h(similarity(&mut r) * mirror_h * mirror_v),
            FlipClass::BothFlips,
        ));
        out.push((
            format!("translation {i}"),
            Homography::translation(uniform(&mut r, -500.0, 500.0), uniform(&mut r, -500.0, 500.0)),
            FlipClass::None,
        ));
        let a = uniform(&mut r, -20f64, 20.0).to_radians();
        let (c, s) = (a.cos(), a.sin());
        let (cx, cy) = (w / 2.0, h / 2.0);
        let rot = Matrix3::new(c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy, 0.0, 0.0, 1.0);
        out.push((format!("rotation {:.2} deg", a.to_degrees()), to_h(rot), FlipClass::None));
        // a quad that folds over itself: two corners swapped
        let jit = |r: &mut ChaCha8Rng, p: (f64, f64)| (p.0 + uniform(r, -40.0, 40.0), p.1 + uniform(r, -40.0, 40.0));
        let rect = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
        let folded = if i % 2 == 0 {
            [rect[0], rect[1], rect[3], rect[2]]
        } else {
            [rect[0], rect[2], rect[1], rect[3]]
        };
        let dst = folded.map(|p| jit(&mut r, p));
        out.push((format!("twist {i}"), homography_from_corners(rect, dst), FlipClass::Twisted));
    }
    out
}

/// Ten frames with mild motion (base first, identity), the frames at
/// `corrupt` scaled ×20.
pub fn stretch_scenario(seed: u64, corrupt: [usize; 2]) -> Vec<FrameHomography> {
    let mut r = rng(seed ^ 0xabcdef);
    (0..10u32)
        .map(|i| {
            let h = if i == 0 {
                Homography::IDENTITY
            } else {
                let a = uniform(&mut r, -8f64, 8.0).to_radians();
                let s = uniform(&mut r, 0.9, 1.1);
                let m = Mat3([
                    [s * a.cos(), -s * a.sin(), uniform(&mut r, -150.0, 150.0)],
                    [s * a.sin(), s * a.cos(), uniform(&mut r, -100.0, 100.0)],
                    [uniform(&mut r, -1e-5, 1e-5), uniform(&mut r, -1e-5, 1e-5), 1.0],
                ]);
                Homography::new(m).unwrap()
            };
            let h = if corrupt.contains(&(i as usize)) { scaled(&h, 20.0) } else { h };
            FrameHomography { frame_id: i, homography: h }
        })
        .collect()
}

/// Runs the stretch harness once; true when exactly the corrupted frames are
/// removed as stretch outliers and the base survives.
pub fn stretch_trial(seed: u64, form: SignatureForm) -> bool {
    let mut r = rng(seed);
    let a = 1 + below(&mut r, 9);
    let mut b = 1 + below(&mut r, 9);
    while b == a {
        b = 1 + below(&mut r, 9);
    }
    let frames = stretch_scenario(seed, [a, b]);
    let k = default_intrinsics(FLIP_W as u32, FLIP_H as u32).unwrap();
    let options = FilterOptions {
        signature: form,
        ..Default::default()
    };
    let report = filter_frames(&frames, &k, 0, (FLIP_W as u32, FLIP_H as u32), &options, seed).unwrap();
    let mut removed: Vec<(u32, RemovalReason)> = report.removed.iter().map(|x| (x.frame_id, x.reason)).collect();
    removed.sort();
    let mut want = vec![(a as u32, RemovalReason::StretchOutlier), (b as u32, RemovalReason::StretchOutlier)];
    want.sort();
    removed == want && report.kept.contains(&0)
}
