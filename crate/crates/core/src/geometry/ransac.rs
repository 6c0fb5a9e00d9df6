use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{dlt_homography, reprojection_error, GeometryError, Homography, Point, PointPair};
use crate::math::{ceil, hypot, ln};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    /// Inlier threshold on forward reprojection error, pixels.
    pub reproj_thresh: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            reproj_thresh: 3.0,
            confidence: 0.995,
            max_iters: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    /// Parallel to the input pairs.
    pub inlier_mask: Vec<bool>,
    pub iterations_run: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }

    pub fn inliers<'a>(&'a self, pairs: &'a [PointPair]) -> impl Iterator<Item = &'a PointPair> {
        pairs
            .iter()
            .zip(&self.inlier_mask)
            .filter_map(|(p, &keep)| keep.then_some(p))
    }
}

/// Uniform integer in `0..n` by rejection sampling.
pub(crate) fn uniform_below(rng: &mut impl RngCore, n: usize) -> usize {
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

fn sample_four(rng: &mut impl RngCore, n: usize) -> [usize; 4] {
    let mut idx = [usize::MAX; 4];
    let mut filled = 0;
    while filled < 4 {
        let c = uniform_below(rng, n);
        if !idx[..filled].contains(&c) {
            idx[filled] = c;
            filled += 1;
        }
    }
    idx
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let (ux, uy) = (b.0 - a.0, b.1 - a.1);
    let (vx, vy) = (c.0 - a.0, c.1 - a.1);
    let cross = (ux * vy - uy * vx).abs();
    // |sin θ| below 1e-6, or coincident points
    cross <= 1e-6 * hypot(ux, uy) * hypot(vx, vy) || cross == 0.0
}

/// True when no three of the four points are collinear.
pub(crate) fn non_collinear(pts: [Point; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES
        .iter()
        .all(|t| !collinear(pts[t[0]], pts[t[1]], pts[t[2]]))
}

fn score(h: &Homography, pairs: &[PointPair], thresh: f64, mask: &mut [bool]) -> usize {
    let mut count = 0;
    for (m, p) in mask.iter_mut().zip(pairs) {
        *m = matches!(reprojection_error(h, p), Ok(e) if e < thresh);
        count += *m as usize;
    }
    count
}

fn required_iterations(inlier_ratio: f64, confidence: f64, max_iters: usize) -> usize {
    let w4 = inlier_ratio * inlier_ratio * inlier_ratio * inlier_ratio;
    if w4 >= 1.0 {
        return 0;
    }
    if w4 <= 0.0 {
        return max_iters;
    }
    let n = ln(1.0 - confidence) / ln(1.0 - w4);
    if !n.is_finite() || n >= max_iters as f64 {
        max_iters
    } else {
        ceil(n).max(0.0) as usize
    }
}

/// Robust homography fit: 4-point minimal samples, inlier counting,
/// adaptive stopping, then a DLT re-fit on the consensus set.
pub fn ransac_homography(
    pairs: &[PointPair],
    params: &RansacParams,
) -> Result<RansacResult, GeometryError> {
    let n = pairs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientPairs(n));
    }
    if !(params.reproj_thresh > 0.0) {
        return Err(GeometryError::InvalidParameter("reproj_thresh must be positive"));
    }
    if !(params.confidence > 0.0 && params.confidence < 1.0) {
        return Err(GeometryError::InvalidParameter("confidence must lie in (0, 1)"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography, usize)> = None;
    let mut best_mask = vec![false; n];
    let mut mask = vec![false; n];
    let mut needed = params.max_iters;
    let mut iterations = 0;

    while iterations < needed.min(params.max_iters) {
        iterations += 1;
        let idx = sample_four(&mut rng, n);
        let sample = idx.map(|i| pairs[i]);
        if !non_collinear(sample.map(|p| p.src)) || !non_collinear(sample.map(|p| p.dst)) {
            continue;
        }
        let Ok(model) = dlt_homography(&sample) else {
            continue;
        };
        let count = score(&model, pairs, params.reproj_thresh, &mut mask);
        if count >= 4 && best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((model, count));
            best_mask.copy_from_slice(&mask);
            needed = required_iterations(count as f64 / n as f64, params.confidence, params.max_iters);
        }
    }

    let (model, count) = best.ok_or(GeometryError::NoModelFound)?;
    let consensus: Vec<PointPair> = pairs
        .iter()
        .zip(&best_mask)
        .filter_map(|(p, &k)| k.then_some(*p))
        .collect();
    if let Ok(refit) = dlt_homography(&consensus) {
        let refit_count = score(&refit, pairs, params.reproj_thresh, &mut mask);
        if refit_count >= count {
            return Ok(RansacResult {
                homography: refit,
                inlier_mask: mask,
                iterations_run: iterations,
            });
        }
    }
    Ok(RansacResult {
        homography: model,
        inlier_mask: best_mask,
        iterations_run: iterations,
    })
}
