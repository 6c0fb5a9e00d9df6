use alloc::vec;
use alloc::vec::Vec;

use super::{GeometryError, Homography, Point, PointPair};
use crate::linalg::{jacobi_svd, Mat3};
use crate::math::{hypot, sqrt};

/// Similarity `T` moving the centroid to the origin with mean distance √2.
pub fn hartley_normalization(points: impl Iterator<Item = Point> + Clone) -> Mat3 {
    let (mut n, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for p in points.clone() {
        n += 1.0;
        cx += p.0;
        cy += p.1;
    }
    if n == 0.0 {
        return Mat3::IDENTITY;
    }
    cx /= n;
    cy /= n;
    let mean_dist = points.map(|p| hypot(p.0 - cx, p.1 - cy)).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 {
        sqrt(2.0) / mean_dist
    } else {
        1.0
    };
    Mat3([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn apply(t: &Mat3, p: Point) -> Point {
    // T is affine, no division needed
    (
        t[(0, 0)] * p.0 + t[(0, 2)],
        t[(1, 1)] * p.1 + t[(1, 2)],
    )
}

/// Least-squares homography from ≥ 4 correspondences: Hartley-normalized
/// 2n×9 DLT system, solved by the right singular vector of the smallest
/// singular value.
pub fn dlt_homography(pairs: &[PointPair]) -> Result<Homography, GeometryError> {
    let n = pairs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientPairs(n));
    }
    if pairs
        .iter()
        .any(|p| !(p.src.0.is_finite() && p.src.1.is_finite() && p.dst.0.is_finite() && p.dst.1.is_finite()))
    {
        return Err(GeometryError::InvalidParameter("non-finite coordinate"));
    }
    let ts = hartley_normalization(pairs.iter().map(|p| p.src));
    let td = hartley_normalization(pairs.iter().map(|p| p.dst));

    let rows = (2 * n).max(9);
    let mut a = vec![0.0; rows * 9];
    for (k, pair) in pairs.iter().enumerate() {
        let (x, y) = apply(&ts, pair.src);
        let (u, v) = apply(&td, pair.dst);
        let r0 = &mut a[(2 * k) * 9..(2 * k + 1) * 9];
        r0.copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        let r1 = &mut a[(2 * k + 1) * 9..(2 * k + 2) * 9];
        r1.copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }

    let svd = jacobi_svd(&a, rows, 9);
    // A one-dimensional null space needs σ₈ clearly above zero.
    if !(svd.sigma[7] > 1e-10 * svd.sigma[0]) {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let h: Vec<f64> = svd.v[8].clone();
    let hn = Mat3::from_row_slice(&h);
    let td_inv = td.inverse().ok_or(GeometryError::DegenerateConfiguration)?;
    Homography::new(td_inv * hn * ts)
}
