//! Planar projective geometry: homography representation, projection,
//! estimation (DLT → RANSAC → Levenberg–Marquardt), intrinsics conjugation
//! and the 3×3 SVD used for scale analysis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Intrinsics;
use crate::linalg::{jacobi_svd, Mat3};
use crate::math::hypot;

mod dlt;
mod lm;
mod ransac;

pub use dlt::{dlt_homography, hartley_normalization};
pub use lm::{refine_lm, refine_lm_report, LmReport};
pub use ransac::{ransac_homography, RansacParams, RansacResult};
pub(crate) use ransac::uniform_below;

/// |w| below this makes a projection undefined.
pub const PROJECTION_EPS: f64 = 1e-12;
/// |m22| and |det| below this make a homography degenerate.
pub const DEGENERACY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("need at least 4 point pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("no RANSAC sample produced a model with at least 4 inliers")]
    NoModelFound,
    #[error("normal equations stayed singular through damping escalation")]
    SingularNormalEquations,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Point = (f64, f64);

/// Correspondence between a point in a non-base frame (`src`) and the base
/// frame (`dst`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub src: Point,
    pub dst: Point,
}

impl PointPair {
    pub const fn new(src: Point, dst: Point) -> Self {
        PointPair { src, dst }
    }
}

/// Invertible 3×3 projective transform, stored with `m[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography(Mat3);

impl Homography {
    pub const IDENTITY: Homography = Homography(Mat3::IDENTITY);

    /// Rescales so `m[2][2] = 1`; rejects matrices with a vanishing `m[2][2]`,
    /// a vanishing determinant, or non-finite entries.
    pub fn new(m: Mat3) -> Result<Self, GeometryError> {
        let s = m[(2, 2)];
        if !m.is_finite() || s.abs() < DEGENERACY_EPS {
            return Err(GeometryError::DegenerateConfiguration);
        }
        // division keeps re-normalization exact, so serialized values round-trip
        let mut n = Mat3(m.0.map(|r| r.map(|v| v / s)));
        n.0[2][2] = 1.0;
        let det = n.det();
        if !det.is_finite() || det.abs() <= DEGENERACY_EPS {
            return Err(GeometryError::DegenerateConfiguration);
        }
        Ok(Homography(n))
    }

    pub fn from_row_slice(v: &[f64]) -> Result<Self, GeometryError> {
        Homography::new(Mat3::from_row_slice(v))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography(Mat3([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn to_row_vec(&self) -> [f64; 9] {
        self.0.to_row_vec()
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        let inv = self.0.inverse().ok_or(GeometryError::DegenerateConfiguration)?;
        Homography::new(inv)
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &Homography) -> Result<Homography, GeometryError> {
        Homography::new(self.0 * first.0)
    }

    pub fn project(&self, p: Point) -> Result<Point, GeometryError> {
        project_point(&self.0, p)
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = GeometryError;

    fn try_from(v: [f64; 9]) -> Result<Self, Self::Error> {
        Homography::from_row_slice(&v)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> [f64; 9] {
        h.to_row_vec()
    }
}

/// `(u/w, v/w)` with `(u, v, w) = m · (x, y, 1)`.
pub fn project_point(m: &Mat3, p: Point) -> Result<Point, GeometryError> {
    let [u, v, w] = m.mul_vec([p.0, p.1, 1.0]);
    if !(w.abs() > PROJECTION_EPS) {
        return Err(GeometryError::PointAtInfinity);
    }
    let out = (u / w, v / w);
    if out.0.is_finite() && out.1.is_finite() {
        Ok(out)
    } else {
        Err(GeometryError::PointAtInfinity)
    }
}

/// Images of `(0,0)`, `(w,0)`, `(w,h)`, `(0,h)`: clockwise from top-left.
pub fn project_corners(h: &Homography, width: f64, height: f64) -> Result<[Point; 4], GeometryError> {
    Ok([
        h.project((0.0, 0.0))?,
        h.project((width, 0.0))?,
        h.project((width, height))?,
        h.project((0.0, height))?,
    ])
}

/// Forward transfer error `‖H·src − dst‖` in pixels.
pub fn reprojection_error(h: &Homography, pair: &PointPair) -> Result<f64, GeometryError> {
    let p = h.project(pair.src)?;
    Ok(hypot(p.0 - pair.dst.0, p.1 - pair.dst.1))
}

/// `K · H · K⁻¹`.
pub fn calibrate_homography(h: &Homography, k: &Intrinsics) -> Mat3 {
    k.matrix() * *h.matrix() * k.inverse_matrix()
}

/// `K⁻¹ · H · K`: a pixel homography expressed in normalized camera
/// coordinates.
pub fn normalize_homography(h: &Homography, k: &Intrinsics) -> Mat3 {
    k.inverse_matrix() * *h.matrix() * k.matrix()
}

/// Singular value decomposition `m = U · diag(sigma) · Vᵀ`, sigma descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3 {
    pub u: Mat3,
    pub sigma: [f64; 3],
    pub v: Mat3,
}

impl Svd3 {
    pub fn reconstruct(&self) -> Mat3 {
        let [a, b, c] = self.sigma;
        self.u * Mat3::diag(a, b, c) * self.v.transpose()
    }
}

pub fn svd3(m: &Mat3) -> Svd3 {
    let svd = jacobi_svd(&m.to_row_vec(), 3, 3);
    let mut u = Mat3::ZERO;
    let mut v = Mat3::ZERO;
    for c in 0..3 {
        for r in 0..3 {
            u[(r, c)] = svd.u[c][r];
            v[(r, c)] = svd.v[c][r];
        }
    }
    Svd3 {
        u,
        sigma: [svd.sigma[0], svd.sigma[1], svd.sigma[2]],
        v,
    }
}
