//! Rejection of frames whose homographies distort the mosaic.
//!
//! Two tests run per frame:
//!
//! * **Flip / twist**: project the frame corners and compare their order.
//!   A head-mounted camera never legitimately mirrors the scene, so any
//!   reversal of corner order marks a bad alignment.
//! * **Stretch**: conjugate the homography by the intrinsics, take its two
//!   largest singular values as a scale signature, cluster the signatures
//!   with k-means (k picked by the elbow rule) and keep only the cluster
//!   closest to a reference point. [`SignatureForm`] selects `K·H·K⁻¹` or
//!   `K⁻¹·H·K`.
//!
//! Flip filtering runs first; mirrored frames produce meaningless scale
//! signatures.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    calibrate_homography, normalize_homography, project_corners, svd3, GeometryError, Homography,
};
use crate::ingest::Intrinsics;
use crate::math::hypot;

mod kmeans;

pub use kmeans::{kmeans_elbow, kmeans_fixed_k, Clustering, ElbowParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("base frame {0} is not among the inputs")]
    BaseFrameMissing(u32),
}

/// First two singular values of the calibrated homography.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSignature {
    pub frame_id: u32,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl ScaleSignature {
    pub fn point(&self) -> (f64, f64) {
        (self.sigma1, self.sigma2)
    }
}

/// How the homography is conjugated by the intrinsics before the SVD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureForm {
    /// `K·H·K⁻¹`. For pixel-space homographies this multiplies translations
    /// by the focal length, so ordinary camera motion reads as stretch.
    Conjugate,
    /// `K⁻¹·H·K`: the homography in normalized camera coordinates, where
    /// singular values track scale rather than pixel translation.
    #[default]
    Normalized,
}

/// Signature from `K·H·K⁻¹`.
pub fn scale_signature(frame_id: u32, h: &Homography, k: &Intrinsics) -> ScaleSignature {
    scale_signature_with(frame_id, h, k, SignatureForm::Conjugate)
}

pub fn scale_signature_with(
    frame_id: u32,
    h: &Homography,
    k: &Intrinsics,
    form: SignatureForm,
) -> ScaleSignature {
    let m = match form {
        SignatureForm::Conjugate => calibrate_homography(h, k),
        SignatureForm::Normalized => normalize_homography(h, k),
    };
    let svd = svd3(&m);
    ScaleSignature {
        frame_id,
        sigma1: svd.sigma[0],
        sigma2: svd.sigma[1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipClass {
    None,
    VerticalFlip,
    HorizontalFlip,
    BothFlips,
    Twisted,
}

/// Classifies the corner ordering of a frame mapped through `h`.
///
/// With projected corners `(x1,y1)…(x4,y4)` clockwise from top-left, the
/// tests are `y3 < y2`, `y4 < y1`, `x2 < x1`, `x3 < x4`. A pair that is only
/// half satisfied means the quad folds over itself (twisted); that verdict
/// takes precedence over the flip classes.
pub fn detect_flip(h: &Homography, width: f64, height: f64) -> Result<FlipClass, GeometryError> {
    let [(x1, y1), (x2, y2), (x3, y3), (x4, y4)] = project_corners(h, width, height)?;
    let vertical = [y3 < y2, y4 < y1];
    let horizontal = [x2 < x1, x3 < x4];
    let half = |pair: [bool; 2]| pair[0] != pair[1];
    let full = |pair: [bool; 2]| pair[0] && pair[1];
    Ok(if half(vertical) || half(horizontal) {
        FlipClass::Twisted
    } else {
        match (full(vertical), full(horizontal)) {
            (true, true) => FlipClass::BothFlips,
            (true, false) => FlipClass::VerticalFlip,
            (false, true) => FlipClass::HorizontalFlip,
            (false, false) => FlipClass::None,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    StretchOutlier,
    VerticalFlip,
    HorizontalFlip,
    BothFlips,
    Twisted,
}

impl RemovalReason {
    fn from_flip(c: FlipClass) -> Option<Self> {
        match c {
            FlipClass::None => None,
            FlipClass::VerticalFlip => Some(RemovalReason::VerticalFlip),
            FlipClass::HorizontalFlip => Some(RemovalReason::HorizontalFlip),
            FlipClass::BothFlips => Some(RemovalReason::BothFlips),
            FlipClass::Twisted => Some(RemovalReason::Twisted),
        }
    }
}

/// Point the cluster centroids are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePoint {
    /// `(0, 0)`.
    #[default]
    Origin,
    /// `(1, 1)`, the singular values of the identity homography.
    IdentityScale,
}

impl ReferencePoint {
    pub fn coords(self) -> (f64, f64) {
        match self {
            ReferencePoint::Origin => (0.0, 0.0),
            ReferencePoint::IdentityScale => (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub stretch_on: bool,
    pub flip_on: bool,
    pub elbow: ElbowParams,
    pub reference: ReferencePoint,
    pub signature: SignatureForm,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            stretch_on: true,
            flip_on: true,
            elbow: ElbowParams::default(),
            reference: ReferencePoint::Origin,
            signature: SignatureForm::Normalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub frame_id: u32,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    Flip,
    Stretch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchOutcome {
    pub kept: Vec<u32>,
    pub removed: Vec<Removal>,
    pub clustering: Clustering,
    pub signatures: Vec<ScaleSignature>,
    /// Cluster index that was kept.
    pub retained_cluster: usize,
    /// The cluster nearest the reference did not hold the base frame, so the
    /// base frame's cluster was kept instead.
    pub base_guard_applied: bool,
}

/// Keeps the signature cluster nearest the reference point.
pub fn filter_stretched(
    signatures: &[ScaleSignature],
    base_frame_id: u32,
    elbow: &ElbowParams,
    reference: ReferencePoint,
    seed: u64,
) -> Result<StretchOutcome, FilterError> {
    let base_idx = signatures
        .iter()
        .position(|s| s.frame_id == base_frame_id)
        .ok_or(FilterError::BaseFrameMissing(base_frame_id))?;
    let points: Vec<(f64, f64)> = signatures.iter().map(ScaleSignature::point).collect();
    let clustering = kmeans_elbow(&points, elbow, seed);

    let (rx, ry) = reference.coords();
    let closest = clustering
        .centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, hypot(c.0 - rx, c.1 - ry)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let base_cluster = clustering.assignment[base_idx];
    let (retained, guard) = if closest == base_cluster {
        (closest, false)
    } else {
        (base_cluster, true)
    };

    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (s, &c) in signatures.iter().zip(&clustering.assignment) {
        if c == retained {
            kept.push(s.frame_id);
        } else {
            removed.push(Removal {
                frame_id: s.frame_id,
                reason: RemovalReason::StretchOutlier,
            });
        }
    }
    Ok(StretchOutcome {
        kept,
        removed,
        clustering,
        signatures: signatures.to_vec(),
        retained_cluster: retained,
        base_guard_applied: guard,
    })
}

/// A frame and its homography onto the base plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHomography {
    pub frame_id: u32,
    pub homography: Homography,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<u32>,
    pub removed: Vec<Removal>,
    pub stages: Vec<FilterStage>,
    pub flips: Vec<(u32, FlipClass)>,
    pub stretch: Option<StretchOutcome>,
}

impl FilterReport {
    pub fn clustering(&self) -> Option<&Clustering> {
        self.stretch.as_ref().map(|s| &s.clustering)
    }

    pub fn reason_for(&self, frame_id: u32) -> Option<RemovalReason> {
        self.removed.iter().find(|r| r.frame_id == frame_id).map(|r| r.reason)
    }
}

/// Runs flip filtering, then stretch clustering over the survivors. Every
/// input frame ends up in exactly one of `kept` / `removed`; the base frame
/// is always kept.
pub fn filter_frames(
    frames: &[FrameHomography],
    k: &Intrinsics,
    base_frame_id: u32,
    frame_size: (u32, u32),
    options: &FilterOptions,
    seed: u64,
) -> Result<FilterReport, FilterError> {
    if !frames.iter().any(|f| f.frame_id == base_frame_id) {
        return Err(FilterError::BaseFrameMissing(base_frame_id));
    }
    let (w, h) = (frame_size.0 as f64, frame_size.1 as f64);
    let mut removed = Vec::new();
    let mut stages = Vec::new();
    let mut flips = Vec::new();
    let mut survivors: Vec<FrameHomography> = Vec::with_capacity(frames.len());

    if options.flip_on {
        stages.push(FilterStage::Flip);
        for f in frames {
            let class = detect_flip(&f.homography, w, h).unwrap_or(FlipClass::Twisted);
            flips.push((f.frame_id, class));
            match RemovalReason::from_flip(class) {
                Some(reason) if f.frame_id != base_frame_id => removed.push(Removal {
                    frame_id: f.frame_id,
                    reason,
                }),
                _ => survivors.push(*f),
            }
        }
    } else {
        survivors.extend_from_slice(frames);
    }

    let mut stretch = None;
    if options.stretch_on {
        stages.push(FilterStage::Stretch);
        let signatures: Vec<ScaleSignature> = survivors
            .iter()
            .map(|f| scale_signature_with(f.frame_id, &f.homography, k, options.signature))
            .collect();
        let outcome =
            filter_stretched(&signatures, base_frame_id, &options.elbow, options.reference, seed)?;
        let dropped: BTreeSet<u32> = outcome.removed.iter().map(|r| r.frame_id).collect();
        survivors.retain(|f| !dropped.contains(&f.frame_id));
        removed.extend_from_slice(&outcome.removed);
        stretch = Some(outcome);
    }

    Ok(FilterReport {
        kept: survivors.iter().map(|f| f.frame_id).collect(),
        removed,
        stages,
        flips,
        stretch,
    })
}
