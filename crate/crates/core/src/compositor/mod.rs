//! Panorama construction and detection overlays.
//!
//! Every selected frame is matched against the base frame, its homography
//! onto the base plane is estimated and refined, the filters drop frames that
//! would distort the mosaic, and the survivors are warped onto a shared
//! canvas and composited in temporal order (later frames on top).
//!
//! The per-frame stages run through a [`ParallelMap`] so a std caller can
//! fan them out across threads while producing the same bytes as
//! [`Sequential`].

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    lowe_ratio_filter, match_descriptors, DetectorKind, DetectorRegistry, FeatureError, FeatureSet,
    DEFAULT_LOWE_RATIO, DEFAULT_MAX_FEATURES,
};
use crate::geometry::{
    project_corners, project_point, ransac_homography, refine_lm, GeometryError, Homography, Point,
    PointPair, RansacParams,
};
use crate::homfilter::{
    filter_frames, ElbowParams, FilterError, FilterOptions, FilterReport, FrameHomography,
    ReferencePoint, RemovalReason, SignatureForm,
};
use crate::ingest::{Detection, FrameRef, Session};
use crate::math::ceil;
use crate::raster::{RgbImage, RgbaImage};

mod overlay;
mod warp;

pub use overlay::{
    render_overlay, OverlayOutput, OverlaySpec, OverlayStyle, Palette, DEFAULT_PALETTE,
    HIGHLIGHT_COLOR,
};
pub use warp::{composite, warp_frame, Tile};

/// Canvas area limit, pixels.
pub const MAX_CANVAS_PIXELS: u64 = 64_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompositorError {
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("base frame {frame_id} cannot be stitched: {reason}")]
    BaseFrameUnstitchable { frame_id: u32, reason: String },
    #[error("every frame other than the base was excluded")]
    AllFramesExcluded,
    #[error("canvas {width}x{height} exceeds the {MAX_CANVAS_PIXELS}-pixel limit")]
    CanvasTooLarge { width: u64, height: u64 },
    #[error("detection belongs to frame {0}, which is not included in the panorama")]
    DetectionOnExcludedFrame(u32),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterToggles {
    pub stretch_on: bool,
    pub flip_on: bool,
}

impl Default for FilterToggles {
    fn default() -> Self {
        FilterToggles {
            stretch_on: true,
            flip_on: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanoramaParams {
    /// Inclusive frame-id range.
    pub frame_range: (u32, u32),
    /// Defaults to the median of the selected frames (lower median for an
    /// even count).
    pub base_frame_id: Option<u32>,
    pub detector_kind: DetectorKind,
    pub max_features: usize,
    pub lowe_ratio: f64,
    pub ransac_thresh: f64,
    /// Matches surviving RANSAC below this count exclude the frame.
    pub min_inliers: usize,
    /// Frame opacity in `(0, 1]`.
    pub alpha: f64,
    pub filters: FilterToggles,
    pub k_max: usize,
    pub reference: ReferencePoint,
    pub signature: SignatureForm,
    pub seed: u64,
    /// Take every n-th frame of the range.
    pub sample_stride: u32,
}

impl Default for PanoramaParams {
    fn default() -> Self {
        PanoramaParams {
            frame_range: (0, u32::MAX),
            base_frame_id: None,
            detector_kind: DetectorKind::Orb,
            max_features: DEFAULT_MAX_FEATURES,
            lowe_ratio: DEFAULT_LOWE_RATIO,
            ransac_thresh: 3.0,
            min_inliers: 10,
            alpha: 1.0,
            filters: FilterToggles::default(),
            k_max: ElbowParams::default().k_max,
            reference: ReferencePoint::Origin,
            signature: SignatureForm::default(),
            seed: 0,
            sample_stride: 1,
        }
    }
}

impl PanoramaParams {
    pub fn validate(&self) -> Result<(), CompositorError> {
        let bad = CompositorError::InvalidParams;
        if self.frame_range.0 > self.frame_range.1 {
            return Err(CompositorError::InvalidRange("start is after end".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(bad("alpha must lie in (0, 1]"));
        }
        if !(self.lowe_ratio > 0.0 && self.lowe_ratio < 1.0) {
            return Err(bad("lowe_ratio must lie in (0, 1)"));
        }
        if !(self.ransac_thresh > 0.0 && self.ransac_thresh.is_finite()) {
            return Err(bad("ransac_thresh must be positive"));
        }
        if self.sample_stride == 0 {
            return Err(bad("sample_stride must be at least 1"));
        }
        if self.k_max == 0 {
            return Err(bad("k_max must be at least 1"));
        }
        if self.max_features < 4 {
            return Err(bad("max_features must be at least 4"));
        }
        if self.min_inliers < 4 {
            return Err(bad("min_inliers must be at least 4"));
        }
        Ok(())
    }

    pub fn filter_options(&self) -> FilterOptions {
        FilterOptions {
            stretch_on: self.filters.stretch_on,
            flip_on: self.filters.flip_on,
            elbow: ElbowParams {
                k_max: self.k_max,
                ..ElbowParams::default()
            },
            reference: self.reference,
            signature: self.signature,
        }
    }
}

/// Frames chosen for a build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub frame_ids: Vec<u32>,
    pub base_frame_id: u32,
}

/// Applies range, stride and base-frame rules to the session's frames.
pub fn select_frames(session: &Session, params: &PanoramaParams) -> Result<Selection, CompositorError> {
    params.validate()?;
    let (lo, hi) = params.frame_range;
    let frame_ids: Vec<u32> = session
        .frames
        .iter()
        .map(|f| f.frame_id)
        .filter(|id| (lo..=hi).contains(id))
        .step_by(params.sample_stride as usize)
        .collect();
    if frame_ids.is_empty() {
        return Err(CompositorError::InvalidRange(alloc::format!(
            "no frames in {lo}..={hi}"
        )));
    }
    let base_frame_id = match params.base_frame_id {
        Some(b) if frame_ids.contains(&b) => b,
        Some(b) => {
            return Err(CompositorError::InvalidRange(alloc::format!(
                "base frame {b} is not among the selected frames"
            )))
        }
        None => frame_ids[(frame_ids.len() - 1) / 2],
    };
    Ok(Selection {
        frame_ids,
        base_frame_id,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    StretchOutlier,
    VerticalFlip,
    HorizontalFlip,
    BothFlips,
    Twisted,
    NoModelFound,
    TooFewMatches,
    /// Projected corners reach the line at infinity (only reachable with
    /// flip filtering off).
    PointAtInfinity,
    FrameUnreadable,
}

impl From<RemovalReason> for ExclusionReason {
    fn from(r: RemovalReason) -> Self {
        match r {
            RemovalReason::StretchOutlier => ExclusionReason::StretchOutlier,
            RemovalReason::VerticalFlip => ExclusionReason::VerticalFlip,
            RemovalReason::HorizontalFlip => ExclusionReason::HorizontalFlip,
            RemovalReason::BothFlips => ExclusionReason::BothFlips,
            RemovalReason::Twisted => ExclusionReason::Twisted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum PlacementStatus {
    Included,
    Excluded(ExclusionReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub frame_id: u32,
    /// Frame plane to base plane; absent when no model was found.
    pub homography: Option<Homography>,
    /// Projected frame corners in canvas pixels, clockwise from top-left;
    /// present for included frames.
    pub quad: Option<[Point; 4]>,
    #[serde(flatten)]
    pub status: PlacementStatus,
}

impl Placement {
    pub fn is_included(&self) -> bool {
        self.status == PlacementStatus::Included
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasLayout {
    pub width: u32,
    pub height: u32,
    /// Added to base-plane coordinates to get canvas coordinates.
    pub offset: (f64, f64),
}

/// Canvas covering every projected corner: `offset = −min`,
/// `size = ceil(max − min)` per axis.
pub fn plan_layout(homographies: &[Homography], frame_dims: (u32, u32)) -> Result<CanvasLayout, CompositorError> {
    if homographies.is_empty() {
        return Err(CompositorError::AllFramesExcluded);
    }
    let (w, h) = (frame_dims.0 as f64, frame_dims.1 as f64);
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for hm in homographies {
        for (x, y) in project_corners(hm, w, h)? {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
    }
    let cw = ceil(max_x - min_x).max(1.0);
    let ch = ceil(max_y - min_y).max(1.0);
    if !(cw.is_finite() && ch.is_finite()) || cw * ch > MAX_CANVAS_PIXELS as f64 {
        return Err(CompositorError::CanvasTooLarge {
            width: if cw.is_finite() { cw as u64 } else { u64::MAX },
            height: if ch.is_finite() { ch as u64 } else { u64::MAX },
        });
    }
    Ok(CanvasLayout {
        width: cw as u32,
        height: ch as u32,
        offset: (-min_x, -min_y),
    })
}

/// Quad of a frame on the canvas.
pub fn placement_quad(h: &Homography, frame_dims: (u32, u32), offset: (f64, f64)) -> Result<[Point; 4], GeometryError> {
    let mut q = project_corners(h, frame_dims.0 as f64, frame_dims.1 as f64)?;
    for p in q.iter_mut() {
        p.0 += offset.0;
        p.1 += offset.1;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panorama {
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub offset: (f64, f64),
    pub base_frame_id: u32,
    /// One per selected frame, in temporal order.
    pub placements: Vec<Placement>,
    pub filter_report: FilterReport,
    #[serde(skip)]
    pub image: RgbaImage,
}

impl Panorama {
    pub fn placement(&self, frame_id: u32) -> Option<&Placement> {
        self.placements.iter().find(|p| p.frame_id == frame_id)
    }

    pub fn included(&self) -> impl Iterator<Item = &Placement> {
        self.placements.iter().filter(|p| p.is_included())
    }

    pub fn layout(&self) -> CanvasLayout {
        CanvasLayout {
            width: self.canvas_width,
            height: self.canvas_height,
            offset: self.offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedDetection {
    pub detection: Detection,
    pub frame_id: u32,
    /// Projected bbox corners in canvas pixels, clockwise from top-left.
    pub quad: [Point; 4],
    /// Mean of the quad vertices.
    pub centroid: Point,
}

/// Projects a detection's box through its frame's placement.
pub fn transform_detection(
    d: &Detection,
    placement: &Placement,
    offset: (f64, f64),
) -> Result<TransformedDetection, CompositorError> {
    let h = match (&placement.status, &placement.homography) {
        (PlacementStatus::Included, Some(h)) => h,
        _ => return Err(CompositorError::DetectionOnExcludedFrame(placement.frame_id)),
    };
    if d.matched_frame_id != Some(placement.frame_id) {
        return Err(CompositorError::DetectionOnExcludedFrame(
            d.matched_frame_id.unwrap_or(placement.frame_id),
        ));
    }
    let mut quad = [(0.0, 0.0); 4];
    for (q, c) in quad.iter_mut().zip(d.bbox.corners()) {
        let (x, y) = project_point(h.matrix(), c)?;
        *q = (x + offset.0, y + offset.1);
    }
    let centroid = (
        quad.iter().map(|p| p.0).sum::<f64>() / 4.0,
        quad.iter().map(|p| p.1).sum::<f64>() / 4.0,
    );
    Ok(TransformedDetection {
        detection: d.clone(),
        frame_id: placement.frame_id,
        quad,
        centroid,
    })
}

/// Predictions of every included frame, transformed onto the canvas, in
/// stream (time) order. Detections that fail to project are skipped.
pub fn transform_predictions(session: &Session, panorama: &Panorama) -> Vec<TransformedDetection> {
    session
        .predictions
        .iter()
        .filter_map(|d| {
            let p = panorama.placement(d.matched_frame_id?)?;
            transform_detection(d, p, panorama.offset).ok()
        })
        .collect()
}

/// Source of frame rasters for a build.
pub trait FrameSource: Sync {
    fn load(&self, frame: &FrameRef) -> Result<RgbImage, String>;
}

impl<F> FrameSource for F
where
    F: Fn(&FrameRef) -> Result<RgbImage, String> + Sync,
{
    fn load(&self, frame: &FrameRef) -> Result<RgbImage, String> {
        self(frame)
    }
}

/// Order-preserving map used for the per-frame stages.
pub trait ParallelMap {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send;
}

pub struct Sequential;

impl ParallelMap for Sequential {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        items.into_iter().map(f).collect()
    }
}

fn frame_seed(seed: u64, frame_id: u32) -> u64 {
    seed ^ (frame_id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Homography mapping `frame` onto `base` from their feature sets.
pub fn estimate_homography(
    base: &FeatureSet,
    frame: &FeatureSet,
    params: &PanoramaParams,
) -> Result<Homography, ExclusionReason> {
    if frame.len() < 4 || base.len() < 4 {
        return Err(ExclusionReason::TooFewMatches);
    }
    let pairs = match_descriptors(frame, base).map_err(|_| ExclusionReason::TooFewMatches)?;
    let good = lowe_ratio_filter(&pairs, params.lowe_ratio);
    if good.len() < params.min_inliers {
        return Err(ExclusionReason::TooFewMatches);
    }
    let points: Vec<PointPair> = good
        .iter()
        .map(|m| {
            let a = &frame.keypoints[m.query_idx];
            let b = &base.keypoints[m.train_idx];
            PointPair::new((a.x, a.y), (b.x, b.y))
        })
        .collect();
    let ransac = ransac_homography(
        &points,
        &RansacParams {
            reproj_thresh: params.ransac_thresh,
            seed: frame_seed(params.seed, frame.frame_id),
            ..RansacParams::default()
        },
    )
    .map_err(|_| ExclusionReason::NoModelFound)?;
    if ransac.inlier_count() < params.min_inliers {
        return Err(ExclusionReason::TooFewMatches);
    }
    let inliers: Vec<PointPair> = ransac.inliers(&points).copied().collect();
    Ok(refine_lm(&ransac.homography, &inliers).unwrap_or(ransac.homography))
}

/// Homography results keyed by frame, before filtering and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub frame_id: u32,
    pub result: Result<Homography, ExclusionReason>,
}

/// Filtering and layout, without pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoramaPlan {
    pub layout: CanvasLayout,
    pub base_frame_id: u32,
    pub placements: Vec<Placement>,
    pub filter_report: FilterReport,
}

/// Runs the filters over the estimated homographies and lays out the canvas.
pub fn plan_panorama(
    session: &Session,
    params: &PanoramaParams,
    selection: &Selection,
    estimates: &[FrameEstimate],
) -> Result<PanoramaPlan, CompositorError> {
    let frame_dims = session.frame_dims();
    let candidates: Vec<FrameHomography> = estimates
        .iter()
        .filter_map(|e| {
            e.result.as_ref().ok().map(|h| FrameHomography {
                frame_id: e.frame_id,
                homography: *h,
            })
        })
        .collect();
    let report = filter_frames(
        &candidates,
        &session.intrinsics,
        selection.base_frame_id,
        frame_dims,
        &params.filter_options(),
        params.seed,
    )?;

    let mut status: Vec<(u32, Option<Homography>, PlacementStatus)> = estimates
        .iter()
        .map(|e| match &e.result {
            Ok(h) => {
                let s = match report.reason_for(e.frame_id) {
                    Some(r) => PlacementStatus::Excluded(r.into()),
                    None => PlacementStatus::Included,
                };
                (e.frame_id, Some(*h), s)
            }
            Err(r) => (e.frame_id, None, PlacementStatus::Excluded(*r)),
        })
        .collect();
    let (w, h) = (frame_dims.0 as f64, frame_dims.1 as f64);
    for s in status.iter_mut() {
        if s.2 == PlacementStatus::Included {
            let hm = s.1.expect("included frames carry a homography");
            if project_corners(&hm, w, h).is_err() {
                s.2 = PlacementStatus::Excluded(ExclusionReason::PointAtInfinity);
            }
        }
    }
    if !status
        .iter()
        .any(|s| s.0 != selection.base_frame_id && s.2 == PlacementStatus::Included)
        && status.len() > 1
    {
        return Err(CompositorError::AllFramesExcluded);
    }
    let included: Vec<Homography> = status
        .iter()
        .filter(|s| s.2 == PlacementStatus::Included)
        .filter_map(|s| s.1)
        .collect();
    let layout = plan_layout(&included, frame_dims)?;
    let placements = status
        .into_iter()
        .map(|(frame_id, homography, status)| {
            let quad = match (status, homography) {
                (PlacementStatus::Included, Some(hm)) => placement_quad(&hm, frame_dims, layout.offset).ok(),
                _ => None,
            };
            Placement {
                frame_id,
                homography,
                quad,
                status,
            }
        })
        .collect();
    Ok(PanoramaPlan {
        layout,
        base_frame_id: selection.base_frame_id,
        placements,
        filter_report: report,
    })
}

/// Full pipeline with the built-in detectors, one frame at a time.
pub fn build_panorama(
    session: &Session,
    params: &PanoramaParams,
    source: &dyn FrameSource,
) -> Result<Panorama, CompositorError> {
    build_panorama_with(session, params, source, &DetectorRegistry::default(), &Sequential)
}

/// Full pipeline: select, detect, estimate, filter, lay out, warp, composite.
pub fn build_panorama_with<P: ParallelMap>(
    session: &Session,
    params: &PanoramaParams,
    source: &dyn FrameSource,
    registry: &DetectorRegistry,
    exec: &P,
) -> Result<Panorama, CompositorError> {
    let selection = select_frames(session, params)?;
    if registry.get(params.detector_kind).is_none() {
        return Err(FeatureError::UnsupportedDetector(params.detector_kind).into());
    }
    let base_ref = session
        .frame(selection.base_frame_id)
        .expect("selected frames exist in the session");
    let unstitchable = |reason: String| CompositorError::BaseFrameUnstitchable {
        frame_id: selection.base_frame_id,
        reason,
    };
    let base_img = source.load(base_ref).map_err(unstitchable)?;
    if base_img.dimensions() != (base_ref.width, base_ref.height) {
        return Err(unstitchable("image size differs from the session record".into()));
    }
    let base_feats = registry
        .detect_and_describe(base_ref.frame_id, &base_img, params.detector_kind, params.max_features)
        .map_err(|e| unstitchable(alloc::format!("{e}")))?;

    let others: Vec<&FrameRef> = selection
        .frame_ids
        .iter()
        .filter(|&&id| id != selection.base_frame_id)
        .map(|&id| session.frame(id).expect("selected frames exist in the session"))
        .collect();
    let outcomes = exec.map(others, |f| {
        let img = match source.load(f) {
            Ok(img) if img.dimensions() == (f.width, f.height) => img,
            _ => return (f.frame_id, None, Err(ExclusionReason::FrameUnreadable)),
        };
        let result = registry
            .detect_and_describe(f.frame_id, &img, params.detector_kind, params.max_features)
            .map_err(|_| ExclusionReason::TooFewMatches)
            .and_then(|feats| estimate_homography(&base_feats, &feats, params));
        (f.frame_id, Some(img), result)
    });

    let mut images: Vec<(u32, RgbImage)> = Vec::with_capacity(outcomes.len() + 1);
    let mut estimates = Vec::with_capacity(outcomes.len() + 1);
    let mut outcomes = outcomes.into_iter();
    for &id in &selection.frame_ids {
        if id == selection.base_frame_id {
            estimates.push(FrameEstimate {
                frame_id: id,
                result: Ok(Homography::IDENTITY),
            });
            continue;
        }
        let (fid, img, result) = outcomes.next().expect("one outcome per non-base frame");
        debug_assert_eq!(fid, id);
        if let (Ok(_), Some(img)) = (&result, img) {
            images.push((fid, img));
        }
        estimates.push(FrameEstimate { frame_id: fid, result });
    }
    images.push((selection.base_frame_id, base_img));

    let plan = plan_panorama(session, params, &selection, &estimates)?;
    let layout = plan.layout;
    let jobs: Vec<(u32, Homography, RgbImage)> = plan
        .placements
        .iter()
        .filter(|p| p.is_included())
        .map(|p| {
            let pos = images.iter().position(|(id, _)| *id == p.frame_id).expect("image kept for included frame");
            let (_, img) = images.swap_remove(pos);
            (p.frame_id, p.homography.expect("included"), img)
        })
        .collect();
    drop(images);
    let tiles = exec.map(jobs, |(_, h, img)| warp_frame(&img, &h, &layout, params.alpha));
    let image = composite(&tiles, layout.width, layout.height);
    Ok(Panorama {
        canvas_width: layout.width,
        canvas_height: layout.height,
        offset: layout.offset,
        base_frame_id: plan.base_frame_id,
        placements: plan.placements,
        filter_report: plan.filter_report,
        image,
    })
}
