//! Panoramic mosaics for egocentric video, built for debugging object
//! detection models.
//!
//! The crate is `no_std` + `alloc` so the numerical pipeline can be embedded
//! anywhere; file formats, image codecs, the HTTP service and the CLI live in
//! the companion `egomosaic` crate.
//!
//! Pipeline overview:
//!
//! 1. [`ingest`]: session types, nearest-frame matching of detections.
//! 2. [`features`]: corner detection, binary descriptors, 2-NN matching and
//!    the ratio test.
//! 3. [`geometry`]: DLT, RANSAC, Levenberg–Marquardt refinement, 3×3 SVD.
//! 4. [`homfilter`]: rejection of stretched frames (singular-value
//!    clustering) and flipped/twisted frames (corner-order tests).
//! 5. [`compositor`]: layout, warping, compositing and detection overlays.
//! 6. [`analytics`]: timeline matrices, TP/FP/FN/TN counts, arrow chains,
//!    distance series and slider events.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analytics;
pub mod compositor;
pub mod features;
pub mod geometry;
pub mod homfilter;
pub mod ingest;
pub mod linalg;
pub mod raster;
pub mod synth;

mod math;

pub use analytics::{
    ArrowChain, ClassificationCounts, DistanceSeries, DistanceStep, Metric, PoiEvent, PoiKind,
    TimelineMatrix,
};
pub use compositor::{
    OverlaySpec, OverlayStyle, Panorama, PanoramaParams, Placement, PlacementStatus,
    TransformedDetection,
};
pub use features::{DetectorKind, FeatureSet, Keypoint, Match};
pub use geometry::{Homography, PointPair, RansacResult};
pub use homfilter::{FilterReport, FlipClass, RemovalReason};
pub use ingest::{BBox, Detection, DetectionSource, FrameRef, Intrinsics, Session};
pub use raster::{GrayImage, RgbImage, RgbaImage};
