//! Keypoints, binary descriptors and ratio-tested matching.
//!
//! Detectors are selected by [`DetectorKind`] through a [`DetectorRegistry`].
//! The built-in [`OrientedCornerDetector`] (multi-scale Harris
//! corners, intensity-centroid orientation, steered 256-bit binary
//! descriptor) registers under [`DetectorKind::Orb`]; the other kinds are
//! accepted names that fail with [`FeatureError::UnsupportedDetector`] unless
//! a plug-in is registered for them.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{GrayImage, RgbImage};

mod orb;

pub use orb::{DetectorParams, OrientedCornerDetector, DESCRIPTOR_BITS, PATCH_RADIUS};

pub const DEFAULT_MAX_FEATURES: usize = 1500;
pub const DEFAULT_LOWE_RATIO: f64 = 0.75;
/// Hamming distance under which two 256-bit descriptors are considered the
/// same physical point.
pub const MATCH_DISTANCE_THRESHOLD: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("detector {0} is not registered")]
    UnsupportedDetector(DetectorKind),
    #[error("image {width}x{height} is smaller than the {min}x{min} descriptor support")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error("max_features must be at least 4, got {0}")]
    InvalidMaxFeatures(usize),
    #[error("descriptor lengths differ: {query} vs {train} bytes")]
    DescriptorLengthMismatch { query: usize, train: usize },
    #[error("train set needs at least 2 descriptors, got {0}")]
    TrainSetTooSmall(usize),
    #[error("unknown detector name {0:?}")]
    UnknownDetectorName(alloc::string::String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Brisk,
    Orb,
    Kaze,
    Akaze,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Brisk,
        DetectorKind::Orb,
        DetectorKind::Kaze,
        DetectorKind::Akaze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Brisk => "brisk",
            DetectorKind::Orb => "orb",
            DetectorKind::Kaze => "kaze",
            DetectorKind::Akaze => "akaze",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FeatureError::UnknownDetectorName(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    /// Pyramid scale factor relative to full resolution (≥ 1).
    pub scale: f64,
    /// Radians in `[0, 2π)`.
    pub orientation: f64,
    pub level: u8,
}

/// Packed binary descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Descriptor(pub Vec<u8>);

impl Descriptor {
    pub fn len_bytes(&self) -> usize {
        self.0.len()
    }

    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub frame_id: u32,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    pub detector_kind: DetectorKind,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// A feature detector/descriptor pair usable by the stitching pipeline.
pub trait FeatureDetector: Send + Sync {
    fn kind(&self) -> DetectorKind;

    /// Keypoints sorted by descending response, with parallel descriptors.
    fn detect(
        &self,
        gray: &GrayImage,
        max_features: usize,
    ) -> Result<(Vec<Keypoint>, Vec<Descriptor>), FeatureError>;
}

pub struct DetectorRegistry {
    detectors: Vec<Box<dyn FeatureDetector>>,
}

impl DetectorRegistry {
    pub fn empty() -> Self {
        DetectorRegistry {
            detectors: Vec::new(),
        }
    }

    /// Registry holding the built-in detector configured with `params`.
    pub fn with_builtin(params: DetectorParams) -> Self {
        let mut r = DetectorRegistry::empty();
        r.register(Box::new(OrientedCornerDetector::new(params)));
        r
    }

    /// Adds a detector, replacing any existing one of the same kind.
    pub fn register(&mut self, detector: Box<dyn FeatureDetector>) {
        let kind = detector.kind();
        self.detectors.retain(|d| d.kind() != kind);
        self.detectors.push(detector);
    }

    pub fn get(&self, kind: DetectorKind) -> Option<&dyn FeatureDetector> {
        self.detectors.iter().find(|d| d.kind() == kind).map(|d| &**d)
    }

    pub fn supported(&self) -> Vec<DetectorKind> {
        let mut v: Vec<_> = self.detectors.iter().map(|d| d.kind()).collect();
        v.sort();
        v
    }

    pub fn detect_and_describe(
        &self,
        frame_id: u32,
        image: &RgbImage,
        kind: DetectorKind,
        max_features: usize,
    ) -> Result<FeatureSet, FeatureError> {
        self.detect_gray(frame_id, &image.to_gray(), kind, max_features)
    }

    pub fn detect_gray(
        &self,
        frame_id: u32,
        gray: &GrayImage,
        kind: DetectorKind,
        max_features: usize,
    ) -> Result<FeatureSet, FeatureError> {
        if max_features < 4 {
            return Err(FeatureError::InvalidMaxFeatures(max_features));
        }
        let det = self.get(kind).ok_or(FeatureError::UnsupportedDetector(kind))?;
        let (keypoints, descriptors) = det.detect(gray, max_features)?;
        Ok(FeatureSet {
            frame_id,
            keypoints,
            descriptors,
            detector_kind: kind,
        })
    }
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        DetectorRegistry::with_builtin(DetectorParams::default())
    }
}

/// Detects and describes features with the built-in registry.
pub fn detect_and_describe(
    image: &RgbImage,
    kind: DetectorKind,
    params: &DetectorParams,
    max_features: usize,
) -> Result<FeatureSet, FeatureError> {
    DetectorRegistry::with_builtin(*params).detect_and_describe(0, image, kind, max_features)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub query_idx: usize,
    pub train_idx: usize,
    pub distance: f64,
}

/// Exhaustive 2-nearest-neighbour search by Hamming distance. Ties resolve
/// to the lower train index.
pub fn match_descriptors(
    query: &FeatureSet,
    train: &FeatureSet,
) -> Result<Vec<(Match, Match)>, FeatureError> {
    if train.descriptors.len() < 2 {
        return Err(FeatureError::TrainSetTooSmall(train.descriptors.len()));
    }
    let train_len = train.descriptors[0].len_bytes();
    if let Some(bad) = train.descriptors.iter().find(|d| d.len_bytes() != train_len) {
        return Err(FeatureError::DescriptorLengthMismatch {
            query: train_len,
            train: bad.len_bytes(),
        });
    }
    if let Some(q) = query.descriptors.iter().find(|d| d.len_bytes() != train_len) {
        return Err(FeatureError::DescriptorLengthMismatch {
            query: q.len_bytes(),
            train: train_len,
        });
    }

    let mut out = Vec::with_capacity(query.descriptors.len());
    for (qi, q) in query.descriptors.iter().enumerate() {
        let (mut b_idx, mut b_d) = (usize::MAX, u32::MAX);
        let (mut s_idx, mut s_d) = (usize::MAX, u32::MAX);
        for (ti, t) in train.descriptors.iter().enumerate() {
            let d = q.hamming(t);
            if d < b_d {
                s_idx = b_idx;
                s_d = b_d;
                b_idx = ti;
                b_d = d;
            } else if d < s_d {
                s_idx = ti;
                s_d = d;
            }
        }
        out.push((
            Match {
                query_idx: qi,
                train_idx: b_idx,
                distance: b_d as f64,
            },
            Match {
                query_idx: qi,
                train_idx: s_idx,
                distance: s_d as f64,
            },
        ));
    }
    Ok(out)
}

/// Keeps `best` iff `best.distance < ratio · second.distance`, preserving
/// input order. Panics unless `0 < ratio < 1`.
pub fn lowe_ratio_filter(pairs: &[(Match, Match)], ratio: f64) -> Vec<Match> {
    assert!(ratio > 0.0 && ratio < 1.0, "ratio must lie in (0, 1)");
    pairs
        .iter()
        .filter(|(best, second)| best.distance < ratio * second.distance)
        .map(|(best, _)| *best)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(descs: &[[u8; 4]]) -> FeatureSet {
        FeatureSet {
            frame_id: 0,
            keypoints: descs
                .iter()
                .map(|_| Keypoint {
                    x: 0.0,
                    y: 0.0,
                    response: 0.0,
                    scale: 1.0,
                    orientation: 0.0,
                    level: 0,
                })
                .collect(),
            descriptors: descs.iter().map(|d| Descriptor(d.to_vec())).collect(),
            detector_kind: DetectorKind::Orb,
        }
    }

    fn m(best: f64, second: f64) -> (Match, Match) {
        (
            Match {
                query_idx: 0,
                train_idx: 0,
                distance: best,
            },
            Match {
                query_idx: 0,
                train_idx: 1,
                distance: second,
            },
        )
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(lowe_ratio_filter(&[m(10.0, 30.0)], 0.75).len(), 1);
        for r in [0.1, 0.5, 0.99, 0.999_999] {
            assert!(lowe_ratio_filter(&[m(12.0, 12.0)], r).is_empty());
        }
    }

    #[test]
    fn self_match_is_identity() {
        let s = set(&[[0, 0, 0, 0], [255, 0, 0, 0], [0, 255, 15, 0], [1, 2, 3, 4]]);
        let pairs = match_descriptors(&s, &s).unwrap();
        for (i, (best, second)) in pairs.iter().enumerate() {
            assert_eq!(best.train_idx, i);
            assert_eq!(best.distance, 0.0);
            assert!(second.distance >= best.distance);
        }
    }

    #[test]
    fn match_errors() {
        let one = set(&[[0; 4]]);
        assert_eq!(match_descriptors(&one, &one), Err(FeatureError::TrainSetTooSmall(1)));
        let mut q = set(&[[0; 4]]);
        q.descriptors[0] = Descriptor(vec![0; 8]);
        let t = set(&[[0; 4], [1; 4]]);
        assert!(matches!(
            match_descriptors(&q, &t),
            Err(FeatureError::DescriptorLengthMismatch { .. })
        ));
    }

    #[test]
    fn registry_reports_unsupported() {
        let reg = DetectorRegistry::default();
        assert_eq!(reg.supported(), vec![DetectorKind::Orb]);
        let img = RgbImage::new(64, 64);
        for kind in [DetectorKind::Brisk, DetectorKind::Kaze, DetectorKind::Akaze] {
            assert_eq!(
                reg.detect_and_describe(0, &img, kind, 100),
                Err(FeatureError::UnsupportedDetector(kind))
            );
        }
        assert_eq!(
            reg.detect_and_describe(0, &img, DetectorKind::Orb, 3),
            Err(FeatureError::InvalidMaxFeatures(3))
        );
    }

    #[test]
    fn detector_names_parse() {
        assert_eq!("ORB".parse::<DetectorKind>().unwrap(), DetectorKind::Orb);
        assert_eq!("akaze".parse::<DetectorKind>().unwrap(), DetectorKind::Akaze);
        assert!("sift".parse::<DetectorKind>().is_err());
    }
}
