//! Session model: frames, detection streams, intrinsics, and nearest-frame
//! matching of detections.
//!
//! Reading sessions from disk lives in the std companion crate; this module
//! owns validation and the pure transformations applied after parsing.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("frame list is empty")]
    EmptyFrameList,
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("frame {frame_id} is {width}x{height}, session frames are {expected_width}x{expected_height}")]
    InconsistentFrameDimensions {
        frame_id: u32,
        width: u32,
        height: u32,
        expected_width: u32,
        expected_height: u32,
    },
    #[error("frame {frame_id} has a timestamp earlier than its predecessor")]
    NonMonotoneTimestamps { frame_id: u32 },
    #[error("duplicate frame id {0}")]
    DuplicateFrameId(u32),
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub frame_id: u32,
    /// Seconds from session start.
    pub timestamp: f64,
    pub width: u32,
    pub height: u32,
    pub image_path: String,
}

/// Axis-aligned box `(x1, y1, x2, y2)` in source-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    /// Corners clockwise from top-left.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x1, self.y1),
            (self.x2, self.y1),
            (self.x2, self.y2),
            (self.x1, self.y2),
        ]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    Prediction,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub timestamp: f64,
    pub label: String,
    pub bbox: BBox,
    pub confidence: f64,
    pub source: DetectionSource,
    /// Set by [`match_detections_to_frames`]; always present on a loaded session.
    pub matched_frame_id: Option<u32>,
}

impl Detection {
    pub fn new(
        timestamp: f64,
        label: impl Into<String>,
        bbox: BBox,
        confidence: f64,
        source: DetectionSource,
    ) -> Self {
        Detection {
            timestamp,
            label: label.into(),
            bbox,
            confidence,
            source,
            matched_frame_id: None,
        }
    }

    /// Checks the record-level invariants; the error string names the problem.
    pub fn validate(&self) -> Result<(), &'static str> {
        if !self.timestamp.is_finite() {
            return Err("timestamp is not finite");
        }
        if self.label.is_empty() {
            return Err("label is empty");
        }
        if !self.bbox.is_valid() {
            return Err("bbox requires x1 < x2 and y1 < y2");
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err("confidence outside [0, 1]");
        }
        Ok(())
    }
}

/// Pinhole intrinsics; `K = [[fx, skew, cx], [0, fy, cy], [0, 0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl Intrinsics {
    pub fn identity() -> Self {
        Intrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            skew: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.skew];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(IngestError::InvalidIntrinsics("non-finite entry"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(IngestError::InvalidIntrinsics("focal lengths must be positive"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3([
            [self.fx, self.skew, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])
    }

    /// Closed-form inverse of the upper-triangular `K`.
    pub fn inverse_matrix(&self) -> Mat3 {
        let (fx, fy, s, cx, cy) = (self.fx, self.fy, self.skew, self.cx, self.cy);
        Mat3([
            [1.0 / fx, -s / (fx * fy), (s * cy - cx * fy) / (fx * fy)],
            [0.0, 1.0 / fy, -cy / fy],
            [0.0, 0.0, 1.0],
        ])
    }
}

/// Fallback intrinsics when no calibration is supplied: `fx = fy = width`,
/// principal point at the image centre.
pub fn default_intrinsics(width: u32, height: u32) -> Result<Intrinsics, IngestError> {
    if width == 0 || height == 0 {
        return Err(IngestError::InvalidDimensions { width, height });
    }
    Ok(Intrinsics {
        fx: width as f64,
        fy: width as f64,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        skew: 0.0,
    })
}

/// Assigns every detection to the frame closest in time (ties go to the
/// earlier frame). `frames` must be sorted by timestamp.
pub fn match_detections_to_frames(
    mut detections: Vec<Detection>,
    frames: &[FrameRef],
) -> Result<Vec<Detection>, IngestError> {
    if frames.is_empty() {
        return Err(IngestError::EmptyFrameList);
    }
    for d in detections.iter_mut() {
        d.matched_frame_id = Some(frames[nearest_frame_index(frames, d.timestamp)].frame_id);
    }
    Ok(detections)
}

pub(crate) fn nearest_frame_index(frames: &[FrameRef], t: f64) -> usize {
    // first frame with timestamp >= t
    let hi = frames.partition_point(|f| f.timestamp < t);
    if hi == 0 {
        return 0;
    }
    if hi < frames.len() && frames[hi].timestamp - t < t - frames[hi - 1].timestamp {
        return hi;
    }
    // Equal-time runs: keep the earliest frame carrying that timestamp.
    let ts = frames[hi - 1].timestamp;
    frames[..hi].partition_point(|f| f.timestamp < ts)
}

/// Union of labels across both detection streams.
pub fn session_vocabulary(session: &Session) -> BTreeSet<String> {
    vocabulary_of(session.predictions.iter().chain(&session.ground_truth))
}

pub(crate) fn vocabulary_of<'a>(dets: impl Iterator<Item = &'a Detection>) -> BTreeSet<String> {
    dets.map(|d| d.label.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub frames: Vec<FrameRef>,
    pub predictions: Vec<Detection>,
    pub ground_truth: Vec<Detection>,
    pub intrinsics: Intrinsics,
    pub vocabulary: BTreeSet<String>,
}

impl Session {
    /// Validates and assembles a session.
    ///
    /// Frames are sorted by id, detections by timestamp (stable), then matched
    /// to frames. A missing `intrinsics` or `vocabulary` is replaced by the
    /// defaults; a supplied vocabulary is widened to cover every label seen.
    /// Detection errors report their 1-based position within their stream.
    pub fn assemble(
        mut frames: Vec<FrameRef>,
        predictions: Vec<Detection>,
        ground_truth: Vec<Detection>,
        intrinsics: Option<Intrinsics>,
        vocabulary: Option<BTreeSet<String>>,
    ) -> Result<Session, IngestError> {
        if frames.is_empty() {
            return Err(IngestError::EmptyFrameList);
        }
        frames.sort_by_key(|f| f.frame_id);
        validate_frames(&frames)?;

        for (i, d) in predictions.iter().chain(&ground_truth).enumerate() {
            let line = if i < predictions.len() { i + 1 } else { i - predictions.len() + 1 };
            d.validate().map_err(|reason| IngestError::MalformedRecord {
                line,
                reason: reason.into(),
            })?;
        }

        let intrinsics = match intrinsics {
            Some(k) => {
                k.validate()?;
                k
            }
            None => default_intrinsics(frames[0].width, frames[0].height)?,
        };

        let mut predictions = predictions;
        let mut ground_truth = ground_truth;
        predictions.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        ground_truth.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let predictions = match_detections_to_frames(predictions, &frames)?;
        let ground_truth = match_detections_to_frames(ground_truth, &frames)?;

        let mut session = Session {
            frames,
            predictions,
            ground_truth,
            intrinsics,
            vocabulary: BTreeSet::new(),
        };
        let mut vocab = vocabulary.unwrap_or_default();
        vocab.extend(session_vocabulary(&session));
        session.vocabulary = vocab;
        Ok(session)
    }

    pub fn frame_index(&self, frame_id: u32) -> Option<usize> {
        self.frames.binary_search_by_key(&frame_id, |f| f.frame_id).ok()
    }

    pub fn frame(&self, frame_id: u32) -> Option<&FrameRef> {
        self.frame_index(frame_id).map(|i| &self.frames[i])
    }

    /// Frame dimensions shared by every frame.
    pub fn frame_dims(&self) -> (u32, u32) {
        (self.frames[0].width, self.frames[0].height)
    }

    pub fn predictions_in(&self, frame_id: u32) -> impl Iterator<Item = &Detection> {
        self.predictions
            .iter()
            .filter(move |d| d.matched_frame_id == Some(frame_id))
    }

    pub fn truths_in(&self, frame_id: u32) -> impl Iterator<Item = &Detection> {
        self.ground_truth
            .iter()
            .filter(move |d| d.matched_frame_id == Some(frame_id))
    }
}

fn validate_frames(frames: &[FrameRef]) -> Result<(), IngestError> {
    let (w, h) = (frames[0].width, frames[0].height);
    if w == 0 || h == 0 {
        return Err(IngestError::InvalidDimensions { width: w, height: h });
    }
    for pair in frames.windows(2) {
        if pair[0].frame_id == pair[1].frame_id {
            return Err(IngestError::DuplicateFrameId(pair[1].frame_id));
        }
        if !(pair[1].timestamp >= pair[0].timestamp) {
            return Err(IngestError::NonMonotoneTimestamps {
                frame_id: pair[1].frame_id,
            });
        }
    }
    for f in frames {
        if !f.timestamp.is_finite() {
            return Err(IngestError::NonMonotoneTimestamps { frame_id: f.frame_id });
        }
        if f.width != w || f.height != h {
            return Err(IngestError::InconsistentFrameDimensions {
                frame_id: f.frame_id,
                width: f.width,
                height: f.height,
                expected_width: w,
                expected_height: h,
            });
        }
    }
    Ok(())
}
