//! On-disk session layout.
//!
//! ```text
//! session/
//!   frames.json         [{"id": 0, "t": 0.0, "file": "frames/000000.png"}, ...]
//!   frames/             8-bit RGB PNG or JPEG images
//!   detections.jsonl    {"t": 0.1, "label": "cup", "bbox": [x1, y1, x2, y2], "confidence": 0.9}
//!   groundtruth.jsonl   optional, same record shape
//!   intrinsics.json     optional, {"fx": .., "fy": .., "cx": .., "cy": .., "skew": 0.0}
//!   vocabulary.json     optional, ["cup", "knife", ...]
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use egomosaic_core::ingest::IngestError;
use egomosaic_core::{BBox, Detection, DetectionSource, FrameRef, Intrinsics, Session};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FRAMES_FILE: &str = "frames.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.jsonl";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const VOCABULARY_FILE: &str = "vocabulary.json";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {reason}")]
    MalformedRecord { file: PathBuf, line: usize, reason: String },
    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl SessionError {
    /// Stable identifier used in CLI diagnostics and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::MissingFile(_) => "MissingFile",
            SessionError::MalformedRecord { .. } => "MalformedRecord",
            SessionError::UnreadableImage { .. } => "UnreadableImage",
            SessionError::Ingest(e) => match e {
                IngestError::EmptyFrameList => "EmptyFrameList",
                IngestError::MalformedRecord { .. } => "MalformedRecord",
                IngestError::InconsistentFrameDimensions { .. } => "InconsistentFrameDimensions",
                IngestError::NonMonotoneTimestamps { .. } => "NonMonotoneTimestamps",
                IngestError::DuplicateFrameId(_) => "DuplicateFrameId",
                IngestError::InvalidDimensions { .. } => "InvalidDimensions",
                IngestError::InvalidIntrinsics(_) => "InvalidIntrinsics",
            },
            SessionError::Io { .. } => "IoError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub id: u32,
    pub t: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub t: f64,
    pub label: String,
    pub bbox: [f64; 4],
    /// Required for predictions; ground truth defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl DetectionRecord {
    fn from_detection(d: &Detection) -> Self {
        DetectionRecord {
            t: d.timestamp,
            label: d.label.clone(),
            bbox: d.bbox.to_array(),
            confidence: Some(d.confidence),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SessionError + '_ {
    move |source| {
        if source.kind() == io::ErrorKind::NotFound {
            SessionError::MissingFile(path.to_path_buf())
        } else {
            SessionError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SessionError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| SessionError::MalformedRecord {
        file: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn read_optional_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, SessionError> {
    if path.exists() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Parses a JSON-lines detection stream. Blank lines are skipped; line
/// numbers in errors are 1-based file lines.
pub fn read_detections(path: &Path, source: DetectionSource) -> Result<Vec<Detection>, SessionError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| SessionError::MalformedRecord {
            file: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let confidence = match (rec.confidence, source) {
            (Some(c), _) => c,
            (None, DetectionSource::GroundTruth) => 1.0,
            (None, DetectionSource::Prediction) => return Err(bad("missing field `confidence`".into())),
        };
        let [x1, y1, x2, y2] = rec.bbox;
        let d = Detection::new(rec.t, rec.label, BBox::new(x1, y1, x2, y2), confidence, source);
        d.validate().map_err(|r| bad(r.into()))?;
        out.push(d);
    }
    Ok(out)
}

/// Reads and validates a session directory.
///
/// Frame sizes come from the image headers. Missing intrinsics default to
/// `fx = fy = width` at the image centre; a missing vocabulary defaults to
/// the labels seen in either stream.
pub fn load_session(root: &Path) -> Result<Session, SessionError> {
    let frames_path = root.join(FRAMES_FILE);
    let records: Vec<FrameRecord> = read_json(&frames_path)?;
    let mut frames = Vec::with_capacity(records.len());
    for r in records {
        let path = root.join(&r.file);
        if !path.is_file() {
            return Err(SessionError::MissingFile(path));
        }
        let (width, height) = image::image_dimensions(&path).map_err(|e| SessionError::UnreadableImage {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        frames.push(FrameRef {
            frame_id: r.id,
            timestamp: r.t,
            width,
            height,
            image_path: r.file,
        });
    }
    let predictions = read_detections(&root.join(DETECTIONS_FILE), DetectionSource::Prediction)?;
    let gt_path = root.join(GROUND_TRUTH_FILE);
    let ground_truth = if gt_path.exists() {
        read_detections(&gt_path, DetectionSource::GroundTruth)?
    } else {
        Vec::new()
    };
    let intrinsics: Option<Intrinsics> = read_optional_json(&root.join(INTRINSICS_FILE))?;
    let vocabulary: Option<BTreeSet<String>> = read_optional_json(&root.join(VOCABULARY_FILE))?;
    Ok(Session::assemble(frames, predictions, ground_truth, intrinsics, vocabulary)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SessionError> {
    fs::write(path, bytes).map_err(|source| SessionError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_jsonl(path: &Path, dets: &[Detection]) -> Result<(), SessionError> {
    let mut buf = Vec::new();
    for d in dets {
        serde_json::to_writer(&mut buf, &DetectionRecord::from_detection(d)).expect("records serialize");
        buf.write_all(b"\n").expect("in-memory write");
    }
    write_file(path, &buf)
}

/// Writes every session file except the images, which stay where
/// `image_path` points relative to `root`.
pub fn save_session(session: &Session, root: &Path) -> Result<(), SessionError> {
    fs::create_dir_all(root).map_err(|source| SessionError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let frames: Vec<FrameRecord> = session
        .frames
        .iter()
        .map(|f| FrameRecord {
            id: f.frame_id,
            t: f.timestamp,
            file: f.image_path.clone(),
        })
        .collect();
    write_file(&root.join(FRAMES_FILE), pretty(&frames).as_bytes())?;
    write_jsonl(&root.join(DETECTIONS_FILE), &session.predictions)?;
    write_jsonl(&root.join(GROUND_TRUTH_FILE), &session.ground_truth)?;
    write_file(&root.join(INTRINSICS_FILE), pretty(&session.intrinsics).as_bytes())?;
    write_file(&root.join(VOCABULARY_FILE), pretty(&session.vocabulary).as_bytes())?;
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("session data serializes");
    s.push('\n');
    s
}

/// SHA-256 over the canonical JSON of the session and the bytes of every
/// frame image, hex encoded.
pub fn session_content_hash(session: &Session, root: &Path) -> Result<String, SessionError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(session).expect("session serializes"));
    for f in &session.frames {
        let path = root.join(&f.image_path);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}
