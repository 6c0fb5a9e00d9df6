//! Machine-readable outputs: `panorama.json` and `analytics.json`.
//!
//! Both documents validate against the JSON Schemas under `schemas/`.

use std::collections::BTreeMap;

use egomosaic_core::analytics::{
    arrow_chains_by_label, classify_session, distance_series, poi_events, summary_matrix, ArrowChain,
    ClassificationCounts, DistanceSeries, Metric, PoiEvent, TimelineMatrix,
};
use egomosaic_core::compositor::{transform_predictions, Panorama, PanoramaParams};
use egomosaic_core::Session;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PANORAMA_FORMAT: &str = "egomosaic.panorama/1";
pub const ANALYTICS_FORMAT: &str = "egomosaic.analytics/1";

pub const PANORAMA_SCHEMA: &str = include_str!("../schemas/panorama.schema.json");
pub const ANALYTICS_SCHEMA: &str = include_str!("../schemas/analytics.schema.json");

/// Identifies a build: hash of the session content hash and the canonical
/// JSON of the parameters.
pub fn panorama_id(session_id: &str, params: &PanoramaParams) -> String {
    let mut h = Sha256::new();
    h.update(session_id.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(params).expect("params serialize"));
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaDoc {
    pub format: String,
    pub panorama_id: String,
    pub session_id: String,
    pub params: PanoramaParams,
    #[serde(flatten)]
    pub panorama: Panorama,
}

impl PanoramaDoc {
    pub fn new(session_id: &str, params: &PanoramaParams, panorama: &Panorama) -> Self {
        let mut panorama = panorama.clone();
        panorama.image = Default::default();
        PanoramaDoc {
            format: PANORAMA_FORMAT.into(),
            panorama_id: panorama_id(session_id, params),
            session_id: session_id.into(),
            params: *params,
            panorama,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsMetadata {
    pub iou_threshold: f64,
    pub missing_threshold: usize,
    pub label_order: String,
    pub summary_aggregation: String,
    pub classification_matching: String,
    pub true_negative_rule: String,
    pub distance_source: String,
}

impl AnalyticsMetadata {
    pub fn new(iou_threshold: f64, missing_threshold: usize) -> Self {
        AnalyticsMetadata {
            iou_threshold,
            missing_threshold,
            label_order: "first appearance; frames in order, predictions before ground truth".into(),
            summary_aggregation: "max over same-label instances (IoU: max over all same-label pairs)".into(),
            classification_matching: "greedy by descending IoU per label, pairs below the threshold ignored".into(),
            true_negative_rule: "vocabulary labels with neither a prediction nor a ground-truth box in the frame"
                .into(),
            distance_source: "prediction chains only".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMatrices {
    pub confidence: TimelineMatrix,
    pub iou: TimelineMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaAnalytics {
    pub chains: Vec<ArrowChain>,
    pub distance: Vec<DistanceSeries>,
}

impl PanoramaAnalytics {
    pub fn new(session: &Session, panorama: &Panorama) -> Self {
        let chains = arrow_chains_by_label(&transform_predictions(session, panorama));
        let distance = distance_series(&chains);
        PanoramaAnalytics { chains, distance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsDoc {
    pub format: String,
    pub session_id: String,
    pub metadata: AnalyticsMetadata,
    pub summary: SummaryMatrices,
    pub classification: Vec<ClassificationCounts>,
    pub events: Vec<PoiEvent>,
    /// Chains and distance series keyed by panorama id.
    pub panoramas: BTreeMap<String, PanoramaAnalytics>,
}

impl AnalyticsDoc {
    pub fn new(
        session: &Session,
        session_id: &str,
        iou_threshold: f64,
        missing_threshold: usize,
        panoramas: &[(&str, &Panorama)],
    ) -> Self {
        AnalyticsDoc {
            format: ANALYTICS_FORMAT.into(),
            session_id: session_id.into(),
            metadata: AnalyticsMetadata::new(iou_threshold, missing_threshold),
            summary: SummaryMatrices {
                confidence: summary_matrix(session, Metric::Confidence),
                iou: summary_matrix(session, Metric::IoU),
            },
            classification: classify_session(session, iou_threshold),
            events: poi_events(session, missing_threshold),
            panoramas: panoramas
                .iter()
                .map(|(id, p)| (id.to_string(), PanoramaAnalytics::new(session, p)))
                .collect(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(doc: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(doc).expect("documents serialize");
    v.push(b'\n');
    v
}
