//! Timeline data products: summary matrices, per-frame TP/FP/FN/TN counts,
//! arrow chains with their distance series, and slider events.
//!
//! TN is counted over the session vocabulary: a label is a true negative in
//! a frame when neither stream mentions it there.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::compositor::TransformedDetection;
use crate::ingest::{BBox, Detection, Session};
use crate::math::hypot;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MISSING_THRESHOLD: usize = 15;

/// Intersection over union of two valid boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Confidence,
    #[serde(rename = "iou")]
    IoU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineMatrix {
    pub metric: Metric,
    /// Row labels.
    pub labels: Vec<String>,
    /// Column frame ids, one per session frame.
    pub frame_ids: Vec<u32>,
    /// `values[row][col]`; `None` where the cell has no data.
    pub values: Vec<Vec<Option<f64>>>,
}

impl TimelineMatrix {
    pub fn get(&self, label: &str, frame_id: u32) -> Option<f64> {
        let r = self.labels.iter().position(|l| l == label)?;
        let c = self.frame_ids.iter().position(|&f| f == frame_id)?;
        self.values[r][c]
    }
}

/// Labels in order of first appearance: frames in order, predictions of a
/// frame before its ground truth, stream order within each.
pub fn labels_by_first_appearance(session: &Session) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for f in &session.frames {
        for d in session.predictions_in(f.frame_id).chain(session.truths_in(f.frame_id)) {
            if seen.insert(d.label.as_str()) {
                out.push(d.label.clone());
            }
        }
    }
    out
}

struct FrameBuckets<'a> {
    preds: Vec<Vec<&'a Detection>>,
    truths: Vec<Vec<&'a Detection>>,
}

fn bucket_by_frame(session: &Session) -> FrameBuckets<'_> {
    let n = session.frames.len();
    let mut preds = vec![Vec::new(); n];
    let mut truths = vec![Vec::new(); n];
    for (stream, out) in [(&session.predictions, &mut preds), (&session.ground_truth, &mut truths)] {
        for d in stream {
            if let Some(i) = d.matched_frame_id.and_then(|id| session.frame_index(id)) {
                out[i].push(d);
            }
        }
    }
    FrameBuckets { preds, truths }
}

/// One cell per (label, frame). Confidence cells hold the label's highest
/// prediction confidence in the frame; IoU cells hold the highest IoU over
/// all same-label prediction/truth pairs and are absent unless both sides
/// are present.
pub fn summary_matrix(session: &Session, metric: Metric) -> TimelineMatrix {
    let labels = labels_by_first_appearance(session);
    let row: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let buckets = bucket_by_frame(session);
    let mut values = vec![vec![None; session.frames.len()]; labels.len()];
    for (c, (preds, truths)) in buckets.preds.iter().zip(&buckets.truths).enumerate() {
        match metric {
            Metric::Confidence => {
                for p in preds {
                    let cell = &mut values[row[p.label.as_str()]][c];
                    *cell = Some(cell.map_or(p.confidence, |v: f64| v.max(p.confidence)));
                }
            }
            Metric::IoU => {
                for p in preds {
                    for t in truths.iter().filter(|t| t.label == p.label) {
                        let v = iou(&p.bbox, &t.bbox);
                        let cell = &mut values[row[p.label.as_str()]][c];
                        *cell = Some(cell.map_or(v, |w: f64| w.max(v)));
                    }
                }
            }
        }
    }
    TimelineMatrix {
        metric,
        labels,
        frame_ids: session.frames.iter().map(|f| f.frame_id).collect(),
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationCounts {
    pub frame_id: u32,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

/// Greedy max-IoU matching per label. Pairs with IoU ≥ `iou_threshold` are
/// taken in descending IoU order (ties by prediction index, then truth
/// index) while both sides are unused.
pub fn classify_detections(
    frame_id: u32,
    predictions: &[&Detection],
    truths: &[&Detection],
    iou_threshold: f64,
    vocabulary: &BTreeSet<String>,
) -> ClassificationCounts {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in predictions.iter().enumerate() {
        for (j, t) in truths.iter().enumerate() {
            if p.label == t.label {
                let v = iou(&p.bbox, &t.bbox);
                if v >= iou_threshold {
                    pairs.push((v, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; predictions.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !pred_used[i] && !truth_used[j] {
            pred_used[i] = true;
            truth_used[j] = true;
            tp += 1;
        }
    }
    let present: BTreeSet<&str> = predictions
        .iter()
        .chain(truths)
        .map(|d| d.label.as_str())
        .collect();
    let tn = vocabulary.iter().filter(|l| !present.contains(l.as_str())).count();
    ClassificationCounts {
        frame_id,
        tp,
        fp: predictions.len() - tp,
        fn_: truths.len() - tp,
        tn,
    }
}

/// Counts for every session frame, in frame order.
pub fn classify_session(session: &Session, iou_threshold: f64) -> Vec<ClassificationCounts> {
    let buckets = bucket_by_frame(session);
    session
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            classify_detections(
                f.frame_id,
                &buckets.preds[i],
                &buckets.truths[i],
                iou_threshold,
                &session.vocabulary,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainNode {
    pub frame_id: u32,
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowChain {
    pub label: String,
    /// Index within the label's chains, in creation order.
    pub chain_id: usize,
    pub nodes: Vec<ChainNode>,
}

/// Groups one label's transformed detections into chains.
///
/// Detections are processed frame by frame in the given order. Instances of
/// a frame are matched to distinct existing chains greedily by ascending
/// distance from the chain's last node (ties by instance index, then chain
/// index); instances left over start new chains.
pub fn arrow_chains(detections: &[TransformedDetection]) -> Vec<ArrowChain> {
    let mut chains: Vec<ArrowChain> = Vec::new();
    let mut i = 0;
    while i < detections.len() {
        let frame = detections[i].frame_id;
        let mut j = i;
        while j < detections.len() && detections[j].frame_id == frame {
            j += 1;
        }
        let group = &detections[i..j];
        let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(group.len() * chains.len());
        for (gi, d) in group.iter().enumerate() {
            for (ci, c) in chains.iter().enumerate() {
                let last = c.nodes.last().expect("chains are never empty").centroid;
                cand.push((hypot(d.centroid.0 - last.0, d.centroid.1 - last.1), gi, ci));
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut inst_used = vec![false; group.len()];
        let mut chain_used = vec![false; chains.len()];
        for (_, gi, ci) in cand {
            if !inst_used[gi] && !chain_used[ci] {
                inst_used[gi] = true;
                chain_used[ci] = true;
                chains[ci].nodes.push(ChainNode {
                    frame_id: frame,
                    centroid: group[gi].centroid,
                });
            }
        }
        for (gi, d) in group.iter().enumerate() {
            if !inst_used[gi] {
                chains.push(ArrowChain {
                    label: d.detection.label.clone(),
                    chain_id: chains.len(),
                    nodes: vec![ChainNode {
                        frame_id: frame,
                        centroid: d.centroid,
                    }],
                });
            }
        }
        i = j;
    }
    chains
}

/// Chains for every label present, labels in order of first appearance.
pub fn arrow_chains_by_label(detections: &[TransformedDetection]) -> Vec<ArrowChain> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<TransformedDetection>> = BTreeMap::new();
    for d in detections {
        let l = d.detection.label.as_str();
        groups.entry(l).or_insert_with(|| {
            order.push(l);
            Vec::new()
        });
        groups.get_mut(l).expect("inserted above").push(d.clone());
    }
    order.iter().flat_map(|l| arrow_chains(&groups[l])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStep {
    pub chain_id: usize,
    pub from_frame_id: u32,
    pub to_frame_id: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub label: String,
    /// Steps of each chain in turn; `chain_id` marks the boundaries.
    pub steps: Vec<DistanceStep>,
}

/// Euclidean distances between consecutive chain nodes, one series per
/// label in the order labels first occur among `chains`.
pub fn distance_series(chains: &[ArrowChain]) -> Vec<DistanceSeries> {
    let mut out: Vec<DistanceSeries> = Vec::new();
    for c in chains {
        let idx = match out.iter().position(|s| s.label == c.label) {
            Some(i) => i,
            None => {
                out.push(DistanceSeries {
                    label: c.label.clone(),
                    steps: Vec::new(),
                });
                out.len() - 1
            }
        };
        for w in c.nodes.windows(2) {
            out[idx].steps.push(DistanceStep {
                chain_id: c.chain_id,
                from_frame_id: w[0].frame_id,
                to_frame_id: w[1].frame_id,
                distance: hypot(w[1].centroid.0 - w[0].centroid.0, w[1].centroid.1 - w[0].centroid.1),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiKind {
    NewLabel,
    DuplicateLabel,
    MissingLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoiEvent {
    pub kind: PoiKind,
    pub frame_id: u32,
    pub label: String,
    pub detail: String,
}

/// Slider events from the prediction stream.
///
/// * `NewLabel` at a label's first predicted frame.
/// * `DuplicateLabel` at every frame with two or more predictions of a
///   label; the detail is the count.
/// * `MissingLabel` at the frame where a seen label has been absent for
///   `missing_threshold` consecutive frames; it fires again only after the
///   label reappears.
///
/// Events are ordered by frame, then kind, then label.
pub fn poi_events(session: &Session, missing_threshold: usize) -> Vec<PoiEvent> {
    let threshold = missing_threshold.max(1);
    let buckets = bucket_by_frame(session);
    // label -> (absence streak, armed)
    let mut state: BTreeMap<&str, (usize, bool)> = BTreeMap::new();
    let mut events = Vec::new();
    for (i, f) in session.frames.iter().enumerate() {
        let start = events.len();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &buckets.preds[i] {
            *counts.entry(p.label.as_str()).or_default() += 1;
        }
        for (&label, &n) in &counts {
            if !state.contains_key(label) {
                events.push(PoiEvent {
                    kind: PoiKind::NewLabel,
                    frame_id: f.frame_id,
                    label: label.into(),
                    detail: String::new(),
                });
            }
            state.insert(label, (0, true));
            if n >= 2 {
                events.push(PoiEvent {
                    kind: PoiKind::DuplicateLabel,
                    frame_id: f.frame_id,
                    label: label.into(),
                    detail: format!("{n}"),
                });
            }
        }
        for (&label, st) in state.iter_mut() {
            if counts.contains_key(label) {
                continue;
            }
            st.0 += 1;
            if st.1 && st.0 >= threshold {
                st.1 = false;
                events.push(PoiEvent {
                    kind: PoiKind::MissingLabel,
                    frame_id: f.frame_id,
                    label: label.into(),
                    detail: format!("absent for {} frames", st.0),
                });
            }
        }
        events[start..].sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| a.label.cmp(&b.label)));
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DetectionSource, FrameRef};

    fn frames(n: u32) -> Vec<FrameRef> {
        (0..n)
            .map(|i| FrameRef {
                frame_id: i,
                timestamp: i as f64,
                width: 100,
                height: 80,
                image_path: format!("{i}.png"),
            })
            .collect()
    }

    fn det(t: f64, label: &str, b: BBox, conf: f64, src: DetectionSource) -> Detection {
        Detection::new(t, label, b, conf, src)
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert!((iou(&a, &BBox::new(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-15);
        // touching edges share no interior
        assert_eq!(iou(&a, &BBox::new(2.0, 0.0, 3.0, 2.0)), 0.0);
    }

    #[test]
    fn singleton_cells() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let t = BBox::new(0.0, 0.0, 10.0, 6.0);
        let s = Session::assemble(
            frames(3),
            vec![det(1.0, "cup", b, 0.9, DetectionSource::Prediction)],
            vec![det(1.0, "cup", t, 1.0, DetectionSource::GroundTruth)],
            None,
            None,
        )
        .unwrap();
        let c = summary_matrix(&s, Metric::Confidence);
        assert_eq!(c.get("cup", 1), Some(0.9));
        assert_eq!(c.values[0][0], None);
        let i = summary_matrix(&s, Metric::IoU);
        assert!((i.get("cup", 1).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn greedy_takes_higher_iou() {
        let truth = det(0.0, "a", BBox::new(0.0, 0.0, 10.0, 10.0), 1.0, DetectionSource::GroundTruth);
        let p1 = det(0.0, "a", BBox::new(0.0, 0.0, 10.0, 9.0), 0.5, DetectionSource::Prediction);
        let p2 = det(0.0, "a", BBox::new(0.0, 0.0, 10.0, 7.0), 0.9, DetectionSource::Prediction);
        let vocab: BTreeSet<String> = ["a", "b"].iter().map(|s| String::from(*s)).collect();
        let c = classify_detections(0, &[&p2, &p1], &[&truth], 0.5, &vocab);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 0, 1));
    }

    #[test]
    fn prediction_without_truth_is_fp_only() {
        let p = det(0.0, "a", BBox::new(0.0, 0.0, 1.0, 1.0), 0.5, DetectionSource::Prediction);
        let vocab: BTreeSet<String> = [String::from("a")].into_iter().collect();
        let c = classify_detections(3, &[&p], &[], 0.5, &vocab);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (0, 1, 0, 0));
    }

    fn td(frame_id: u32, label: &str, c: (f64, f64)) -> TransformedDetection {
        TransformedDetection {
            detection: det(frame_id as f64, label, BBox::new(0.0, 0.0, 1.0, 1.0), 1.0, DetectionSource::Prediction),
            frame_id,
            quad: [c; 4],
            centroid: c,
        }
    }

    #[test]
    fn chains_basic() {
        let one: Vec<_> = (0..5).map(|f| td(f, "x", (f as f64, 0.0))).collect();
        let c = arrow_chains(&one);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].nodes.len(), 5);

        let three = [td(0, "x", (0.0, 0.0)), td(0, "x", (50.0, 0.0)), td(0, "x", (99.0, 0.0))];
        assert_eq!(arrow_chains(&three).len(), 3);
    }

    #[test]
    fn distance_examples() {
        let c = arrow_chains(&[td(0, "x", (0.0, 0.0)), td(1, "x", (3.0, 4.0))]);
        let s = distance_series(&c);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].steps[0].distance, 5.0);
        let still = arrow_chains(&[td(0, "x", (2.0, 2.0)), td(1, "x", (2.0, 2.0)), td(2, "x", (2.0, 2.0))]);
        assert!(distance_series(&still)[0].steps.iter().all(|s| s.distance == 0.0));
    }

    #[test]
    fn poi_examples() {
        let b = BBox::new(0.0, 0.0, 5.0, 5.0);
        let preds = vec![
            det(12.0, "dog", b, 0.8, DetectionSource::Prediction),
            det(30.0, "cat", b, 0.8, DetectionSource::Prediction),
            det(30.0, "cat", b, 0.7, DetectionSource::Prediction),
        ];
        let s = Session::assemble(frames(40), preds, vec![], None, None).unwrap();
        let ev = poi_events(&s, 15);
        let dog: Vec<_> = ev.iter().filter(|e| e.label == "dog").collect();
        assert_eq!(dog.len(), 2);
        assert_eq!((dog[0].kind, dog[0].frame_id), (PoiKind::NewLabel, 12));
        assert_eq!((dog[1].kind, dog[1].frame_id), (PoiKind::MissingLabel, 27));
        let dup = ev.iter().find(|e| e.kind == PoiKind::DuplicateLabel).unwrap();
        assert_eq!((dup.frame_id, dup.label.as_str(), dup.detail.as_str()), (30, "cat", "2"));
    }
}
