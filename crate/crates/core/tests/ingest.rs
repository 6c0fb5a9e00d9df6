mod support;

use std::collections::BTreeSet;

use egomosaic_core::ingest::{match_detections_to_frames, session_vocabulary};
use egomosaic_core::{BBox, Detection, DetectionSource, FrameRef, Session};
use proptest::prelude::*;
use support::*;

fn frames_at(ts: &[f64]) -> Vec<FrameRef> {
    ts.iter()
        .enumerate()
        .map(|(i, &t)| FrameRef {
            frame_id: i as u32,
            timestamp: t,
            width: 32,
            height: 32,
            image_path: format!("frames/{i}.png"),
        })
        .collect()
}

fn at(t: f64) -> Detection {
    Detection::new(t, "mug", BBox::new(0.0, 0.0, 1.0, 1.0), 0.5, DetectionSource::Prediction)
}

#[test]
fn thousand_random_timestamps_match_exhaustive_scan() {
    let mut r = rng(11);
    let mut t = 0.0;
    let ts: Vec<f64> = (0..200)
        .map(|_| {
            t += [0.0, 1.0 / 15.0, 0.1, 0.5][below(&mut r, 4)];
            t
        })
        .collect();
    let frames = frames_at(&ts);
    let dets: Vec<Detection> = (0..1000)
        .map(|i| {
            if i % 4 == 0 {
                at(ts[below(&mut r, ts.len())])
            } else {
                at(uniform(&mut r, -1.0, t + 1.0))
            }
        })
        .collect();
    let matched = match_detections_to_frames(dets, &frames).unwrap();
    for d in &matched {
        assert_eq!(d.matched_frame_id, Some(nearest_frame(&frames, d.timestamp) as u32), "t = {}", d.timestamp);
    }
}

#[test]
fn vocabulary_counts_distinct_strings() {
    let mut r = rng(3);
    let names: Vec<String> = (0..37).map(|i| format!("obj{i}")).collect();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut distinct = BTreeSet::new();
    for i in 0..500 {
        let l = &names[below(&mut r, names.len())];
        distinct.insert(l.clone());
        let mut d = at(0.0);
        d.label = l.clone();
        if i % 2 == 0 {
            preds.push(d);
        } else {
            d.source = DetectionSource::GroundTruth;
            truths.push(d);
        }
    }
    let s = Session::assemble(frames_at(&[0.0]), preds, truths, None, None).unwrap();
    assert_eq!(session_vocabulary(&s).len(), distinct.len());
    assert_eq!(s.vocabulary, distinct);
}

proptest! {
    #[test]
    fn matching_is_total_and_minimal(
        gaps in prop::collection::vec(0u8..4, 1..40),
        times in prop::collection::vec(-2.0f64..12.0, 0..60),
    ) {
        let mut t = 0.0;
        let ts: Vec<f64> = gaps.iter().map(|&g| { t += g as f64 * 0.25; t }).collect();
        let frames = frames_at(&ts);
        let matched = match_detections_to_frames(times.iter().map(|&t| at(t)).collect(), &frames).unwrap();
        for d in &matched {
            let m = d.matched_frame_id.unwrap() as usize;
            prop_assert!(m < frames.len());
            for f in &frames {
                prop_assert!((frames[m].timestamp - d.timestamp).abs() <= (f.timestamp - d.timestamp).abs());
            }
            // no earlier frame is equally close
            for f in &frames[..m] {
                prop_assert!((f.timestamp - d.timestamp).abs() > (frames[m].timestamp - d.timestamp).abs());
            }
        }
    }

    #[test]
    fn loaded_sessions_reference_existing_frames(seed in any::<u64>()) {
        let s = random_session(&mut rng(seed), 25, 6);
        for d in s.predictions.iter().chain(&s.ground_truth) {
            prop_assert!(s.frame(d.matched_frame_id.unwrap()).is_some());
            prop_assert!(s.vocabulary.contains(&d.label));
        }
        prop_assert!(s.predictions.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }
}
