use egomosaic_core::features::{
    detect_and_describe, lowe_ratio_filter, match_descriptors, Descriptor, DetectorKind,
    DetectorParams, FeatureError, Keypoint, Match,
};
use egomosaic_core::FeatureSet;
use egomosaic_core::RgbImage;
use proptest::prelude::*;

fn checkerboard(size: u32, square: u32) -> RgbImage {
    let mut img = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let v = if ((x / square) + (y / square)).is_multiple_of(2) { 30 } else { 225 };
            img.put_pixel(x, y, [v, v, v]);
        }
    }
    img
}

// Blocky texture from a small LCG; every block boundary yields corners.
fn texture(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as u32
    };
    let mut img = RgbImage::filled(w, h, [128, 128, 128]);
    for _ in 0..120 {
        let (x0, y0) = (next() % w, next() % h);
        let (bw, bh) = (8 + next() % 40, 8 + next() % 40);
        let v = (next() % 256) as u8;
        for y in y0..(y0 + bh).min(h) {
            for x in x0..(x0 + bw).min(w) {
                img.put_pixel(x, y, [v, v / 2 + 60, 255 - v]);
            }
        }
    }
    img
}

fn rotate90(img: &RgbImage) -> RgbImage {
    // (x, y) -> (h - 1 - y, x)
    let (w, h) = img.dimensions();
    let mut out = RgbImage::new(h, w);
    for y in 0..h {
        for x in 0..w {
            out.put_pixel(h - 1 - y, x, img.pixel(x, y));
        }
    }
    out
}

fn detect(img: &RgbImage) -> FeatureSet {
    detect_and_describe(img, DetectorKind::Orb, &DetectorParams::default(), 1500).unwrap()
}

#[test]
fn uniform_image_has_no_keypoints() {
    let fs = detect(&RgbImage::filled(64, 64, [90, 90, 90]));
    assert!(fs.is_empty());
}

#[test]
fn checkerboard_corners_are_localised() {
    let fs = detect(&checkerboard(256, 24));
    let level0: Vec<_> = fs.keypoints.iter().filter(|k| k.level == 0).collect();
    assert!(level0.len() >= 50, "only {} level-0 keypoints", level0.len());
    for k in &fs.keypoints {
        let d = |v: f64| {
            let c = ((v + 0.5) / 24.0).round() * 24.0 - 0.5;
            (v - c).abs()
        };
        assert!(d(k.x).hypot(d(k.y)) <= 2.0, "keypoint {:?} far from a corner", k);
        if k.level == 0 {
            assert!(d(k.x).hypot(d(k.y)) <= 0.5, "level-0 keypoint {:?} imprecise", k);
        }
    }
}

#[test]
fn small_image_rejected() {
    let err = detect_and_describe(&RgbImage::new(20, 200), DetectorKind::Orb, &DetectorParams::default(), 100)
        .unwrap_err();
    assert!(matches!(err, FeatureError::ImageTooSmall { .. }));
}

#[test]
fn deterministic() {
    let img = texture(200, 160, 3);
    assert_eq!(detect(&img), detect(&img));
}

#[test]
fn max_features_truncates_by_response() {
    let img = texture(200, 160, 9);
    let all = detect(&img);
    let few = detect_and_describe(&img, DetectorKind::Orb, &DetectorParams::default(), 10).unwrap();
    assert_eq!(few.len(), 10.min(all.len()));
    assert_eq!(&all.keypoints[..few.len()], &few.keypoints[..]);
    for w in all.keypoints.windows(2) {
        assert!(w[0].response >= w[1].response);
    }
}

#[test]
fn level0_keypoints_follow_integer_translation() {
    let big = texture(260, 220, 5);
    let crop = |ox: u32, oy: u32| {
        let mut c = RgbImage::new(200, 160);
        for y in 0..160 {
            for x in 0..200 {
                c.put_pixel(x, y, big.pixel(x + ox, y + oy));
            }
        }
        c
    };
    let a = detect(&crop(0, 0));
    let b = detect(&crop(13, 7));
    let set_b: Vec<_> = b
        .keypoints
        .iter()
        .zip(&b.descriptors)
        .filter(|(k, _)| k.level == 0)
        .collect();
    let mut checked = 0;
    for (ka, da) in a.keypoints.iter().zip(&a.descriptors).filter(|(k, _)| k.level == 0) {
        // interior points away from both crops' borders
        let (xb, yb) = (ka.x - 13.0, ka.y - 7.0);
        let inside = |x: f64, y: f64| (24.0..176.0).contains(&x) && (24.0..136.0).contains(&y);
        if !inside(ka.x, ka.y) || !inside(xb, yb) {
            continue;
        }
        let hit = set_b.iter().find(|(kb, _)| (kb.x - xb).abs() < 1e-9 && (kb.y - yb).abs() < 1e-9);
        let (kb, db) = hit.unwrap_or_else(|| panic!("no counterpart for {:?}", ka));
        assert_eq!(kb.orientation, ka.orientation);
        assert_eq!(db, &da);
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} interior keypoints");
}

#[test]
fn rotation_by_90_degrees_rematches() {
    let img = texture(240, 240, 11);
    let rot = rotate90(&img);
    let a = detect(&img);
    let b = detect(&rot);
    let mut pairs = 0;
    let mut good = 0;
    for (ka, da) in a.keypoints.iter().zip(&a.descriptors).filter(|(k, _)| k.level == 0) {
        let (xr, yr) = (239.0 - ka.y, ka.x);
        let Some((_, db)) = b
            .keypoints
            .iter()
            .zip(&b.descriptors)
            .find(|(kb, _)| kb.level == 0 && (kb.x - xr).abs() < 1e-6 && (kb.y - yr).abs() < 1e-6)
        else {
            continue;
        };
        pairs += 1;
        if da.hamming(db) < 64 {
            good += 1;
        }
    }
    assert!(pairs >= 10, "only {pairs} co-located keypoints");
    assert!(good as f64 >= 0.8 * pairs as f64, "{good}/{pairs} rematched");
}

fn naive_two_nn(q: &[Descriptor], t: &[Descriptor]) -> Vec<(usize, u32, usize, u32)> {
    q.iter()
        .map(|d| {
            let mut best = (usize::MAX, u32::MAX);
            let mut second = (usize::MAX, u32::MAX);
            for (j, e) in t.iter().enumerate() {
                let h = d.hamming(e);
                if h < best.1 {
                    second = best;
                    best = (j, h);
                } else if h < second.1 {
                    second = (j, h);
                }
            }
            (best.0, best.1, second.0, second.1)
        })
        .collect()
}

fn fs(d: &[Descriptor]) -> FeatureSet {
    FeatureSet {
        frame_id: 0,
        keypoints: d.iter().map(|_| Keypoint { x: 0.0, y: 0.0, response: 0.0, scale: 1.0, orientation: 0.0, level: 0 }).collect(),
        descriptors: d.to_vec(),
        detector_kind: DetectorKind::Orb,
    }
}

fn descs(max: usize) -> impl Strategy<Value = Vec<Descriptor>> {
    prop::collection::vec(prop::collection::vec(any::<u8>(), 4).prop_map(Descriptor), 2..max)
}

proptest! {
    #[test]
    fn two_nn_matches_brute_force(q in descs(12), t in descs(12)) {
        let got = match_descriptors(&fs(&q), &fs(&t)).unwrap();
        let want = naive_two_nn(&q, &t);
        prop_assert_eq!(got.len(), q.len());
        for (i, ((m1, m2), w)) in got.iter().zip(&want).enumerate() {
            prop_assert_eq!(m1.query_idx, i);
            prop_assert_eq!((m1.train_idx, m1.distance), (w.0, w.1 as f64));
            prop_assert_eq!((m2.train_idx, m2.distance), (w.2, w.3 as f64));
        }
    }

    #[test]
    fn ratio_filter_is_monotone(q in descs(12), t in descs(12), r1 in 0.05f64..0.95, r2 in 0.05f64..0.95) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let m = match_descriptors(&fs(&q), &fs(&t)).unwrap();
        let a: Vec<Match> = lowe_ratio_filter(&m, lo);
        let b: Vec<Match> = lowe_ratio_filter(&m, hi);
        prop_assert!(a.iter().all(|x| b.contains(x)));
    }
}

#[test]
fn ratio_filter_limit_cases() {
    let d = |b: u8| Descriptor(vec![b]);
    let m = match_descriptors(&fs(&[d(0)]), &fs(&[d(0), d(0)])).unwrap();
    // equal distances never pass a strict ratio below one
    assert!(lowe_ratio_filter(&m, 0.99).is_empty());
    let m = match_descriptors(&fs(&[d(0)]), &fs(&[d(0b1), d(0xff)])).unwrap();
    assert_eq!(lowe_ratio_filter(&m, 0.2).len(), 1);
    assert!(lowe_ratio_filter(&m, 0.1).is_empty());
}

fn lcg_descriptors(n: usize, seed: u64) -> Vec<Descriptor> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            Descriptor(
                (0..32)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (state >> 56) as u8
                    })
                    .collect(),
            )
        })
        .collect()
}

#[test]
fn random_200_by_200_equals_double_loop() {
    let q = lcg_descriptors(200, 1);
    let t = lcg_descriptors(200, 2);
    let got = match_descriptors(&fs(&q), &fs(&t)).unwrap();
    for ((m1, m2), w) in got.iter().zip(naive_two_nn(&q, &t)) {
        assert_eq!((m1.train_idx, m1.distance, m2.train_idx, m2.distance), (w.0, w.1 as f64, w.2, w.3 as f64));
        assert!(m1.distance <= m2.distance);
    }
}

#[test]
fn self_match_is_identity() {
    let q = lcg_descriptors(50, 7);
    let got = match_descriptors(&fs(&q), &fs(&q)).unwrap();
    for (i, (m1, _)) in got.iter().enumerate() {
        assert_eq!((m1.query_idx, m1.train_idx, m1.distance), (i, i, 0.0));
    }
}

#[test]
fn matching_preconditions() {
    let a = lcg_descriptors(3, 1);
    assert!(matches!(
        match_descriptors(&fs(&a), &fs(&a[..1])),
        Err(FeatureError::TrainSetTooSmall(1))
    ));
    let short = vec![Descriptor(vec![0; 8]), Descriptor(vec![0; 8])];
    assert!(matches!(
        match_descriptors(&fs(&a), &fs(&short)),
        Err(FeatureError::DescriptorLengthMismatch { .. })
    ));
}

#[test]
fn ratio_example_arithmetic() {
    let m = |d| Match { query_idx: 0, train_idx: 0, distance: d };
    assert_eq!(lowe_ratio_filter(&[(m(10.0), m(30.0))], 0.75).len(), 1);
    assert!(lowe_ratio_filter(&[(m(23.0), m(30.0))], 0.75).is_empty());
}

#[test]
fn all_levels_follow_integer_translation_within_one_pixel() {
    let big = texture(300, 260, 21);
    let crop = |ox: u32, oy: u32| {
        let mut c = RgbImage::new(240, 200);
        for y in 0..200 {
            for x in 0..240 {
                c.put_pixel(x, y, big.pixel(x + ox, y + oy));
            }
        }
        c
    };
    let a = detect(&crop(0, 0));
    let b = detect(&crop(24, 12));
    let (mut total, mut hits) = (0, 0);
    for ka in &a.keypoints {
        let (xb, yb) = (ka.x - 24.0, ka.y - 12.0);
        let m = 40.0;
        if ka.x < m || ka.y < m || xb < m || yb < m || ka.x > 240.0 - m || xb > 240.0 - m || ka.y > 200.0 - m || yb > 200.0 - m {
            continue;
        }
        total += 1;
        if b.keypoints.iter().any(|kb| (kb.x - xb).hypot(kb.y - yb) <= 1.0) {
            hits += 1;
        }
    }
    assert!(total >= 20);
    assert!(hits as f64 >= 0.9 * total as f64, "{hits}/{total}");
}
