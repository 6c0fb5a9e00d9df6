use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::geometry::uniform_below;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElbowParams {
    pub k_max: usize,
    /// Stop splitting once `(WSS(k) − WSS(k+1)) / max(WSS(1), ε)` falls
    /// below this.
    pub elbow_drop_threshold: f64,
    pub max_iterations: usize,
    /// Per-point variance treated as noise: `ε = n · min_variance`. Spreads
    /// below this never justify a split.
    pub min_variance: f64,
}

impl Default for ElbowParams {
    fn default() -> Self {
        ElbowParams {
            k_max: 8,
            elbow_drop_threshold: 0.10,
            max_iterations: 100,
            min_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<(f64, f64)>,
    /// Cluster index per input point.
    pub assignment: Vec<usize>,
    /// `(k, WSS(k))` for every k evaluated.
    pub wss_by_k: Vec<(usize, f64)>,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    dx * dx + dy * dy
}

fn nearest(p: (f64, f64), centroids: &[(f64, f64)]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Lloyd's k-means with greedy farthest-point seeding. The first centre is
/// drawn from the seeded generator; each following centre is the point
/// farthest from those already chosen (lowest index on ties). Returns
/// `(centroids, assignment, wss)`.
pub fn kmeans_fixed_k(
    points: &[(f64, f64)],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> (Vec<(f64, f64)>, Vec<usize>, f64) {
    assert!(k >= 1 && k <= points.len(), "k must lie in 1..=n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[uniform_below(&mut rng, points.len())]);
    let mut min_d: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let mut far = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[far] {
                far = i;
            }
        }
        let c = points[far];
        centroids.push(c);
        for (m, &p) in min_d.iter_mut().zip(points) {
            *m = m.min(dist2(p, c));
        }
    }

    let mut assignment: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
    for _ in 0..max_iterations {
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&p, &a) in points.iter().zip(&assignment) {
            sums[a].0 += p.0;
            sums[a].1 += p.1;
            sums[a].2 += 1;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        let next: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    // centroids consistent with the final assignment
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (&p, &a) in points.iter().zip(&assignment) {
        sums[a].0 += p.0;
        sums[a].1 += p.1;
        sums[a].2 += 1;
    }
    for (c, s) in centroids.iter_mut().zip(&sums) {
        if s.2 > 0 {
            *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
        }
    }

    // drop empty clusters and renumber
    let mut remap = vec![usize::MAX; k];
    let mut compact = Vec::new();
    for (i, s) in sums.iter().enumerate() {
        if s.2 > 0 {
            remap[i] = compact.len();
            compact.push(centroids[i]);
        }
    }
    for a in assignment.iter_mut() {
        *a = remap[*a];
    }
    let wss = points
        .iter()
        .zip(&assignment)
        .map(|(&p, &a)| dist2(p, compact[a]))
        .sum();
    (compact, assignment, wss)
}

/// Sweeps k = 1…min(k_max, n) and picks the first k after which WSS stops
/// dropping sharply; `k = min(k_max, n)` when it never flattens.
/// Drops are measured against `max(WSS(1), n · min_variance)`.
pub fn kmeans_elbow(points: &[(f64, f64)], params: &ElbowParams, seed: u64) -> Clustering {
    assert!(!points.is_empty(), "kmeans_elbow needs at least one point");
    let k_top = params.k_max.max(1).min(points.len());
    let runs: Vec<_> = (1..=k_top)
        .map(|k| kmeans_fixed_k(points, k, seed, params.max_iterations))
        .collect();
    let wss: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let denom = wss[0].max(points.len() as f64 * params.min_variance).max(1e-12);
    let mut chosen = k_top;
    for k in 1..k_top {
        if (wss[k - 1] - wss[k]) / denom < params.elbow_drop_threshold {
            chosen = k;
            break;
        }
    }
    let (centroids, assignment, _) = runs[chosen - 1].clone();
    Clustering {
        k: centroids.len(),
        centroids,
        assignment,
        wss_by_k: wss.iter().enumerate().map(|(i, &w)| (i + 1, w)).collect(),
    }
}
