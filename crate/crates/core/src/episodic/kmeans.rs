//! Deterministic seeded k-means for prototype selection.
//!
//! k-means++ initialization with a fixed RNG seed, Lloyd iterations until
//! assignments stabilize, ascending-index tie-breaks everywhere. Small n,
//! exact arithmetic in f64; reproducibility matters more than speed here.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::episodic::{ConsolidationState, EpisodicNode};
use crate::util::sq_dist_f64;

const MAX_ITERS: usize = 100;

/// Index of the nearest centroid; ties resolve to the lowest index.
fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist_f64(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// k-means++ seeding. When every remaining point has zero distance to the
/// chosen centers (duplicate-heavy inputs), fall back to the lowest-index
/// point that differs from all current centers, or reuse point 0.
fn init_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist_f64(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            centroids.push(points[chosen].clone());
        } else {
            let fresh = points
                .iter()
                .position(|p| centroids.iter().all(|c| c != p))
                .unwrap_or(0);
            centroids.push(points[fresh].clone());
        }
    }
    centroids
}

/// Seeded k-means. Returns centroids and per-point assignments. Empty
/// clusters keep their previous centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(!points.is_empty());
    let k = k.clamp(1, points.len());
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_centroids(points, k, &mut rng);
    let mut assignments: Vec<usize> = points
        .iter()
        .map(|p| nearest_centroid(p, &centroids))
        .collect();

    for _ in 0..MAX_ITERS {
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(assignments.iter()) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for (c, (sum, &count)) in centroids.iter_mut().zip(sums.iter().zip(counts.iter())) {
            if count > 0 {
                *c = sum.iter().map(|s| s / count as f64).collect();
            }
        }
        let next: Vec<usize> = points
            .iter()
            .map(|p| nearest_centroid(p, &centroids))
            .collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    (centroids, assignments)
}

/// Cluster node representations and flag one prototype per non-empty
/// cluster: the node nearest its centroid, ascending index on ties.
///
/// `k` defaults to ceil(sqrt(n)) and clamps to `[1, n]`. Returns the full
/// stream with prototype flags set.
pub fn cluster_prototypes(
    state: &ConsolidationState,
    k: Option<usize>,
    seed: u64,
) -> Vec<EpisodicNode> {
    let n = state.stream.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k
        .filter(|&k| k > 0)
        .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
        .clamp(1, n);
    let points: Vec<Vec<f64>> = state
        .stream
        .iter()
        .map(|node| node.representation.clone())
        .collect();
    let (centroids, assignments) = kmeans(&points, k, seed);

    let mut nodes: Vec<EpisodicNode> = state.stream.clone();
    for node in &mut nodes {
        node.is_prototype = false;
    }
    for (cluster, centroid) in centroids.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (i, point) in points.iter().enumerate() {
            if assignments[i] != cluster {
                continue;
            }
            let d = sq_dist_f64(point, centroid);
            let better = match best {
                None => true,
                Some((_, bd)) => d < bd,
            };
            if better {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            nodes[i].is_prototype = true;
        }
    }
    nodes
}
