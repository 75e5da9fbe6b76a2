//! k-means encoder over the normalized grid.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cardinality, enumerate_grid, sample_grid_point, ContextVector, DEFAULT_ENUMERATION_CAP};
use crate::seed::{rng_for, Stream};
use crate::{Error, Result};

pub const ENCODER_FORMAT_VERSION: u32 = 1;

/// Index of the nearest centroid, `0 <= code < k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EncodedContext(pub usize);

impl EncodedContext {
    pub fn code(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub enumeration_cap: u64,
    pub max_iterations: usize,
    /// Uniform grid draws used when the grid is larger than the cap.
    pub samples: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            max_iterations: 300,
            samples: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    version: u32,
    d: usize,
    q: u32,
    k: usize,
    centroids: Vec<Vec<f64>>,
    /// Points (grid points, or samples when the grid was too large) held by
    /// the least-populated centroid.
    min_cluster_size: u64,
    cluster_sizes: Vec<u64>,
    /// True when `cluster_sizes` counts every grid point.
    exhaustive: bool,
    seed: u64,
    converged: bool,
    iterations: usize,
}

impl EncoderModel {
    /// Wraps hand-picked centroids. Cluster sizes are computed over the full
    /// grid, which must fit under `cap`.
    pub fn from_centroids(centroids: Vec<Vec<f64>>, q: u32, cap: u64) -> Result<Self> {
        let k = centroids.len();
        let d = centroids.first().map(Vec::len).unwrap_or(0);
        if k == 0 || d == 0 {
            return Err(Error::domain("an encoder needs at least one non-empty centroid"));
        }
        if let Some(c) = centroids.iter().find(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.len(),
            });
        }
        if centroids.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain("centroid entries must lie in [0, 1]"));
        }
        let flat: Vec<f64> = centroids.iter().flatten().copied().collect();
        let points = grid_points(d, q, cap)?;
        let sizes = cluster_sizes(&points, &flat, d, k);
        Ok(Self {
            version: ENCODER_FORMAT_VERSION,
            d,
            q,
            k,
            centroids,
            min_cluster_size: sizes.iter().copied().min().unwrap_or(0),
            cluster_sizes: sizes,
            exhaustive: true,
            seed: 0,
            converged: true,
            iterations: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn min_cluster_size(&self) -> u64 {
        self.min_cluster_size
    }

    pub fn cluster_sizes(&self) -> &[u64] {
        &self.cluster_sizes
    }

    pub fn exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Nearest-centroid code for a raw `f64` context.
    pub fn encode_slice(&self, x: &[f64]) -> Result<EncodedContext> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (j, c) in self.centroids.iter().enumerate() {
            let dist = squared_distance(x, c);
            if dist < best_dist {
                best = j;
                best_dist = dist;
            }
        }
        Ok(EncodedContext(best))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.version != ENCODER_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported encoder format version {}",
                model.version
            )));
        }
        if model.centroids.len() != model.k || model.centroids.iter().any(|c| c.len() != model.d) {
            return Err(Error::Parse("encoder centroids do not match (k, d)".into()));
        }
        Ok(model)
    }
}

/// Maps `x` to the index of its Euclidean-nearest centroid, lowest index on ties.
pub fn encode(model: &EncoderModel, x: &ContextVector) -> Result<EncodedContext> {
    model.encode_slice(&x.to_f64())
}

/// Trains a k-means encoder with default options.
pub fn train_encoder(d: usize, q: u32, k: usize, samples: usize, seed: u64) -> Result<EncoderModel> {
    train_encoder_with(
        d,
        q,
        k,
        seed,
        &TrainOptions {
            samples,
            ..TrainOptions::default()
        },
    )
}

/// Lloyd's k-means with k-means++ seeding over the normalized grid. The full
/// grid is used when it fits under the enumeration cap; otherwise
/// `options.samples` uniform grid draws stand in for it.
pub fn train_encoder_with(d: usize, q: u32, k: usize, seed: u64, options: &TrainOptions) -> Result<EncoderModel> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let n = cardinality(d, q)?;
    if num_bigint::BigUint::from(k) > n {
        return Err(Error::domain(format!(
            "k = {k} exceeds the number of distinct contexts n = C(10^q + d - 1, d - 1) = {n} for d={d}, q={q}"
        )));
    }
    let mut rng = rng_for(seed, Stream::Encoder, 0);
    let exhaustive = n <= num_bigint::BigUint::from(options.enumeration_cap);
    let points = if exhaustive {
        grid_points(d, q, options.enumeration_cap)?
    } else {
        if options.samples < k {
            return Err(Error::domain(format!(
                "{} samples cannot seed {k} clusters",
                options.samples
            )));
        }
        let mut pts = Vec::with_capacity(options.samples * d);
        for _ in 0..options.samples {
            pts.extend(sample_grid_point(d, q, &mut rng)?.to_f64());
        }
        pts
    };

    let mut centroids = kmeans_plus_plus(&points, d, k, &mut rng);
    let (iterations, converged) = lloyd(&points, &mut centroids, d, k, options.max_iterations);
    let sizes = cluster_sizes(&points, &centroids, d, k);

    Ok(EncoderModel {
        version: ENCODER_FORMAT_VERSION,
        d,
        q,
        k,
        centroids: centroids.chunks(d).map(<[f64]>::to_vec).collect(),
        min_cluster_size: sizes.iter().copied().min().unwrap_or(0),
        cluster_sizes: sizes,
        exhaustive,
        seed,
        converged,
        iterations,
    })
}

fn grid_points(d: usize, q: u32, cap: u64) -> Result<Vec<f64>> {
    Ok(enumerate_grid(d, q, cap)?.flat_map(|c| c.to_f64()).collect())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks(d).enumerate() {
        let dist = squared_distance(point, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn assign(points: &[f64], centroids: &[f64], d: usize) -> Vec<(usize, f64)> {
    points
        .par_chunks(d)
        .map(|p| nearest(p, centroids, d))
        .collect()
}

fn cluster_sizes(points: &[f64], centroids: &[f64], d: usize, k: usize) -> Vec<u64> {
    let mut sizes = vec![0u64; k];
    for (j, _) in assign(points, centroids, d) {
        sizes[j] += 1;
    }
    sizes
}

fn kmeans_plus_plus<R: Rng>(points: &[f64], d: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len() / d;
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&points[first * d..(first + 1) * d]);
    let mut dist2: Vec<f64> = points
        .chunks(d)
        .map(|p| squared_distance(p, &centroids[..d]))
        .collect();

    for _ in 1..k {
        let total: f64 = dist2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in dist2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Only reachable with duplicate points; fall back to a uniform draw.
            rng.random_range(0..n)
        };
        let c = &points[chosen * d..(chosen + 1) * d];
        for (w, p) in dist2.iter_mut().zip(points.chunks(d)) {
            *w = w.min(squared_distance(p, c));
        }
        centroids.extend_from_slice(c);
    }
    centroids
}

/// Returns `(iterations, converged)`.
fn lloyd(points: &[f64], centroids: &mut [f64], d: usize, k: usize, max_iterations: usize) -> (usize, bool) {
    let mut previous: Option<Vec<usize>> = None;
    for iteration in 0..max_iterations {
        let assignment = assign(points, centroids, d);
        let labels: Vec<usize> = assignment.iter().map(|&(j, _)| j).collect();
        if previous.as_ref() == Some(&labels) {
            return (iteration, true);
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.chunks(d).zip(&labels) {
            counts[j] += 1;
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(p) {
                *s += v;
            }
        }

        // Empty clusters take over the points farthest from their centroids.
        let mut far: Vec<usize> = (0..labels.len()).collect();
        far.sort_by(|&a, &b| assignment[b].1.total_cmp(&assignment[a].1).then(a.cmp(&b)));
        let mut donors = far.into_iter();
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j * d..(j + 1) * d].iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                    *c = s / counts[j] as f64;
                }
            } else if let Some(i) = donors.next() {
                centroids[j * d..(j + 1) * d].copy_from_slice(&points[i * d..(i + 1) * d]);
            }
        }
        previous = Some(labels);
    }
    (max_iterations, false)
}
