//! Two-dimensional UMAP embedding of behavior vectors.
//!
//! The pipeline is exact k-nearest-neighbours, per-point bandwidth
//! calibration into a symmetric fuzzy graph, and a stochastic
//! attract/repel layout optimisation started from a PCA projection.
//! All randomness comes from a counter-based hash of
//! `(seed, epoch, edge, draw)`, so a run is reproducible bit for bit.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{eigendecompose, EigenError};
use crate::seed::{counter_hash, unit_interval as unit};

const SIGMA_LOWER: f64 = 1e-12;
const SIGMA_UPPER: f64 = 1e4;
const SIGMA_ITERATIONS: usize = 64;
const GRADIENT_CLIP: f64 = 4.0;
const INIT_EXTENT: f64 = 10.0;
const CURVE_SAMPLES: usize = 300;
const CURVE_RANGE: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("need more than {k} points for {k} neighbours, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("layout diverged (non-finite coordinate) in epoch {0}")]
    OptimizationDiverged(usize),
    #[error("invalid embedding config: {0}")]
    InvalidConfig(String),
    #[error("points have inconsistent dimensions")]
    RaggedPoints,
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact k nearest neighbours of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub k: usize,
    /// Neighbour indices per point, nearest first.
    pub indices: Vec<Vec<usize>>,
    /// Euclidean distances matching `indices`.
    pub distances: Vec<Vec<f64>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Brute-force kNN; equal distances are ordered by index. A point is never
/// its own neighbour, but exact duplicates are.
pub fn knn(points: &[Vec<f64>], k: usize) -> Result<NeighborGraph, EmbedError> {
    let n = points.len();
    if n <= k {
        return Err(EmbedError::TooFewPoints { n, k });
    }
    if points.iter().any(|p| p.len() != points[0].len()) {
        return Err(EmbedError::RaggedPoints);
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&points[i], &points[j]), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(d, j)| (j, d.sqrt())).unzip()
        })
        .collect();
    let (indices, distances) = rows.into_iter().unzip();
    Ok(NeighborGraph {
        k,
        indices,
        distances,
    })
}

/// Outcome of the bandwidth search for one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub rho: f64,
    /// `None` when every neighbour sits at distance zero.
    pub sigma: Option<f64>,
    /// `|sum_j exp(-max(0, d_j - rho) / sigma) - log2(k)|` at the solution.
    pub residual: f64,
}

fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    (-(d - rho).max(0.0) / sigma).exp()
}

pub fn calibrate_bandwidth(distances: &[f64], k: usize) -> Bandwidth {
    let Some(rho) = distances.iter().copied().filter(|&d| d > 0.0).reduce(f64::min) else {
        return Bandwidth {
            rho: 0.0,
            sigma: None,
            residual: 0.0,
        };
    };
    let target = (k as f64).log2();
    let total = |sigma: f64| distances.iter().map(|&d| membership(d, rho, sigma)).sum::<f64>();
    let (mut lo, mut hi) = (SIGMA_LOWER, SIGMA_UPPER);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..SIGMA_ITERATIONS {
        mid = 0.5 * (lo + hi);
        if total(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Bandwidth {
        rho,
        sigma: Some(mid),
        residual: (total(mid) - target).abs(),
    }
}

/// Symmetric fuzzy neighbourhood graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    pub bandwidths: Vec<Bandwidth>,
    /// Directed memberships `a_ij` for each point's neighbours.
    pub directed: Vec<Vec<(usize, f64)>>,
    /// Fuzzy-union weights keyed by `(i, j)` with `i < j`, all in `(0, 1]`.
    pub weights: BTreeMap<(usize, usize), f64>,
}

impl FuzzyGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.weights.get(&key).copied().unwrap_or(0.0)
    }

    pub fn directed_weight(&self, i: usize, j: usize) -> f64 {
        self.directed[i]
            .iter()
            .find(|(t, _)| *t == j)
            .map(|(_, a)| *a)
            .unwrap_or(0.0)
    }
}

/// Probabilistic t-conorm `a + b - ab`, arranged so rounding never drops
/// the result below `max(a, b)` or above 1.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    (hi + lo * (1.0 - hi)).min(1.0)
}

pub fn fuzzy_memberships(graph: &NeighborGraph) -> FuzzyGraph {
    let bandwidths: Vec<Bandwidth> = graph
        .distances
        .par_iter()
        .map(|d| calibrate_bandwidth(d, graph.k))
        .collect();
    let directed: Vec<Vec<(usize, f64)>> = graph
        .indices
        .iter()
        .zip(&graph.distances)
        .zip(&bandwidths)
        .map(|((idx, dist), bw)| {
            idx.iter()
                .zip(dist)
                .map(|(&j, &d)| {
                    let a = match bw.sigma {
                        Some(sigma) => membership(d, bw.rho, sigma),
                        None => 1.0,
                    };
                    (j, a)
                })
                .collect()
        })
        .collect();

    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (i, row) in directed.iter().enumerate() {
        for &(j, a) in row {
            if i < j {
                pairs.entry((i, j)).or_default().0 = a;
            } else {
                pairs.entry((j, i)).or_default().1 = a;
            }
        }
    }
    let weights = pairs
        .into_iter()
        .map(|(key, (a, b))| (key, fuzzy_union(a, b).min(1.0)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    FuzzyGraph {
        n: graph.len(),
        bandwidths,
        directed,
        weights,
    }
}

/// Least-squares fit of `1 / (1 + a d^(2b))` to the target membership curve
/// (1 up to `min_dist`, `exp(-(d - min_dist))` beyond) on `[0, 3]`.
pub fn fit_curve(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..CURVE_SAMPLES)
        .map(|i| CURVE_RANGE * i as f64 / (CURVE_SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x <= min_dist { 1.0 } else { (-(x - min_dist)).exp() })
        .collect();

    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    // Levenberg-Marquardt on (a, b)
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (da, db, r) = if x > 0.0 {
                let p = x.powf(2.0 * b);
                let f = 1.0 / (1.0 + a * p);
                let f2 = f * f;
                (-p * f2, -2.0 * a * p * x.ln() * f2, f - y)
            } else {
                (0.0, 0.0, 1.0 - y)
            };
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        jtj[1][0] = jtj[0][1];
        let mut improved = false;
        while lambda < 1e12 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            let step_a = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let step_b = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 { sse(na, nb) } else { f64::INFINITY };
            if new_cost < cost {
                let rel = (step_a.abs() / a.abs()).max(step_b.abs() / b.abs());
                a = na;
                b = nb;
                cost = new_cost;
                lambda = (lambda * 0.1).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub seed: u64,
    /// Kernel parameters `(a, b)`; fitted from `min_dist` when absent.
    pub curve: Option<(f64, f64)>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            n_neighbors: 15,
            min_dist: 0.1,
            epochs: 200,
            negative_samples: 5,
            seed: 0,
            curve: None,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.n_neighbors < 2 {
            return Err(EmbedError::InvalidConfig("n_neighbors must be at least 2".into()));
        }
        if !(self.min_dist > 0.0 && self.min_dist.is_finite()) {
            return Err(EmbedError::InvalidConfig("min_dist must be positive".into()));
        }
        if self.epochs < 1 {
            return Err(EmbedError::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn curve_params(&self) -> (f64, f64) {
        self.curve.unwrap_or_else(|| fit_curve(self.min_dist))
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Optimise a layout by stochastic gradient descent on the fuzzy
/// cross-entropy. Each epoch visits every directed edge, keeps it with
/// probability `w / max w`, pulls its endpoints together and pushes the head
/// away from `negative_samples` random points. The learning rate falls
/// linearly from 1 towards 0.
pub fn optimize_layout(
    fuzzy: &FuzzyGraph,
    cfg: &EmbedConfig,
    init: &[[f64; 2]],
) -> Result<Vec<[f64; 2]>, EmbedError> {
    if init.len() != fuzzy.n {
        return Err(EmbedError::InvalidConfig(format!(
            "{} initial positions for {} points",
            init.len(),
            fuzzy.n
        )));
    }
    if init.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EmbedError::OptimizationDiverged(0));
    }
    let mut y = init.to_vec();
    if cfg.epochs == 0 || fuzzy.weights.is_empty() {
        return Ok(y);
    }
    let (a, b) = cfg.curve_params();
    let n = fuzzy.n as u64;

    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * fuzzy.weights.len());
    for (&(i, j), &w) in &fuzzy.weights {
        edges.push((i, j, w));
        edges.push((j, i, w));
    }
    edges.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    let w_max = edges.iter().map(|e| e.2).fold(0.0, f64::max);

    for epoch in 0..cfg.epochs {
        let alpha = 1.0 - epoch as f64 / cfg.epochs as f64;
        for (e, &(head, tail, w)) in edges.iter().enumerate() {
            let (ep, eu) = (epoch as u64, e as u64);
            if unit(counter_hash(cfg.seed, ep, eu, 0)) >= w / w_max {
                continue;
            }

            let dx = y[head][0] - y[tail][0];
            let dy = y[head][1] - y[tail][1];
            let d2 = dx * dx + dy * dy;
            if d2 > 0.0 {
                let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
                let gx = clip(coeff * dx) * alpha;
                let gy = clip(coeff * dy) * alpha;
                y[head][0] += gx;
                y[head][1] += gy;
                y[tail][0] -= gx;
                y[tail][1] -= gy;
            }

            for s in 0..cfg.negative_samples {
                let other = (counter_hash(cfg.seed, ep, eu, s as u64 + 1) % n) as usize;
                if other == head {
                    continue;
                }
                let dx = y[head][0] - y[other][0];
                let dy = y[head][1] - y[other][1];
                let d2 = dx * dx + dy * dy;
                if d2 > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)));
                    y[head][0] += clip(coeff * dx) * alpha;
                    y[head][1] += clip(coeff * dy) * alpha;
                }
            }
        }
        if y.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EmbedError::OptimizationDiverged(epoch));
        }
    }
    Ok(y)
}

/// Projection on the first two principal components, each axis rescaled to
/// `[-10, 10]`. Constant axes map to 0.
pub fn pca_init(points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, EmbedError> {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    let data = DMatrix::from_fn(n, dim, |i, j| points[i][j]);
    let mean = crate::eigen::mean_behavior(&data);
    let cov = crate::eigen::covariance(&data, &mean);
    let eig = eigendecompose(&cov)?;

    let mut coords = vec![[0.0; 2]; n];
    for axis in 0..2.min(dim) {
        let v = eig.vectors.column(axis);
        let proj: Vec<f64> = (0..n)
            .map(|i| (0..dim).map(|j| (data[(i, j)] - mean[j]) * v[j]).sum())
            .collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            for (c, p) in coords.iter_mut().zip(&proj) {
                c[axis] = -INIT_EXTENT + 2.0 * INIT_EXTENT * (p - lo) / (hi - lo);
            }
        }
    }
    Ok(coords)
}

/// Order points lexicographically by coordinates (ties by input index).
fn canonical_order(points: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    order
}

/// Full embedding: kNN, fuzzy graph, PCA initialisation and layout
/// optimisation. Points are processed in a canonical order so the result
/// does not depend on input order; the output follows the input order.
pub fn embed(points: &[Vec<f64>], cfg: &EmbedConfig) -> Result<Vec<[f64; 2]>, EmbedError> {
    cfg.validate()?;
    if points.len() <= cfg.n_neighbors {
        return Err(EmbedError::TooFewPoints {
            n: points.len(),
            k: cfg.n_neighbors,
        });
    }
    let order = canonical_order(points);
    let canonical: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
    let graph = knn(&canonical, cfg.n_neighbors)?;
    let fuzzy = fuzzy_memberships(&graph);
    let init = pca_init(&canonical)?;
    let layout = optimize_layout(&fuzzy, cfg, &init)?;

    let mut out = vec![[0.0; 2]; points.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = layout[pos];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub building_ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
}

impl Embedding {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["building_id", "x", "y"])?;
        for (id, c) in self.building_ids.iter().zip(&self.coords) {
            w.write_record([id.clone(), c[0].to_string(), c[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut building_ids = Vec::new();
        let mut coords = Vec::new();
        for rec in r.deserialize::<(String, f64, f64)>() {
            let (id, x, y) = rec?;
            building_ids.push(id);
            coords.push([x, y]);
        }
        Ok(Embedding {
            building_ids,
            coords,
        })
    }
}
