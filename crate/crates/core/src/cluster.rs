//! k-means profiling of embedded buildings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::counter_hash;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("need at least {k} points for {k} clusters, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("invalid k-means config: {0}")]
    InvalidConfig(String),
    #[error("points have inconsistent dimensions")]
    RaggedPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 6,
            restarts: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each Lloyd update of the winning restart.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(point, &centroids[0]);
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Nearest-centroid labels; equidistant points go to the smaller index.
pub fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids)).collect()
}

pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Recompute centroids as member means. An empty cluster takes over the
/// point farthest from its own centroid among clusters with more than one
/// member.
fn update_centroids(points: &[Vec<f64>], labels: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let means = |labels: &[usize]| {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(labels.iter()) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            if c > 0 {
                s.iter_mut().for_each(|x| *x /= c as f64);
            }
        }
        (sums, counts)
    };

    let (mut centroids, mut counts) = means(labels);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] > 1 {
                let d = sq_dist(p, &centroids[labels[i]]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let Some(i) = far else { break };
        labels[i] = empty;
        let recomputed = means(labels);
        centroids = recomputed.0;
        counts = recomputed.1;
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansModel {
    let k = centroids.len();
    let mut labels = assign(points, &centroids);
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        centroids = update_centroids(points, &mut labels, k);
        history.push(inertia(points, &centroids, &labels));
        let next = assign(points, &centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    KMeansModel {
        k,
        inertia: inertia(points, &centroids, &labels),
        centroids,
        labels,
        iterations,
        inertia_history: history,
    }
}

/// k-means with k-means++ seeding, keeping the restart with the lowest
/// inertia (earliest restart on ties).
pub fn kmeans_fit(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansModel, ClusterError> {
    if cfg.k == 0 || cfg.restarts == 0 || cfg.max_iter == 0 {
        return Err(ClusterError::InvalidConfig(
            "k, restarts and max_iter must be positive".into(),
        ));
    }
    if points.len() < cfg.k {
        return Err(ClusterError::TooFewPoints {
            n: points.len(),
            k: cfg.k,
        });
    }
    if points.iter().any(|p| p.len() != points[0].len()) {
        return Err(ClusterError::RaggedPoints);
    }
    let runs: Vec<KMeansModel> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(counter_hash(cfg.seed, r as u64, 0, 0));
            let init = kmeans_plus_plus(points, cfg.k, &mut rng);
            lloyd(points, init, cfg.max_iter)
        })
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.inertia.total_cmp(&b.inertia).then(ia.cmp(ib)))
        .map(|(_, m)| m)
        .expect("at least one restart");
    Ok(best)
}

/// Inertia of the best fit for each `k` in `ks` (values above the point
/// count are skipped).
pub fn elbow(
    points: &[Vec<f64>],
    ks: impl IntoIterator<Item = usize>,
    base: &KMeansConfig,
) -> Result<Vec<(usize, f64)>, ClusterError> {
    ks.into_iter()
        .filter(|&k| k >= 1 && k <= points.len())
        .map(|k| {
            let cfg = KMeansConfig { k, ..base.clone() };
            kmeans_fit(points, &cfg).map(|m| (k, m.inertia))
        })
        .collect()
}

/// One behavior profile: a cluster's members and their coordinate-wise
/// median eigenbehavior.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSummary {
    pub profile_id: String,
    pub cluster: usize,
    pub members: Vec<String>,
    pub median_eigenbehavior: Vec<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Profiles named `P1..Pk` by descending member count, ties broken by the
/// smaller centroid x-coordinate. Clusters without members are omitted.
pub fn summarize_profiles(
    labels: &[usize],
    building_ids: &[String],
    eigenbehaviors: &[Vec<f64>],
    centroids: &[Vec<f64>],
) -> Vec<ProfileSummary> {
    let k = centroids.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut order: Vec<usize> = (0..k).filter(|&c| !members[c].is_empty()).collect();
    order.sort_by(|&a, &b| {
        members[b]
            .len()
            .cmp(&members[a].len())
            .then(centroids[a][0].total_cmp(&centroids[b][0]))
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(rank, c)| {
            let dim = eigenbehaviors[members[c][0]].len();
            let median_eigenbehavior = (0..dim)
                .map(|j| {
                    let mut col: Vec<f64> = members[c].iter().map(|&i| eigenbehaviors[i][j]).collect();
                    median(&mut col)
                })
                .collect();
            ProfileSummary {
                profile_id: format!("P{}", rank + 1),
                cluster: c,
                members: members[c].iter().map(|&i| building_ids[i].clone()).collect(),
                median_eigenbehavior,
            }
        })
        .collect()
}

/// Fraction of points whose cluster's majority truth label equals their own.
pub fn purity(labels: &[usize], truth: &[usize]) -> f64 {
    use std::collections::BTreeMap;
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&l, &t) in labels.iter().zip(truth) {
        *table.entry(l).or_default().entry(t).or_default() += 1;
    }
    let agree: usize = table
        .values()
        .map(|counts| counts.values().copied().max().unwrap_or(0))
        .sum();
    agree as f64 / labels.len().max(1) as f64
}
