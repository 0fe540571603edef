//! Retrieval, clustering and verification metrics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{euclidean, Embeddings};
use crate::error::{Error, Result};

/// Fraction of queries with a same-label example among their `k` nearest
/// neighbours (self excluded). Equal distances are ordered by index.
pub fn recall_at_k(embeddings: &Embeddings, labels: &[usize], ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let n = embeddings.len();
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if n < 2 {
        return Err(Error::KOutOfRange { k: 1, n });
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= n) {
        return Err(Error::KOutOfRange { k, n });
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    // First rank (1-based) at which a same-label neighbour shows up.
    let mut first_hit = Vec::with_capacity(n);
    for q in 0..n {
        let mut order: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != q)
            .map(|j| (euclidean(embeddings.row(q), embeddings.row(j)), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let hit = order
            .iter()
            .take(max_k)
            .position(|&(_, j)| labels[j] == labels[q])
            .map(|r| r + 1);
        first_hit.push(hit);
    }
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = first_hit.iter().filter(|h| matches!(h, Some(r) if *r <= k)).count();
            (k, hits as f64 / n as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every Lloyd iteration.
    pub history: Vec<f64>,
}

pub const KMEANS_MAX_ITER: usize = 300;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing (or [`KMEANS_MAX_ITER`]). An empty cluster is re-seeded at the
/// point farthest from its current centroid.
pub fn kmeans(points: &Embeddings, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points.row(rng.random_range(0..n)).to_vec());
    let mut d2: Vec<f64> = points.rows().map(|p| sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining points coincide with a centroid.
            rng.random_range(0..n)
        };
        centroids.push(points.row(next).to_vec());
        for (i, p) in points.rows().enumerate() {
            d2[i] = d2[i].min(sq(p, centroids.last().unwrap()));
        }
    }

    let mut assignment: Vec<usize> = points.rows().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        // Update step.
        let dim = points.dim();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().enumerate() {
            counts[assignment[i]] += 1;
            sums[assignment[i]].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| (i, sq(points.row(i), &centroids[assignment[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                centroids[c] = points.row(far).to_vec();
                counts[assignment[far]] -= 1;
                assignment[far] = c;
                counts[c] = 1;
            }
        }
        // Assignment step.
        let next: Vec<usize> = points.rows().map(|p| nearest(p, &centroids).0).collect();
        let objective = objective_of(points, &next, &centroids);
        history.push(objective);
        let stable = next == assignment;
        assignment = next;
        if stable {
            break;
        }
    }
    let objective = objective_of(points, &assignment, &centroids);
    Ok(KMeansResult {
        assignment,
        centroids,
        objective,
        iterations,
        history,
    })
}

fn objective_of(points: &Embeddings, assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.rows().zip(assignment).map(|(p, &c)| sq(p, &centroids[c])).sum()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(A, B) / √(H(A) H(B))`, taken as 0 when either entropy vanishes.
pub fn nmi(assignment: &[usize], truth: &[usize]) -> Result<f64> {
    if assignment.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: truth.len(),
            found: assignment.len(),
        });
    }
    if assignment.is_empty() {
        return Ok(0.0);
    }
    let n = assignment.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&a, &b) in assignment.iter().zip(truth) {
        *joint.entry((a, b)).or_default() += 1;
        *ca.entry(a).or_default() += 1;
        *cb.entry(b).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| {
            let pab = c as f64 / n;
            pab * (pab * n * n / (ca[&a] as f64 * cb[&b] as f64)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Accuracy of "same iff `distance < threshold`".
pub fn verification_accuracy(distances: &[f64], same: &[bool], threshold: f64) -> f64 {
    let correct = distances
        .iter()
        .zip(same)
        .filter(|(&d, &s)| (d < threshold) == s)
        .count();
    correct as f64 / distances.len().max(1) as f64
}

/// Chooses the midpoint between consecutive distinct sorted distances that
/// maximizes verification accuracy; ties go to the smallest threshold. With
/// a single distinct distance the only candidate is that distance itself.
pub fn verification_threshold(distances: &[f64], same: &[bool]) -> Result<(f64, f64)> {
    if distances.len() != same.len() {
        return Err(Error::ShapeMismatch {
            expected: distances.len(),
            found: same.len(),
        });
    }
    if !same.iter().any(|&s| s) || same.iter().all(|&s| s) {
        return Err(Error::param("same", "need at least one pair of each kind"));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    let positives = same.iter().filter(|&&s| s).count();
    // Sweep: below the first candidate everything is predicted "different".
    let mut correct = same.len() - positives;
    let mut best: Option<(f64, usize)> = None;
    let mut k = 0;
    while k < order.len() {
        let d = distances[order[k]];
        while k < order.len() && distances[order[k]] == d {
            if same[order[k]] {
                correct += 1;
            } else {
                correct -= 1;
            }
            k += 1;
        }
        if k < order.len() {
            let t = 0.5 * (d + distances[order[k]]);
            if best.is_none_or(|(_, c)| correct > c) {
                best = Some((t, correct));
            }
        }
    }
    Ok(match best {
        Some((t, c)) => (t, c as f64 / same.len() as f64),
        None => {
            let t = distances[order[0]];
            (t, verification_accuracy(distances, same, t))
        }
    })
}

/// Mean held-out accuracy when each fold's threshold is chosen on the
/// remaining folds. Folds are contiguous blocks of the input order.
pub fn kfold_verification(distances: &[f64], same: &[bool], folds: usize) -> Result<f64> {
    if folds < 2 || folds > distances.len() {
        return Err(Error::param(
            "folds",
            format!("need 2..={} folds, got {folds}", distances.len()),
        ));
    }
    let n = distances.len();
    let mut total = 0.0;
    for f in 0..folds {
        let lo = f * n / folds;
        let hi = (f + 1) * n / folds;
        let (mut td, mut ts) = (Vec::new(), Vec::new());
        for i in (0..lo).chain(hi..n) {
            td.push(distances[i]);
            ts.push(same[i]);
        }
        let (t, _) = verification_threshold(&td, &ts)?;
        total += verification_accuracy(&distances[lo..hi], &same[lo..hi], t);
    }
    Ok(total / folds as f64)
}

/// All unordered pairs of `embeddings` as (distance, same-label) lists.
pub fn pair_distances(embeddings: &Embeddings, labels: &[usize]) -> (Vec<f64>, Vec<bool>) {
    let n = embeddings.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut s = Vec::with_capacity(d.capacity());
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(embeddings.distance(i, j));
            s.push(labels[i] == labels[j]);
        }
    }
    (d, s)
}

/// Mean distance over all unordered pairs; the collapse statistic.
pub fn embedding_spread(embeddings: &Embeddings) -> f64 {
    let n = embeddings.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += embeddings.distance(i, j);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub iterations: usize,
    pub mean_loss: f64,
    pub spread: f64,
    pub recall: BTreeMap<usize, f64>,
    pub nmi: f64,
    pub threshold: f64,
    pub verification_accuracy: f64,
    pub beta0: f64,
    pub semihard_fallbacks: usize,
    pub degenerate_pairs: usize,
}

impl EpochRecord {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<EpochRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: EpochRecord) {
        self.records.push(r);
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Epoch with the highest smallest-k recall; earliest wins ties.
    pub fn best(&self) -> Option<&EpochRecord> {
        let key = |r: &EpochRecord| r.recall.values().next().copied().unwrap_or(0.0);
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if key(b) >= key(r) => Some(b),
                _ => Some(r),
            })
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}
