//! Monte-Carlo experiments on the unit sphere and on trained embeddings.
//!
//! Every entry point takes an explicit seed. Work split across grid points
//! uses one ChaCha stream per point, so results do not depend on thread
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::embedding::{euclidean, normalize, DistanceMatrix, Embeddings};
use crate::error::{Error, Result};
use crate::eval::verification_threshold;
use crate::geometry::SphereDensity;
use crate::losses::LossKind;
use crate::sampling::{Batch, Sampler, SamplerKind};
use crate::train::{embed_dataset, train_with_observer, TrainConfig, TrainEvent};

/// Plot-ready numeric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Comma-separated with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if normalize(&mut v) > 1e-12 {
            return v;
        }
    }
}

/// `count` i.i.d. uniform points on `S^{dim-1}` (normalized Gaussians).
pub fn uniform_sphere_points<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Result<Embeddings> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    let mut data = Vec::with_capacity(dim * count);
    for _ in 0..count {
        data.extend(gaussian_unit(dim, rng));
    }
    Embeddings::new(dim, data)
}

/// `lo, lo + step, ..` up to and including `hi` (within rounding).
pub fn distance_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| lo + step * k as f64).collect()
}

/// Normalized density per dimension, one column `n<dim>` each.
pub fn density_curve(dims: &[usize], grid: &[f64]) -> Result<Table> {
    if let Some(d) = grid.iter().find(|d| !(0.0..=2.0).contains(*d)) {
        return Err(Error::param("grid", format!("distance {d} outside [0, 2]")));
    }
    let densities = dims
        .iter()
        .map(|&n| SphereDensity::new(n))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["d".to_string()];
    columns.extend(dims.iter().map(|n| format!("n{n}")));
    let rows = grid
        .iter()
        .map(|&d| {
            std::iter::once(d)
                .chain(densities.iter().map(|sd| sd.density(d)))
                .collect()
        })
        .collect();
    Ok(Table { columns, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Noise on both endpoints, each re-projected onto the sphere.
    Reproject,
    /// Noise added to the difference vector, no re-projection.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceConfig {
    pub dim: usize,
    pub sigma: f64,
    pub replicates: usize,
    pub mode: NoiseMode,
    pub seed: u64,
}

/// Trace of the covariance of the noisy gradient direction `h / ‖h‖` for two
/// unit vectors at each grid distance. For unit vectors this is
/// `1 - ‖mean direction‖²`.
///
/// Columns: `d`, `statistic`, `redrawn` (replicates discarded because the
/// perturbed difference vanished).
pub fn gradient_variance_curve(cfg: &VarianceConfig, grid: &[f64]) -> Result<Table> {
    if !(cfg.sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {}", cfg.sigma)));
    }
    if cfg.replicates == 0 {
        return Err(Error::param("replicates", "need at least one replicate"));
    }
    if cfg.dim < 2 {
        return Err(Error::InvalidDimension { dim: cfg.dim, min: 2 });
    }
    if let Some(d) = grid.iter().find(|d| !(0.0..2.0).contains(*d)) {
        return Err(Error::param("grid", format!("distance {d} outside [0, 2)")));
    }
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(k, &d)| {
            let mut rng = stream(cfg.seed, k as u64);
            let (stat, redrawn) = variance_at(cfg, d, &mut rng);
            vec![d, stat, redrawn as f64]
        })
        .collect();
    Ok(Table {
        columns: vec!["d".into(), "statistic".into(), "redrawn".into()],
        rows,
    })
}

fn variance_at<R: Rng + ?Sized>(cfg: &VarianceConfig, d: f64, rng: &mut R) -> (f64, usize) {
    let n = cfg.dim;
    // a = e1, b at distance d in the (e1, e2) plane.
    let mut a = vec![0.0; n];
    a[0] = 1.0;
    let mut b = vec![0.0; n];
    b[0] = 1.0 - 0.5 * d * d;
    b[1] = d * (1.0 - 0.25 * d * d).max(0.0).sqrt();

    let mut mean = vec![0.0; n];
    let mut redrawn = 0;
    let mut h = vec![0.0; n];
    let mut accepted = 0;
    while accepted < cfg.replicates {
        match cfg.mode {
            NoiseMode::Reproject => {
                let mut pa: Vec<f64> = a
                    .iter()
                    .map(|x| x + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut pb: Vec<f64> = b
                    .iter()
                    .map(|x| x + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                normalize(&mut pa);
                normalize(&mut pb);
                h.iter_mut().zip(pa.iter().zip(&pb)).for_each(|(h, (x, y))| *h = x - y);
            }
            NoiseMode::Raw => {
                for k in 0..n {
                    h[k] = a[k] - b[k] + cfg.sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let len = normalize(&mut h);
        if len < 1e-12 {
            redrawn += 1;
            continue;
        }
        mean.iter_mut().zip(&h).for_each(|(m, g)| *m += g);
        accepted += 1;
    }
    let r = cfg.replicates as f64;
    let mean_sq: f64 = mean.iter().map(|m| (m / r) * (m / r)).sum();
    ((1.0 - mean_sq).clamp(0.0, 1.0), redrawn)
}

/// Distance histogram with fixed-width bins over `[0, 2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub const DEFAULT_BIN_WIDTH: f64 = 0.02;

    pub fn new(bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width <= 2.0) {
            return Err(Error::param(
                "bin_width",
                format!("must lie in (0, 2], got {bin_width}"),
            ));
        }
        let bins = (2.0 / bin_width).round().max(1.0) as usize;
        Ok(Self {
            bin_width: 2.0 / bins as f64,
            counts: vec![0; bins],
        })
    }

    pub fn add(&mut self, d: f64) {
        let k = ((d / self.bin_width).floor().max(0.0) as usize).min(self.counts.len() - 1);
        self.counts[k] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin masses summing to 1 (all zero for an empty histogram).
    pub fn mass(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Shannon entropy of the bin masses (nats).
    pub fn entropy(&self) -> f64 {
        self.mass().iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
    }

    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.mass()
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let left = *k as f64 * self.bin_width;
                left >= lo - 1e-12 && left + self.bin_width <= hi + 1e-12
            })
            .map(|(_, m)| m)
            .sum()
    }

    /// Columns: `bin_lo`, `bin_hi`, `count`, `mass`.
    pub fn to_table(&self) -> Table {
        let mass = self.mass();
        Table {
            columns: vec!["bin_lo".into(), "bin_hi".into(), "count".into(), "mass".into()],
            rows: self
                .counts
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let lo = k as f64 * self.bin_width;
                    vec![lo, lo + self.bin_width, c as f64, mass[k]]
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerHistConfig {
    pub strategy: SamplerKind,
    pub dim: usize,
    pub batch_size: usize,
    pub per_class: usize,
    pub draws: usize,
    pub bin_width: f64,
    pub seed: u64,
}

/// A fixed uniform-sphere batch with labels `i / per_class`.
#[derive(Debug, Clone)]
pub struct SphereBatch {
    pub points: Embeddings,
    pub batch: Batch,
    pub dist: DistanceMatrix,
}

impl SphereBatch {
    pub fn new<R: Rng + ?Sized>(dim: usize, batch_size: usize, per_class: usize, rng: &mut R) -> Result<Self> {
        let points = uniform_sphere_points(dim, batch_size, rng)?;
        let batch = Batch::new(
            (0..batch_size).collect(),
            (0..batch_size).map(|i| i / per_class.max(1)).collect(),
            per_class,
        )?;
        let dist = points.pairwise();
        Ok(Self { points, batch, dist })
    }

    /// Distances of all different-label pairs (each unordered pair once).
    pub fn negative_distances(&self) -> Vec<f64> {
        let n = self.batch.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.batch.labels[i] != self.batch.labels[j] {
                    out.push(self.dist.get(i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SamplerDraws {
    pub distances: Vec<f64>,
    pub histogram: Histogram,
    pub sphere: SphereBatch,
}

/// Repeatedly picks a random anchor on a fixed uniform-sphere batch and
/// records the anchor–negative distance chosen by `strategy`. Semi-hard
/// uses the distance to a random positive of the anchor as its reference.
pub fn sampler_histogram(cfg: &SamplerHistConfig) -> Result<SamplerDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sphere = SphereBatch::new(cfg.dim, cfg.batch_size, cfg.per_class, &mut rng)?;
    if sphere.batch.num_classes() < 2 {
        return Err(Error::Capacity("sampler histogram needs at least two classes".into()));
    }
    let sampler = Sampler::new(cfg.strategy, cfg.dim)?;
    let mut histogram = Histogram::new(cfg.bin_width)?;
    let mut distances = Vec::with_capacity(cfg.draws);
    let n = sphere.batch.len();
    for _ in 0..cfg.draws {
        let a = rng.random_range(0..n);
        let d_ap = if cfg.per_class > 1 {
            let peers: Vec<usize> = (0..n)
                .filter(|&j| j != a && sphere.batch.labels[j] == sphere.batch.labels[a])
                .collect();
            sphere.dist.get(a, peers[rng.random_range(0..peers.len())])
        } else {
            sampler.pair_floor
        };
        let pick = sampler.draw(&sphere.dist, &sphere.batch, a, d_ap, &mut rng)?;
        let d = sphere.dist.get(a, pick.index);
        histogram.add(d);
        distances.push(d);
    }
    Ok(SamplerDraws {
        distances,
        histogram,
        sphere,
    })
}

/// Histogram of all different-label pair distances.
pub fn pairwise_histogram(embeddings: &Embeddings, labels: &[usize], bin_width: f64) -> Result<Histogram> {
    if embeddings.len() < 2 {
        return Err(Error::param("embeddings", "need at least two examples"));
    }
    if labels.len() != embeddings.len() {
        return Err(Error::ShapeMismatch {
            expected: embeddings.len(),
            found: labels.len(),
        });
    }
    let mut h = Histogram::new(bin_width)?;
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            if labels[i] != labels[j] {
                h.add(euclidean(embeddings.row(i), embeddings.row(j)));
            }
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub label: String,
    /// `(iteration, optimal held-out verification threshold)`.
    pub points: Vec<(usize, f64)>,
}

/// Trains each labelled config and records the best held-out verification
/// threshold every `log_every` iterations.
pub fn stability_curve(
    dataset: &Dataset,
    configs: &[(String, TrainConfig)],
    log_every: usize,
) -> Result<Vec<StabilityCurve>> {
    if log_every == 0 {
        return Err(Error::param("log_every", "must be positive"));
    }
    configs
        .iter()
        .map(|(label, cfg)| {
            let mut points = Vec::new();
            train_with_observer(dataset, cfg, |ev| {
                if let TrainEvent::Iteration {
                    iteration,
                    net,
                    held_out,
                    ..
                } = ev
                {
                    if iteration % log_every == 0 {
                        let e = embed_dataset(net, held_out)?;
                        let (d, s) = crate::eval::pair_distances(&e, held_out.labels());
                        points.push((iteration, verification_threshold(&d, &s)?.0));
                    }
                }
                Ok(())
            })?;
            Ok(StabilityCurve {
                label: label.clone(),
                points,
            })
        })
        .collect()
}

/// Margin and triplet ℓ2 runs, both distance-weighted, at `m = 2` and
/// `m = 10` examples per class. Each batch holds as many classes as fit in
/// `base.batch_size`, capped by `train_classes`.
pub fn stability_configs(base: &TrainConfig, train_classes: usize) -> Result<Vec<(String, TrainConfig)>> {
    let mut out = Vec::new();
    for loss in [LossKind::Margin, LossKind::TripletL2] {
        for m in [2, 10] {
            let classes = (base.batch_size / m).min(train_classes);
            if classes < 2 {
                return Err(Error::Capacity(format!(
                    "batch of {} with {m} per class over {train_classes} classes leaves fewer than two classes",
                    base.batch_size
                )));
            }
            let cfg = TrainConfig {
                loss,
                sampler: SamplerKind::DistanceWeighted,
                per_class: m,
                batch_size: classes * m,
                ..base.clone()
            };
            out.push((format!("{loss}_m{m}"), cfg));
        }
    }
    Ok(out)
}

/// Stability curves as a long table: `curve`, `iteration`, `threshold`, with
/// `curve` the index into `curves`.
pub fn stability_table(curves: &[StabilityCurve]) -> Table {
    Table {
        columns: vec!["curve".into(), "iteration".into(), "threshold".into()],
        rows: curves
            .iter()
            .enumerate()
            .flat_map(|(c, curve)| curve.points.iter().map(move |&(it, t)| vec![c as f64, it as f64, t]))
            .collect(),
    }
}
