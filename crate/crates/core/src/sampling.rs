//! Batch construction and negative selection.
//!
//! A batch holds `n / m` classes with `m` examples each. All ordered
//! within-class pairs are used as positives; every member of a positive pair
//! gets one negative drawn by the configured strategy, relative to itself as
//! anchor. Triplet losses instead draw one negative per `(anchor, positive)`.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ClassIndex;
use crate::embedding::DistanceMatrix;
use crate::error::{Error, Result};
use crate::geometry::{log_sampling_weight, SamplingWeightConfig, SphereDensity};
use crate::losses::{LossKind, PairLabel, PairTerm, TripletTerm};

/// Positions inside a batch index `examples` / `labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub examples: Vec<usize>,
    pub labels: Vec<usize>,
    pub per_class: usize,
}

impl Batch {
    /// Builds a batch from explicit ids and labels, checking the class layout.
    pub fn new(examples: Vec<usize>, labels: Vec<usize>, per_class: usize) -> Result<Self> {
        if examples.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: examples.len(),
                found: labels.len(),
            });
        }
        check_batch_shape(examples.len(), per_class)?;
        let mut counts = std::collections::BTreeMap::<usize, usize>::new();
        for &l in &labels {
            *counts.entry(l).or_default() += 1;
        }
        if counts.values().any(|&c| c != per_class) {
            return Err(Error::Capacity(format!(
                "every class must contribute exactly {per_class} examples"
            )));
        }
        Ok(Self {
            examples,
            labels,
            per_class,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.examples.len() / self.per_class
    }

    /// Positions whose class differs from `anchor`'s.
    pub fn negatives_of(&self, anchor: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.labels[anchor];
        (0..self.len()).filter(move |&j| self.labels[j] != c)
    }
}

fn check_batch_shape(n: usize, m: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::param(
            "batch_size",
            "batch size and per-class count must be positive",
        ));
    }
    if !n.is_multiple_of(m) {
        return Err(Error::param(
            "batch_size",
            format!("batch size {n} is not divisible by per-class count {m}"),
        ));
    }
    Ok(())
}

/// Draws `n / m` classes uniformly without replacement, then `m` examples of
/// each without replacement.
pub fn build_batch<R: Rng + ?Sized>(index: &ClassIndex, n: usize, m: usize, rng: &mut R) -> Result<Batch> {
    check_batch_shape(n, m)?;
    let wanted = n / m;
    let eligible: Vec<usize> = index.iter().filter(|(_, ids)| ids.len() >= m).map(|(c, _)| c).collect();
    if eligible.len() < wanted {
        return Err(Error::Capacity(format!(
            "batch of {n} with {m} per class needs {wanted} classes holding at least {m} examples; only {} qualify",
            eligible.len()
        )));
    }
    let mut examples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for ci in rand::seq::index::sample(rng, eligible.len(), wanted).into_iter() {
        let class = eligible[ci];
        let members = index.members(class);
        for k in rand::seq::index::sample(rng, members.len(), m).into_iter() {
            examples.push(members[k]);
            labels.push(class);
        }
    }
    Ok(Batch {
        examples,
        labels,
        per_class: m,
    })
}

/// All ordered within-class `(anchor, positive)` position pairs.
pub fn enumerate_positive_pairs(batch: &Batch) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(batch.len() * batch.per_class.saturating_sub(1));
    for a in 0..batch.len() {
        for p in 0..batch.len() {
            if a != p && batch.labels[a] == batch.labels[p] {
                out.push((a, p));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Random,
    SemiHard,
    DistanceWeighted,
    /// Closest negative, without any floor.
    Hardest,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [
        SamplerKind::Random,
        SamplerKind::SemiHard,
        SamplerKind::DistanceWeighted,
        SamplerKind::Hardest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::SemiHard => "semi_hard",
            SamplerKind::DistanceWeighted => "distance_weighted",
            SamplerKind::Hardest => "hardest",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param("sampler", format!("unknown sampler `{s}`")))
    }
}

fn candidates(batch: &Batch, anchor: usize) -> Result<Vec<usize>> {
    let c: Vec<usize> = batch.negatives_of(anchor).collect();
    if c.is_empty() {
        return Err(Error::EmptySupport { anchor });
    }
    Ok(c)
}

/// Uniform over other-class positions.
pub fn sample_negative_random<R: Rng + ?Sized>(batch: &Batch, anchor: usize, rng: &mut R) -> Result<usize> {
    let c = candidates(batch, anchor)?;
    Ok(c[rng.random_range(0..c.len())])
}

/// Result of a semi-hard draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SemiHardPick {
    pub index: usize,
    /// No negative was farther than the reference distance; `index` is a
    /// uniform random negative instead.
    pub fallback: bool,
}

/// Closest negative strictly farther than `d_ap`.
pub fn sample_negative_semihard<R: Rng + ?Sized>(
    dist: &DistanceMatrix,
    batch: &Batch,
    anchor: usize,
    d_ap: f64,
    rng: &mut R,
) -> Result<SemiHardPick> {
    let c = candidates(batch, anchor)?;
    let best = c
        .iter()
        .copied()
        .filter(|&j| dist.get(anchor, j) > d_ap)
        .min_by(|&x, &y| dist.get(anchor, x).total_cmp(&dist.get(anchor, y)));
    Ok(match best {
        Some(index) => SemiHardPick { index, fallback: false },
        None => SemiHardPick {
            index: c[rng.random_range(0..c.len())],
            fallback: true,
        },
    })
}

/// Closest negative; ties go to the lower position.
pub fn sample_negative_hardest(dist: &DistanceMatrix, batch: &Batch, anchor: usize) -> Result<usize> {
    let c = candidates(batch, anchor)?;
    Ok(c.into_iter()
        .min_by(|&x, &y| dist.get(anchor, x).total_cmp(&dist.get(anchor, y)))
        .expect("candidates are nonempty"))
}

/// Normalized selection probabilities of the distance-weighted sampler.
pub fn distance_weighted_probabilities(
    dist: &DistanceMatrix,
    batch: &Batch,
    anchor: usize,
    density: &SphereDensity,
    weights: &SamplingWeightConfig,
) -> Result<Vec<(usize, f64)>> {
    let c = candidates(batch, anchor)?;
    let logw: Vec<f64> = c
        .iter()
        .map(|&j| log_sampling_weight(density, weights, dist.get(anchor, j)))
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(c.into_iter().zip(w).map(|(j, w)| (j, w / total)).collect())
}

/// Draws a negative with probability `∝ min(λ, 1/q(D_an))`.
pub fn sample_negative_distance_weighted<R: Rng + ?Sized>(
    dist: &DistanceMatrix,
    batch: &Batch,
    anchor: usize,
    density: &SphereDensity,
    weights: &SamplingWeightConfig,
    rng: &mut R,
) -> Result<usize> {
    let probs = distance_weighted_probabilities(dist, batch, anchor, density, weights)?;
    let w = WeightedIndex::new(probs.iter().map(|p| p.1))
        .map_err(|e| Error::param("weights", format!("invalid sampling weights: {e}")))?;
    Ok(probs[w.sample(rng)].0)
}

/// Strategy plus the parameters it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub kind: SamplerKind,
    pub density: SphereDensity,
    pub weights: SamplingWeightConfig,
    /// Reference distance for semi-hard selection with pairwise losses.
    pub pair_floor: f64,
}

impl Sampler {
    pub const DEFAULT_PAIR_FLOOR: f64 = 0.5;

    /// Default clipping for `embedding_dim`-dimensional unit embeddings.
    pub fn new(kind: SamplerKind, embedding_dim: usize) -> Result<Self> {
        let density = SphereDensity::new(embedding_dim)?;
        Ok(Self {
            kind,
            weights: SamplingWeightConfig::for_density(&density),
            density,
            pair_floor: Self::DEFAULT_PAIR_FLOOR,
        })
    }

    pub fn with_weights(mut self, weights: SamplingWeightConfig) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_pair_floor(mut self, floor: f64) -> Self {
        self.pair_floor = floor;
        self
    }

    /// One negative for `anchor`. `d_ap` is the semi-hard reference distance.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        dist: &DistanceMatrix,
        batch: &Batch,
        anchor: usize,
        d_ap: f64,
        rng: &mut R,
    ) -> Result<SemiHardPick> {
        let plain = |index| SemiHardPick { index, fallback: false };
        match self.kind {
            SamplerKind::Random => sample_negative_random(batch, anchor, rng).map(plain),
            SamplerKind::SemiHard => sample_negative_semihard(dist, batch, anchor, d_ap, rng),
            SamplerKind::DistanceWeighted => {
                sample_negative_distance_weighted(dist, batch, anchor, &self.density, &self.weights, rng).map(plain)
            }
            SamplerKind::Hardest => sample_negative_hardest(dist, batch, anchor).map(plain),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampledTerms {
    pub pairs: Vec<PairTerm>,
    pub triplets: Vec<TripletTerm>,
    pub semihard_fallbacks: usize,
}

impl SampledTerms {
    pub fn len(&self) -> usize {
        self.pairs.len() + self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn positive_pairs(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == PairLabel::Positive).count()
    }

    pub fn negative_pairs(&self) -> usize {
        self.pairs.len() - self.positive_pairs()
    }
}

/// Samples all terms of one batch. Indices in the returned terms are batch
/// positions.
pub fn sample_terms<R: Rng + ?Sized>(
    sampler: &Sampler,
    loss: LossKind,
    dist: &DistanceMatrix,
    batch: &Batch,
    rng: &mut R,
) -> Result<SampledTerms> {
    if dist.len() != batch.len() {
        return Err(Error::ShapeMismatch {
            expected: batch.len(),
            found: dist.len(),
        });
    }
    let positives = enumerate_positive_pairs(batch);
    let mut out = SampledTerms::default();
    if loss.is_triplet() {
        out.triplets.reserve(positives.len());
        for (a, p) in positives {
            let d_ap = dist.get(a, p);
            let pick = sampler.draw(dist, batch, a, d_ap, rng)?;
            out.semihard_fallbacks += pick.fallback as usize;
            out.triplets
                .push(TripletTerm::new(a, p, pick.index, d_ap, dist.get(a, pick.index))?);
        }
    } else {
        out.pairs.reserve(3 * positives.len());
        for (a, p) in positives {
            out.pairs
                .push(PairTerm::new(a, p, PairLabel::Positive, dist.get(a, p))?);
            for member in [a, p] {
                let pick = sampler.draw(dist, batch, member, sampler.pair_floor, rng)?;
                out.semihard_fallbacks += pick.fallback as usize;
                out.pairs.push(PairTerm::new(
                    member,
                    pick.index,
                    PairLabel::Negative,
                    dist.get(member, pick.index),
                )?);
            }
        }
    }
    Ok(out)
}
