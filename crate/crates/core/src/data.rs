//! Labeled feature datasets and the synthetic Gaussian-cluster generator.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension { dim, min: 1 });
        }
        if features.len() != dim * labels.len() {
            return Err(Error::ShapeMismatch {
                expected: dim * labels.len(),
                found: features.len(),
            });
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("feature {} of example {}", pos % dim, pos / dim),
            });
        }
        Ok(Self { dim, features, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.class_index().num_classes()
    }

    pub fn class_index(&self) -> ClassIndex {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.labels.iter().enumerate() {
            by_class.entry(c).or_default().push(i);
        }
        ClassIndex { by_class }
    }

    pub fn subset(&self, ids: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(ids.len() * self.dim);
        let mut labels = Vec::with_capacity(ids.len());
        for &i in ids {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            dim: self.dim,
            features,
            labels,
        }
    }

    /// Splits by class: the last `holdout_fraction` of the sorted class ids
    /// (at least one class) go to the held-out side. Example ids on both
    /// sides keep their relative order.
    pub fn split_by_class(&self, holdout_fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::param(
                "holdout_fraction",
                format!("must lie in [0, 1), got {holdout_fraction}"),
            ));
        }
        let index = self.class_index();
        let classes: Vec<usize> = index.classes().collect();
        if classes.len() < 2 {
            return Err(Error::Capacity(format!(
                "need at least 2 classes to split, found {}",
                classes.len()
            )));
        }
        let held = ((classes.len() as f64 * holdout_fraction).round() as usize).clamp(1, classes.len() - 1);
        let cut = classes[classes.len() - held];
        let (train, test): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&i| self.labels[i] < cut);
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Class id → example ids, in ascending class order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    by_class: BTreeMap<usize, Vec<usize>>,
}

impl ClassIndex {
    pub fn num_classes(&self) -> usize {
        self.by_class.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_class.keys().copied()
    }

    pub fn members(&self, class: usize) -> &[usize] {
        self.by_class.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.by_class.iter().map(|(&c, v)| (c, v.as_slice()))
    }
}

/// Gaussian clusters around class centers drawn uniformly on a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of the intra-class noise.
    pub spread: f64,
    /// Radius of the sphere the class centers live on.
    pub radius: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 20,
            dim: 20,
            spread: 0.1,
            radius: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<Dataset> {
        if self.classes < 2 {
            return Err(Error::param(
                "classes",
                format!("need at least 2, got {}", self.classes),
            ));
        }
        if self.per_class == 0 || self.dim == 0 {
            return Err(Error::param("per_class", "per_class and dim must be positive"));
        }
        if !(self.spread >= 0.0) || !(self.radius > 0.0) {
            return Err(Error::param("spread", "spread must be nonnegative and radius positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut features = Vec::with_capacity(self.classes * self.per_class * self.dim);
        let mut labels = Vec::with_capacity(self.classes * self.per_class);
        for c in 0..self.classes {
            let center = loop {
                let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = crate::embedding::norm(&v);
                if n > 1e-12 {
                    break v.into_iter().map(|x| self.radius * x / n).collect::<Vec<f64>>();
                }
            };
            for _ in 0..self.per_class {
                features.extend(center.iter().map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + self.spread * z
                }));
                labels.push(c);
            }
        }
        Dataset::new(self.dim, features, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_shape_and_determinism() {
        let spec = SyntheticSpec::default();
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a.dim(), 20);
        assert_eq!(a.num_classes(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn split_holds_out_last_classes() {
        let ds = SyntheticSpec::default().generate().unwrap();
        let (train, test) = ds.split_by_class(0.2).unwrap();
        assert_eq!(train.num_classes(), 8);
        assert_eq!(test.num_classes(), 2);
        assert!(test.labels().iter().all(|&c| c >= 8));
        assert_eq!(train.len() + test.len(), ds.len());
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(Dataset::new(3, vec![0.0; 5], vec![0, 1]).is_err());
        assert!(Dataset::new(1, vec![0.0, f64::NAN], vec![0, 1]).is_err());
    }
}
