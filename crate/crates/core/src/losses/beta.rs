use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{beta_gradient, PairTerm};

/// Smallest effective boundary allowed after an update.
pub const BETA_FLOOR: f64 = 1e-3;

/// Learnable boundary `β(i) = β⁰ + β^class_{c(i)} + β^img_i`.
///
/// A pair term is attributed to its anchor: the anchor's class and example
/// id select the offsets. The `ν` regularizer is added once per pair term
/// for every component the term touches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveBeta {
    pub beta0: f64,
    pub beta_class: BTreeMap<usize, f64>,
    pub beta_img: BTreeMap<usize, f64>,
    pub nu: f64,
    pub use_class: bool,
    pub use_img: bool,
    /// Initial value for offsets seen for the first time.
    pub class_init: f64,
    pub img_init: f64,
}

/// A pair term together with the anchor's class and example id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchoredTerm {
    pub term: PairTerm,
    pub class: usize,
    pub example: usize,
}

impl AdaptiveBeta {
    pub fn new(beta0: f64, nu: f64) -> Self {
        Self {
            beta0,
            beta_class: BTreeMap::new(),
            beta_img: BTreeMap::new(),
            nu: nu.max(0.0),
            use_class: true,
            use_img: false,
            class_init: 0.0,
            img_init: 0.0,
        }
    }

    pub fn with_offsets(mut self, use_class: bool, use_img: bool) -> Self {
        self.use_class = use_class;
        self.use_img = use_img;
        self
    }

    pub fn with_inits(mut self, class_init: f64, img_init: f64) -> Self {
        self.class_init = class_init;
        self.img_init = img_init;
        self
    }

    pub fn class_offset(&self, class: usize) -> f64 {
        if !self.use_class {
            return 0.0;
        }
        self.beta_class.get(&class).copied().unwrap_or(self.class_init)
    }

    pub fn img_offset(&self, example: usize) -> f64 {
        if !self.use_img {
            return 0.0;
        }
        self.beta_img.get(&example).copied().unwrap_or(self.img_init)
    }

    /// Effective boundary for an anchor, never below [`BETA_FLOOR`].
    pub fn effective(&self, class: usize, example: usize) -> f64 {
        (self.beta0 + self.class_offset(class) + self.img_offset(example)).max(BETA_FLOOR)
    }

    /// One gradient-descent step on `Σ ℓ^margin + ν · Σ (β⁰ + β^class + β^img)`.
    pub fn update(&mut self, terms: &[AnchoredTerm], alpha: f64, lr: f64) {
        if terms.is_empty() || lr == 0.0 {
            return;
        }
        let mut g0 = 0.0;
        let mut g_class: BTreeMap<usize, f64> = BTreeMap::new();
        let mut g_img: BTreeMap<usize, f64> = BTreeMap::new();
        for t in terms {
            let beta = self.effective(t.class, t.example);
            let g = beta_gradient(&t.term, alpha, beta) + self.nu;
            g0 += g;
            if self.use_class {
                *g_class.entry(t.class).or_default() += g;
            }
            if self.use_img {
                *g_img.entry(t.example).or_default() += g;
            }
        }

        self.beta0 = (self.beta0 - lr * g0).max(BETA_FLOOR);
        for (c, g) in g_class {
            let init = self.class_init;
            let v = self.beta_class.entry(c).or_insert(init);
            *v = (*v - lr * g).max(BETA_FLOOR - self.beta0);
        }
        for (i, g) in g_img {
            let class = terms
                .iter()
                .find(|t| t.example == i)
                .map(|t| t.class)
                .expect("gradient only recorded for seen examples");
            let floor = BETA_FLOOR - self.beta0 - self.class_offset(class);
            let init = self.img_init;
            let v = self.beta_img.entry(i).or_insert(init);
            *v = (*v - lr * g).max(floor);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::PairLabel;
    use super::*;

    fn anchored(label: PairLabel, dist: f64, class: usize, example: usize) -> AnchoredTerm {
        AnchoredTerm {
            term: PairTerm::new(example, example + 100, label, dist).unwrap(),
            class,
            example,
        }
    }

    #[test]
    fn inactive_terms_leave_beta_unchanged() {
        let mut b = AdaptiveBeta::new(1.2, 0.0);
        // Positive far inside, negative far outside the margin.
        let terms = [
            anchored(PairLabel::Positive, 0.2, 0, 0),
            anchored(PairLabel::Negative, 1.9, 0, 0),
        ];
        let before = b.clone();
        b.update(&terms, 0.2, 0.1);
        assert_eq!(b.beta0, before.beta0);
        assert_eq!(b.class_offset(0), 0.0);
    }

    #[test]
    fn active_negative_pulls_boundary_inward() {
        let mut b = AdaptiveBeta::new(1.2, 0.0);
        b.update(&[anchored(PairLabel::Negative, 1.1, 3, 7)], 0.2, 0.01);
        assert!((b.beta0 - 1.19).abs() < 1e-12);
        assert!((b.class_offset(3) + 0.01).abs() < 1e-12);
    }

    #[test]
    fn active_positive_pushes_boundary_outward() {
        let mut b = AdaptiveBeta::new(1.2, 0.0).with_offsets(false, false);
        b.update(&[anchored(PairLabel::Positive, 1.3, 0, 0)], 0.2, 0.01);
        assert!((b.beta0 - 1.21).abs() < 1e-12);
    }

    #[test]
    fn large_nu_shrinks_all_components() {
        let mut b = AdaptiveBeta::new(1.2, 5.0).with_offsets(true, true);
        let terms = [
            anchored(PairLabel::Positive, 0.1, 0, 0),
            anchored(PairLabel::Negative, 1.95, 1, 1),
        ];
        let mut last = (b.beta0, b.class_offset(0), b.img_offset(1));
        for _ in 0..5 {
            b.update(&terms, 0.2, 0.001);
            let now = (b.beta0, b.class_offset(0), b.img_offset(1));
            assert!(now.0 < last.0 && now.1 < last.1 && now.2 < last.2);
            last = now;
        }
    }

    #[test]
    fn effective_beta_stays_positive() {
        let mut b = AdaptiveBeta::new(0.05, 0.0).with_offsets(true, true);
        let term = anchored(PairLabel::Negative, 0.01, 2, 4);
        for _ in 0..50 {
            b.update(&[term], 0.2, 0.5);
            assert!(b.beta0 + b.class_offset(2) + b.img_offset(4) >= BETA_FLOOR - 1e-15);
        }
    }

    #[test]
    fn img_offset_off_by_default() {
        let mut b = AdaptiveBeta::new(1.2, 0.0);
        b.update(&[anchored(PairLabel::Negative, 1.1, 0, 9)], 0.2, 0.1);
        assert!(b.beta_img.is_empty());
        assert_eq!(b.img_offset(9), 0.0);
    }
}
