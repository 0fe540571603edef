mod common;

use dwml_core::eval::{nmi, recall_at_k};
use dwml_core::isotonic::{isotonic_lp_optimum, margin_risk_min_beta, RiskInstance};
use dwml_core::losses::{beta_gradient, contrastive_loss, margin_loss, triplet_l22_loss, triplet_l2_loss, TripletTerm};
use dwml_core::sampling::{build_batch, sample_terms};
use dwml_core::{DistanceMatrix, Embeddings, LossKind, PairLabel, PairTerm, Sampler, SamplerKind, SyntheticSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair(label: PairLabel, dist: f64) -> PairTerm {
    PairTerm {
        i: 0,
        j: 1,
        label,
        dist,
    }
}

fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    // Gram-Schmidt on a random Gaussian-ish matrix.
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn losses_are_nonnegative(d in 0.0f64..2.0, d2 in 0.0f64..2.0, alpha in 0.01f64..1.0, beta in 0.0f64..2.0) {
        for label in [PairLabel::Positive, PairLabel::Negative] {
            prop_assert!(contrastive_loss(&pair(label, d), alpha).value >= 0.0);
            prop_assert!(margin_loss(&pair(label, d), alpha, beta).value >= 0.0);
        }
        let t = TripletTerm { a: 0, p: 1, n: 2, d_ap: d, d_an: d2 };
        prop_assert!(triplet_l22_loss(&t, alpha).value >= 0.0);
        prop_assert!(triplet_l2_loss(&t, alpha).value >= 0.0);
    }

    #[test]
    fn margin_is_a_shifted_hinge(d in 0.0f64..2.0, alpha in 0.01f64..1.0, beta in 0.0f64..2.0) {
        let neg = margin_loss(&pair(PairLabel::Negative, d), alpha, beta).value;
        let pos = margin_loss(&pair(PairLabel::Positive, d), alpha, beta).value;
        prop_assert!((neg - ((beta + alpha) - d).max(0.0)).abs() < 1e-12);
        prop_assert!((pos - (d - (beta - alpha)).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn active_triplet_l2_gradients_have_unit_length(d_ap in 0.0f64..2.0, d_an in 0.0f64..2.0, alpha in 0.01f64..1.0) {
        let l = triplet_l2_loss(&TripletTerm { a: 0, p: 1, n: 2, d_ap, d_an }, alpha);
        if l.value > 0.0 {
            prop_assert_eq!(l.d_ap.abs(), 1.0);
            prop_assert_eq!(l.d_an.abs(), 1.0);
        }
    }

    /// The ν-regularized boundary objective, minimized over a grid, has a
    /// one-sided derivative that changes sign across the minimizer.
    #[test]
    fn boundary_optimum_is_a_sign_change(seed in any::<u64>(), nu in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = 0.2;
        let terms: Vec<PairTerm> = (0..12)
            .map(|k| {
                let label = if k % 2 == 0 { PairLabel::Positive } else { PairLabel::Negative };
                pair(label, rng.random_range(0.2..1.8))
            })
            .collect();
        let objective = |b: f64| terms.iter().map(|t| margin_loss(t, alpha, b).value + nu * b).sum::<f64>();
        let grid: Vec<f64> = (0..=4000).map(|k| k as f64 * 5e-4).collect();
        let best = grid.iter().copied().min_by(|a, b| objective(*a).total_cmp(&objective(*b))).unwrap();
        let slope = |b: f64| terms.iter().map(|t| beta_gradient(t, alpha, b) + nu).sum::<f64>();
        let h = 1e-3;
        prop_assume!(best - h > 0.0 && best + h < 2.0);
        prop_assert!(slope(best - h) <= 0.0, "left slope {}", slope(best - h));
        prop_assert!(slope(best + h) >= 0.0, "right slope {}", slope(best + h));
    }

    #[test]
    fn recall_is_monotone_and_rotation_invariant(seed in any::<u64>(), n in 4usize..14, dim in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let emb = Embeddings::new(dim, data).unwrap();
        let ks: Vec<usize> = (1..n).collect();
        let r = recall_at_k(&emb, &labels, &ks).unwrap();
        let values: Vec<f64> = r.values().copied().collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));

        let q = random_rotation(dim, &mut rng);
        let rotated: Vec<Vec<f64>> = emb
            .rows()
            .map(|x| q.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect())
            .collect();
        let r2 = recall_at_k(&Embeddings::from_rows(&rotated).unwrap(), &labels, &ks).unwrap();
        prop_assert_eq!(r, r2);
    }

    #[test]
    fn nmi_symmetric_and_permutation_invariant(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let ab = nmi(&a, &b).unwrap();
        prop_assert!((ab - nmi(&b, &a).unwrap()).abs() < 1e-12);
        let relabel = [3usize, 0, 7, 1, 9];
        let b2: Vec<usize> = b.iter().map(|&x| relabel[x]).collect();
        prop_assert!((ab - nmi(&a, &b2).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn lp_never_exceeds_risk_at_a_fixed_boundary(seed in any::<u64>(), beta in -0.5f64..2.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = RiskInstance::random(&mut rng, 5, 5, &[0.1, 0.2]);
        let lp = isotonic_lp_optimum(&inst).unwrap();
        prop_assert!(lp <= inst.risk_at(beta) + 1e-12);
        prop_assert!(margin_risk_min_beta(&inst).risk <= inst.risk_at(beta) + 1e-12);
    }

    #[test]
    fn lp_is_homogeneous(seed in any::<u64>(), c in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = RiskInstance::random(&mut rng, 5, 5, &[0.1, 0.2]);
        let scaled = RiskInstance::new(
            inst.pos.iter().map(|d| d * c).collect(),
            inst.neg.iter().map(|d| d * c).collect(),
            inst.alpha * c,
        )
        .unwrap();
        let a = isotonic_lp_optimum(&inst).unwrap() * c;
        let b = isotonic_lp_optimum(&scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    /// Every strategy yields the balanced term layout and never picks the
    /// anchor or a same-class example as a negative.
    #[test]
    fn sampled_terms_are_balanced(seed in any::<u64>(), kind_ix in 0usize..4, loss_ix in 0usize..4) {
        let kind = SamplerKind::ALL[kind_ix];
        let loss = LossKind::ALL[loss_ix];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = SyntheticSpec { classes: 6, per_class: 6, dim: 8, seed, ..SyntheticSpec::default() }
            .generate()
            .unwrap();
        let batch = build_batch(&data.class_index(), 20, 5, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = batch
            .examples
            .iter()
            .map(|&e| {
                let x = data.features(e);
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                x.iter().map(|v| v / n).collect()
            })
            .collect();
        let dist = DistanceMatrix::from_embeddings(&Embeddings::from_rows(&rows).unwrap());
        let sampler = Sampler::new(kind, 8).unwrap();
        let terms = sample_terms(&sampler, loss, &dist, &batch, &mut rng).unwrap();
        let ordered_positives = 4 * 5 * 4;
        if loss.is_triplet() {
            prop_assert_eq!(terms.triplets.len(), ordered_positives);
            for t in &terms.triplets {
                prop_assert_eq!(batch.labels[t.a], batch.labels[t.p]);
                prop_assert_ne!(batch.labels[t.a], batch.labels[t.n]);
            }
        } else {
            prop_assert_eq!(terms.positive_pairs(), ordered_positives);
            prop_assert_eq!(terms.negative_pairs(), 2 * ordered_positives);
            for p in terms.pairs.iter().filter(|p| p.label == PairLabel::Negative) {
                prop_assert_ne!(p.i, p.j);
                prop_assert_ne!(batch.labels[p.i], batch.labels[p.j]);
            }
        }
        let again = sample_terms(&sampler, loss, &dist, &batch, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        let replay = sample_terms(&sampler, loss, &dist, &batch, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        prop_assert_eq!(again, replay);
    }
}
