//! Training loop: batch construction, in-batch sampling, loss, backprop and
//! Adam, plus the boundary update for the margin loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::embedding::{euclidean, Embeddings};
use crate::error::{Error, Result};
use crate::eval::{self, EpochRecord, MetricsLog};
use crate::geometry::SamplingWeightConfig;
use crate::losses::{
    accumulate_pair_grad, contrastive_loss, margin_loss, triplet_l22_loss, triplet_l2_loss, AdaptiveBeta, AnchoredTerm,
    LossConfig, LossKind,
};
use crate::net::{ForwardPass, MlpParams, ParamGrads};
use crate::sampling::{build_batch, sample_terms, Batch, SampledTerms, Sampler, SamplerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub sampler: SamplerKind,
    pub alpha: f64,
    pub beta0: f64,
    pub beta_class_init: f64,
    pub beta_img_init: f64,
    pub nu: f64,
    pub use_class_beta: bool,
    pub use_img_beta: bool,
    pub batch_size: usize,
    pub per_class: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Step size of the boundary parameters; 0 keeps them fixed.
    pub beta_lr: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub d_floor: f64,
    pub d_ceil: f64,
    /// Weight cap; `None` means the weight at `d_floor`.
    pub lambda_clip: Option<f64>,
    /// Semi-hard reference distance for pairwise losses.
    pub pair_floor: f64,
    /// Fraction of classes held out for evaluation; 0 evaluates on the
    /// training data.
    pub holdout_fraction: f64,
    pub eval_ks: Vec<usize>,
    /// `None` means `max(1, train size / batch size)`.
    pub batches_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Margin,
            sampler: SamplerKind::DistanceWeighted,
            alpha: 0.2,
            beta0: 1.2,
            beta_class_init: 0.0,
            beta_img_init: 0.0,
            nu: 0.0,
            use_class_beta: true,
            use_img_beta: false,
            batch_size: 40,
            per_class: 5,
            epochs: 50,
            lr: 1e-3,
            beta_lr: 1e-3,
            seed: 1,
            hidden: vec![64, 64],
            embedding_dim: 128,
            d_floor: SamplingWeightConfig::DEFAULT_FLOOR,
            d_ceil: SamplingWeightConfig::DEFAULT_CEIL,
            lambda_clip: None,
            pair_floor: Sampler::DEFAULT_PAIR_FLOOR,
            holdout_fraction: 0.2,
            eval_ks: vec![1, 2, 4, 8],
            batches_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        LossConfig::new(self.alpha, self.loss)?;
        for (name, v) in [("lr", self.lr), ("beta_lr", self.beta_lr), ("nu", self.nu)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        if self.per_class == 0 || self.batch_size == 0 || !self.batch_size.is_multiple_of(self.per_class) {
            return Err(Error::param(
                "batch_size",
                format!(
                    "batch size {} must be a positive multiple of per_class {}",
                    self.batch_size, self.per_class
                ),
            ));
        }
        if self.batch_size / self.per_class < 2 {
            return Err(Error::param("batch_size", "a batch needs at least two classes"));
        }
        if self.embedding_dim < 3 {
            return Err(Error::InvalidDimension {
                dim: self.embedding_dim,
                min: 3,
            });
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden", "hidden widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::param("holdout_fraction", "must lie in [0, 1)"));
        }
        if self.eval_ks.is_empty() || self.eval_ks.contains(&0) {
            return Err(Error::param("eval_ks", "need at least one positive k"));
        }
        if self.batches_per_epoch == Some(0) {
            return Err(Error::param("batches_per_epoch", "must be positive"));
        }
        self.sampler_for()?;
        Ok(())
    }

    pub fn sampler_for(&self) -> Result<Sampler> {
        let base = Sampler::new(self.sampler, self.embedding_dim)?;
        let weights = match self.lambda_clip {
            Some(l) => SamplingWeightConfig::new(l, self.d_floor, self.d_ceil)?,
            None => SamplingWeightConfig::with_bounds(&base.density, self.d_floor, self.d_ceil)?,
        };
        Ok(base.with_weights(weights).with_pair_floor(self.pair_floor))
    }

    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(input_dim);
        w.extend(&self.hidden);
        w.push(self.embedding_dim);
        w
    }

    pub fn initial_beta(&self) -> AdaptiveBeta {
        AdaptiveBeta::new(self.beta0, self.nu)
            .with_offsets(self.use_class_beta, self.use_img_beta)
            .with_inits(self.beta_class_init, self.beta_img_init)
    }
}

/// Loss and parameter gradient of one batch with frozen sampled terms.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    /// Mean loss over terms.
    pub loss: f64,
    pub grads: ParamGrads,
    /// Pair terms with their anchor's class and example id (margin loss only).
    pub anchored: Vec<AnchoredTerm>,
    pub degenerate_pairs: usize,
}

/// Mean loss over `terms` and its gradient with respect to every network
/// parameter. Distances are recomputed from `passes`; the term list only
/// fixes which positions interact.
pub fn batch_loss_and_grads(
    net: &MlpParams,
    passes: &[ForwardPass],
    batch: &Batch,
    terms: &SampledTerms,
    loss: LossConfig,
    beta: &AdaptiveBeta,
) -> Result<BatchGradient> {
    let dim = net.output_dim();
    let count = terms.len().max(1) as f64;
    let mut g = vec![vec![0.0; dim]; passes.len()];
    let mut total = 0.0;
    let mut degenerate = 0;
    let mut anchored = Vec::new();
    let out = |i: usize| passes[i].output.as_slice();

    let mut add = |i: usize, j: usize, d_dist: f64, g: &mut Vec<Vec<f64>>| {
        if d_dist == 0.0 {
            return;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (left, right) = g.split_at_mut(hi);
        let (gi, gj) = if i < j {
            (&mut left[lo], &mut right[0])
        } else {
            (&mut right[0], &mut left[lo])
        };
        if !accumulate_pair_grad(d_dist / count, out(i), out(j), gi, gj) {
            degenerate += 1;
        }
    };

    match loss.kind {
        LossKind::Contrastive | LossKind::Margin => {
            for p in &terms.pairs {
                let mut term = *p;
                term.dist = euclidean(out(p.i), out(p.j));
                let l = if loss.kind == LossKind::Margin {
                    let (class, example) = (batch.labels[p.i], batch.examples[p.i]);
                    anchored.push(AnchoredTerm { term, class, example });
                    margin_loss(&term, loss.alpha, beta.effective(class, example))
                } else {
                    contrastive_loss(&term, loss.alpha)
                };
                total += l.value;
                add(p.i, p.j, l.d_dist, &mut g);
            }
        }
        LossKind::TripletL22 | LossKind::TripletL2 => {
            for t in &terms.triplets {
                let mut t = *t;
                t.d_ap = euclidean(out(t.a), out(t.p));
                t.d_an = euclidean(out(t.a), out(t.n));
                let l = if loss.kind == LossKind::TripletL22 {
                    triplet_l22_loss(&t, loss.alpha)
                } else {
                    triplet_l2_loss(&t, loss.alpha)
                };
                total += l.value;
                add(t.a, t.p, l.d_ap, &mut g);
                add(t.a, t.n, l.d_an, &mut g);
            }
        }
    }

    let mut grads = net.zero_grads();
    for (pass, ge) in passes.iter().zip(&g) {
        net.backward(pass, ge, &mut grads);
    }
    Ok(BatchGradient {
        loss: total / count,
        grads,
        anchored,
        degenerate_pairs: degenerate,
    })
}

/// Held-out metrics for one snapshot of the network.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub embeddings: Embeddings,
    pub recall: std::collections::BTreeMap<usize, f64>,
    pub nmi: f64,
    pub spread: f64,
    pub threshold: f64,
    pub verification_accuracy: f64,
}

pub fn embed_dataset(net: &MlpParams, data: &Dataset) -> Result<Embeddings> {
    let mut flat = Vec::with_capacity(data.len() * net.output_dim());
    for i in 0..data.len() {
        flat.extend(net.embed(data.features(i))?);
    }
    Embeddings::new(net.output_dim(), flat)
}

/// Recall@k (for every `k` below the set size), NMI of k-means with one
/// cluster per class, spread, and the best verification threshold.
pub fn evaluate(net: &MlpParams, data: &Dataset, ks: &[usize], seed: u64) -> Result<Evaluation> {
    let embeddings = embed_dataset(net, data)?;
    let labels = data.labels();
    let ks: Vec<usize> = ks.iter().copied().filter(|&k| k < data.len()).collect();
    let recall = eval::recall_at_k(&embeddings, labels, &ks)?;
    let classes = data.num_classes();
    let clusters = eval::kmeans(&embeddings, classes, seed)?;
    let nmi = eval::nmi(&clusters.assignment, labels)?;
    let (dists, same) = eval::pair_distances(&embeddings, labels);
    let (threshold, verification_accuracy) = if same.iter().any(|&s| s) && same.iter().any(|&s| !s) {
        eval::verification_threshold(&dists, &same)?
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Evaluation {
        spread: eval::embedding_spread(&embeddings),
        embeddings,
        recall,
        nmi,
        threshold,
        verification_accuracy,
    })
}

/// Callback points inside [`train_with_observer`].
pub enum TrainEvent<'a> {
    /// After every parameter update; `iteration` counts from 1.
    Iteration {
        iteration: usize,
        net: &'a MlpParams,
        beta: &'a AdaptiveBeta,
        held_out: &'a Dataset,
    },
    /// After each epoch's evaluation.
    Epoch {
        record: &'a EpochRecord,
        evaluation: &'a Evaluation,
        held_out: &'a Dataset,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: MlpParams,
    pub beta: AdaptiveBeta,
    pub log: MetricsLog,
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(dataset, cfg, |_| Ok(()))
}

pub fn train_with_observer<F>(dataset: &Dataset, cfg: &TrainConfig, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(TrainEvent<'_>) -> Result<()>,
{
    cfg.validate()?;
    let (train_set, held_out) = if cfg.holdout_fraction == 0.0 {
        (dataset.clone(), dataset.clone())
    } else {
        dataset.split_by_class(cfg.holdout_fraction)?
    };
    let index = train_set.class_index();
    let sampler = cfg.sampler_for()?;
    let loss = LossConfig::new(cfg.alpha, cfg.loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = MlpParams::new(&cfg.widths(dataset.dim()), &mut rng)?;
    let mut beta = cfg.initial_beta();
    let batches = cfg
        .batches_per_epoch
        .unwrap_or_else(|| (train_set.len() / cfg.batch_size).max(1));

    let mut log = MetricsLog::default();
    let mut iteration = 0;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut fallbacks = 0;
        let mut degenerate = 0;
        for _ in 0..batches {
            let batch_id = iteration;
            let in_batch = |e: Error| Error::InBatch {
                batch: batch_id,
                source: Box::new(e),
            };
            let batch = build_batch(&index, cfg.batch_size, cfg.per_class, &mut rng)?;
            let passes = batch
                .examples
                .iter()
                .map(|&id| net.forward(train_set.features(id)))
                .collect::<Result<Vec<_>>>()
                .map_err(in_batch)?;
            let outputs: Vec<&[f64]> = passes.iter().map(|p| p.output.as_slice()).collect();
            let dist = Embeddings::from_rows(&outputs)?.pairwise();
            let terms = sample_terms(&sampler, cfg.loss, &dist, &batch, &mut rng)?;
            fallbacks += terms.semihard_fallbacks;

            let bg = batch_loss_and_grads(&net, &passes, &batch, &terms, loss, &beta)?;
            if !bg.loss.is_finite() {
                return Err(in_batch(Error::NonFinite {
                    context: "batch loss".into(),
                }));
            }
            loss_sum += bg.loss;
            degenerate += bg.degenerate_pairs;
            net.adam_step(&bg.grads, cfg.lr).map_err(in_batch)?;
            if cfg.loss == LossKind::Margin && !bg.anchored.is_empty() {
                // Mean gradient per term, matching the averaged network loss.
                beta.update(&bg.anchored, cfg.alpha, cfg.beta_lr / bg.anchored.len() as f64);
            }
            iteration += 1;
            observer(TrainEvent::Iteration {
                iteration,
                net: &net,
                beta: &beta,
                held_out: &held_out,
            })?;
        }

        let ev = evaluate(&net, &held_out, &cfg.eval_ks, cfg.seed)?;
        let record = EpochRecord {
            epoch,
            iterations: iteration,
            mean_loss: loss_sum / batches as f64,
            spread: ev.spread,
            recall: ev.recall.clone(),
            nmi: ev.nmi,
            threshold: ev.threshold,
            verification_accuracy: ev.verification_accuracy,
            beta0: beta.beta0,
            semihard_fallbacks: fallbacks,
            degenerate_pairs: degenerate,
        };
        observer(TrainEvent::Epoch {
            record: &record,
            evaluation: &ev,
            held_out: &held_out,
        })?;
        log.push(record);
    }
    Ok(TrainOutcome { net, beta, log })
}
