//! Deep embedding learning with distance-weighted negative sampling and a
//! margin-based loss with a learnable boundary.
//!
//! Modules map onto the moving parts of an embedding-learning experiment:
//!
//! - [`geometry`]: pairwise-distance density of uniform points on the unit
//!   sphere and the clipped inverse-density sampling weights.
//! - [`losses`]: contrastive, triplet (squared and plain Euclidean) and
//!   margin losses with their gradients, plus the learnable boundary.
//! - [`sampling`]: batch construction and random, semi-hard, hardest and
//!   distance-weighted negative selection.
//! - [`net`] / [`train`]: a small unit-norm MLP trained with Adam.
//! - [`eval`]: Recall@k, k-means + NMI, verification thresholds.
//! - [`isotonic`]: margin risk at the optimal boundary versus its LP form.
//! - [`sim`]: Monte-Carlo curves and histograms.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod isotonic;
pub mod losses;
pub mod net;
pub mod sampling;
pub mod sim;
pub mod stats;
pub mod train;

mod quadrature;

pub use data::{Dataset, SyntheticSpec};
pub use embedding::{DistanceMatrix, Embeddings};
pub use error::{Error, Result};
pub use eval::{EpochRecord, MetricsLog};
pub use geometry::{SamplingWeightConfig, SphereDensity};
pub use losses::{AdaptiveBeta, LossConfig, LossKind, PairLabel, PairTerm, TripletTerm};
pub use net::MlpParams;
pub use sampling::{Batch, SampledTerms, Sampler, SamplerKind};
pub use train::{TrainConfig, TrainOutcome};
