//! Pairwise and triplet losses on embedding distances.
//!
//! Every loss returns its value together with the derivative with respect to
//! the distances it consumes. At a hinge kink the subgradient is taken as 0.

mod beta;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::euclidean;
use crate::error::{Error, Result};

pub use beta::{AdaptiveBeta, AnchoredTerm, BETA_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairLabel {
    Positive,
    Negative,
}

impl PairLabel {
    /// `y ∈ {+1, -1}`.
    pub fn sign(self) -> f64 {
        match self {
            PairLabel::Positive => 1.0,
            PairLabel::Negative => -1.0,
        }
    }

    /// Maps the `{1, 0}` same/different flag onto `{+1, -1}`.
    pub fn from_flag(same: bool) -> Self {
        if same {
            PairLabel::Positive
        } else {
            PairLabel::Negative
        }
    }
}

/// A sampled pair `(i, j)` with its label and cached distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub label: PairLabel,
    pub dist: f64,
}

impl PairTerm {
    pub fn new(i: usize, j: usize, label: PairLabel, dist: f64) -> Result<Self> {
        if i == j {
            return Err(Error::param("j", format!("pair endpoints coincide ({i})")));
        }
        if !(dist >= 0.0) || !dist.is_finite() {
            return Err(Error::param(
                "dist",
                format!("must be finite and nonnegative, got {dist}"),
            ));
        }
        Ok(Self { i, j, label, dist })
    }

    pub fn y(&self) -> f64 {
        self.label.sign()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletTerm {
    pub a: usize,
    pub p: usize,
    pub n: usize,
    pub d_ap: f64,
    pub d_an: f64,
}

impl TripletTerm {
    pub fn new(a: usize, p: usize, n: usize, d_ap: f64, d_an: f64) -> Result<Self> {
        if a == p || a == n || p == n {
            return Err(Error::param(
                "triplet",
                format!("indices not distinct: ({a}, {p}, {n})"),
            ));
        }
        for (name, d) in [("d_ap", d_ap), ("d_an", d_an)] {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::param(name, format!("must be finite and nonnegative, got {d}")));
            }
        }
        Ok(Self { a, p, n, d_ap, d_an })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Contrastive,
    TripletL22,
    TripletL2,
    Margin,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Contrastive,
        LossKind::TripletL22,
        LossKind::TripletL2,
        LossKind::Margin,
    ];

    pub fn is_triplet(self) -> bool {
        matches!(self, LossKind::TripletL22 | LossKind::TripletL2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Contrastive => "contrastive",
            LossKind::TripletL22 => "triplet_l22",
            LossKind::TripletL2 => "triplet_l2",
            LossKind::Margin => "margin",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param("loss", format!("unknown loss kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub kind: LossKind,
}

impl LossConfig {
    pub fn new(alpha: f64, kind: LossKind) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::param("alpha", format!("margin must be positive, got {alpha}")));
        }
        Ok(Self { alpha, kind })
    }
}

/// Loss value and `∂loss/∂D` for a pair term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub d_dist: f64,
}

/// Loss value and derivatives with respect to `D_ap` and `D_an`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletLoss {
    pub value: f64,
    pub d_ap: f64,
    pub d_an: f64,
}

const INACTIVE_TRIPLET: TripletLoss = TripletLoss {
    value: 0.0,
    d_ap: 0.0,
    d_an: 0.0,
};

/// `y D² + (1 - y) [α - D]₊²` with `y ∈ {1, 0}`.
pub fn contrastive_loss(term: &PairTerm, alpha: f64) -> PairLoss {
    let d = term.dist;
    match term.label {
        PairLabel::Positive => PairLoss {
            value: d * d,
            d_dist: 2.0 * d,
        },
        PairLabel::Negative => {
            let gap = alpha - d;
            if gap > 0.0 {
                PairLoss {
                    value: gap * gap,
                    d_dist: -2.0 * gap,
                }
            } else {
                PairLoss {
                    value: 0.0,
                    d_dist: 0.0,
                }
            }
        }
    }
}

/// `[D_ap² - D_an² + α]₊`.
pub fn triplet_l22_loss(t: &TripletTerm, alpha: f64) -> TripletLoss {
    let v = t.d_ap * t.d_ap - t.d_an * t.d_an + alpha;
    if v > 0.0 {
        TripletLoss {
            value: v,
            d_ap: 2.0 * t.d_ap,
            d_an: -2.0 * t.d_an,
        }
    } else {
        INACTIVE_TRIPLET
    }
}

/// `(D_ap - D_an + α)₊`; active gradients have unit magnitude.
pub fn triplet_l2_loss(t: &TripletTerm, alpha: f64) -> TripletLoss {
    let v = t.d_ap - t.d_an + alpha;
    if v > 0.0 {
        TripletLoss {
            value: v,
            d_ap: 1.0,
            d_an: -1.0,
        }
    } else {
        INACTIVE_TRIPLET
    }
}

/// `(α + y (D - β))₊`.
pub fn margin_loss(term: &PairTerm, alpha: f64, beta: f64) -> PairLoss {
    let y = term.y();
    let v = alpha + y * (term.dist - beta);
    if v > 0.0 {
        PairLoss { value: v, d_dist: y }
    } else {
        PairLoss {
            value: 0.0,
            d_dist: 0.0,
        }
    }
}

/// `∂β` of [`margin_loss`]: `-y · 1{α > y (β - D)}`.
pub fn beta_gradient(term: &PairTerm, alpha: f64, beta: f64) -> f64 {
    let y = term.y();
    if alpha > y * (beta - term.dist) {
        -y
    } else {
        0.0
    }
}

/// Gradients of a distance-based loss with respect to both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointGrads {
    pub grad_i: Vec<f64>,
    pub grad_j: Vec<f64>,
    /// Set when `f_i == f_j`; both gradients are then zero.
    pub degenerate: bool,
}

/// Chains `∂loss/∂D` through `D = ‖f_i - f_j‖`.
pub fn chain_to_embeddings(dloss_dd: f64, f_i: &[f64], f_j: &[f64]) -> EndpointGrads {
    let dist = euclidean(f_i, f_j);
    if dist == 0.0 {
        return EndpointGrads {
            grad_i: vec![0.0; f_i.len()],
            grad_j: vec![0.0; f_j.len()],
            degenerate: true,
        };
    }
    let scale = dloss_dd / dist;
    let grad_i: Vec<f64> = f_i.iter().zip(f_j).map(|(a, b)| scale * (a - b)).collect();
    let grad_j = grad_i.iter().map(|g| -g).collect();
    EndpointGrads {
        grad_i,
        grad_j,
        degenerate: false,
    }
}

/// Adds `dloss_dd · ∂D/∂f` into the two gradient rows. Returns `false` for a
/// degenerate (zero-distance) pair, leaving the rows untouched.
pub(crate) fn accumulate_pair_grad(dloss_dd: f64, f_i: &[f64], f_j: &[f64], g_i: &mut [f64], g_j: &mut [f64]) -> bool {
    if dloss_dd == 0.0 {
        return true;
    }
    let dist = euclidean(f_i, f_j);
    if dist == 0.0 {
        return false;
    }
    let scale = dloss_dd / dist;
    for k in 0..f_i.len() {
        let g = scale * (f_i[k] - f_j[k]);
        g_i[k] += g;
        g_j[k] -= g;
    }
    true
}
