//! Margin risk at the optimal boundary versus the isotonic-regression LP.
//!
//! The margin risk `min_β Σ (α + y (D - β))₊` is piecewise linear in `β`, so
//! its minimum sits at one of the breakpoints `D + α` (positives) or
//! `D - α` (negatives).
//!
//! The LP
//!
//! ```text
//! minimize Σ ξ   s.t.  ξ_p + ξ_n ≥ 2α + D_p - D_n   for every (pos p, neg n),  ξ ≥ 0
//! ```
//!
//! is solved through its dual, a maximum-weight bipartite matching with edge
//! weights `2α + D_p - D_n` (edges of negative weight are never used). The
//! constraint matrix is that of a bipartite graph and hence totally
//! unimodular, so the matching optimum equals the LP optimum. This route
//! shares nothing with the breakpoint search, which is what makes the two
//! useful as mutual checks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest instance handled by [`isotonic_lp_optimum`].
pub const LP_SIZE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskInstance {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub alpha: f64,
}

impl RiskInstance {
    pub fn new(pos: Vec<f64>, neg: Vec<f64>, alpha: f64) -> Result<Self> {
        if pos.is_empty() && neg.is_empty() {
            return Err(Error::param("pos", "instance needs at least one distance"));
        }
        if let Some(d) = pos.iter().chain(&neg).find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(Error::param(
                "dist",
                format!("distances must be finite and nonnegative, got {d}"),
            ));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        Ok(Self { pos, neg, alpha })
    }

    /// Up to `max_pos` positives and `max_neg` negatives, distances `U[0, 2)`,
    /// `α` picked uniformly from `alphas`. Never empty.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_pos: usize, max_neg: usize, alphas: &[f64]) -> Self {
        loop {
            let np = rng.random_range(0..=max_pos);
            let nn = rng.random_range(0..=max_neg);
            if np + nn == 0 {
                continue;
            }
            let pos = (0..np).map(|_| rng.random_range(0.0..2.0)).collect();
            let neg = (0..nn).map(|_| rng.random_range(0.0..2.0)).collect();
            let alpha = alphas[rng.random_range(0..alphas.len())];
            return Self { pos, neg, alpha };
        }
    }

    pub fn size(&self) -> usize {
        self.pos.len() + self.neg.len()
    }

    /// `Σ (α + y (D - β))₊` at a fixed boundary.
    pub fn risk_at(&self, beta: f64) -> f64 {
        let a = self.alpha;
        let p: f64 = self.pos.iter().map(|d| (a + d - beta).max(0.0)).sum();
        let n: f64 = self.neg.iter().map(|d| (a - d + beta).max(0.0)).sum();
        p + n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginRisk {
    pub beta: f64,
    pub risk: f64,
}

/// Exact `min_β` of the margin risk by breakpoint enumeration. Among equal
/// minima the smallest breakpoint is returned.
pub fn margin_risk_min_beta(inst: &RiskInstance) -> MarginRisk {
    let a = inst.alpha;
    inst.pos
        .iter()
        .map(|d| d + a)
        .chain(inst.neg.iter().map(|d| d - a))
        .map(|beta| MarginRisk {
            beta,
            risk: inst.risk_at(beta),
        })
        .fold(
            MarginRisk {
                beta: f64::NAN,
                risk: f64::INFINITY,
            },
            |best, cur| {
                if cur.risk < best.risk || (cur.risk == best.risk && cur.beta < best.beta) {
                    cur
                } else {
                    best
                }
            },
        )
}

/// Exact optimum of the isotonic LP for instances up to [`LP_SIZE_LIMIT`].
pub fn isotonic_lp_optimum(inst: &RiskInstance) -> Result<f64> {
    if inst.size() > LP_SIZE_LIMIT {
        return Err(Error::SizeLimit {
            size: inst.size(),
            limit: LP_SIZE_LIMIT,
        });
    }
    if inst.pos.is_empty() || inst.neg.is_empty() {
        // No constraints couple the slacks; ξ = 0 is optimal.
        return Ok(0.0);
    }
    let two_alpha = 2.0 * inst.alpha;
    let weights: Vec<Vec<f64>> = inst
        .pos
        .iter()
        .map(|dp| inst.neg.iter().map(|dn| (two_alpha + dp - dn).max(0.0)).collect())
        .collect();
    Ok(max_weight_matching(&weights))
}

/// Maximum total weight of a matching in a bipartite graph with nonnegative
/// weights `w[row][col]`, via the Hungarian algorithm on the zero-padded
/// square cost matrix `-w`.
fn max_weight_matching(w: &[Vec<f64>]) -> f64 {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -w[i][j]
        } else {
            0.0
        }
    };
    // Potentials u (rows), v (cols); p[j] = row matched to column j (1-based).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| -cost(p[j] - 1, j - 1)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub margin_risk: f64,
    pub lp_risk: f64,
    pub abs_diff: f64,
}

pub fn check_equivalence(inst: &RiskInstance) -> Result<EquivalenceReport> {
    let margin_risk = margin_risk_min_beta(inst).risk;
    let lp_risk = isotonic_lp_optimum(inst)?;
    Ok(EquivalenceReport {
        margin_risk,
        lp_risk,
        abs_diff: (margin_risk - lp_risk).abs(),
    })
}
