//! Brute-force oracles and finite-difference helpers shared by the
//! integration tests.
#![allow(dead_code)]

use dwml_core::isotonic::RiskInstance;
use dwml_core::Embeddings;

pub const FD_STEP: f64 = 1e-6;

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// `‖a - b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err_vec(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Recall@k straight from the definition: a same-label example counts if
/// fewer than `k` points rank ahead of it, where rank ties go to the lower
/// index.
pub fn brute_recall(emb: &Embeddings, labels: &[usize], k: usize) -> f64 {
    let n = emb.len();
    let mut hits = 0;
    for q in 0..n {
        let d = |j: usize| emb.distance(q, j);
        let found = (0..n).filter(|&j| j != q && labels[j] == labels[q]).any(|j| {
            let ahead = (0..n)
                .filter(|&o| o != q && o != j && (d(o) < d(j) || (d(o) == d(j) && o < j)))
                .count();
            ahead < k
        });
        hits += found as usize;
    }
    hits as f64 / n as f64
}

/// Best midpoint threshold by trying every candidate and recounting.
pub fn brute_threshold(distances: &[f64], same: &[bool]) -> (f64, f64) {
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let candidates: Vec<f64> = if sorted.len() == 1 {
        vec![sorted[0]]
    } else {
        sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    };
    let mut best = (f64::NAN, -1.0);
    for t in candidates {
        let mut correct = 0usize;
        for (d, s) in distances.iter().zip(same) {
            let predicted_same = *d < t;
            if predicted_same == *s {
                correct += 1;
            }
        }
        let acc = correct as f64 / distances.len() as f64;
        if acc > best.1 {
            best = (t, acc);
        }
    }
    best
}

/// Minimum of the margin risk on a uniform `β` grid over `[lo, hi]`.
pub fn grid_min_risk(inst: &RiskInstance, lo: f64, hi: f64, step: f64) -> f64 {
    let steps = ((hi - lo) / step).round() as usize;
    (0..=steps)
        .map(|k| inst.risk_at(lo + step * k as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Optimum of
///
/// ```text
/// min Σ ξ   s.t.  ξ_p + ξ_n ≥ 2α + D_p - D_n  for every (p, n),  ξ ≥ 0
/// ```
///
/// by enumerating every basis: choose as many tight constraints as there are
/// variables, solve, keep feasible points. Exponential; for tiny instances.
pub fn lp_by_vertex_enumeration(inst: &RiskInstance) -> f64 {
    let np = inst.pos.len();
    let nv = np + inst.neg.len();
    if inst.pos.is_empty() || inst.neg.is_empty() {
        return 0.0;
    }
    // Rows a·ξ ≥ b.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (p, dp) in inst.pos.iter().enumerate() {
        for (n, dn) in inst.neg.iter().enumerate() {
            let mut a = vec![0.0; nv];
            a[p] = 1.0;
            a[np + n] = 1.0;
            rows.push((a, 2.0 * inst.alpha + dp - dn));
        }
    }
    for v in 0..nv {
        let mut a = vec![0.0; nv];
        a[v] = 1.0;
        rows.push((a, 0.0));
    }
    let mut best = f64::INFINITY;
    for subset in combinations(rows.len(), nv) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&r| rows[r].1).collect();
        let Some(x) = solve(a, b) else { continue };
        let feasible = rows
            .iter()
            .all(|(a, b)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() >= b - 1e-12);
        if feasible {
            best = best.min(x.iter().sum());
        }
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Small point sets on a coarse lattice so that distance ties are common.
pub fn lattice_embeddings<R: rand::Rng>(rng: &mut R, n: usize, dim: usize) -> Embeddings {
    let data = (0..n * dim).map(|_| rng.random_range(0..3) as f64 * 0.5).collect();
    Embeddings::new(dim, data).unwrap()
}
