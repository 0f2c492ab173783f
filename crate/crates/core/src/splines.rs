//! B-spline knot vectors and basis evaluation.
//!
//! A [`KnotVector`] holds the primary partition of one layer input (G intervals)
//! and the augmented sequence obtained by extending it by `k` uniformly spaced
//! knots on each side. It spans `G + k` basis functions of degree `k`.
//!
//! Two evaluators are provided. [`eval_basis`] and [`eval_basis_deriv`] run the
//! Cox–de Boor recursion over the whole knot vector and return every basis
//! function. [`LocalBasis`] evaluates only the `k + 1` functions that can be
//! nonzero at a point, which is what the network uses on its hot path.
//!
//! Interval ties follow the half-open convention `[t_i, t_{i+1})`, with the
//! last nonempty interval closed on the right. Points outside the primary span
//! get the natural recursion value; nothing is clamped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest spline degree supported by the local evaluator.
pub const MAX_ORDER: usize = 3;

/// Highest derivative order the local evaluator can produce.
pub const MAX_DERIV: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("zero-span grid")]
    ZeroSpan,
    #[error("grid needs at least two breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("breakpoints are not sorted")]
    Unsorted,
    #[error("non-finite breakpoint {0}")]
    NonFinite(f64),
    #[error("spline order {0} exceeds supported maximum {MAX_ORDER}")]
    UnsupportedOrder(usize),
}

/// Primary partition plus its augmented knot sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotVectorRepr", into = "KnotVectorRepr")]
pub struct KnotVector {
    primary: Vec<f64>,
    order: usize,
    augmented: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KnotVectorRepr {
    primary: Vec<f64>,
    order: usize,
}

impl TryFrom<KnotVectorRepr> for KnotVector {
    type Error = SplineError;

    fn try_from(repr: KnotVectorRepr) -> Result<Self, Self::Error> {
        augment_knots(&repr.primary, repr.order)
    }
}

impl From<KnotVector> for KnotVectorRepr {
    fn from(kv: KnotVector) -> Self {
        KnotVectorRepr {
            primary: kv.primary,
            order: kv.order,
        }
    }
}

/// Extends `primary` by `k` knots on each side with spacing `span / G`.
pub fn augment_knots(primary: &[f64], k: usize) -> Result<KnotVector, SplineError> {
    if k > MAX_ORDER {
        return Err(SplineError::UnsupportedOrder(k));
    }
    if primary.len() < 2 {
        return Err(SplineError::TooFewBreakpoints(primary.len()));
    }
    if let Some(&bad) = primary.iter().find(|v| !v.is_finite()) {
        return Err(SplineError::NonFinite(bad));
    }
    if primary.windows(2).any(|w| w[1] < w[0]) {
        return Err(SplineError::Unsorted);
    }
    let g = primary.len() - 1;
    let lo = primary[0];
    let hi = primary[g];
    if hi <= lo {
        return Err(SplineError::ZeroSpan);
    }
    let h = (hi - lo) / g as f64;

    let mut augmented = Vec::with_capacity(primary.len() + 2 * k);
    augmented.extend((1..=k).rev().map(|s| lo - s as f64 * h));
    augmented.extend_from_slice(primary);
    augmented.extend((1..=k).map(|s| hi + s as f64 * h));

    Ok(KnotVector {
        primary: primary.to_vec(),
        order: k,
        augmented,
    })
}

impl KnotVector {
    /// `G` equally spaced intervals on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, grid: usize, k: usize) -> Result<Self, SplineError> {
        if grid == 0 {
            return Err(SplineError::TooFewBreakpoints(1));
        }
        let step = (hi - lo) / grid as f64;
        let mut primary: Vec<f64> = (0..=grid).map(|i| lo + i as f64 * step).collect();
        primary[grid] = hi;
        augment_knots(&primary, k)
    }

    pub fn primary(&self) -> &[f64] {
        &self.primary
    }

    pub fn augmented(&self) -> &[f64] {
        &self.augmented
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of intervals `G` in the primary partition.
    pub fn grid_size(&self) -> usize {
        self.primary.len() - 1
    }

    /// `G + k`.
    pub fn num_basis(&self) -> usize {
        self.grid_size() + self.order
    }

    /// `(primary[0], primary[G])`.
    pub fn span(&self) -> (f64, f64) {
        (self.primary[0], self.primary[self.grid_size()])
    }

    /// Index `i` of the interval `[t_i, t_{i+1})` of the augmented vector that
    /// contains `x`, or `None` when `x` lies outside the augmented range.
    pub fn find_interval(&self, x: f64) -> Option<usize> {
        let t = &self.augmented;
        let last = t.len() - 1;
        if !(x >= t[0] && x <= t[last]) {
            return None;
        }
        if x == t[last] {
            return (0..last).rev().find(|&i| t[i] < t[i + 1]);
        }
        // largest i with t[i] <= x; x < t[last] keeps it below `last`
        Some(t.partition_point(|&v| v <= x) - 1)
    }
}

#[inline]
fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// All Cox–de Boor levels: `levels[p][j] = N_{j,p}(x)` for `p = 0..=k`.
fn basis_levels(x: f64, kv: &KnotVector) -> Vec<Vec<f64>> {
    let t = &kv.augmented;
    let k = kv.order;
    let n_knots = t.len();
    let mut levels = Vec::with_capacity(k + 1);

    let mut level0 = vec![0.0; n_knots - 1];
    if let Some(i) = kv.find_interval(x) {
        level0[i] = 1.0;
    }
    levels.push(level0);

    for p in 1..=k {
        let prev = &levels[p - 1];
        let count = n_knots - p - 1;
        let mut cur = vec![0.0; count];
        for (j, slot) in cur.iter_mut().enumerate() {
            let left = safe_div(x - t[j], t[j + p] - t[j]) * prev[j];
            let right = safe_div(t[j + p + 1] - x, t[j + p + 1] - t[j + 1]) * prev[j + 1];
            *slot = left + right;
        }
        levels.push(cur);
    }
    levels
}

/// Values `B_1(x) .. B_{G+k}(x)` of every basis function.
pub fn eval_basis(x: f64, kv: &KnotVector) -> Vec<f64> {
    basis_levels(x, kv).pop().expect("at least degree 0")
}

/// `r`-th derivative of every basis function at `x`. `r = 0` is [`eval_basis`].
pub fn eval_basis_deriv(x: f64, kv: &KnotVector, r: usize) -> Vec<f64> {
    let levels = basis_levels(x, kv);
    let k = kv.order;
    if r == 0 {
        return levels[k].clone();
    }
    if r > k {
        return vec![0.0; kv.num_basis()];
    }
    let t = &kv.augmented;
    // derivative of order q at degree p is built from order q-1 at degree p-1
    let mut cur = levels[k - r].clone();
    for q in 1..=r {
        let p = k - r + q;
        let count = t.len() - p - 1;
        let mut next = vec![0.0; count];
        for (j, slot) in next.iter_mut().enumerate() {
            let a = safe_div(cur[j], t[j + p] - t[j]);
            let b = safe_div(cur[j + 1], t[j + p + 1] - t[j + 1]);
            *slot = p as f64 * (a - b);
        }
        cur = next;
    }
    cur
}

/// The `k + 1` basis functions (and derivatives) that can be nonzero at a point.
///
/// `vals[r][s]` is the `r`-th derivative of basis function `start + s`, for
/// `s < count`.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    pub start: usize,
    pub count: usize,
    pub vals: [[f64; MAX_ORDER + 1]; MAX_DERIV + 1],
}

impl LocalBasis {
    pub const EMPTY: LocalBasis = LocalBasis {
        start: 0,
        count: 0,
        vals: [[0.0; MAX_ORDER + 1]; MAX_DERIV + 1],
    };

    /// Evaluates derivatives `0..=max_deriv` of the active basis functions.
    pub fn eval(kv: &KnotVector, x: f64, max_deriv: usize) -> LocalBasis {
        let Some(i) = kv.find_interval(x) else {
            return LocalBasis::EMPTY;
        };
        let t = &kv.augmented;
        let k = kv.order;
        let n_knots = t.len() as isize;
        let i = i as isize;
        let ku = k as isize;

        // table[p][s] = N_{j,p}(x) with j = i - k + s
        let mut table = [[0.0f64; MAX_ORDER + 1]; MAX_ORDER + 1];
        table[0][k] = 1.0;
        for p in 1..=k {
            let pi = p as isize;
            for s in (k - p)..=k {
                let j = i - ku + s as isize;
                // basis functions of degree p are indexed 0..n_knots-p-2
                if j < 0 || j > n_knots - pi - 2 {
                    continue;
                }
                let ju = j as usize;
                let lower = table[p - 1][s];
                let upper = if s < k { table[p - 1][s + 1] } else { 0.0 };
                let left = safe_div(x - t[ju], t[ju + p] - t[ju]) * lower;
                let right = safe_div(t[ju + p + 1] - x, t[ju + p + 1] - t[ju + 1]) * upper;
                table[p][s] = left + right;
            }
        }

        let mut vals = [[0.0f64; MAX_ORDER + 1]; MAX_DERIV + 1];
        vals[0] = table[k];
        let top = max_deriv.min(k).min(MAX_DERIV);
        for r in 1..=top {
            // walk degree k-r+q up from the tabulated lower degree k-r
            let mut cur = table[k - r];
            for q in 1..=r {
                let p = k - r + q;
                let mut next = [0.0f64; MAX_ORDER + 1];
                for s in (k - p)..=k {
                    let j = i - ku + s as isize;
                    if j < 0 || j > n_knots - p as isize - 2 {
                        continue;
                    }
                    let ju = j as usize;
                    let a = safe_div(cur[s], t[ju + p] - t[ju]);
                    let upper = if s < k { cur[s + 1] } else { 0.0 };
                    let b = safe_div(upper, t[ju + p + 1] - t[ju + 1]);
                    next[s] = p as f64 * (a - b);
                }
                cur = next;
            }
            vals[r] = cur;
        }

        // keep only slots that name real basis functions
        let first = i - ku;
        let nb = kv.num_basis() as isize;
        let lo = first.max(0);
        let hi = (first + ku).min(nb - 1);
        if hi < lo {
            return LocalBasis::EMPTY;
        }
        let offset = (lo - first) as usize;
        let count = (hi - lo + 1) as usize;
        let mut packed = [[0.0f64; MAX_ORDER + 1]; MAX_DERIV + 1];
        for (dst, src) in packed.iter_mut().zip(vals.iter()) {
            dst[..count].copy_from_slice(&src[offset..offset + count]);
        }
        LocalBasis {
            start: lo as usize,
            count,
            vals: packed,
        }
    }

    /// `Σ_s coef[start + s] · vals[r][s]`.
    #[inline]
    pub fn dot(&self, r: usize, coef: &[f64]) -> f64 {
        let c = &coef[self.start..self.start + self.count];
        c.iter().zip(&self.vals[r]).map(|(a, b)| a * b).sum()
    }

    /// Scatters this local basis into a full-length vector.
    pub fn to_dense(&self, r: usize, num_basis: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_basis];
        out[self.start..self.start + self.count].copy_from_slice(&self.vals[r][..self.count]);
        out
    }
}
