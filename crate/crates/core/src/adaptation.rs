//! Knot allocation driven by importance density functions (IDFs).
//!
//! For one input dimension of one layer, every sample of the layer's incoming
//! batch gets a positive importance weight. Normalized, the weights form a
//! probability mass over the sample coordinates; its weighted empirical CDF is
//! inverted at evenly spaced levels to obtain the primary partition.
//!
//! * [`uniform_weights`] gives every sample weight one, so knots follow the
//!   input density.
//! * [`curvature_weights`] uses `Σ_j |∂²Φ_j/∂x_d²| + ε`, the summed absolute
//!   second partials of the layer map along the dimension being re-gridded.
//!
//! After reallocation the spline coefficients are refit by ridge least squares
//! so the layer keeps (approximately) the function it had learned.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Tape;
use crate::matrix::Matrix;
use crate::network::{forward_layers, jet_forward_fd_layers, LayerParams, Network};
use crate::splines::{augment_knots, KnotVector, LocalBasis, SplineError};

/// Default `ε` added to curvature weights.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Ridge penalty of the coefficient refit.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Slack on quantile levels, in normalized mass. Keeps a cumulative mass that
/// lands exactly on a level from flipping under round-off.
pub const MASS_SLACK: f64 = 1e-9;

/// Relative offset (of the sample span) used to separate coinciding knots.
pub const NUDGE: f64 = 1e-9;

/// Step of the finite-difference fallback for curvature weights.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("importance weight {index} is {value}; weights must be finite and > 0")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("need at least one importance weight")]
    EmptyWeights,
    #[error("{samples} samples but {weights} weights")]
    LengthMismatch { samples: usize, weights: usize },
    #[error("need at least two samples to allocate knots, got {0}")]
    TooFewSamples(usize),
    #[error("grid size must be at least 1")]
    ZeroGrid,
    #[error("degenerate activation range")]
    DegenerateRange,
    #[error("non-finite sample {value} at index {index}")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("non-finite curvature at sample {sample}")]
    NonFiniteCurvature { sample: usize },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("cannot shrink grid from {current} to {requested}")]
    ShrinkingGrid { current: usize, requested: usize },
    #[error("coefficient refit is rank deficient in layer {layer}, dimension {dim}")]
    RankDeficient { layer: usize, dim: usize },
    #[error("layer {layer}, dimension {dim}: {source}")]
    Knots {
        layer: usize,
        dim: usize,
        #[source]
        source: SplineError,
    },
    #[error("layer {layer}, dimension {dim}: {source}")]
    Allocation {
        layer: usize,
        dim: usize,
        #[source]
        source: Box<AdaptError>,
    },
}

/// Strictly positive per-sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights(Vec<f64>);

impl ImportanceWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, AdaptError> {
        if weights.is_empty() {
            return Err(AdaptError::EmptyWeights);
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(AdaptError::NonPositiveWeight { index, value });
        }
        Ok(ImportanceWeights(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `w_s / Σ w`.
    pub fn pmf(&self) -> Vec<f64> {
        let total: f64 = self.0.iter().sum();
        self.0.iter().map(|w| w / total).collect()
    }
}

/// How curvature weights obtain second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    #[default]
    Exact,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdaptationStrategy {
    InputBased,
    CurvatureBased {
        epsilon: f64,
        #[serde(default)]
        derivatives: DerivativeMode,
    },
}

impl AdaptationStrategy {
    pub fn curvature() -> Self {
        AdaptationStrategy::CurvatureBased {
            epsilon: DEFAULT_EPSILON,
            derivatives: DerivativeMode::Exact,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AdaptationStrategy::InputBased => "input",
            AdaptationStrategy::CurvatureBased { .. } => "curvature",
        }
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        match *self {
            AdaptationStrategy::CurvatureBased { epsilon, .. } if !(epsilon > 0.0) => {
                Err(AdaptError::BadEpsilon(epsilon))
            }
            _ => Ok(()),
        }
    }
}

pub fn uniform_weights(n: usize) -> ImportanceWeights {
    assert!(n >= 1, "uniform weights need at least one sample");
    ImportanceWeights(vec![1.0; n])
}

/// `Σ_j |∂²Φ_j/∂x_d²(x_s)| + ε` for every row `x_s` of `batch`, where `Φ` is
/// the map of `layer` alone.
pub fn curvature_weights(
    layer: &LayerParams,
    batch: &Matrix,
    d: usize,
    epsilon: f64,
    mode: DerivativeMode,
) -> Result<ImportanceWeights, AdaptError> {
    if !(epsilon > 0.0) {
        return Err(AdaptError::BadEpsilon(epsilon));
    }
    assert!(d < layer.n_in, "axis {d} out of range for {} inputs", layer.n_in);
    let layers = std::slice::from_ref(layer);
    let mut tape = Tape::<1>::new(layers);
    let mut weights = Vec::with_capacity(batch.rows());
    for (s, x) in batch.iter_rows().enumerate() {
        let total: f64 = match mode {
            DerivativeMode::Exact => {
                tape.forward(layers, x, &[d], false);
                tape.outputs().iter().map(|j| j.d2[0].abs()).sum()
            }
            DerivativeMode::FiniteDifference => jet_forward_fd_layers(layers, x, d, FD_STEP)
                .iter()
                .map(|j| j.d2.abs())
                .sum(),
        };
        if !total.is_finite() {
            return Err(AdaptError::NonFiniteCurvature { sample: s });
        }
        weights.push(total + epsilon);
    }
    ImportanceWeights::new(weights)
}

/// Quantile levels of the interior breakpoints: `m / G` for `m = 1..G-1`.
pub fn quantile_levels(grid: usize) -> Vec<f64> {
    (1..grid).map(|m| m as f64 / grid as f64).collect()
}

/// Sample indices ordered by coordinate, ties broken by weight.
fn sorted_order(samples: &[f64], weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        samples[a]
            .total_cmp(&samples[b])
            .then(weights[a].total_cmp(&weights[b]))
    });
    order
}

fn check_inputs(samples: &[f64], weights: &ImportanceWeights, grid: usize) -> Result<(), AdaptError> {
    if grid == 0 {
        return Err(AdaptError::ZeroGrid);
    }
    if samples.len() != weights.len() {
        return Err(AdaptError::LengthMismatch {
            samples: samples.len(),
            weights: weights.len(),
        });
    }
    if samples.len() < 2 {
        return Err(AdaptError::TooFewSamples(samples.len()));
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(AdaptError::NonFiniteSample { index, value });
    }
    Ok(())
}

/// Breakpoints straight from the weighted quantile function, before any
/// separation of coinciding knots: sample minimum, interior quantiles at
/// [`quantile_levels`], sample maximum.
pub fn weighted_quantile_breakpoints(
    samples: &[f64],
    weights: &ImportanceWeights,
    grid: usize,
) -> Result<Vec<f64>, AdaptError> {
    check_inputs(samples, weights, grid)?;
    let w = weights.as_slice();
    let order = sorted_order(samples, w);
    let lo = samples[order[0]];
    let hi = samples[order[order.len() - 1]];
    if hi <= lo {
        return Err(AdaptError::DegenerateRange);
    }
    let total: f64 = order.iter().map(|&s| w[s]).sum();

    let mut breakpoints = Vec::with_capacity(grid + 1);
    breakpoints.push(lo);
    let mut cum = 0.0;
    let mut pos = 0;
    for q in quantile_levels(grid) {
        // first sorted sample whose cumulative mass reaches q
        while pos < order.len() {
            let next = cum + w[order[pos]];
            if next / total >= q - MASS_SLACK {
                break;
            }
            cum = next;
            pos += 1;
        }
        breakpoints.push(samples[order[pos.min(order.len() - 1)]]);
    }
    breakpoints.push(hi);
    Ok(breakpoints)
}

/// Primary partition of `G + 1` strictly increasing breakpoints whose density
/// follows the importance weights.
///
/// Coinciding breakpoints (heavy ties) are separated by moving the later one
/// up by `NUDGE · span`, cascading to the right.
pub fn allocate_knots(
    samples: &[f64],
    weights: &ImportanceWeights,
    grid: usize,
) -> Result<Vec<f64>, AdaptError> {
    let mut t = weighted_quantile_breakpoints(samples, weights, grid)?;
    separate_coinciding(&mut t);
    Ok(t)
}

pub(crate) fn separate_coinciding(t: &mut [f64]) {
    let span = t[t.len() - 1] - t[0];
    for m in 1..t.len() {
        if t[m] <= t[m - 1] {
            t[m] = t[m - 1] + NUDGE * span;
        }
    }
}

/// New spline coefficients for `old` on the knots `new_knots`, fitted to the
/// old spline parts at the rows of `batch` (the layer's inputs).
///
/// Per input dimension this solves `(AᵀA + λI) b' = Aᵀ y` with `A` the new
/// basis evaluated at the batch, for all outputs at once. The result uses the
/// `b` layout of [`LayerParams`] with the new basis count.
pub fn refit_coefficients(
    old: &LayerParams,
    new_knots: &[KnotVector],
    batch: &Matrix,
    layer_index: usize,
) -> Result<Vec<f64>, AdaptError> {
    assert_eq!(new_knots.len(), old.n_in, "one knot vector per input");
    assert_eq!(batch.cols(), old.n_in, "batch width must match layer inputs");
    assert!(batch.rows() > 0, "refit needs a nonempty batch");
    let nb_new = new_knots[0].num_basis();
    let nb_old = old.num_basis();
    let (n_in, n_out) = (old.n_in, old.n_out);
    let mut b_new = vec![0.0; n_in * n_out * nb_new];

    for i in 0..n_in {
        let mut gram = DMatrix::<f64>::zeros(nb_new, nb_new);
        let mut rhs = DMatrix::<f64>::zeros(nb_new, n_out);
        for x in batch.iter_rows() {
            let xi = x[i];
            let new_basis = LocalBasis::eval(&new_knots[i], xi, 0);
            let old_basis = LocalBasis::eval(&old.knots[i], xi, 0);
            let (ns, nc) = (new_basis.start, new_basis.count);
            for a in 0..nc {
                for b in 0..nc {
                    gram[(ns + a, ns + b)] += new_basis.vals[0][a] * new_basis.vals[0][b];
                }
            }
            for j in 0..n_out {
                let e = j * n_in + i;
                let target = old_basis.dot(0, &old.b[e * nb_old..(e + 1) * nb_old]);
                for a in 0..nc {
                    rhs[(ns + a, j)] += new_basis.vals[0][a] * target;
                }
            }
        }
        for m in 0..nb_new {
            gram[(m, m)] += RIDGE_LAMBDA;
        }
        let chol = gram.cholesky().ok_or(AdaptError::RankDeficient {
            layer: layer_index,
            dim: i,
        })?;
        let solution = chol.solve(&rhs);
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(AdaptError::RankDeficient {
                layer: layer_index,
                dim: i,
            });
        }
        for j in 0..n_out {
            let e = j * n_in + i;
            let col: DVector<f64> = solution.column(j).into();
            b_new[e * nb_new..(e + 1) * nb_new].copy_from_slice(col.as_slice());
        }
    }
    Ok(b_new)
}

/// Knots chosen for one layer during an adaptation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAdaptation {
    /// Primary breakpoints per input dimension.
    pub knots: Vec<Vec<f64>>,
    /// RMS of (new spline part − old spline part) over the batch and all edges.
    pub refit_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub grid: usize,
    pub layers: Vec<LayerAdaptation>,
}

/// Importance weights for one dimension of one layer under `strategy`.
pub fn strategy_weights(
    strategy: &AdaptationStrategy,
    layer: &LayerParams,
    batch: &Matrix,
    d: usize,
) -> Result<ImportanceWeights, AdaptError> {
    match *strategy {
        AdaptationStrategy::InputBased => Ok(uniform_weights(batch.rows())),
        AdaptationStrategy::CurvatureBased {
            epsilon,
            derivatives,
        } => curvature_weights(layer, batch, d, epsilon, derivatives),
    }
}

/// Re-grids every layer, front to back, at resolution `grid_new`.
///
/// Each layer sees the batch as transformed by the already-updated layers in
/// front of it. Only knots and `b` change; `r` and `c` are left alone.
pub fn adapt_network(
    net: &mut Network,
    batch: &Matrix,
    strategy: &AdaptationStrategy,
    grid_new: usize,
) -> Result<AdaptReport, AdaptError> {
    strategy.validate()?;
    let current = net.grid_size();
    if grid_new < current {
        return Err(AdaptError::ShrinkingGrid {
            current,
            requested: grid_new,
        });
    }
    let mut acts = batch.clone();
    let mut report = AdaptReport {
        grid: grid_new,
        layers: Vec::with_capacity(net.layers().len()),
    };
    for l in 0..net.layers().len() {
        let layer = &net.layers()[l];
        let k = layer.order();
        let mut knots = Vec::with_capacity(layer.n_in);
        for d in 0..layer.n_in {
            let wrap = |e: AdaptError| AdaptError::Allocation {
                layer: l,
                dim: d,
                source: Box::new(e),
            };
            let weights = strategy_weights(strategy, layer, &acts, d).map_err(wrap)?;
            let primary = allocate_knots(&acts.column(d), &weights, grid_new).map_err(wrap)?;
            let kv = augment_knots(&primary, k).map_err(|source| AdaptError::Knots {
                layer: l,
                dim: d,
                source,
            })?;
            knots.push(kv);
        }
        let b_new = refit_coefficients(layer, &knots, &acts, l)?;
        let refit_rms = spline_change_rms(layer, &knots, &b_new, &acts);

        let layer = &mut net.layers_mut()[l];
        layer.knots = knots;
        layer.b = b_new;
        report.layers.push(LayerAdaptation {
            knots: layer.knots.iter().map(|kv| kv.primary().to_vec()).collect(),
            refit_rms,
        });
        if l + 1 < net.layers().len() {
            acts = forward_layers(std::slice::from_ref(&net.layers()[l]), &acts, false).outputs;
        }
    }
    Ok(report)
}

fn spline_change_rms(old: &LayerParams, knots: &[KnotVector], b_new: &[f64], batch: &Matrix) -> f64 {
    let nb_old = old.num_basis();
    let nb_new = knots[0].num_basis();
    let mut sum = 0.0;
    let mut count = 0usize;
    for x in batch.iter_rows() {
        for i in 0..old.n_in {
            let ob = LocalBasis::eval(&old.knots[i], x[i], 0);
            let nbasis = LocalBasis::eval(&knots[i], x[i], 0);
            for j in 0..old.n_out {
                let e = j * old.n_in + i;
                let before = ob.dot(0, &old.b[e * nb_old..(e + 1) * nb_old]);
                let after = nbasis.dot(0, &b_new[e * nb_new..(e + 1) * nb_new]);
                sum += (after - before).powi(2);
                count += 1;
            }
        }
    }
    (sum / count.max(1) as f64).sqrt()
}
