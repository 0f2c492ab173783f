//! KAN layers and networks.
//!
//! Each layer computes, for every output `j`,
//!
//! ```text
//! y_j = Σ_i ( r_ji · silu(x_i) + c_ji · Σ_m b_jim · B_m(x_i) )
//! ```
//!
//! where the basis `B_m` comes from the knot vector of input `i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::engine::Jet2;
use crate::engine::{MultiJet, Tape};
use crate::matrix::Matrix;
use crate::splines::{KnotVector, SplineError};

/// Checkpoint format version written by [`Network::to_checkpoint`].
pub const CHECKPOINT_VERSION: u32 = 1;

const CHECKPOINT_FORMAT: &str = "kangrid-checkpoint";

/// Rows per parallel work item in batch evaluation.
pub(crate) const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network needs at least two widths, got {0:?}")]
    TooShallow(Vec<usize>),
    #[error("layer widths must be positive, got {0:?}")]
    ZeroWidth(Vec<usize>),
    #[error("layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    CheckpointVersion { found: u32 },
}

/// Trainable and non-trainable state of one KAN layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub n_in: usize,
    pub n_out: usize,
    /// Residual weights, `r[j * n_in + i]`.
    pub r: Vec<f64>,
    /// Scaling weights, same layout as `r`.
    pub c: Vec<f64>,
    /// Spline coefficients, `b[(j * n_in + i) * (G + k) + m]`.
    pub b: Vec<f64>,
    /// One knot vector per input dimension; all share `G` and `k`.
    pub knots: Vec<KnotVector>,
}

impl LayerParams {
    pub fn grid_size(&self) -> usize {
        self.knots[0].grid_size()
    }

    pub fn order(&self) -> usize {
        self.knots[0].order()
    }

    /// `G + k`.
    pub fn num_basis(&self) -> usize {
        self.knots[0].num_basis()
    }

    #[inline]
    pub fn edge(&self, j: usize, i: usize) -> usize {
        j * self.n_in + i
    }

    pub fn coeffs(&self, j: usize, i: usize) -> &[f64] {
        let nb = self.num_basis();
        let e = self.edge(j, i);
        &self.b[e * nb..(e + 1) * nb]
    }

    pub fn num_params(&self) -> usize {
        self.r.len() + self.c.len() + self.b.len()
    }

    /// Spline part `Σ_m b_jim B_m(x)` of edge `(j, i)`, without the `c` factor.
    pub fn spline_value(&self, j: usize, i: usize, x: f64) -> f64 {
        let basis = crate::splines::LocalBasis::eval(&self.knots[i], x, 0);
        basis.dot(0, self.coeffs(j, i))
    }

    pub fn validate(&self, layer: usize) -> Result<(), NetworkError> {
        let shape = |detail: String| NetworkError::Shape { layer, detail };
        let edges = self.n_in * self.n_out;
        if self.knots.len() != self.n_in {
            return Err(shape(format!(
                "{} knot vectors for {} inputs",
                self.knots.len(),
                self.n_in
            )));
        }
        let nb = self.num_basis();
        if self.knots.iter().any(|kv| kv.num_basis() != nb) {
            return Err(shape("knot vectors disagree on G + k".into()));
        }
        if self.r.len() != edges || self.c.len() != edges {
            return Err(shape("r/c length does not match n_out * n_in".into()));
        }
        if self.b.len() != edges * nb {
            return Err(shape(format!(
                "b has {} entries, expected {}",
                self.b.len(),
                edges * nb
            )));
        }
        Ok(())
    }
}

/// `x / (1 + exp(-x))`.
pub fn silu(x: f64) -> f64 {
    silu_derivs(x)[0]
}

/// SiLU and its first three derivatives at `x`.
#[inline]
pub fn silu_derivs(x: f64) -> [f64; 4] {
    let e = (-x.abs()).exp();
    let denom = 1.0 + e;
    let sig = if x >= 0.0 { 1.0 / denom } else { e / denom };
    // σ' computed from e directly keeps precision in the saturated tails
    let s1 = e / (denom * denom);
    let one_minus_2s = if x >= 0.0 {
        (e - 1.0) / denom
    } else {
        (1.0 - e) / denom
    };
    let s2 = s1 * one_minus_2s;
    let s3 = s1 * (one_minus_2s * one_minus_2s - 2.0 * s1);
    [x * sig, sig + x * s1, 2.0 * s1 + x * s2, 3.0 * s2 + x * s3]
}

/// SiLU jet at `x`: value, first and second derivative.
pub fn silu_jet(x: f64) -> Jet2 {
    let d = silu_derivs(x);
    Jet2 {
        value: d[0],
        d1: d[1],
        d2: d[2],
    }
}

/// Fresh layer with knots uniform on `[-1, 1]`.
///
/// `c` starts at one. `r` and `b` are zero-mean normal draws with variances
/// `2 / (n_in + n_out)` and `2 / ((n_in + n_out)(G + k))`.
pub fn init_layer(
    n_in: usize,
    n_out: usize,
    grid: usize,
    k: usize,
    seed: u64,
) -> Result<LayerParams, SplineError> {
    let kv = KnotVector::uniform(-1.0, 1.0, grid, k)?;
    let nb = kv.num_basis();
    let edges = n_in * n_out;
    let fan = (n_in + n_out) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_dist = Normal::new(0.0, (2.0 / fan).sqrt()).expect("positive std");
    let b_dist = Normal::new(0.0, (2.0 / (fan * nb as f64)).sqrt()).expect("positive std");
    let r = (0..edges).map(|_| r_dist.sample(&mut rng)).collect();
    let b = (0..edges * nb).map(|_| b_dist.sample(&mut rng)).collect();
    Ok(LayerParams {
        n_in,
        n_out,
        r,
        c: vec![1.0; edges],
        b,
        knots: vec![kv; n_in],
    })
}

/// One evaluation of the layer map on a single input vector.
pub fn layer_forward(params: &LayerParams, x: &[f64]) -> Vec<f64> {
    let mut tape = Tape::<0>::new(std::slice::from_ref(params));
    tape.forward(std::slice::from_ref(params), x, &[], false);
    tape.outputs().iter().map(|j| j.v).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    widths: Vec<usize>,
    layers: Vec<LayerParams>,
}

/// Outputs of a batch forward pass, with each layer's inputs when captured.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub outputs: Matrix,
    /// `captured[l]` holds the activations entering layer `l`.
    pub captured: Option<Vec<Matrix>>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    widths: Vec<usize>,
    order: usize,
    layers: Vec<LayerParams>,
}

impl Network {
    /// Builds a network with every layer initialized by [`init_layer`].
    /// Layer `l` draws from `derive_seed(seed, l)`.
    pub fn new(widths: &[usize], grid: usize, k: usize, seed: u64) -> Result<Self, NetworkError> {
        if widths.len() < 2 {
            return Err(NetworkError::TooShallow(widths.to_vec()));
        }
        if widths.contains(&0) {
            return Err(NetworkError::ZeroWidth(widths.to_vec()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| init_layer(w[0], w[1], grid, k, crate::derive_seed(seed, l as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Network {
            widths: widths.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::TooShallow(vec![]));
        }
        let mut widths = vec![layers[0].n_in];
        for (l, layer) in layers.iter().enumerate() {
            layer.validate(l)?;
            if layer.n_in != *widths.last().unwrap() {
                return Err(NetworkError::Shape {
                    layer: l,
                    detail: format!(
                        "expects {} inputs but previous width is {}",
                        layer.n_in,
                        widths.last().unwrap()
                    ),
                });
            }
            widths.push(layer.n_out);
        }
        Ok(Network { widths, layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Current `G` (all layers share it).
    pub fn grid_size(&self) -> usize {
        self.layers[0].grid_size()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::num_params).sum()
    }

    /// Forward pass for one input vector.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::<0>::new(&self.layers);
        tape.forward(&self.layers, x, &[], false);
        tape.outputs().iter().map(|j| j.v).collect()
    }

    pub fn predict(&self, inputs: &Matrix) -> Matrix {
        network_forward(self, inputs, false).outputs
    }

    pub fn to_checkpoint(&self) -> String {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            widths: self.widths.clone(),
            order: self.layers[0].order(),
            layers: self.layers.clone(),
        };
        serde_json::to_string(&ck).expect("network serializes")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NetworkError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(NetworkError::Checkpoint("missing or unknown format tag".into()));
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| NetworkError::Checkpoint("missing version".into()))?;
        if version != CHECKPOINT_VERSION as u64 {
            return Err(NetworkError::CheckpointVersion {
                found: version as u32,
            });
        }
        let ck: Checkpoint =
            serde_json::from_value(value).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        let net = Network::from_layers(ck.layers)?;
        if net.widths != ck.widths {
            return Err(NetworkError::Checkpoint("widths disagree with layers".into()));
        }
        if net.layers.iter().any(|l| l.order() != ck.order) {
            return Err(NetworkError::Checkpoint("order disagrees with knots".into()));
        }
        Ok(net)
    }
}

/// Batch forward pass. With `capture`, also records the inputs seen by every layer.
pub fn network_forward(net: &Network, inputs: &Matrix, capture: bool) -> ForwardPass {
    forward_layers(&net.layers, inputs, capture)
}

pub(crate) fn forward_layers(layers: &[LayerParams], inputs: &Matrix, capture: bool) -> ForwardPass {
    let n = inputs.rows();
    let n_out = layers.last().map_or(inputs.cols(), |l| l.n_out);
    let widths: Vec<usize> = layers.iter().map(|l| l.n_in).collect();

    let chunks: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut tape = Tape::<0>::new(layers);
            let mut out = Vec::with_capacity((hi - lo) * n_out);
            let mut caps: Vec<Vec<f64>> = if capture {
                widths.iter().map(|w| Vec::with_capacity((hi - lo) * w)).collect()
            } else {
                Vec::new()
            };
            for s in lo..hi {
                tape.forward(layers, inputs.row(s), &[], false);
                out.extend(tape.outputs().iter().map(|j| j.v));
                if capture {
                    for (l, cap) in caps.iter_mut().enumerate() {
                        cap.extend(tape.layer_inputs(l).iter().map(|j| j.v));
                    }
                }
            }
            (out, caps)
        })
        .collect();

    let mut out = Vec::with_capacity(n * n_out);
    let mut caps: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(n * w)).collect();
    for (o, c) in chunks {
        out.extend(o);
        if capture {
            for (dst, src) in caps.iter_mut().zip(c) {
                dst.extend(src);
            }
        }
    }
    ForwardPass {
        outputs: Matrix::from_vec(n, n_out, out),
        captured: capture.then(|| {
            caps.into_iter()
                .zip(&widths)
                .map(|(d, &w)| Matrix::from_vec(n, w, d))
                .collect()
        }),
    }
}

/// Value, first and second partial derivative of every output with respect
/// to input coordinate `d`, by exact Taylor propagation.
pub fn jet_forward(net: &Network, x: &[f64], d: usize) -> Vec<Jet2> {
    jet_forward_layers(&net.layers, x, d)
}

/// [`jet_forward`] for a single layer treated as the whole map.
pub fn layer_jet(layer: &LayerParams, x: &[f64], d: usize) -> Vec<Jet2> {
    jet_forward_layers(std::slice::from_ref(layer), x, d)
}

pub(crate) fn jet_forward_layers(layers: &[LayerParams], x: &[f64], d: usize) -> Vec<Jet2> {
    assert!(d < x.len(), "axis {d} out of range for input of length {}", x.len());
    let mut tape = Tape::<1>::new(layers);
    tape.forward(layers, x, &[d], false);
    tape.outputs().iter().map(MultiJet::to_jet2).collect()
}

/// Central finite-difference stand-in for [`jet_forward`], used to cross-check it.
pub fn jet_forward_fd(net: &Network, x: &[f64], d: usize, step: f64) -> Vec<Jet2> {
    jet_forward_fd_layers(&net.layers, x, d, step)
}

pub(crate) fn jet_forward_fd_layers(
    layers: &[LayerParams],
    x: &[f64],
    d: usize,
    step: f64,
) -> Vec<Jet2> {
    let eval = |shift: f64| {
        let mut p = x.to_vec();
        p[d] += shift;
        let mut tape = Tape::<0>::new(layers);
        tape.forward(layers, &p, &[], false);
        tape.outputs().iter().map(|j| j.v).collect::<Vec<_>>()
    };
    let mid = eval(0.0);
    let plus = eval(step);
    let minus = eval(-step);
    (0..mid.len())
        .map(|j| Jet2 {
            value: mid[j],
            d1: (plus[j] - minus[j]) / (2.0 * step),
            d2: (plus[j] - 2.0 * mid[j] + minus[j]) / (step * step),
        })
        .collect()
}
