//! Order-2 Taylor propagation through a stack of KAN layers and its reverse pass.
//!
//! A [`MultiJet`] carries a value together with first and second directional
//! derivatives along `A` input axes (no mixed terms). Through an edge function
//! `φ` the arithmetic is
//!
//! ```text
//! v  -> φ(v)
//! d1 -> φ'(v) d1
//! d2 -> φ''(v) d1² + φ'(v) d2
//! ```
//!
//! [`Tape::backward`] reverses exactly this arithmetic, so losses built from
//! second derivatives (the PDE residual) get exact parameter gradients.
//! `A = 0` is the plain forward pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::{silu_derivs, LayerParams, CHUNK};
use crate::splines::LocalBasis;

/// Value, first and second derivative along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiJet<const A: usize> {
    pub v: f64,
    pub d1: [f64; A],
    pub d2: [f64; A],
}

impl<const A: usize> Default for MultiJet<A> {
    fn default() -> Self {
        Self::ZERO
    }
}

impl<const A: usize> MultiJet<A> {
    pub const ZERO: Self = MultiJet {
        v: 0.0,
        d1: [0.0; A],
        d2: [0.0; A],
    };

    pub fn constant(v: f64) -> Self {
        MultiJet { v, ..Self::ZERO }
    }

    pub fn to_jet2(&self) -> Jet2 {
        Jet2 {
            value: self.v,
            d1: if A > 0 { self.d1[0] } else { 0.0 },
            d2: if A > 0 { self.d2[0] } else { 0.0 },
        }
    }
}

/// Gradient buffers shaped like one layer's trainable tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrads {
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(layers: &[LayerParams]) -> Self {
        Gradients {
            layers: layers
                .iter()
                .map(|l| LayerGrads {
                    r: vec![0.0; l.r.len()],
                    c: vec![0.0; l.c.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            add_into(&mut a.r, &b.r);
            add_into(&mut a.c, &b.c);
            add_into(&mut a.b, &b.b);
        }
    }

    /// Flattened in the order r, c, b per layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.r.iter().chain(&l.c).chain(&l.b).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.r.iter().chain(&l.c).chain(&l.b).all(|v| v.is_finite()))
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[derive(Debug, Clone)]
struct LayerTape<const A: usize> {
    inputs: Vec<MultiJet<A>>,
    silu: Vec<[f64; 4]>,
    basis: Vec<LocalBasis>,
}

/// Per-sample record of a forward pass, reused across samples.
#[derive(Debug, Clone)]
pub struct Tape<const A: usize> {
    layers: Vec<LayerTape<A>>,
    outputs: Vec<MultiJet<A>>,
    adj_out: Vec<MultiJet<A>>,
    adj_in: Vec<MultiJet<A>>,
}

impl<const A: usize> Tape<A> {
    pub fn new(layers: &[LayerParams]) -> Self {
        let widest = layers
            .iter()
            .map(|l| l.n_in.max(l.n_out))
            .max()
            .unwrap_or(0);
        Tape {
            layers: layers
                .iter()
                .map(|l| LayerTape {
                    inputs: vec![MultiJet::ZERO; l.n_in],
                    silu: vec![[0.0; 4]; l.n_in],
                    basis: vec![LocalBasis::EMPTY; l.n_in],
                })
                .collect(),
            outputs: vec![MultiJet::ZERO; layers.last().map_or(0, |l| l.n_out)],
            adj_out: Vec::with_capacity(widest),
            adj_in: Vec::with_capacity(widest),
        }
    }

    pub fn outputs(&self) -> &[MultiJet<A>] {
        &self.outputs
    }

    pub fn layer_inputs(&self, layer: usize) -> &[MultiJet<A>] {
        &self.layers[layer].inputs
    }

    /// Seeds coordinate `axes[a]` with unit first derivative on axis `a` and
    /// runs the stack. `for_backward` records the extra derivative order the
    /// reverse pass needs.
    pub fn forward(&mut self, layers: &[LayerParams], x: &[f64], axes: &[usize], for_backward: bool) {
        assert_eq!(axes.len(), A, "one axis per jet direction");
        let max_deriv = match (A, for_backward) {
            (0, false) => 0,
            (0, true) => 1,
            (_, false) => 2,
            (_, true) => 3,
        };

        let first = &mut self.layers[0].inputs;
        for (i, slot) in first.iter_mut().enumerate() {
            *slot = MultiJet::constant(x[i]);
        }
        for (a, &axis) in axes.iter().enumerate() {
            first[axis].d1[a] = 1.0;
        }

        for l in 0..layers.len() {
            let (head, tail) = self.layers.split_at_mut(l + 1);
            let tape = &mut head[l];
            let out: &mut [MultiJet<A>] = match tail.first_mut() {
                Some(next) => &mut next.inputs,
                None => &mut self.outputs,
            };
            layer_forward_jets(&layers[l], tape, out, max_deriv);
        }
    }

    /// Accumulates parameter gradients given adjoints of the outputs.
    /// Must follow a `forward(.., for_backward = true)` on the same sample.
    pub fn backward(&mut self, layers: &[LayerParams], out_adj: &[MultiJet<A>], grads: &mut Gradients) {
        self.adj_out.clear();
        self.adj_out.extend_from_slice(out_adj);
        for l in (0..layers.len()).rev() {
            let need_input_adj = l > 0;
            self.adj_in.clear();
            self.adj_in.resize(layers[l].n_in, MultiJet::ZERO);
            layer_backward(
                &layers[l],
                &self.layers[l],
                &self.adj_out,
                need_input_adj.then_some(&mut self.adj_in[..]),
                &mut grads.layers[l],
            );
            std::mem::swap(&mut self.adj_out, &mut self.adj_in);
        }
    }
}

fn layer_forward_jets<const A: usize>(
    layer: &LayerParams,
    tape: &mut LayerTape<A>,
    out: &mut [MultiJet<A>],
    max_deriv: usize,
) {
    let nb = layer.num_basis();
    let n_in = layer.n_in;
    for i in 0..n_in {
        let v = tape.inputs[i].v;
        tape.silu[i] = silu_derivs(v);
        tape.basis[i] = LocalBasis::eval(&layer.knots[i], v, max_deriv);
    }
    for (j, y) in out.iter_mut().enumerate() {
        let mut acc = MultiJet::<A>::ZERO;
        for i in 0..n_in {
            let e = j * n_in + i;
            let coef = &layer.b[e * nb..(e + 1) * nb];
            let (r, c) = (layer.r[e], layer.c[e]);
            let s = &tape.silu[i];
            let basis = &tape.basis[i];
            acc.v += r * s[0] + c * basis.dot(0, coef);
            if A > 0 {
                let phi1 = r * s[1] + c * basis.dot(1, coef);
                let phi2 = r * s[2] + c * basis.dot(2, coef);
                let x = &tape.inputs[i];
                for a in 0..A {
                    acc.d1[a] += phi1 * x.d1[a];
                    acc.d2[a] += phi2 * x.d1[a] * x.d1[a] + phi1 * x.d2[a];
                }
            }
        }
        *y = acc;
    }
}

fn layer_backward<const A: usize>(
    layer: &LayerParams,
    tape: &LayerTape<A>,
    out_adj: &[MultiJet<A>],
    mut in_adj: Option<&mut [MultiJet<A>]>,
    grads: &mut LayerGrads,
) {
    let nb = layer.num_basis();
    let n_in = layer.n_in;
    for i in 0..n_in {
        let x = &tape.inputs[i];
        let s = &tape.silu[i];
        let basis = &tape.basis[i];
        let mut x_adj = MultiJet::<A>::ZERO;
        for (j, y_adj) in out_adj.iter().enumerate() {
            let e = j * n_in + i;
            let coef = &layer.b[e * nb..(e + 1) * nb];
            let (r, c) = (layer.r[e], layer.c[e]);

            // adjoints of φ, φ', φ''
            let g0 = y_adj.v;
            let mut g1 = 0.0;
            let mut g2 = 0.0;
            for a in 0..A {
                g1 += y_adj.d1[a] * x.d1[a] + y_adj.d2[a] * x.d2[a];
                g2 += y_adj.d2[a] * x.d1[a] * x.d1[a];
            }
            if g0 == 0.0 && g1 == 0.0 && g2 == 0.0 {
                continue;
            }

            let s0 = basis.dot(0, coef);
            let (s1, s2) = if A > 0 {
                (basis.dot(1, coef), basis.dot(2, coef))
            } else {
                (0.0, 0.0)
            };
            grads.r[e] += g0 * s[0] + g1 * s[1] + g2 * s[2];
            grads.c[e] += g0 * s0 + g1 * s1 + g2 * s2;
            let gb = &mut grads.b[e * nb + basis.start..e * nb + basis.start + basis.count];
            for (slot, g) in gb.iter_mut().enumerate() {
                let mut w = g0 * basis.vals[0][slot];
                if A > 0 {
                    w += g1 * basis.vals[1][slot] + g2 * basis.vals[2][slot];
                }
                *g += c * w;
            }

            if in_adj.is_some() {
                let phi1 = r * s[1] + c * if A > 0 { s1 } else { basis.dot(1, coef) };
                x_adj.v += g0 * phi1;
                if A > 0 {
                    let phi2 = r * s[2] + c * s2;
                    let phi3 = r * s[3] + c * basis.dot(3, coef);
                    x_adj.v += g1 * phi2 + g2 * phi3;
                    for a in 0..A {
                        x_adj.d1[a] += y_adj.d1[a] * phi1 + 2.0 * y_adj.d2[a] * phi2 * x.d1[a];
                        x_adj.d2[a] += y_adj.d2[a] * phi1;
                    }
                }
            }
        }
        if let Some(adj) = in_adj.as_deref_mut() {
            adj[i] = x_adj;
        }
    }
}

/// A loss that is a sum of independent per-sample terms over network outputs
/// (and their jets along `A` axes).
pub trait SampleObjective<const A: usize>: Sync {
    fn num_samples(&self) -> usize;
    fn input(&self, s: usize) -> &[f64];
    fn axes(&self) -> [usize; A];
    /// Returns this sample's loss contribution and writes its output adjoints.
    fn sample(&self, s: usize, out: &[MultiJet<A>], adj: &mut [MultiJet<A>]) -> f64;
}

/// Sums the objective over all samples and adds its gradient into `grads`.
///
/// Samples are split into fixed chunks whose partial sums are combined in
/// chunk order, so the result does not depend on the thread count.
pub fn accumulate<const A: usize, O: SampleObjective<A>>(
    layers: &[LayerParams],
    objective: &O,
    grads: &mut Gradients,
) -> f64 {
    let n = objective.num_samples();
    let axes = objective.axes();
    let n_out = layers.last().map_or(0, |l| l.n_out);
    let partials: Vec<(f64, Gradients)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut g = Gradients::zeros_like(layers);
            let mut tape = Tape::<A>::new(layers);
            let mut adj = vec![MultiJet::<A>::ZERO; n_out];
            let mut loss = 0.0;
            for s in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                tape.forward(layers, objective.input(s), &axes, true);
                adj.fill(MultiJet::ZERO);
                loss += objective.sample(s, tape.outputs(), &mut adj);
                tape.backward(layers, &adj, &mut g);
            }
            (loss, g)
        })
        .collect();
    let mut total = 0.0;
    for (loss, g) in partials {
        total += loss;
        grads.add_assign(&g);
    }
    total
}

/// Objective value only.
pub fn evaluate<const A: usize, O: SampleObjective<A>>(layers: &[LayerParams], objective: &O) -> f64 {
    let n = objective.num_samples();
    let axes = objective.axes();
    let n_out = layers.last().map_or(0, |l| l.n_out);
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut tape = Tape::<A>::new(layers);
            let mut adj = vec![MultiJet::<A>::ZERO; n_out];
            let mut loss = 0.0;
            for s in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                tape.forward(layers, objective.input(s), &axes, false);
                loss += objective.sample(s, tape.outputs(), &mut adj);
            }
            loss
        })
        .collect();
    partials.into_iter().sum()
}
