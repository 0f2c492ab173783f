//! Losses, exact parameter gradients, Adam, and the scheduled training loop.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{adapt_network, AdaptError, AdaptReport, AdaptationStrategy};
use crate::engine::{accumulate, evaluate, Gradients, MultiJet, SampleObjective};
use crate::matrix::Matrix;
use crate::network::{LayerParams, Network, NetworkError};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        trace: Vec<TraceRow>,
    },
    #[error("grid adaptation at iteration {iteration} failed: {source}")]
    Adapt {
        iteration: usize,
        #[source]
        source: AdaptError,
    },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("trace export failed: {0}")]
    Export(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Pinn,
}

/// Re-grid to `grid` before the gradient step of `iteration`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEvent {
    pub iteration: usize,
    pub grid: usize,
}

fn default_grid() -> usize {
    3
}

fn default_order() -> usize {
    3
}

fn default_boundary_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub grid_schedule: Vec<GridEvent>,
    pub strategy: AdaptationStrategy,
    /// Seed of the network initialization.
    pub seed: u64,
    pub loss_kind: LossKind,
    #[serde(default = "default_boundary_weight")]
    pub boundary_weight: f64,
    #[serde(default = "default_grid")]
    pub initial_grid: usize,
    #[serde(default = "default_order")]
    pub spline_order: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.initial_grid == 0 {
            return bad("initial grid must be at least 1".into());
        }
        if !(self.boundary_weight >= 0.0 && self.boundary_weight.is_finite()) {
            return bad(format!("boundary weight must be >= 0, got {}", self.boundary_weight));
        }
        let mut last_iter = None;
        let mut last_grid = self.initial_grid;
        for ev in &self.grid_schedule {
            if ev.iteration >= self.iterations {
                return bad(format!(
                    "grid event at iteration {} is not before the end ({})",
                    ev.iteration, self.iterations
                ));
            }
            if last_iter.is_some_and(|it| ev.iteration <= it) {
                return bad("grid event iterations must be strictly increasing".into());
            }
            if ev.grid < last_grid {
                return bad(format!("grid sizes must not decrease ({} after {})", ev.grid, last_grid));
            }
            last_iter = Some(ev.iteration);
            last_grid = ev.grid;
        }
        self.strategy
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }

    /// A fresh network with this config's grid, spline order and seed.
    pub fn build_network(&self, widths: &[usize]) -> Result<Network, TrainError> {
        Ok(Network::new(widths, self.initial_grid, self.spline_order, self.seed)?)
    }
}

/// Collocation and boundary data of a PDE `Δu + k²u = f` with `u = 0` on the
/// boundary, for a scalar network output over two inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnProblem {
    pub collocation: Matrix,
    pub forcing: Vec<f64>,
    pub boundary: Matrix,
    pub wave_number: f64,
}

/// What a training run minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Mse { inputs: &'a Matrix, targets: &'a Matrix },
    Pinn { problem: &'a PinnProblem, boundary_weight: f64 },
}

struct MseTerm<'a> {
    inputs: &'a Matrix,
    targets: &'a Matrix,
    scale: f64,
}

impl SampleObjective<0> for MseTerm<'_> {
    fn num_samples(&self) -> usize {
        self.inputs.rows()
    }

    fn input(&self, s: usize) -> &[f64] {
        self.inputs.row(s)
    }

    fn axes(&self) -> [usize; 0] {
        []
    }

    fn sample(&self, s: usize, out: &[MultiJet<0>], adj: &mut [MultiJet<0>]) -> f64 {
        let mut loss = 0.0;
        for ((o, a), t) in out.iter().zip(adj.iter_mut()).zip(self.targets.row(s)) {
            let e = o.v - t;
            loss += e * e;
            a.v = 2.0 * e * self.scale;
        }
        loss * self.scale
    }
}

struct ResidualTerm<'a> {
    problem: &'a PinnProblem,
    scale: f64,
}

impl SampleObjective<2> for ResidualTerm<'_> {
    fn num_samples(&self) -> usize {
        self.problem.collocation.rows()
    }

    fn input(&self, s: usize) -> &[f64] {
        self.problem.collocation.row(s)
    }

    fn axes(&self) -> [usize; 2] {
        [0, 1]
    }

    fn sample(&self, s: usize, out: &[MultiJet<2>], adj: &mut [MultiJet<2>]) -> f64 {
        let k2 = self.problem.wave_number * self.problem.wave_number;
        let u = &out[0];
        let res = u.d2[0] + u.d2[1] + k2 * u.v - self.problem.forcing[s];
        let g = 2.0 * res * self.scale;
        adj[0].v = k2 * g;
        adj[0].d2 = [g, g];
        res * res * self.scale
    }
}

struct BoundaryTerm<'a> {
    points: &'a Matrix,
    scale: f64,
}

impl SampleObjective<0> for BoundaryTerm<'_> {
    fn num_samples(&self) -> usize {
        self.points.rows()
    }

    fn input(&self, s: usize) -> &[f64] {
        self.points.row(s)
    }

    fn axes(&self) -> [usize; 0] {
        []
    }

    fn sample(&self, _s: usize, out: &[MultiJet<0>], adj: &mut [MultiJet<0>]) -> f64 {
        adj[0].v = 2.0 * out[0].v * self.scale;
        out[0].v * out[0].v * self.scale
    }
}

impl<'a> Objective<'a> {
    pub fn check(&self, net: &Network) -> Result<(), TrainError> {
        match *self {
            Objective::Mse { inputs, targets } => {
                if inputs.rows() != targets.rows() {
                    return Err(TrainError::Shape(format!(
                        "{} inputs but {} targets",
                        inputs.rows(),
                        targets.rows()
                    )));
                }
                if inputs.rows() == 0 {
                    return Err(TrainError::Shape("empty training set".into()));
                }
                if inputs.cols() != net.input_dim() || targets.cols() != net.output_dim() {
                    return Err(TrainError::Shape(format!(
                        "data is {}→{} but network is {}→{}",
                        inputs.cols(),
                        targets.cols(),
                        net.input_dim(),
                        net.output_dim()
                    )));
                }
            }
            Objective::Pinn { problem, .. } => {
                if net.input_dim() != 2 || net.output_dim() != 1 {
                    return Err(TrainError::Shape("PDE loss needs a 2→1 network".into()));
                }
                if problem.collocation.cols() != 2 || problem.boundary.cols() != 2 {
                    return Err(TrainError::Shape("PDE points must be two-dimensional".into()));
                }
                if problem.forcing.len() != problem.collocation.rows() {
                    return Err(TrainError::Shape("one forcing value per collocation point".into()));
                }
                if problem.collocation.rows() == 0 {
                    return Err(TrainError::Shape("no collocation points".into()));
                }
            }
        }
        Ok(())
    }

    /// Points the grid is adapted on: training inputs or collocation points.
    pub fn adaptation_batch(&self) -> &'a Matrix {
        match *self {
            Objective::Mse { inputs, .. } => inputs,
            Objective::Pinn { problem, .. } => &problem.collocation,
        }
    }

    fn run(&self, layers: &[LayerParams], grads: Option<&mut Gradients>) -> f64 {
        match *self {
            Objective::Mse { inputs, targets } => {
                let term = MseTerm {
                    inputs,
                    targets,
                    scale: 1.0 / (inputs.rows() * targets.cols().max(1)) as f64,
                };
                match grads {
                    Some(g) => accumulate(layers, &term, g),
                    None => evaluate(layers, &term),
                }
            }
            Objective::Pinn {
                problem,
                boundary_weight,
            } => {
                let residual = ResidualTerm {
                    problem,
                    scale: 1.0 / problem.collocation.rows() as f64,
                };
                let nb = problem.boundary.rows();
                let boundary = BoundaryTerm {
                    points: &problem.boundary,
                    scale: if nb == 0 { 0.0 } else { boundary_weight / nb as f64 },
                };
                match grads {
                    Some(g) => accumulate(layers, &residual, g) + accumulate(layers, &boundary, g),
                    None => evaluate(layers, &residual) + evaluate(layers, &boundary),
                }
            }
        }
    }

    pub fn loss(&self, net: &Network) -> f64 {
        self.run(net.layers(), None)
    }

    pub fn loss_and_gradients(&self, net: &Network) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(net.layers());
        let loss = self.run(net.layers(), Some(&mut grads));
        (loss, grads)
    }
}

/// Mean over samples and output dimensions of the squared error.
pub fn mse_loss(net: &Network, inputs: &Matrix, targets: &Matrix) -> f64 {
    Objective::Mse { inputs, targets }.loss(net)
}

/// Mean squared PDE residual plus `boundary_weight` times the mean squared
/// boundary value.
pub fn pinn_loss(net: &Network, problem: &PinnProblem, boundary_weight: f64) -> f64 {
    Objective::Pinn {
        problem,
        boundary_weight,
    }
    .loss(net)
}

/// Loss and its exact gradient with respect to every `r`, `c` and `b`.
pub fn param_gradients(
    net: &Network,
    objective: &Objective<'_>,
    iteration: usize,
) -> Result<(f64, Gradients), TrainError> {
    let (loss, grads) = objective.loss_and_gradients(net);
    if !loss.is_finite() || !grads.is_finite() {
        return Err(TrainError::NonFinite {
            iteration,
            trace: Vec::new(),
        });
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) {
        assert_eq!(params.len(), self.m.len(), "moment shape mismatch");
        self.step += 1;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMoments {
    pub r: Moments,
    pub c: Moments,
    pub b: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub layers: Vec<LayerMoments>,
}

impl OptimizerState {
    pub fn new(layers: &[LayerParams]) -> Self {
        OptimizerState {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            layers: layers
                .iter()
                .map(|l| LayerMoments {
                    r: Moments::zeros(l.r.len()),
                    c: Moments::zeros(l.c.len()),
                    b: Moments::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    /// Fresh moments for every `b`, sized to the current coefficient tensors.
    /// `r` and `c` moments carry over.
    pub fn reset_spline_moments(&mut self, layers: &[LayerParams]) {
        for (state, layer) in self.layers.iter_mut().zip(layers) {
            state.b = Moments::zeros(layer.b.len());
        }
    }
}

/// Bias-corrected Adam update of all parameters in place.
pub fn adam_step(layers: &mut [LayerParams], grads: &Gradients, state: &mut OptimizerState, lr: f64) {
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for ((layer, g), s) in layers.iter_mut().zip(&grads.layers).zip(&mut state.layers) {
        s.r.update(&mut layer.r, &g.r, lr, b1, b2, eps);
        s.c.update(&mut layer.c, &g.c, lr, b1, b2, eps);
        s.b.update(&mut layer.b, &g.b, lr, b1, b2, eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub grid_g: usize,
    pub wall_clock_ms: f64,
}

/// Writes the loss trace as CSV with a header row.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "loss", "grid_G", "wall_clock_ms"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.loss),
            r.grid_g.to_string(),
            format!("{:.3}", r.wall_clock_ms),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEventRecord {
    pub iteration: usize,
    pub grid: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub report: AdaptReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Loss at each iteration, evaluated before that iteration's step.
    pub trace: Vec<TraceRow>,
    pub events: Vec<GridEventRecord>,
    /// Loss after the last step.
    pub final_loss: f64,
    pub wall_clock_ms: f64,
}

/// Full-batch Adam on `objective`, re-gridding at the scheduled iterations
/// before that iteration's gradient step.
pub fn train(net: &mut Network, objective: &Objective<'_>, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    objective.check(net)?;
    let start = Instant::now();
    let mut state = OptimizerState::new(net.layers());
    let mut trace = Vec::with_capacity(config.iterations);
    let mut events = Vec::with_capacity(config.grid_schedule.len());
    let mut schedule = config.grid_schedule.iter().peekable();

    for it in 0..config.iterations {
        if let Some(ev) = schedule.next_if(|ev| ev.iteration == it) {
            let loss_before = objective.loss(net);
            let report = adapt_network(net, objective.adaptation_batch(), &config.strategy, ev.grid)
                .map_err(|source| TrainError::Adapt { iteration: it, source })?;
            state.reset_spline_moments(net.layers());
            let loss_after = objective.loss(net);
            log::debug!("iteration {it}: grid -> {}, loss {loss_before:e} -> {loss_after:e}", ev.grid);
            events.push(GridEventRecord {
                iteration: it,
                grid: ev.grid,
                loss_before,
                loss_after,
                report,
            });
        }

        let (loss, grads) = objective.loss_and_gradients(net);
        trace.push(TraceRow {
            iteration: it,
            loss,
            grid_g: net.grid_size(),
            wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if !loss.is_finite() || !grads.is_finite() {
            return Err(TrainError::NonFinite { iteration: it, trace });
        }
        adam_step(net.layers_mut(), &grads, &mut state, config.learning_rate);
    }

    let final_loss = objective.loss(net);
    if !final_loss.is_finite() {
        return Err(TrainError::NonFinite {
            iteration: config.iterations,
            trace,
        });
    }
    Ok(TrainOutcome {
        trace,
        events,
        final_loss,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(widths: &[usize], grid: usize, seed: u64) -> Network {
        // perturb r, c, b so no parameter sits at a special value
        let mut net = Network::new(widths, grid, 3, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for l in net.layers_mut() {
            for v in l.r.iter_mut().chain(l.c.iter_mut()).chain(l.b.iter_mut()) {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        net
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-0.95..0.95)).collect())
    }

    fn param_mut<'n>(net: &'n mut Network, l: usize, name: &str, p: usize) -> &'n mut f64 {
        let layer = &mut net.layers_mut()[l];
        match name {
            "r" => &mut layer.r[p],
            "c" => &mut layer.c[p],
            _ => &mut layer.b[p],
        }
    }

    fn fd_check(net: &Network, objective: &Objective<'_>, step: f64, tol: f64) {
        let (_, grads) = objective.loss_and_gradients(net);
        let mut probe = net.clone();
        for l in 0..net.layers().len() {
            for (name, len) in [("r", net.layers()[l].r.len()), ("c", net.layers()[l].c.len()), ("b", net.layers()[l].b.len())] {
                for p in 0..len {
                    let orig = *param_mut(&mut probe, l, name, p);
                    *param_mut(&mut probe, l, name, p) = orig + step;
                    let up = objective.loss(&probe);
                    *param_mut(&mut probe, l, name, p) = orig - step;
                    let down = objective.loss(&probe);
                    *param_mut(&mut probe, l, name, p) = orig;
                    let fd = (up - down) / (2.0 * step);
                    let g = &grads.layers[l];
                    let exact = match name {
                        "r" => g.r[p],
                        "c" => g.c[p],
                        _ => g.b[p],
                    };
                    let rel = (exact - fd).abs() / exact.abs().max(fd.abs()).max(1e-4);
                    assert!(rel < tol, "layer {l} {name}[{p}]: exact {exact} fd {fd} rel {rel}");
                }
            }
        }
    }

    #[test]
    fn mse_examples() {
        let mut net = Network::new(&[1, 2], 3, 3, 0).unwrap();
        for l in net.layers_mut() {
            l.r.fill(0.0);
            l.b.fill(0.0);
        }
        let x = Matrix::from_vec(1, 1, vec![0.3]);
        assert_eq!(mse_loss(&net, &x, &Matrix::from_vec(1, 2, vec![2.0, 2.0])), 4.0);
        assert_eq!(mse_loss(&net, &x, &Matrix::from_vec(1, 2, vec![0.0, 0.0])), 0.0);
        // outputs [1, 3] vs zero targets: mean over two dims gives 5
        assert_eq!(mse_loss(&net, &x, &Matrix::from_vec(1, 2, vec![-1.0, -3.0])), 5.0);
    }

    #[test]
    fn mse_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..10 {
            let widths: &[usize] = if case % 2 == 0 { &[2, 3, 1] } else { &[1, 2, 2] };
            let net = random_net(widths, 3 + case % 3, case as u64);
            assert!(net.num_params() <= 200);
            let x = random_matrix(7, widths[0], &mut rng);
            let y = random_matrix(7, *widths.last().unwrap(), &mut rng);
            fd_check(&net, &Objective::Mse { inputs: &x, targets: &y }, 1e-5, 1e-5);
        }
    }

    fn tiny_problem(rng: &mut ChaCha8Rng) -> PinnProblem {
        let collocation = random_matrix(6, 2, rng);
        let forcing = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        PinnProblem {
            collocation,
            forcing,
            boundary: random_matrix(4, 2, rng),
            wave_number: 1.0,
        }
    }

    #[test]
    fn pinn_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for case in 0..10 {
            let widths: &[usize] = if case % 2 == 0 { &[2, 3, 1] } else { &[2, 2, 2, 1] };
            let net = random_net(widths, 3 + case % 2, 100 + case as u64);
            assert!(net.num_params() <= 200);
            let problem = tiny_problem(&mut rng);
            let obj = Objective::Pinn {
                problem: &problem,
                boundary_weight: 0.7,
            };
            fd_check(&net, &obj, 1e-5, 1e-4);
        }
    }

    #[test]
    fn duplicate_rows_keep_gradient() {
        let net = random_net(&[2, 3, 1], 4, 3);
        let x1 = Matrix::from_rows(&[vec![0.2, -0.4]]);
        let y1 = Matrix::from_rows(&[vec![0.5]]);
        let x2 = Matrix::from_rows(&[vec![0.2, -0.4], vec![0.2, -0.4]]);
        let y2 = Matrix::from_rows(&[vec![0.5], vec![0.5]]);
        let (_, g1) = Objective::Mse { inputs: &x1, targets: &y1 }.loss_and_gradients(&net);
        let (_, g2) = Objective::Mse { inputs: &x2, targets: &y2 }.loss_and_gradients(&net);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn target_scaling_on_linear_spline_net() {
        // one edge, r = 0, c = 1: output linear in b, loss gradient in b is
        // 2 (B·b − y) B, so with b = 0 it scales with the target
        let mut net = Network::new(&[1, 1], 3, 3, 0).unwrap();
        net.layers_mut()[0].r.fill(0.0);
        net.layers_mut()[0].b.fill(0.0);
        let x = Matrix::from_vec(1, 1, vec![0.1]);
        let grad_for = |t: f64| {
            let y = Matrix::from_vec(1, 1, vec![t]);
            Objective::Mse { inputs: &x, targets: &y }.loss_and_gradients(&net).1.layers[0].b.clone()
        };
        let g1 = grad_for(1.0);
        let g2 = grad_for(2.0);
        let basis = crate::splines::eval_basis(0.1, &net.layers()[0].knots[0]);
        for ((a, b), bm) in g1.iter().zip(&g2).zip(basis) {
            assert!((a + 2.0 * bm).abs() < 1e-15);
            assert!((b - 2.0 * a).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let mut net = Network::new(&[1, 2], 3, 3, 4).unwrap();
        let before = net.clone();
        let mut state = OptimizerState::new(net.layers());
        let mut grads = Gradients::zeros_like(net.layers());
        for g in &mut grads.layers {
            g.r.fill(0.37);
            g.c.fill(-5.0);
            g.b.fill(1e-3);
        }
        adam_step(net.layers_mut(), &grads, &mut state, 0.01);
        for (a, b) in net.layers().iter().zip(before.layers()) {
            for (x, y) in a.r.iter().zip(&b.r) {
                assert!(((y - x) - 0.01).abs() < 1e-6);
            }
            for (x, y) in a.c.iter().zip(&b.c) {
                assert!(((x - y) - 0.01).abs() < 1e-6);
            }
            for (x, y) in a.b.iter().zip(&b.b) {
                assert!(((y - x) - 0.01).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_no_op() {
        let mut net = Network::new(&[2, 2, 1], 3, 3, 4).unwrap();
        let before = net.clone();
        let mut state = OptimizerState::new(net.layers());
        let grads = Gradients::zeros_like(net.layers());
        for _ in 0..5 {
            adam_step(net.layers_mut(), &grads, &mut state, 0.1);
        }
        assert_eq!(net, before);
    }

    #[test]
    fn reset_keeps_residual_moments() {
        let net = Network::new(&[1, 2], 3, 3, 4).unwrap();
        let mut state = OptimizerState::new(net.layers());
        state.layers[0].r.step = 7;
        state.layers[0].b.step = 7;
        let bigger = Network::new(&[1, 2], 6, 3, 4).unwrap();
        state.reset_spline_moments(bigger.layers());
        assert_eq!(state.layers[0].r.step, 7);
        assert_eq!(state.layers[0].b.step, 0);
        assert_eq!(state.layers[0].b.m.len(), bigger.layers()[0].b.len());
    }

    fn gaussian_data(n: usize) -> (Matrix, Matrix) {
        let xs: Vec<f64> = (0..n).map(|s| -1.0 + 2.0 * s as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|x| (-200.0 * x * x).exp()).collect();
        (Matrix::from_vec(n, 1, xs), Matrix::from_vec(n, 1, ys))
    }

    fn config(iterations: usize, schedule: Vec<GridEvent>) -> TrainConfig {
        TrainConfig {
            iterations,
            learning_rate: 1e-2,
            grid_schedule: schedule,
            strategy: AdaptationStrategy::curvature(),
            seed: 0,
            loss_kind: LossKind::Mse,
            boundary_weight: 1.0,
            initial_grid: 3,
            spline_order: 3,
        }
    }

    #[test]
    fn static_training_reduces_loss() {
        let (x, y) = gaussian_data(200);
        let cfg = config(150, vec![]);
        let mut net = cfg.build_network(&[1, 5, 1]).unwrap();
        let out = train(&mut net, &Objective::Mse { inputs: &x, targets: &y }, &cfg).unwrap();
        assert_eq!(out.trace.len(), 150);
        assert!(out.final_loss < out.trace[0].loss);
    }

    #[test]
    fn training_is_deterministic_and_applies_schedule() {
        let (x, y) = gaussian_data(300);
        let cfg = config(60, vec![GridEvent { iteration: 20, grid: 6 }, GridEvent { iteration: 40, grid: 9 }]);
        let run = || {
            let mut net = cfg.build_network(&[1, 4, 1]).unwrap();
            let out = train(&mut net, &Objective::Mse { inputs: &x, targets: &y }, &cfg).unwrap();
            (net, out)
        };
        let (net_a, a) = run();
        let (net_b, b) = run();
        let losses = |o: &TrainOutcome| o.trace.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(net_a, net_b);
        assert_eq!(a.trace[19].grid_g, 3);
        assert_eq!(a.trace[20].grid_g, 6);
        assert_eq!(a.trace[59].grid_g, 9);
        assert_eq!(a.events.len(), 2);
        assert_eq!(net_a.grid_size(), 9);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(100, vec![GridEvent { iteration: 100, grid: 6 }]);
        assert!(cfg.validate().is_err());
        cfg.grid_schedule = vec![GridEvent { iteration: 50, grid: 6 }, GridEvent { iteration: 50, grid: 9 }];
        assert!(cfg.validate().is_err());
        cfg.grid_schedule = vec![GridEvent { iteration: 10, grid: 6 }, GridEvent { iteration: 50, grid: 5 }];
        assert!(cfg.validate().is_err());
        cfg.grid_schedule = vec![GridEvent { iteration: 10, grid: 6 }, GridEvent { iteration: 50, grid: 6 }];
        assert!(cfg.validate().is_ok());
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_finite_loss_carries_trace() {
        let (x, mut y) = gaussian_data(10);
        let cfg = config(5, vec![]);
        let mut net = cfg.build_network(&[1, 2, 1]).unwrap();
        y = Matrix::from_vec(10, 1, y.into_vec().into_iter().map(|_| f64::NAN).collect());
        match train(&mut net, &Objective::Mse { inputs: &x, targets: &y }, &cfg) {
            Err(TrainError::NonFinite { iteration: 0, trace }) => assert_eq!(trace.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_csv_has_header() {
        let rows = [TraceRow {
            iteration: 0,
            loss: 0.5,
            grid_g: 3,
            wall_clock_ms: 1.25,
        }];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "iteration,loss,grid_G,wall_clock_ms\n0,5e-1,3,1.250\n");
    }
}
