//! Regression targets, the Helmholtz problem, and dataset sampling.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::matrix::Matrix;
use crate::training::PinnProblem;

/// Training set size of every regression benchmark except the Gaussian bump.
pub const N_TRAIN: usize = 4000;

/// Points per axis of tensor-grid test sets in two dimensions.
pub const TEST_GRID_2D: usize = 256;

/// Low-discrepancy test points for three or more dimensions.
pub const TEST_POINTS_HIGH_DIM: usize = 100_000;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("task {task}: target is {value} at {point:?}, outside its domain")]
    Domain {
        task: String,
        point: Vec<f64>,
        value: f64,
    },
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("Helmholtz mode numbers must be positive, got ({0}, {1})")]
    BadModes(u32, u32),
    #[error("dataset CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset CSV: {0}")]
    Format(String),
}

/// Which kind of local structure a task is built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTrait {
    LocalizedBump,
    Jump,
    Oscillatory,
    SharpFront,
    Physical,
}

impl fmt::Display for TaskTrait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskTrait::LocalizedBump => "localized bump",
            TaskTrait::Jump => "jump",
            TaskTrait::Oscillatory => "oscillatory",
            TaskTrait::SharpFront => "sharp front",
            TaskTrait::Physical => "physical law",
        };
        f.write_str(s)
    }
}

pub type Target = fn(&[f64]) -> f64;

#[derive(Clone)]
pub struct RegressionTask {
    pub name: String,
    pub description: String,
    pub traits: Vec<TaskTrait>,
    pub domain: Vec<(f64, f64)>,
    pub target: Target,
    pub n_train: usize,
}

impl fmt::Debug for RegressionTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegressionTask")
            .field("name", &self.name)
            .field("traits", &self.traits)
            .field("domain", &self.domain)
            .field("n_train", &self.n_train)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl RegressionTask {
    fn new(name: &str, description: &str, traits: &[TaskTrait], domain: Vec<(f64, f64)>, target: Target) -> Self {
        RegressionTask {
            name: name.to_string(),
            description: description.to_string(),
            traits: traits.to_vec(),
            domain,
            target,
            n_train: N_TRAIN,
        }
    }

    pub fn dimension(&self) -> usize {
        self.domain.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.target)(x)
    }

    fn label(&self, inputs: Matrix) -> Result<Dataset, BenchmarkError> {
        let mut ys = Vec::with_capacity(inputs.rows());
        for x in inputs.iter_rows() {
            let y = self.eval(x);
            if !y.is_finite() {
                return Err(BenchmarkError::Domain {
                    task: self.name.clone(),
                    point: x.to_vec(),
                    value: y,
                });
            }
            ys.push(y);
        }
        let n = ys.len();
        Ok(Dataset {
            inputs,
            targets: Matrix::from_vec(n, 1, ys),
        })
    }

    /// `n_train` points drawn uniformly from the domain; a function of the
    /// task name and `seed` only.
    pub fn train_set(&self, seed: u64) -> Result<Dataset, BenchmarkError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, name_stream(&self.name)));
        let d = self.dimension();
        let mut data = Vec::with_capacity(self.n_train * d);
        for _ in 0..self.n_train {
            for &(lo, hi) in &self.domain {
                data.push(lo + (hi - lo) * rng.random::<f64>());
            }
        }
        self.label(Matrix::from_vec(self.n_train, d, data))
    }

    /// Deterministic reference points: an even grid of `max(256, 10 n_train)`
    /// points in 1D, a 256 × 256 tensor grid in 2D, and a Halton sequence of
    /// 10⁵ points beyond.
    pub fn test_set(&self) -> Result<Dataset, BenchmarkError> {
        let d = self.dimension();
        let inputs = match d {
            1 => {
                let n = (10 * self.n_train).max(256);
                let (lo, hi) = self.domain[0];
                Matrix::from_vec(n, 1, linspace(lo, hi, n))
            }
            2 => {
                let gx = linspace(self.domain[0].0, self.domain[0].1, TEST_GRID_2D);
                let gy = linspace(self.domain[1].0, self.domain[1].1, TEST_GRID_2D);
                let mut data = Vec::with_capacity(2 * TEST_GRID_2D * TEST_GRID_2D);
                for &x in &gx {
                    for &y in &gy {
                        data.extend_from_slice(&[x, y]);
                    }
                }
                Matrix::from_vec(TEST_GRID_2D * TEST_GRID_2D, 2, data)
            }
            _ => {
                let unit = halton(TEST_POINTS_HIGH_DIM, d);
                let mut data = unit.into_vec();
                for row in data.chunks_mut(d) {
                    for (v, &(lo, hi)) in row.iter_mut().zip(&self.domain) {
                        *v = lo + (hi - lo) * *v;
                    }
                }
                Matrix::from_vec(TEST_POINTS_HIGH_DIM, d, data)
            }
        };
        self.label(inputs)
    }
}

fn name_stream(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// First `n` points (starting at index 1) of the Halton sequence in `[0,1)^d`.
pub fn halton(n: usize, d: usize) -> Matrix {
    assert!(d <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
    let mut data = Vec::with_capacity(n * d);
    for i in 1..=n as u64 {
        data.extend(PRIMES[..d].iter().map(|&p| radical_inverse(i, p)));
    }
    Matrix::from_vec(n, d, data)
}

/// `exp(−200 x²)` on `[−1, 1]` from 1000 uniform samples.
pub fn gaussian_bump_task() -> RegressionTask {
    let mut task = RegressionTask::new(
        "gaussian",
        "exp(-200 x^2)",
        &[TaskTrait::LocalizedBump],
        vec![(-1.0, 1.0)],
        |x| (-200.0 * x[0] * x[0]).exp(),
    );
    task.n_train = 1000;
    task
}

/// Height of the jump in `synthetic_f2` at `x = 0.3`.
pub const F2_JUMP: f64 = 1.0;
/// Height of the jump in `synthetic_f7` across `x₁ + x₂ = 0.2`.
pub const F7_JUMP: f64 = 0.8;

fn cube(d: usize) -> Vec<(f64, f64)> {
    vec![(-1.0, 1.0); d]
}

/// Ten stand-in targets on `[−1, 1]^d` covering dimensions one to six, each
/// built around a localized feature. They are reconstructions of the kind of
/// function the benchmark describes, not its original formulas.
pub fn synthetic_suite() -> Vec<RegressionTask> {
    use TaskTrait::*;
    vec![
        RegressionTask::new(
            "f1",
            "exp(-400 (x-0.25)^2) + 0.1 x",
            &[LocalizedBump],
            cube(1),
            |x| (-400.0 * (x[0] - 0.25).powi(2)).exp() + 0.1 * x[0],
        ),
        RegressionTask::new(
            "f2",
            "0.5 sin(pi x) + [x >= 0.3]",
            &[Jump],
            cube(1),
            |x| 0.5 * (PI * x[0]).sin() + if x[0] >= 0.3 { F2_JUMP } else { 0.0 },
        ),
        RegressionTask::new(
            "f3",
            "sin(10 pi x) exp(-30 (x-0.5)^2) + 0.3 x^2",
            &[Oscillatory],
            cube(1),
            |x| (10.0 * PI * x[0]).sin() * (-30.0 * (x[0] - 0.5).powi(2)).exp() + 0.3 * x[0] * x[0],
        ),
        RegressionTask::new(
            "f4",
            "exp(-200 ((x1-0.2)^2 + (x2+0.3)^2))",
            &[LocalizedBump],
            cube(2),
            |x| (-200.0 * ((x[0] - 0.2).powi(2) + (x[1] + 0.3).powi(2))).exp(),
        ),
        RegressionTask::new(
            "f5",
            "tanh(20 x1) + exp(-300 x2^2)",
            &[SharpFront, LocalizedBump],
            cube(2),
            |x| (20.0 * x[0]).tanh() + (-300.0 * x[1] * x[1]).exp(),
        ),
        RegressionTask::new(
            "f6",
            "exp(-300 (x1-0.1)^2) + 0.5 sin(pi x2) x3",
            &[LocalizedBump],
            cube(3),
            |x| (-300.0 * (x[0] - 0.1).powi(2)).exp() + 0.5 * (PI * x[1]).sin() * x[2],
        ),
        RegressionTask::new(
            "f7",
            "0.8 [x1 >= 0.2] + sin(8 pi x2) exp(-40 x2^2) + 0.3 x3^2",
            &[Jump, Oscillatory],
            cube(3),
            |x| {
                let step = if x[0] >= 0.2 { F7_JUMP } else { 0.0 };
                step + (8.0 * PI * x[1]).sin() * (-40.0 * x[1] * x[1]).exp() + 0.3 * x[2] * x[2]
            },
        ),
        RegressionTask::new(
            "f8",
            "exp(-200 x1^2) + 0.5 (x2 x3 + x4^2)",
            &[LocalizedBump],
            cube(4),
            |x| (-200.0 * x[0] * x[0]).exp() + 0.5 * (x[1] * x[2] + x[3] * x[3]),
        ),
        RegressionTask::new(
            "f9",
            "tanh(25 (x1-0.3)) + exp(-250 (x2+0.4)^2) + 0.2 (x3 + x4 x5)",
            &[SharpFront, LocalizedBump],
            cube(5),
            |x| {
                (25.0 * (x[0] - 0.3)).tanh()
                    + (-250.0 * (x[1] + 0.4).powi(2)).exp()
                    + 0.2 * (x[2] + x[3] * x[4])
            },
        ),
        RegressionTask::new(
            "f10",
            "sin(12 pi x1) exp(-25 x1^2) + exp(-200 x2^2) + 0.1 (x3 + x4 + x5 + x6)",
            &[Oscillatory, LocalizedBump],
            cube(6),
            |x| {
                (12.0 * PI * x[0]).sin() * (-25.0 * x[0] * x[0]).exp()
                    + (-200.0 * x[1] * x[1]).exp()
                    + 0.1 * (x[2] + x[3] + x[4] + x[5])
            },
        ),
    ]
}

/// Fifteen dimensionless equations from the Feynman symbolic-regression
/// collection, each sampled on `[1, 2]` per variable.
pub fn feynman_subset() -> Vec<RegressionTask> {
    let physical = [TaskTrait::Physical];
    let task = |name: &str, formula: &str, d: usize, f: Target| {
        RegressionTask::new(name, formula, &physical, vec![(1.0, 2.0); d], f)
    };
    vec![
        task("I.6.2", "exp(-(theta/sigma)^2/2) / (sqrt(2 pi) sigma)", 2, |x| {
            let (sigma, theta) = (x[0], x[1]);
            (-(theta / sigma).powi(2) / 2.0).exp() / ((2.0 * PI).sqrt() * sigma)
        }),
        task("I.12.11", "1 + a sin(theta)", 2, |x| 1.0 + x[0] * x[1].sin()),
        task("I.13.12", "a (1/b - 1)", 2, |x| x[0] * (1.0 / x[1] - 1.0)),
        task("I.16.6", "(a + b) / (1 + a b)", 2, |x| (x[0] + x[1]) / (1.0 + x[0] * x[1])),
        task("I.18.4", "(1 + a b) / (1 + a)", 2, |x| (1.0 + x[0] * x[1]) / (1.0 + x[0])),
        task("I.27.6", "1 / (1 + a b)", 2, |x| 1.0 / (1.0 + x[0] * x[1])),
        task("I.29.16", "sqrt(1 + a^2 - 2 a cos(theta1 - theta2))", 3, |x| {
            (1.0 + x[0] * x[0] - 2.0 * x[0] * (x[1] - x[2]).cos()).sqrt()
        }),
        task("I.30.3", "sin^2(n theta / 2) / sin^2(theta / 2)", 2, |x| {
            let (n, theta) = (x[0], x[1]);
            ((n * theta / 2.0).sin() / (theta / 2.0).sin()).powi(2)
        }),
        task("I.40.1", "n0 exp(-a)", 2, |x| x[0] * (-x[1]).exp()),
        task("II.2.42", "(a - 1) b", 2, |x| (x[0] - 1.0) * x[1]),
        task("II.6.15a", "3/(4 pi) c sqrt(a^2 + b^2)", 3, |x| {
            3.0 / (4.0 * PI) * x[2] * (x[0] * x[0] + x[1] * x[1]).sqrt()
        }),
        task("II.11.7", "n0 (1 + a cos(theta))", 3, |x| x[0] * (1.0 + x[1] * x[2].cos())),
        task("II.35.18", "n0 / (exp(a) + exp(-a))", 2, |x| x[0] / (x[1].exp() + (-x[1]).exp())),
        task("II.36.38", "a + alpha b", 3, |x| x[0] + x[1] * x[2]),
        task("III.17.37", "beta (1 + alpha cos(theta))", 3, |x| x[0] * (1.0 + x[1] * x[2].cos())),
    ]
}

/// Looks a regression task up by name across all families.
pub fn task_by_name(name: &str) -> Result<RegressionTask, BenchmarkError> {
    std::iter::once(gaussian_bump_task())
        .chain(synthetic_suite())
        .chain(feynman_subset())
        .find(|t| t.name == name)
        .ok_or_else(|| BenchmarkError::UnknownTask(name.to_string()))
}

/// Collocation grid points per axis.
pub const HELMHOLTZ_GRID: usize = 64;
/// Boundary points per edge.
pub const HELMHOLTZ_EDGE: usize = 64;
/// Reference grid points per axis.
pub const HELMHOLTZ_REFERENCE: usize = 256;

/// `Δu + k²u = f` on `[−1, 1]²` with `u = 0` on the boundary and exact
/// solution `sin(a₁πx) sin(a₂πy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzProblem {
    pub a1: u32,
    pub a2: u32,
    pub wave_number: f64,
}

impl HelmholtzProblem {
    pub fn name(&self) -> String {
        format!("helmholtz_{}_{}", self.a1, self.a2)
    }

    pub fn exact(&self, x: f64, y: f64) -> f64 {
        (self.a1 as f64 * PI * x).sin() * (self.a2 as f64 * PI * y).sin()
    }

    pub fn forcing(&self, x: f64, y: f64) -> f64 {
        let (a1, a2) = (self.a1 as f64, self.a2 as f64);
        let k2 = self.wave_number * self.wave_number;
        (k2 - (a1 * a1 + a2 * a2) * PI * PI) * self.exact(x, y)
    }

    /// Cell-centred interior grid, 64 points per axis.
    pub fn collocation_points(&self) -> Matrix {
        let n = HELMHOLTZ_GRID;
        let centre = |i: usize| -1.0 + (2 * i + 1) as f64 / n as f64;
        let mut data = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                data.extend_from_slice(&[centre(i), centre(j)]);
            }
        }
        Matrix::from_vec(n * n, 2, data)
    }

    /// 64 evenly spaced points along each edge (corners appear twice).
    pub fn boundary_points(&self) -> Matrix {
        let t = linspace(-1.0, 1.0, HELMHOLTZ_EDGE);
        let mut data = Vec::with_capacity(8 * HELMHOLTZ_EDGE);
        for &s in &t {
            data.extend_from_slice(&[s, -1.0]);
        }
        for &s in &t {
            data.extend_from_slice(&[1.0, s]);
        }
        for &s in &t {
            data.extend_from_slice(&[s, 1.0]);
        }
        for &s in &t {
            data.extend_from_slice(&[-1.0, s]);
        }
        Matrix::from_vec(4 * HELMHOLTZ_EDGE, 2, data)
    }

    pub fn pinn_problem(&self) -> PinnProblem {
        let collocation = self.collocation_points();
        let forcing = collocation.iter_rows().map(|p| self.forcing(p[0], p[1])).collect();
        PinnProblem {
            collocation,
            forcing,
            boundary: self.boundary_points(),
            wave_number: self.wave_number,
        }
    }

    /// Exact solution on a 256 × 256 grid including the boundary.
    pub fn reference(&self) -> Dataset {
        let g = linspace(-1.0, 1.0, HELMHOLTZ_REFERENCE);
        let n = g.len() * g.len();
        let mut xs = Vec::with_capacity(2 * n);
        let mut ys = Vec::with_capacity(n);
        for &x in &g {
            for &y in &g {
                xs.extend_from_slice(&[x, y]);
                ys.push(self.exact(x, y));
            }
        }
        Dataset {
            inputs: Matrix::from_vec(n, 2, xs),
            targets: Matrix::from_vec(n, 1, ys),
        }
    }
}

pub fn helmholtz_problem(a1: u32, a2: u32) -> Result<HelmholtzProblem, BenchmarkError> {
    if a1 == 0 || a2 == 0 {
        return Err(BenchmarkError::BadModes(a1, a2));
    }
    Ok(HelmholtzProblem {
        a1,
        a2,
        wave_number: 1.0,
    })
}

/// The four mode pairs of the Helmholtz benchmark.
pub const HELMHOLTZ_CONFIGS: [(u32, u32); 4] = [(1, 1), (1, 2), (2, 2), (2, 4)];

/// CSV with header `x_1,..,x_d,y`.
pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<(), BenchmarkError> {
    let mut w = csv::Writer::from_writer(out);
    let d = data.inputs.cols();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in data.inputs.iter_rows().zip(data.targets.iter_rows()) {
        w.write_record(x.iter().chain(y).map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset, BenchmarkError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 2 || header.get(cols - 1) != Some("y") {
        return Err(BenchmarkError::Format("expected header x_1..x_d,y".into()));
    }
    let d = cols - 1;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| BenchmarkError::Format(format!("row {}: bad number {field:?}", line + 1)))?;
            if c < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = ys.len();
    Ok(Dataset {
        inputs: Matrix::from_vec(n, d, xs),
        targets: Matrix::from_vec(n, 1, ys),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_values() {
        let t = gaussian_bump_task();
        assert_eq!(t.eval(&[0.0]), 1.0);
        assert!(t.eval(&[1.0]) < 1e-80 && t.eval(&[-1.0]) == t.eval(&[1.0]));
        assert!((t.eval(&[0.05]) - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert_eq!(t.n_train, 1000);
        assert_eq!(t.test_set().unwrap().inputs.rows(), 10_000);
    }

    #[test]
    fn synthetic_suite_shape() {
        let suite = synthetic_suite();
        assert_eq!(suite.len(), 10);
        let mut dims: Vec<usize> = suite.iter().map(|t| t.dimension()).collect();
        dims.dedup();
        assert_eq!(dims, vec![1, 2, 3, 4, 5, 6]);
        assert!(suite.iter().all(|t| t.n_train == 4000));
        let count = |tr| suite.iter().filter(|t| t.traits.contains(&tr)).count();
        assert!(count(TaskTrait::LocalizedBump) >= 2);
        assert!(count(TaskTrait::Jump) >= 1);
        assert!(count(TaskTrait::Oscillatory) >= 1);
    }

    #[test]
    fn jumps_have_documented_gap() {
        let suite = synthetic_suite();
        let h = 1e-12;
        let f2 = &suite[1];
        assert!((f2.eval(&[0.3]) - f2.eval(&[0.3 - h]) - F2_JUMP).abs() < 1e-9);
        let f7 = &suite[6];
        let gap = f7.eval(&[0.2, 0.1, 0.4]) - f7.eval(&[0.2 - h, 0.1, 0.4]);
        assert!((gap - F7_JUMP).abs() < 1e-9);
    }

    #[test]
    fn feynman_subset_names() {
        let names: Vec<String> = feynman_subset().into_iter().map(|t| t.name).collect();
        assert_eq!(
            names,
            [
                "I.6.2", "I.12.11", "I.13.12", "I.16.6", "I.18.4", "I.27.6", "I.29.16", "I.30.3", "I.40.1",
                "II.2.42", "II.6.15a", "II.11.7", "II.35.18", "II.36.38", "III.17.37"
            ]
        );
    }

    #[test]
    fn feynman_hand_values() {
        let t = task_by_name("I.12.11").unwrap();
        // 1 + 1.5 sin(1.2) = 1 + 1.5 × 0.932039085967226
        assert!((t.eval(&[1.5, 1.2]) - 2.398_058_628_950_839).abs() < 1e-12);
        let t = task_by_name("I.16.6").unwrap();
        assert!((t.eval(&[1.0, 2.0]) - 1.0).abs() < 1e-15);
        let t = task_by_name("II.6.15a").unwrap();
        assert!((t.eval(&[1.2, 1.6, 1.0]) - 3.0 * 2.0 / (4.0 * PI)).abs() < 1e-15);
        let t = task_by_name("I.30.3").unwrap();
        assert!((t.eval(&[1.0, 1.3]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn feynman_datasets_are_finite() {
        for t in feynman_subset() {
            let d = t.train_set(0).unwrap();
            assert_eq!(d.inputs.rows(), 4000);
            assert!(d.targets.as_slice().iter().all(|v| v.is_finite()), "{}", t.name);
        }
    }

    #[test]
    fn domain_violation_is_an_error() {
        let mut t = task_by_name("I.29.16").unwrap();
        t.target = |x| x[0].ln();
        t.domain = vec![(-1.0, 0.0); 3];
        assert!(matches!(t.train_set(1), Err(BenchmarkError::Domain { .. })));
    }

    #[test]
    fn datasets_are_reproducible() {
        let t = &synthetic_suite()[3];
        assert_eq!(t.train_set(5).unwrap(), t.train_set(5).unwrap());
        assert_ne!(t.train_set(5).unwrap(), t.train_set(6).unwrap());
        let other = &synthetic_suite()[4];
        assert_ne!(t.train_set(5).unwrap().inputs, other.train_set(5).unwrap().inputs);
    }

    #[test]
    fn test_sets_do_not_overlap_training() {
        for t in [&synthetic_suite()[0], &synthetic_suite()[3], &synthetic_suite()[5]] {
            let train = t.train_set(0).unwrap();
            let test = t.test_set().unwrap();
            let mut seen: Vec<Vec<u64>> = train
                .inputs
                .iter_rows()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect();
            seen.sort();
            for row in test.inputs.iter_rows() {
                let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
                assert!(seen.binary_search(&key).is_err());
            }
        }
    }

    #[test]
    fn test_set_sizes() {
        let suite = synthetic_suite();
        assert_eq!(suite[0].test_set().unwrap().inputs.rows(), 40_000);
        assert_eq!(suite[3].test_set().unwrap().inputs.rows(), 65_536);
        let high = suite[5].test_set().unwrap();
        assert_eq!(high.inputs.rows(), 100_000);
        assert!(high.inputs.as_slice().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn halton_first_points() {
        let h = halton(3, 2);
        assert_eq!(h.row(0), &[0.5, 1.0 / 3.0]);
        assert_eq!(h.row(1), &[0.25, 2.0 / 3.0]);
        assert_eq!(h.row(2), &[0.75, 1.0 / 9.0]);
    }

    #[test]
    fn helmholtz_forcing_value() {
        let p = helmholtz_problem(1, 1).unwrap();
        assert!((p.forcing(0.5, 0.5) - (1.0 - 2.0 * PI * PI)).abs() < 1e-12);
        assert!((p.forcing(0.5, 0.5) + 18.739).abs() < 1e-3);
        assert!(helmholtz_problem(0, 2).is_err());
    }

    #[test]
    fn helmholtz_exact_solution_satisfies_the_pde() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(a1, a2) in &HELMHOLTZ_CONFIGS {
            let p = helmholtz_problem(a1, a2).unwrap();
            for _ in 0..1000 {
                let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let (w1, w2) = (a1 as f64 * PI, a2 as f64 * PI);
                let lap = -(w1 * w1 + w2 * w2) * p.exact(x, y);
                assert!((lap + p.exact(x, y) - p.forcing(x, y)).abs() < 1e-10);
            }
            let b = p.boundary_points();
            assert_eq!(b.rows(), 256);
            for q in b.iter_rows() {
                assert!(p.exact(q[0], q[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn helmholtz_collocation_grid() {
        let p = helmholtz_problem(1, 1).unwrap();
        let pinn = p.pinn_problem();
        assert_eq!(pinn.collocation.rows(), 4096);
        let mean_f2 = pinn.forcing.iter().map(|f| f * f).sum::<f64>() / 4096.0;
        let expect = (1.0 - 2.0 * PI * PI).powi(2) / 4.0;
        assert!((mean_f2 - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let d = synthetic_suite()[4].train_set(2).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        assert!(buf.starts_with(b"x_1,x_2,y\n"));
        assert_eq!(read_dataset_csv(&buf[..]).unwrap(), d);
    }
}
