//! Benchmark protocols and the (task × strategy × seed) cell runner.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::AdaptationStrategy;
use crate::benchmarks::{
    feynman_subset, gaussian_bump_task, helmholtz_problem, synthetic_suite, BenchmarkError, Dataset,
    HelmholtzProblem, RegressionTask, HELMHOLTZ_CONFIGS,
};
use crate::derive_seed;
use crate::network::Network;
use crate::stats::{relative_l2, CellResult, StatsError};
use crate::training::{train, GridEvent, LossKind, Objective, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("scale factor must lie in (0, 1], got {0}")]
    BadScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Gaussian,
    Synthetic,
    Feynman,
    Helmholtz,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Gaussian,
        ExperimentKind::Synthetic,
        ExperimentKind::Feynman,
        ExperimentKind::Helmholtz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Gaussian => "gaussian",
            ExperimentKind::Synthetic => "synthetic",
            ExperimentKind::Feynman => "feynman",
            ExperimentKind::Helmholtz => "helmholtz",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExperimentError::UnknownExperiment(s.to_string()))
    }
}

/// Architecture and optimization schedule of one benchmark family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// Hidden layer widths; input and output widths come from the task.
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_grid: usize,
    pub spline_order: usize,
    pub grid_schedule: Vec<GridEvent>,
    pub boundary_weight: f64,
}

fn events(points: &[(usize, usize)]) -> Vec<GridEvent> {
    points
        .iter()
        .map(|&(iteration, grid)| GridEvent { iteration, grid })
        .collect()
}

impl Protocol {
    pub fn for_experiment(kind: ExperimentKind) -> Protocol {
        let base = Protocol {
            hidden: vec![10],
            iterations: 2000,
            learning_rate: 1e-2,
            initial_grid: 3,
            spline_order: 3,
            grid_schedule: events(&[(500, 6), (1000, 9), (1500, 12)]),
            boundary_weight: 1.0,
        };
        match kind {
            ExperimentKind::Gaussian => Protocol {
                grid_schedule: events(&[(1000, 10)]),
                ..base
            },
            ExperimentKind::Synthetic => base,
            ExperimentKind::Feynman => Protocol {
                learning_rate: 1e-3,
                ..base
            },
            ExperimentKind::Helmholtz => Protocol {
                hidden: vec![6, 6],
                iterations: 5000,
                learning_rate: 1e-3,
                grid_schedule: events(&[(1000, 6), (2000, 9), (3000, 12)]),
                ..base
            },
        }
    }

    /// Iteration count and event iterations multiplied by `scale` and
    /// rounded; grid sizes are kept.
    pub fn scaled(&self, scale: f64) -> Result<Protocol, ExperimentError> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(ExperimentError::BadScale(scale));
        }
        let round = |v: usize| (v as f64 * scale).round() as usize;
        Ok(Protocol {
            iterations: round(self.iterations).max(1),
            grid_schedule: self
                .grid_schedule
                .iter()
                .map(|e| GridEvent {
                    iteration: round(e.iteration),
                    grid: e.grid,
                })
                .collect(),
            ..self.clone()
        })
    }

    pub fn widths(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        let mut w = vec![n_in];
        w.extend(&self.hidden);
        w.push(n_out);
        w
    }

    pub fn train_config(&self, strategy: AdaptationStrategy, seed: u64, loss_kind: LossKind) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            grid_schedule: self.grid_schedule.clone(),
            strategy,
            seed,
            loss_kind,
            boundary_weight: self.boundary_weight,
            initial_grid: self.initial_grid,
            spline_order: self.spline_order,
        }
    }
}

#[derive(Debug, Clone)]
pub enum TaskSpec {
    Regression(RegressionTask),
    Helmholtz(HelmholtzProblem),
}

impl TaskSpec {
    pub fn name(&self) -> String {
        match self {
            TaskSpec::Regression(t) => t.name.clone(),
            TaskSpec::Helmholtz(p) => p.name(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TaskSpec::Regression(t) => t.dimension(),
            TaskSpec::Helmholtz(_) => 2,
        }
    }
}

/// Tasks of an experiment family. `helmholtz` selects mode pairs; `None`
/// means all four.
pub fn experiment_tasks(kind: ExperimentKind, helmholtz: Option<&[(u32, u32)]>) -> Result<Vec<TaskSpec>, ExperimentError> {
    Ok(match kind {
        ExperimentKind::Gaussian => vec![TaskSpec::Regression(gaussian_bump_task())],
        ExperimentKind::Synthetic => synthetic_suite().into_iter().map(TaskSpec::Regression).collect(),
        ExperimentKind::Feynman => feynman_subset().into_iter().map(TaskSpec::Regression).collect(),
        ExperimentKind::Helmholtz => helmholtz
            .unwrap_or(&HELMHOLTZ_CONFIGS)
            .iter()
            .map(|&(a1, a2)| helmholtz_problem(a1, a2).map(TaskSpec::Helmholtz))
            .collect::<Result<_, _>>()?,
    })
}

#[derive(Debug, Clone)]
pub struct CellSpec {
    pub task: TaskSpec,
    pub strategy: AdaptationStrategy,
    pub seed: u64,
    pub protocol: Protocol,
}

impl CellSpec {
    pub fn id(&self) -> String {
        cell_id(&self.task.name(), self.strategy.name(), self.seed)
    }
}

/// `<task>_<strategy>_s<seed>`, safe as a file name.
pub fn cell_id(task: &str, strategy: &str, seed: u64) -> String {
    let task: String = task
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
        .collect();
    format!("{task}_{strategy}_s{seed}")
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub result: CellResult,
    pub training: TrainOutcome,
    pub network: Network,
    /// Test-set inputs and predictions, kept for 1D plots.
    pub test: Option<(Dataset, Vec<f64>)>,
}

/// Trains one cell and scores it on the task's reference set.
///
/// Both strategies of the same task and seed see the same training data and
/// the same initial network.
pub fn run_cell(spec: &CellSpec) -> Result<CellOutcome, ExperimentError> {
    let widths = spec.protocol.widths(spec.task.input_dim(), 1);
    let init_seed = derive_seed(spec.seed, 0x6b61_6e);
    let (net, training, rel, test) = match &spec.task {
        TaskSpec::Regression(task) => {
            let train_set = task.train_set(spec.seed)?;
            let cfg = spec.protocol.train_config(spec.strategy, init_seed, LossKind::Mse);
            let mut net = cfg.build_network(&widths)?;
            let objective = Objective::Mse {
                inputs: &train_set.inputs,
                targets: &train_set.targets,
            };
            let training = train(&mut net, &objective, &cfg)?;
            let test = task.test_set()?;
            let pred = net.predict(&test.inputs).into_vec();
            let rel = relative_l2(&pred, test.targets.as_slice())?;
            let keep = (task.dimension() == 1).then(|| (test, pred));
            (net, training, rel, keep)
        }
        TaskSpec::Helmholtz(problem) => {
            let pinn = problem.pinn_problem();
            let cfg = spec.protocol.train_config(spec.strategy, init_seed, LossKind::Pinn);
            let mut net = cfg.build_network(&widths)?;
            let objective = Objective::Pinn {
                problem: &pinn,
                boundary_weight: cfg.boundary_weight,
            };
            let training = train(&mut net, &objective, &cfg)?;
            let reference = problem.reference();
            let pred = net.predict(&reference.inputs).into_vec();
            let rel = relative_l2(&pred, reference.targets.as_slice())?;
            (net, training, rel, None)
        }
    };
    log::info!("{}: relative L2 {rel:.3e} in {:.1} s", spec.id(), training.wall_clock_ms / 1e3);
    Ok(CellOutcome {
        result: CellResult {
            task: spec.task.name(),
            strategy: spec.strategy.name().to_string(),
            seed: spec.seed,
            relative_l2: rel,
            final_loss: training.final_loss,
            wall_clock_ms: training.wall_clock_ms,
        },
        training,
        network: net,
        test,
    })
}

/// Runs cells on the rayon pool; results keep the order of `specs`.
pub fn run_cells(specs: &[CellSpec]) -> Vec<Result<CellOutcome, ExperimentError>> {
    specs.par_iter().map(run_cell).collect()
}

/// All (task × strategy × seed) cells of an experiment, task-major.
pub fn plan_cells(
    tasks: &[TaskSpec],
    strategies: &[AdaptationStrategy],
    seeds: &[u64],
    protocol: &Protocol,
) -> Vec<CellSpec> {
    let mut cells = Vec::with_capacity(tasks.len() * strategies.len() * seeds.len());
    for task in tasks {
        for &strategy in strategies {
            for &seed in seeds {
                cells.push(CellSpec {
                    task: task.clone(),
                    strategy,
                    seed,
                    protocol: protocol.clone(),
                });
            }
        }
    }
    cells
}
