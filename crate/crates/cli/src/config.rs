//! Run configuration: the versioned JSON file, flag overrides, and the
//! validated result.

use std::fs;
use std::path::{Path, PathBuf};

use kangrid::adaptation::{AdaptationStrategy, DerivativeMode, DEFAULT_EPSILON};
use kangrid::benchmarks::HELMHOLTZ_CONFIGS;
use kangrid::experiment::{experiment_tasks, ExperimentKind, Protocol, TaskSpec};
use kangrid::training::{GridEvent, LossKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// The on-disk config. Every field is optional; flags fill in or override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: Option<u32>,
    pub experiment: Option<String>,
    /// `input`, `curvature` or `both`.
    pub strategy: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub scale: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Subset of regression task names; all tasks when absent.
    pub tasks: Option<Vec<String>>,
    /// Helmholtz mode pairs; all four when absent.
    pub helmholtz: Option<Vec<(u32, u32)>>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub curvature: CurvatureOptions,
}

/// Protocol fields a config may replace. Values are given at scale 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub hidden: Option<Vec<usize>>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub initial_grid: Option<usize>,
    pub grid_schedule: Option<Vec<GridEvent>>,
    pub boundary_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureOptions {
    pub epsilon: Option<f64>,
    pub derivatives: Option<DerivativeMode>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub strategy: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub scale: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub strategies: Vec<AdaptationStrategy>,
    pub seeds: Vec<u64>,
    pub scale: f64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub tasks: Vec<TaskSpec>,
    /// Protocol after overrides, before scaling.
    pub protocol: Protocol,
    /// Fully explicit file form, written as `resolved_config.json`.
    pub resolved: ConfigFile,
}

impl RunConfig {
    pub fn scaled_protocol(&self) -> Protocol {
        self.protocol.scaled(self.scale).expect("scale validated at resolve time")
    }
}

pub fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))
}

fn parse_strategy(name: &str, curvature: AdaptationStrategy) -> Option<Vec<AdaptationStrategy>> {
    match name {
        "input" => Some(vec![AdaptationStrategy::InputBased]),
        "curvature" => Some(vec![curvature]),
        "both" => Some(vec![AdaptationStrategy::InputBased, curvature]),
        _ => None,
    }
}

/// Merges file and flags and checks everything, reporting all problems at
/// once.
pub fn resolve(file: ConfigFile, flags: Overrides) -> Result<RunConfig, CliError> {
    let mut errors = Vec::new();

    if let Some(v) = file.schema_version {
        if v != SCHEMA_VERSION {
            errors.push(format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})"));
        }
    }

    let experiment_name = flags.experiment.or(file.experiment);
    let experiment = match experiment_name.as_deref() {
        None => {
            errors.push("no experiment given (use --experiment or the `experiment` field)".into());
            None
        }
        Some(name) => match name.parse::<ExperimentKind>() {
            Ok(kind) => Some(kind),
            Err(_) => {
                errors.push(format!("unknown experiment {name:?} (expected gaussian, synthetic, feynman or helmholtz)"));
                None
            }
        },
    };

    let epsilon = file.curvature.epsilon.unwrap_or(DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        errors.push(format!("curvature.epsilon must be positive and finite, got {epsilon}"));
    }
    let derivatives = file.curvature.derivatives.unwrap_or_default();
    let curvature = AdaptationStrategy::CurvatureBased { epsilon, derivatives };

    let strategy_name = flags.strategy.or(file.strategy).unwrap_or_else(|| "both".into());
    let strategies = parse_strategy(&strategy_name, curvature).unwrap_or_else(|| {
        errors.push(format!("unknown strategy {strategy_name:?} (expected input, curvature or both)"));
        Vec::new()
    });

    let seeds = flags.seeds.or(file.seeds).unwrap_or_else(|| vec![0, 1, 2]);
    if seeds.is_empty() {
        errors.push("seeds must not be empty".into());
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        errors.push(format!("seeds contain duplicates: {seeds:?}"));
    }

    let scale = flags.scale.or(file.scale).unwrap_or(1.0);
    if !(scale > 0.0 && scale <= 1.0) {
        errors.push(format!("scale must lie in (0, 1], got {scale}"));
    }

    let threads = flags.threads.or(file.threads);
    if threads == Some(0) {
        errors.push("threads must be at least 1".into());
    }

    let mut tasks = Vec::new();
    let mut protocol = None;
    if let Some(kind) = experiment {
        if kind != ExperimentKind::Helmholtz && file.helmholtz.is_some() {
            errors.push(format!("`helmholtz` mode pairs do not apply to the {kind} experiment"));
        }
        if kind == ExperimentKind::Helmholtz && file.tasks.is_some() {
            errors.push("select Helmholtz configurations with `helmholtz`, not `tasks`".into());
        }
        let pairs = file.helmholtz.as_deref().filter(|_| kind == ExperimentKind::Helmholtz);
        for pair in pairs.unwrap_or_default() {
            if !HELMHOLTZ_CONFIGS.contains(pair) {
                errors.push(format!("helmholtz pair {pair:?} is not one of {HELMHOLTZ_CONFIGS:?}"));
            }
        }
        if pairs.is_some_and(|p| p.is_empty()) {
            errors.push("helmholtz must list at least one mode pair".into());
        }
        if pairs.is_none_or(|p| p.iter().all(|pair| HELMHOLTZ_CONFIGS.contains(pair))) {
            match experiment_tasks(kind, pairs) {
                Ok(all) => tasks = select_tasks(all, file.tasks.as_deref(), &mut errors),
                Err(e) => errors.push(e.to_string()),
            }
        }

        let p = apply_overrides(Protocol::for_experiment(kind), &file.train);
        check_protocol(&p, kind, scale, &mut errors);
        protocol = Some(p);
    }

    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let experiment = experiment.expect("checked above");
    let protocol = protocol.expect("set with the experiment");
    let out = flags
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("results").join(experiment.name()));

    let resolved = ConfigFile {
        schema_version: Some(SCHEMA_VERSION),
        experiment: Some(experiment.name().into()),
        strategy: Some(strategy_name),
        seeds: Some(seeds.clone()),
        scale: Some(scale),
        out: Some(out.clone()),
        threads,
        tasks: (experiment != ExperimentKind::Helmholtz).then(|| tasks.iter().map(TaskSpec::name).collect()),
        helmholtz: (experiment == ExperimentKind::Helmholtz).then(|| {
            tasks
                .iter()
                .filter_map(|t| match t {
                    TaskSpec::Helmholtz(p) => Some((p.a1, p.a2)),
                    TaskSpec::Regression(_) => None,
                })
                .collect()
        }),
        train: TrainOverrides {
            hidden: Some(protocol.hidden.clone()),
            iterations: Some(protocol.iterations),
            learning_rate: Some(protocol.learning_rate),
            initial_grid: Some(protocol.initial_grid),
            grid_schedule: Some(protocol.grid_schedule.clone()),
            boundary_weight: Some(protocol.boundary_weight),
        },
        curvature: CurvatureOptions {
            epsilon: Some(epsilon),
            derivatives: Some(derivatives),
        },
    };

    Ok(RunConfig {
        experiment,
        strategies,
        seeds,
        scale,
        out,
        threads,
        tasks,
        protocol,
        resolved,
    })
}

fn select_tasks(all: Vec<TaskSpec>, wanted: Option<&[String]>, errors: &mut Vec<String>) -> Vec<TaskSpec> {
    let Some(wanted) = wanted else {
        return all;
    };
    if wanted.is_empty() {
        errors.push("tasks must list at least one task".into());
    }
    for name in wanted {
        if !all.iter().any(|t| &t.name() == name) {
            let known: Vec<String> = all.iter().map(TaskSpec::name).collect();
            errors.push(format!("unknown task {name:?} (known: {})", known.join(", ")));
        }
    }
    all.into_iter().filter(|t| wanted.contains(&t.name())).collect()
}

fn apply_overrides(base: Protocol, o: &TrainOverrides) -> Protocol {
    Protocol {
        hidden: o.hidden.clone().unwrap_or(base.hidden),
        iterations: o.iterations.unwrap_or(base.iterations),
        learning_rate: o.learning_rate.unwrap_or(base.learning_rate),
        initial_grid: o.initial_grid.unwrap_or(base.initial_grid),
        spline_order: base.spline_order,
        grid_schedule: o.grid_schedule.clone().unwrap_or(base.grid_schedule),
        boundary_weight: o.boundary_weight.unwrap_or(base.boundary_weight),
    }
}

fn check_protocol(p: &Protocol, kind: ExperimentKind, scale: f64, errors: &mut Vec<String>) {
    if p.hidden.is_empty() || p.hidden.contains(&0) {
        errors.push(format!("train.hidden must list positive widths, got {:?}", p.hidden));
    }
    // the remaining rules live in TrainConfig::validate; check the run as it will execute
    let Ok(scaled) = p.scaled(scale) else {
        return;
    };
    let loss = if kind == ExperimentKind::Helmholtz { LossKind::Pinn } else { LossKind::Mse };
    if let Err(e) = scaled.train_config(AdaptationStrategy::InputBased, 0, loss).validate() {
        let note = if scale < 1.0 { format!(" (after scaling by {scale})") } else { String::new() };
        errors.push(format!("{e}{note}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(experiment: &str) -> Overrides {
        Overrides {
            experiment: Some(experiment.into()),
            ..Overrides::default()
        }
    }

    #[test]
    fn defaults_follow_the_protocol() {
        let cfg = resolve(ConfigFile::default(), flags("gaussian")).unwrap();
        assert_eq!(cfg.strategies.len(), 2);
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.scale, 1.0);
        assert_eq!(cfg.protocol.iterations, 2000);
        assert_eq!(cfg.tasks.len(), 1);
        assert_eq!(cfg.out, PathBuf::from("results/gaussian"));
    }

    #[test]
    fn flags_override_the_file() {
        let file = ConfigFile {
            experiment: Some("synthetic".into()),
            seeds: Some(vec![4]),
            strategy: Some("input".into()),
            ..ConfigFile::default()
        };
        let cfg = resolve(
            file,
            Overrides {
                seeds: Some(vec![7, 8]),
                ..flags("feynman")
            },
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Feynman);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.strategies, vec![AdaptationStrategy::InputBased]);
    }

    #[test]
    fn all_problems_are_reported_together() {
        let file = ConfigFile {
            schema_version: Some(9),
            strategy: Some("fancy".into()),
            seeds: Some(vec![]),
            scale: Some(1.5),
            threads: Some(0),
            tasks: Some(vec!["f99".into()]),
            curvature: CurvatureOptions {
                epsilon: Some(-1.0),
                derivatives: None,
            },
            ..ConfigFile::default()
        };
        let Err(CliError::Config(errors)) = resolve(file, flags("synthetic")) else {
            panic!("expected config errors");
        };
        assert_eq!(errors.len(), 7, "{errors:#?}");
    }

    #[test]
    fn schedule_problems_mention_scaling() {
        let file = ConfigFile {
            train: TrainOverrides {
                iterations: Some(100),
                // 50 and 54 both round to iteration 5
                grid_schedule: Some(vec![GridEvent { iteration: 50, grid: 6 }, GridEvent { iteration: 54, grid: 9 }]),
                ..TrainOverrides::default()
            },
            scale: Some(0.1),
            ..ConfigFile::default()
        };
        let Err(CliError::Config(errors)) = resolve(file, flags("gaussian")) else {
            panic!("expected config errors");
        };
        assert!(errors[0].contains("after scaling"), "{errors:?}");
    }

    #[test]
    fn helmholtz_pairs_are_checked() {
        let file = ConfigFile {
            helmholtz: Some(vec![(1, 1), (3, 3)]),
            ..ConfigFile::default()
        };
        assert!(resolve(file, flags("helmholtz")).is_err());
        let file = ConfigFile {
            helmholtz: Some(vec![(2, 2)]),
            ..ConfigFile::default()
        };
        let cfg = resolve(file, flags("helmholtz")).unwrap();
        assert_eq!(cfg.tasks.len(), 1);
        assert_eq!(cfg.resolved.helmholtz, Some(vec![(2, 2)]));
    }

    #[test]
    fn resolved_config_resolves_to_itself() {
        let cfg = resolve(ConfigFile::default(), flags("synthetic")).unwrap();
        let again = resolve(cfg.resolved.clone(), Overrides::default()).unwrap();
        assert_eq!(again.resolved, cfg.resolved);
    }
}
