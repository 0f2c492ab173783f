//! The `run` verb: executes every cell and writes the artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use kangrid::experiment::{plan_cells, run_cells, CellOutcome, TaskSpec};
use kangrid::stats::{aggregate, CellResult, ExperimentReport};
use kangrid::training::write_trace_csv;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, RunConfig};
use crate::{plot, CliError};

pub const ARTIFACT_VERSION: u32 = 1;

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub artifact_version: u32,
    pub config: ConfigFile,
    pub report: ExperimentReport,
    pub cells: Vec<CellResult>,
}

/// One entry of `failures.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

pub fn checkpoint_path(dir: &Path, cell: &str) -> PathBuf {
    dir.join(format!("checkpoint_{cell}.json"))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    text
}

fn write_cell(dir: &Path, id: &str, outcome: &CellOutcome) -> Result<(), CliError> {
    let path = dir.join(format!("trace_{id}.csv"));
    let file = fs::File::create(&path).map_err(|source| CliError::Io { path, source })?;
    write_trace_csv(&outcome.training.trace, BufWriter::new(file))?;
    write_file(&checkpoint_path(dir, id), &outcome.network.to_checkpoint())
}

/// Runs all cells of `cfg` and writes traces, checkpoints, the report and
/// figures into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<ReportArtifact, CliError> {
    let dir = &cfg.out;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    write_file(&dir.join("resolved_config.json"), &to_json(&cfg.resolved))?;

    let protocol = cfg.scaled_protocol();
    let cells = plan_cells(&cfg.tasks, &cfg.strategies, &cfg.seeds, &protocol);
    log::info!("running {} cells of the {} experiment", cells.len(), cfg.experiment);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Pool(e.to_string()))?;
    let outcomes = pool.install(|| run_cells(&cells));

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (spec, outcome) in cells.iter().zip(outcomes) {
        let id = spec.id();
        match outcome {
            Ok(outcome) => {
                write_cell(dir, &id, &outcome)?;
                results.push(outcome.result);
            }
            Err(e) => {
                log::error!("{id}: {e}");
                failures.push(CellFailure {
                    cell: id,
                    error: e.to_string(),
                });
            }
        }
    }
    write_file(&dir.join("cells.json"), &to_json(&results))?;
    if !failures.is_empty() {
        let manifest = dir.join("failures.json");
        write_file(&manifest, &to_json(&failures))?;
        return Err(CliError::CellsFailed {
            failed: failures.len(),
            total: cells.len(),
            manifest,
        });
    }

    let task_names: Vec<String> = cfg.tasks.iter().map(TaskSpec::name).collect();
    let strategy_names: Vec<String> = cfg.strategies.iter().map(|s| s.name().to_string()).collect();
    let report = aggregate(cfg.experiment.name(), &task_names, &strategy_names, &cfg.seeds, &results)?;
    let artifact = ReportArtifact {
        artifact_version: ARTIFACT_VERSION,
        config: cfg.resolved.clone(),
        report,
        cells: results,
    };
    write_file(&dir.join("report.json"), &to_json(&artifact))?;
    let csv_path = dir.join("report.csv");
    let file = fs::File::create(&csv_path).map_err(|source| CliError::Io { path: csv_path, source })?;
    artifact.report.write_csv(BufWriter::new(file))?;

    plot::write_figures(dir, &artifact)?;
    Ok(artifact)
}

pub fn load_artifact(dir: &Path) -> Result<ReportArtifact, CliError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    let version = value.get("artifact_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(ARTIFACT_VERSION)) {
        return Err(CliError::Artifact(format!(
            "{} has artifact version {}, this build reads version {ARTIFACT_VERSION}",
            path.display(),
            version.map_or("none".to_string(), |v| v.to_string())
        )));
    }
    serde_json::from_value(value).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))
}
