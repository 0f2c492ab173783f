//! Error metrics, multi-seed aggregation and the one-tailed Wilcoxon
//! signed-rank test.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest sample size tested by exact enumeration.
pub const EXACT_MAX_N: usize = 20;

pub const INPUT: &str = "input";
pub const CURVATURE: &str = "curvature";

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("prediction has {pred} values but reference has {reference}")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("reference has zero norm")]
    ZeroReference,
    #[error("no differences to test")]
    Empty,
    #[error("missing results: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("duplicate result for {0}")]
    DuplicateCell(String),
    #[error("report CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// `‖pred − ref‖₂ / ‖ref‖₂`.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64, StatsError> {
    if pred.len() != reference.len() {
        return Err(StatsError::LengthMismatch {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(StatsError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// `(err_input − err_curv) / err_input × 100`; positive means curvature wins.
pub fn improvement_pct(err_input: f64, err_curv: f64) -> f64 {
    (err_input - err_curv) / err_input * 100.0
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample standard deviation (`n − 1` denominator); zero for one value.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Treatment of zero differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMethod {
    /// Drop zeros before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with the rest, then leave them out of both sign sums.
    Pratt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
    /// Every difference was zero; `p = 1` by convention.
    AllZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero differences.
    pub n: usize,
    /// Rank sum of positive differences.
    pub w_plus: f64,
    pub p_value: f64,
    pub method: PMethod,
    pub zero_method: ZeroMethod,
}

/// Average ranks (1-based) of `|values|`.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]].abs() == values[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Upper-tail probability `P(W⁺ ≥ w)` when each rank independently carries a
/// positive sign with probability one half. Ranks must be multiples of 1/2.
pub fn exact_upper_tail(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // counts[s] = number of sign assignments with doubled positive sum s
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let threshold = (2.0 * w).round() as usize;
    let hits: u64 = counts.iter().skip(threshold).sum();
    hits as f64 / (1u64 << ranks.len()) as f64
}

/// One-tailed signed-rank test of `H₁`: the differences tend to be positive.
///
/// Differences are `err_input − err_curv`, so a small p favors the curvature
/// strategy. Exact for up to [`EXACT_MAX_N`] nonzero differences, normal
/// approximation with tie correction and continuity correction beyond.
pub fn wilcoxon_one_tailed(deltas: &[f64], zero_method: ZeroMethod) -> Result<WilcoxonResult, StatsError> {
    if deltas.is_empty() {
        return Err(StatsError::Empty);
    }
    let nonzero = deltas.iter().filter(|d| **d != 0.0).count();
    if nonzero == 0 {
        return Ok(WilcoxonResult {
            n: 0,
            w_plus: 0.0,
            p_value: 1.0,
            method: PMethod::AllZero,
            zero_method,
        });
    }
    let (ranked, ranks): (Vec<f64>, Vec<f64>) = match zero_method {
        ZeroMethod::Wilcox => {
            let kept: Vec<f64> = deltas.iter().copied().filter(|d| *d != 0.0).collect();
            let r = average_ranks(&kept);
            (kept, r)
        }
        ZeroMethod::Pratt => {
            let r = average_ranks(deltas);
            let pairs: Vec<(f64, f64)> = deltas
                .iter()
                .zip(&r)
                .filter(|(d, _)| **d != 0.0)
                .map(|(d, r)| (*d, *r))
                .collect();
            pairs.into_iter().unzip()
        }
    };
    let w_plus: f64 = ranked.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).fold(0.0, |acc, (_, r)| acc + r);
    let n = ranked.len();
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_upper_tail(&ranks, w_plus), PMethod::Exact)
    } else {
        let mean: f64 = ranks.iter().sum::<f64>() / 2.0;
        let var: f64 = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
        let z = (w_plus - mean - 0.5) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (1.0 - normal.cdf(z), PMethod::Normal)
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        p_value,
        method,
        zero_method,
    })
}

/// Outcome of one (task, strategy, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: String,
    pub strategy: String,
    pub seed: u64,
    pub relative_l2: f64,
    pub final_loss: f64,
    pub wall_clock_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    /// Errors in seed order.
    pub errors: Vec<f64>,
    pub median: f64,
    pub std: f64,
    pub wall_clock_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: String,
    pub strategies: BTreeMap<String, StrategySummary>,
    /// Present when both strategies ran.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub strategies: Vec<String>,
    pub tasks: Vec<TaskSummary>,
    pub average_improvement_pct: Option<f64>,
    pub curvature_wins: Option<usize>,
    pub wilcoxon: Option<WilcoxonResult>,
    pub wilcoxon_pratt: Option<WilcoxonResult>,
    /// Total wall clock per strategy.
    pub wall_clock_ms: BTreeMap<String, f64>,
}

/// Medians, spreads, improvements and the signed-rank test over per-task
/// median pairs. Every (task, strategy, seed) combination must be present
/// exactly once.
pub fn aggregate(
    experiment: &str,
    tasks: &[String],
    strategies: &[String],
    seeds: &[u64],
    cells: &[CellResult],
) -> Result<ExperimentReport, StatsError> {
    let mut table: BTreeMap<(&str, &str, u64), &CellResult> = BTreeMap::new();
    for c in cells {
        if table.insert((&c.task, &c.strategy, c.seed), c).is_some() {
            return Err(StatsError::DuplicateCell(format!("{}/{}/seed {}", c.task, c.strategy, c.seed)));
        }
    }
    let mut missing = Vec::new();
    for t in tasks {
        for s in strategies {
            for &seed in seeds {
                if !table.contains_key(&(t.as_str(), s.as_str(), seed)) {
                    missing.push(format!("{t}/{s}/seed {seed}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(StatsError::MissingCells(missing));
    }

    let mut sorted_seeds = seeds.to_vec();
    sorted_seeds.sort_unstable();
    let mut summaries = Vec::with_capacity(tasks.len());
    let mut wall = BTreeMap::new();
    for t in tasks {
        let mut per_strategy = BTreeMap::new();
        for s in strategies {
            let runs: Vec<&CellResult> = sorted_seeds.iter().map(|&seed| table[&(t.as_str(), s.as_str(), seed)]).collect();
            let errors: Vec<f64> = runs.iter().map(|c| c.relative_l2).collect();
            let ms: f64 = runs.iter().map(|c| c.wall_clock_ms).sum();
            *wall.entry(s.clone()).or_insert(0.0) += ms;
            per_strategy.insert(
                s.clone(),
                StrategySummary {
                    median: median(&errors),
                    std: sample_std(&errors),
                    errors,
                    wall_clock_ms: ms,
                },
            );
        }
        let improvement = match (per_strategy.get(INPUT), per_strategy.get(CURVATURE)) {
            (Some(a), Some(b)) => Some(improvement_pct(a.median, b.median)),
            _ => None,
        };
        summaries.push(TaskSummary {
            task: t.clone(),
            strategies: per_strategy,
            improvement_pct: improvement,
        });
    }

    let both = summaries.iter().all(|s| s.improvement_pct.is_some()) && !summaries.is_empty();
    let (average, wins, wilcoxon, pratt) = if both {
        let imps: Vec<f64> = summaries.iter().filter_map(|s| s.improvement_pct).collect();
        let deltas: Vec<f64> = summaries
            .iter()
            .map(|s| s.strategies[INPUT].median - s.strategies[CURVATURE].median)
            .collect();
        (
            Some(imps.iter().sum::<f64>() / imps.len() as f64),
            Some(deltas.iter().filter(|d| **d > 0.0).count()),
            Some(wilcoxon_one_tailed(&deltas, ZeroMethod::Wilcox)?),
            Some(wilcoxon_one_tailed(&deltas, ZeroMethod::Pratt)?),
        )
    } else {
        (None, None, None, None)
    };

    Ok(ExperimentReport {
        experiment: experiment.to_string(),
        seeds: sorted_seeds,
        strategies: strategies.to_vec(),
        tasks: summaries,
        average_improvement_pct: average,
        curvature_wins: wins,
        wilcoxon,
        wilcoxon_pratt: pratt,
        wall_clock_ms: wall,
    })
}

impl ExperimentReport {
    /// One row per task: median and std per strategy, then the improvement.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), StatsError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["task".to_string()];
        for s in &self.strategies {
            header.push(format!("{s}_median"));
            header.push(format!("{s}_std"));
        }
        header.push("improvement_pct".into());
        w.write_record(&header)?;
        for t in &self.tasks {
            let mut row = vec![t.task.clone()];
            for s in &self.strategies {
                let sum = &t.strategies[s];
                row.push(format!("{:e}", sum.median));
                row.push(format!("{:e}", sum.std));
            }
            row.push(t.improvement_pct.map(|v| format!("{v:.2}")).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
