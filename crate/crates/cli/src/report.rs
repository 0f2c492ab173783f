//! The `report` verb: renders a results directory as a comparison table.

use std::fmt::Write as _;

use kangrid::stats::{ExperimentReport, PMethod, WilcoxonResult, CURVATURE, INPUT};

fn column_title(strategy: &str) -> String {
    match strategy {
        INPUT => "Input-Based".into(),
        CURVATURE => "Curvature-Based".into(),
        other => other.to_string(),
    }
}

fn wilcoxon_line(label: &str, w: &WilcoxonResult) -> String {
    let method = match w.method {
        PMethod::Exact => "exact",
        PMethod::Normal => "normal approximation",
        PMethod::AllZero => "all differences zero",
    };
    format!("{label}: p = {:.4} (n = {}, W+ = {}, {method})", w.p_value, w.n, w.w_plus)
}

/// Median ± std per strategy, improvement column when both strategies ran,
/// then the suite summary. Contains no timings, so repeated runs with the
/// same config render identically.
pub fn render(report: &ExperimentReport) -> String {
    let both = report.strategies.iter().any(|s| s == INPUT) && report.strategies.iter().any(|s| s == CURVATURE);
    let mut header = vec!["Task".to_string()];
    header.extend(report.strategies.iter().map(|s| column_title(s)));
    if both {
        header.push("Improv.".into());
    }
    let mut rows = vec![header];
    for t in &report.tasks {
        let mut row = vec![t.task.clone()];
        for s in &report.strategies {
            let sum = &t.strategies[s];
            row.push(format!("{:.2e} ± {:.1e}", sum.median, sum.std));
        }
        if both {
            row.push(t.improvement_pct.map_or("-".into(), |v| format!("{v:.2}%")));
        }
        rows.push(row);
    }
    if both && report.tasks.len() > 1 {
        let mut row = vec!["Average".to_string()];
        row.extend(report.strategies.iter().map(|_| String::new()));
        row.push(report.average_improvement_pct.map_or("-".into(), |v| format!("{v:.2}%")));
        rows.push(row);
    }

    let columns = rows[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Experiment: {}. Median relative L2 ± std over {} seed(s) {:?}",
        report.experiment,
        report.seeds.len(),
        report.seeds
    );
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (columns - 1)));
        }
    }
    if let Some(wins) = report.curvature_wins {
        let _ = writeln!(out, "Curvature-based wins: {wins}/{}", report.tasks.len());
    }
    if let Some(w) = &report.wilcoxon {
        let _ = writeln!(out, "{}", wilcoxon_line("One-tailed Wilcoxon signed-rank", w));
    }
    if let Some(w) = &report.wilcoxon_pratt {
        let _ = writeln!(out, "{}", wilcoxon_line("  with zero differences kept (Pratt)", w));
    }
    out
}
