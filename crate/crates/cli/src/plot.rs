//! Figures for one-dimensional regression tasks: the fitted curves over the
//! target, and one strip per strategy marking the first layer's knots.

use std::fs;
use std::path::{Path, PathBuf};

use kangrid::benchmarks::{task_by_name, RegressionTask};
use kangrid::experiment::cell_id;
use kangrid::Network;
use svg::node::element::{Line, Polyline, Rectangle, Text};
use svg::Document;

use crate::run::{checkpoint_path, ReportArtifact};
use crate::CliError;

const WIDTH: f64 = 720.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const PANEL: f64 = 300.0;
const STRIP: f64 = 44.0;
const GAP: f64 = 26.0;

const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

/// One fitted strategy: its predictions on the plot grid and its knots.
pub struct Curve {
    pub strategy: String,
    pub prediction: Vec<f64>,
    pub knots: Vec<f64>,
}

/// Writes `fig_<task>.svg` for every 1D task in the report, using the
/// checkpoints of the smallest seed. Returns the written paths.
pub fn write_figures(dir: &Path, artifact: &ReportArtifact) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let Some(&seed) = artifact.report.seeds.iter().min() else {
        return Ok(written);
    };
    for summary in &artifact.report.tasks {
        let Ok(task) = task_by_name(&summary.task) else {
            continue;
        };
        if task.dimension() != 1 {
            continue;
        }
        let test = task.test_set()?;
        let mut curves = Vec::new();
        for strategy in &artifact.report.strategies {
            let path = checkpoint_path(dir, &cell_id(&task.name, strategy, seed));
            let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
            let net = Network::from_checkpoint(&text)?;
            curves.push(Curve {
                strategy: strategy.clone(),
                prediction: net.predict(&test.inputs).into_vec(),
                knots: net.layers()[0].knots[0].primary().to_vec(),
            });
        }
        let xs = test.inputs.column(0);
        let doc = figure(&task, &xs, test.targets.as_slice(), &curves);
        let path = dir.join(format!("fig_{}.svg", file_safe(&task.name)));
        svg::save(&path, &doc).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
        .collect()
}

pub fn figure(task: &RegressionTask, xs: &[f64], target: &[f64], curves: &[Curve]) -> Document {
    let (x_lo, x_hi) = task.domain[0];
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for v in target.iter().chain(curves.iter().flat_map(|c| &c.prediction)) {
        if v.is_finite() {
            y_lo = y_lo.min(*v);
            y_hi = y_hi.max(*v);
        }
    }
    let pad = 0.05 * (y_hi - y_lo).max(1e-12);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * PANEL;
    let height = TOP + PANEL + curves.len() as f64 * (STRIP + GAP) + GAP + 10.0;

    let mut doc = Document::new()
        .set("viewBox", (0, 0, WIDTH, height))
        .set("width", WIDTH)
        .set("height", height)
        .set("font-family", "sans-serif")
        .set("font-size", 12)
        .add(Rectangle::new().set("width", WIDTH).set("height", height).set("fill", "white"))
        .add(frame(LEFT, TOP, plot_w, PANEL))
        .add(label(LEFT, TOP - 10.0, &format!("{}: {}", task.name, task.description), "start"));

    for (value, anchor_y) in [(y_hi - pad, sy(y_hi - pad)), (y_lo + pad, sy(y_lo + pad))] {
        doc = doc.add(label(LEFT - 6.0, anchor_y + 4.0, &format!("{value:.2}"), "end"));
    }
    for x in [x_lo, 0.5 * (x_lo + x_hi), x_hi] {
        doc = doc.add(label(sx(x), TOP + PANEL + 16.0, &format!("{x:.2}"), "middle"));
    }

    doc = doc.add(polyline(xs.iter().zip(target).map(|(x, y)| (sx(*x), sy(*y))), "black", "2", None));
    for (i, c) in curves.iter().enumerate() {
        let dash = (i == 0).then_some("6 3");
        let points = xs.iter().zip(&c.prediction).map(|(x, y)| (sx(*x), sy(*y)));
        doc = doc.add(polyline(points, COLORS[i % 2], "1.5", dash));
        let ly = TOP + 16.0 + 16.0 * i as f64;
        doc = doc
            .add(
                Line::new()
                    .set("x1", WIDTH - RIGHT - 150.0)
                    .set("x2", WIDTH - RIGHT - 125.0)
                    .set("y1", ly - 4.0)
                    .set("y2", ly - 4.0)
                    .set("stroke", COLORS[i % 2])
                    .set("stroke-width", 2),
            )
            .add(label(WIDTH - RIGHT - 120.0, ly, &format!("{}-based", c.strategy), "start"));
    }

    for (i, c) in curves.iter().enumerate() {
        let top = TOP + PANEL + GAP + 10.0 + i as f64 * (STRIP + GAP);
        doc = doc
            .add(frame(LEFT, top, plot_w, STRIP))
            .add(label(LEFT, top - 5.0, &format!("{}-based knots, first layer", c.strategy), "start"));
        for t in &c.knots {
            let x = sx(*t).clamp(LEFT, WIDTH - RIGHT);
            doc = doc.add(
                Line::new()
                    .set("x1", x)
                    .set("x2", x)
                    .set("y1", top + 4.0)
                    .set("y2", top + STRIP - 4.0)
                    .set("stroke", COLORS[i % 2])
                    .set("stroke-width", 1.5),
            );
        }
    }
    doc
}

fn frame(x: f64, y: f64, w: f64, h: f64) -> Rectangle {
    Rectangle::new()
        .set("x", x)
        .set("y", y)
        .set("width", w)
        .set("height", h)
        .set("fill", "none")
        .set("stroke", "#888")
}

fn label(x: f64, y: f64, text: &str, anchor: &str) -> Text {
    Text::new(text).set("x", x).set("y", y).set("text-anchor", anchor)
}

fn polyline(points: impl Iterator<Item = (f64, f64)>, color: &str, width: &str, dash: Option<&str>) -> Polyline {
    let coords: Vec<String> = points
        .filter(|(_, y)| y.is_finite())
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    let mut line = Polyline::new()
        .set("points", coords.join(" "))
        .set("fill", "none")
        .set("stroke", color)
        .set("stroke-width", width);
    if let Some(d) = dash {
        line = line.set("stroke-dasharray", d);
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use kangrid::benchmarks::gaussian_bump_task;

    #[test]
    fn figure_has_curves_and_knot_strips() {
        let task = gaussian_bump_task();
        let xs: Vec<f64> = (0..50).map(|i| -1.0 + 2.0 * i as f64 / 49.0).collect();
        let target: Vec<f64> = xs.iter().map(|x| task.eval(&[*x])).collect();
        let curves = vec![
            Curve {
                strategy: "input".into(),
                prediction: target.iter().map(|y| y * 0.9).collect(),
                knots: vec![-1.0, 0.0, 1.0],
            },
            Curve {
                strategy: "curvature".into(),
                prediction: target.clone(),
                knots: vec![-1.0, -0.1, 0.0, 0.1, 1.0],
            },
        ];
        let text = figure(&task, &xs, &target, &curves).to_string();
        assert_eq!(text.matches("<polyline").count(), 3);
        // legend lines plus one tick per knot
        assert_eq!(text.matches("<line").count(), 2 + 3 + 5);
        assert!(text.contains("curvature-based knots"));
    }
}
