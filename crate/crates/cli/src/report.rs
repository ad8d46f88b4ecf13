//! Figures and a text summary rendered from a finished run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gwevo_core::scoring::FarRange;
use gwevo_search::analysis::AnalysisReport;
use gwevo_search::tree::{NodeId, TreeExport, ROOT};
use plotters::prelude::*;

use crate::run::{read_jsonl, CurveRecord, RunError};

/// Files `report` needs.
pub const REQUIRED: [&str; 4] = ["analysis.json", "curves.jsonl", "tree.json", "run_log.jsonl"];

/// Sensitivity curves are drawn over the nominal FAR window regardless of the
/// range a run was scored on.
pub const PLOT_FAR: FarRange = FarRange { min: 4.0, max: 1000.0 };

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("run directory {dir} is missing {}", missing.join(", "))]
    Missing { dir: String, missing: Vec<String> },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("plot: {0}")]
    Plot(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn plot_err<E: std::fmt::Display>(e: E) -> ReportError {
    ReportError::Plot(e.to_string())
}

pub fn missing_artifacts(dir: &Path) -> Vec<String> {
    REQUIRED.iter().filter(|f| !dir.join(f).is_file()).map(|f| f.to_string()).collect()
}

/// Writes `trajectory.svg`, `diversity.svg`, `sensitivity.svg` and
/// `summary.txt` into `out` and returns their paths.
pub fn report(dir: &Path, out: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let missing = missing_artifacts(dir);
    if !missing.is_empty() {
        return Err(ReportError::Missing { dir: dir.display().to_string(), missing });
    }
    fs::create_dir_all(out)?;
    let analysis: AnalysisReport = serde_json::from_str(&fs::read_to_string(dir.join("analysis.json"))?).map_err(RunError::from)?;
    let tree: TreeExport = serde_json::from_str(&fs::read_to_string(dir.join("tree.json"))?).map_err(RunError::from)?;
    let curves: Vec<CurveRecord> = read_jsonl(&dir.join("curves.jsonl"))?;

    let paths = [out.join("trajectory.svg"), out.join("diversity.svg"), out.join("sensitivity.svg"), out.join("summary.txt")];
    trajectory(&analysis, &paths[0])?;
    diversity(&analysis, &paths[1])?;
    sensitivity(&curves, &tree, &paths[2])?;
    fs::write(&paths[3], summary(&analysis, &tree))?;
    Ok(paths.to_vec())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn trajectory(a: &AnalysisReport, path: &Path) -> Result<(), ReportError> {
    let area = SVGBackend::new(path, (900, 500)).into_drawing_area();
    area.fill(&WHITE).map_err(plot_err)?;
    let last = a.trajectory.last().map_or(1, |p| p.eval.max(1)) as f64;
    let (lo, hi) = bounds(a.trajectory.iter().flat_map(|p| [p.best_so_far].into_iter().chain(p.fitness)));
    let mut chart = ChartBuilder::on(&area)
        .caption("Fitness per evaluation", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..last, lo..hi)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("evaluation").y_desc("fitness").draw().map_err(plot_err)?;
    chart
        .draw_series(a.trajectory.iter().filter_map(|p| p.fitness.map(|f| Circle::new((p.eval as f64, f), 2, BLUE.mix(0.5).filled()))))
        .map_err(plot_err)?
        .label("candidate");
    chart
        .draw_series(LineSeries::new(a.trajectory.iter().map(|p| (p.eval as f64, p.best_so_far)), RED.stroke_width(2)))
        .map_err(plot_err)?
        .label("best so far")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    for pt in &a.phase_transitions {
        let x = pt.index as f64;
        chart.draw_series(LineSeries::new([(x, lo), (x, hi)], BLACK.mix(0.4))).map_err(plot_err)?;
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(plot_err)?;
    area.present().map_err(plot_err)
}

fn diversity(a: &AnalysisReport, path: &Path) -> Result<(), ReportError> {
    let area = SVGBackend::new(path, (900, 500)).into_drawing_area();
    area.fill(&WHITE).map_err(plot_err)?;
    let (upper, lower) = area.split_vertically(250);
    let last = a.diversity.last().map_or(1, |p| p.eval.max(1)) as f64;
    let panels: [(&DrawingArea<_, _>, &str, fn(&gwevo_search::analysis::DiversityPoint) -> f64); 2] =
        [(&upper, "Shannon index", |p| p.shannon), (&lower, "CID", |p| p.cid)];
    for (panel, name, get) in panels {
        let (lo, hi) = bounds(a.diversity.iter().map(get));
        let mut chart = ChartBuilder::on(panel)
            .caption(name, ("sans-serif", 16))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(60)
            .build_cartesian_2d(0.0..last, lo..hi)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("evaluation").draw().map_err(plot_err)?;
        chart.draw_series(LineSeries::new(a.diversity.iter().map(|p| (p.eval as f64, get(p))), BLUE)).map_err(plot_err)?;
        chart.draw_series(a.diversity.iter().map(|p| Circle::new((p.eval as f64, get(p)), 3, BLUE.filled()))).map_err(plot_err)?;
    }
    area.present().map_err(plot_err)
}

fn sensitivity(curves: &[CurveRecord], tree: &TreeExport, path: &Path) -> Result<(), ReportError> {
    let area = SVGBackend::new(path, (900, 500)).into_drawing_area();
    area.fill(&WHITE).map_err(plot_err)?;
    let pick = |id: NodeId| curves.iter().find(|c| c.node == id);
    let shown: Vec<(&str, RGBColor, &CurveRecord)> = [("seed", BLUE, pick(ROOT)), ("best", RED, pick(tree.best))]
        .into_iter()
        .filter_map(|(n, c, r)| r.map(|r| (n, c, r)))
        .collect();
    let in_window = |f: f64| (PLOT_FAR.min..=PLOT_FAR.max).contains(&f);
    let (_, hi) = bounds(shown.iter().flat_map(|(_, _, r)| r.far.iter().zip(&r.d_sens).filter(|(f, _)| in_window(**f)).map(|(_, d)| *d)));
    let mut chart = ChartBuilder::on(&area)
        .caption("Sensitive distance vs false-alarm rate", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((PLOT_FAR.min..PLOT_FAR.max).log_scale(), 0.0..hi.max(1.0))
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("false alarms per month").y_desc("sensitive distance (Mpc)").draw().map_err(plot_err)?;
    for (name, color, r) in shown {
        let pts: Vec<(f64, f64)> = r.far.iter().zip(&r.d_sens).filter(|(f, _)| in_window(**f)).map(|(f, d)| (*f, *d)).collect();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("{name} (#{}, AUC {:.1})", r.node, r.auc))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(plot_err)?;
    area.present().map_err(plot_err)
}

/// Plain-text digest: headline numbers, phase transitions and the elite lineage.
pub fn summary(a: &AnalysisReport, tree: &TreeExport) -> String {
    let fit = |f: Option<f64>| f.map_or("-".to_string(), |f| format!("{f:.2}"));
    let mut s = String::new();
    let seed = tree.nodes.first().and_then(|n| n.fitness);
    let best = &tree.nodes[tree.best];
    let _ = writeln!(s, "evaluations: {} of {}", tree.t, tree.budget);
    let _ = writeln!(s, "nodes: {} (converged: {})", tree.nodes.len(), tree.converged);
    let _ = writeln!(s, "seed fitness: {}", fit(seed));
    let _ = writeln!(s, "best fitness: {} (node {}, depth {})", fit(best.fitness), best.id, best.depth);
    let _ = writeln!(s, "\nphase transitions (gain >= {}):", a.pt_threshold);
    if a.phase_transitions.is_empty() {
        let _ = writeln!(s, "  none");
    }
    for pt in &a.phase_transitions {
        let _ = writeln!(s, "  eval {}: {:.2} -> {:.2} (+{:.2})", pt.index, pt.from, pt.to, pt.gain);
    }
    let _ = writeln!(s, "\nelite lineage:");
    let mut lineage = vec![best.id];
    while let Some(p) = tree.nodes[*lineage.last().unwrap()].parent {
        lineage.push(p);
    }
    for id in lineage.into_iter().rev() {
        let n = &tree.nodes[id];
        let idea = if n.design_idea.is_empty() { &n.description } else { &n.design_idea };
        let _ = writeln!(s, "  #{} {} depth {} fitness {}: {}", n.id, n.op, n.depth, fit(n.fitness), idea.lines().next().unwrap_or(""));
    }
    s
}
