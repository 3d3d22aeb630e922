//! Static SVG plots of a report.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::report::{Artifacts, Cell, ReportError, RunReport, Variable};
use crate::scenario::Scenario;

const PALETTE: [RGBColor; 4] =
    [RGBColor(31, 119, 180), RGBColor(255, 127, 14), RGBColor(44, 160, 44), RGBColor(214, 39, 40)];

fn plot_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Format { path: path.to_path_buf(), msg: format!("plot: {e}") }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = (hi - lo).abs().max(1e-9);
    (lo - 0.08 * span, hi + 0.08 * span)
}

fn colour(cell: Cell) -> RGBColor {
    PALETTE[Cell::ALL.iter().position(|&c| c == cell).unwrap_or(0)]
}

fn travel_time_bars(report: &RunReport, path: &Path) -> Result<(), ReportError> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let hi =
        report.cells.iter().flat_map(|c| c.replications.iter().map(|r| r.travel_time)).fold(0.0_f64, f64::max) * 1.1;
    let n = report.cells.len();
    let mut chart = ChartBuilder::on(&root)
        .caption("Travel time of the semi-autonomous van", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..n as f64, 0.0..hi)
        .map_err(|e| plot_err(path, e))?;
    let labels: Vec<String> = report.cells.iter().map(|c| c.cell.to_string()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            if (x - i as f64 - 0.5).abs() < 0.26 {
                labels.get(i).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc("s")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (i, c) in report.cells.iter().enumerate() {
        let x = i as f64;
        let mean = c.mean_travel_time();
        chart
            .draw_series(std::iter::once(Rectangle::new([(x + 0.2, 0.0), (x + 0.8, mean)], colour(c.cell).filled())))
            .map_err(|e| plot_err(path, e))?;
        chart
            .draw_series(c.replications.iter().map(|r| Circle::new((x + 0.5, r.travel_time), 2, BLACK.filled())))
            .map_err(|e| plot_err(path, e))?;
    }
    root.present().map_err(|e| plot_err(path, e))
}

fn regression_scatter(report: &RunReport, cell: Cell, v: Variable, path: &Path) -> Result<bool, ReportError> {
    let Some(c) = report.cell(cell) else { return Ok(false) };
    let pts: Vec<(f64, f64)> = c.replications.iter().map(|r| (v.of(&r.means()), r.travel_time)).collect();
    if pts.is_empty() || pts.iter().any(|(x, _)| !x.is_finite()) {
        return Ok(false);
    }
    let (xl, xh) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (yl, yh) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let ((xl, xh), (yl, yh)) = (padded(xl, xh), padded(yl, yh));
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{cell}: travel time vs {v}"), ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(xl..xh, yl..yh)
        .map_err(|e| plot_err(path, e))?;
    chart.configure_mesh().x_desc(v.axis_label()).y_desc("travel time (s)").draw().map_err(|e| plot_err(path, e))?;
    let col = colour(cell);
    chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, col.filled()))).map_err(|e| plot_err(path, e))?;
    if let Some(m) = c.model(v) {
        let line = [xl, xh].map(|x| (x, m.beta0 + m.beta1 * x));
        chart
            .draw_series(LineSeries::new(line, BLACK.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(format!("y = {:.3} + {:.3} x, R² = {:.3}", m.beta0, m.beta1, m.r_squared))
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLACK));
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(path, e))?;
    }
    root.present().map_err(|e| plot_err(path, e))?;
    Ok(true)
}

fn gap_trace(sc: &Scenario, cell: Cell, run: &crate::sim::RunOutput, path: &Path) -> Result<(), ReportError> {
    let dt = sc.clock.dt();
    let t0 = run.departure.0;
    let series: Vec<Vec<(f64, f64)>> = run.convoy[1..]
        .iter()
        .map(|&id| {
            run.telemetry
                .iter()
                .filter(|s| s.vehicle == id && s.tick.0 % 10 == 0)
                .filter_map(|s| s.gap.map(|g| ((s.tick.0 - t0) as f64 * dt, g)))
                .collect()
        })
        .collect();
    let t_max = series.iter().flatten().map(|p| p.0).fold(1.0_f64, f64::max);
    let g_max = series.iter().flatten().map(|p| p.1).fold(sc.platoon.max_platoon_gap, f64::max) * 1.05;
    let root = SVGBackend::new(path, (900, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{cell}: gap to convoy predecessor, seed {}", run.seed), ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..t_max, 0.0..g_max)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("time since departure (s)")
        .y_desc("gap (m)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (k, pts) in series.into_iter().enumerate() {
        let col = PALETTE[k];
        chart
            .draw_series(LineSeries::new(pts, col.stroke_width(1)))
            .map_err(|e| plot_err(path, e))?
            .label(format!("{}", run.convoy[k + 1]))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], col));
    }
    let band = [(0.0, sc.platoon.max_gap), (t_max, sc.platoon.max_gap)];
    chart.draw_series(LineSeries::new(band, BLACK.mix(0.4))).map_err(|e| plot_err(path, e))?;
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Writes the travel-time bars, one scatter per (cell, variable) and a gap
/// trace per stored run.
pub fn emit_plots(
    sc: &Scenario,
    report: &RunReport,
    artifacts: &Artifacts,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let mut out = Vec::new();
    let path = dir.join("travel_time.svg");
    travel_time_bars(report, &path)?;
    out.push(path);
    for c in &report.cells {
        for v in Variable::ALL {
            let path = dir.join(format!("regression_{}_{}.svg", c.cell.stem(), v));
            if regression_scatter(report, c.cell, v, &path)? {
                out.push(path);
            }
        }
    }
    for (cell, run) in &artifacts.runs {
        let path = dir.join(format!("gap_trace_{}.svg", cell.stem()));
        gap_trace(sc, *cell, run, &path)?;
        out.push(path);
    }
    Ok(out)
}
