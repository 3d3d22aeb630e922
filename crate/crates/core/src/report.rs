//! Replication pipeline and report files.
//!
//! Each run is screened for outliers on the semi-autonomous van's telemetry,
//! reduced to one row (run means, travel time), and the rows of a cell are
//! regressed per independent variable.

use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::platoon::write_events_csv;
use crate::scenario::Scenario;
use crate::sim::{run_cell, Dataset, RunOutput, SimError, UseCase};
use crate::stats::{chow_f_test, fit_ols, remove_outliers, standardize, FTestResult, RegressionModel, StatsError};
use crate::telemetry::{feature_rows, run_means, write_telemetry_csv, RunMeans};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("run {seed} of {cell} produced no telemetry for the semi-autonomous van")]
    EmptyRun { cell: Cell, seed: u64 },
    #[error("replication sets differ: {0}")]
    Mismatch(String),
    #[error("no replications")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Speed,
    Accel,
    Gap,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::Speed, Variable::Accel, Variable::Gap];

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Speed => "speed",
            Variable::Accel => "accel",
            Variable::Gap => "gap",
        }
    }

    pub fn axis_label(self) -> &'static str {
        match self {
            Variable::Speed => "mean speed (m/s)",
            Variable::Accel => "mean |acceleration| (m/s²)",
            Variable::Gap => "mean gap (m)",
        }
    }

    pub fn of(self, m: &RunMeans) -> f64 {
        match self {
            Variable::Speed => m.speed,
            Variable::Accel => m.abs_accel,
            Variable::Gap => m.gap,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "speed" => Ok(Variable::Speed),
            "accel" | "acceleration" => Ok(Variable::Accel),
            "gap" => Ok(Variable::Gap),
            _ => Err(format!("unknown variable {s:?} (speed | accel | gap)")),
        }
    }
}

/// One of the four (use case, dataset) combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub use_case: UseCase,
    pub dataset: Dataset,
}

impl Cell {
    pub const ALL: [Cell; 4] = [
        Cell { use_case: UseCase::Manual, dataset: Dataset::Sim },
        Cell { use_case: UseCase::Manual, dataset: Dataset::Exp },
        Cell { use_case: UseCase::DynamicFlexible, dataset: Dataset::Sim },
        Cell { use_case: UseCase::DynamicFlexible, dataset: Dataset::Exp },
    ];

    pub fn new(use_case: UseCase, dataset: Dataset) -> Self {
        Cell { use_case, dataset }
    }

    /// File-name stem, e.g. `manual_sim`.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.use_case.as_str(), self.dataset.as_str())
    }

    fn parse_stem(stem: &str) -> Option<Cell> {
        let (u, d) = stem.rsplit_once('_')?;
        Some(Cell { use_case: u.parse().ok()?, dataset: d.parse().ok()? })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.use_case, self.dataset)
    }
}

/// Seeds of `n` paired replications under a master seed.
pub fn replication_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.random()).collect()
}

/// One run reduced to its regression row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    /// s
    pub travel_time: f64,
    pub speed: f64,
    pub abs_accel: f64,
    pub gap: f64,
    pub samples: usize,
    pub outliers_removed: usize,
    pub platoon_events: usize,
    pub collisions: u64,
    pub bound_violations: u64,
}

impl Replication {
    pub fn means(&self) -> RunMeans {
        RunMeans { speed: self.speed, abs_accel: self.abs_accel, gap: self.gap }
    }
}

/// Outlier screening and run means for one run.
pub fn analyse_run(sc: &Scenario, cell: Cell, run: &RunOutput) -> Result<Replication, ReportError> {
    let samples: Vec<_> = run.semi_samples(sc).collect();
    if samples.len() <= sc.run.lof_k {
        return Err(ReportError::EmptyRun { cell, seed: run.seed });
    }
    let features = standardize(&feature_rows(samples.iter().copied()));
    let split = remove_outliers(&features, sc.run.outlier_fraction, sc.run.lof_k)?;
    let kept = split.apply(&samples);
    let m = run_means(kept).ok_or(ReportError::EmptyRun { cell, seed: run.seed })?;
    Ok(Replication {
        seed: run.seed,
        travel_time: run.travel_time,
        speed: m.speed,
        abs_accel: m.abs_accel,
        gap: m.gap,
        samples: samples.len(),
        outliers_removed: split.removed.len(),
        platoon_events: run.events.len(),
        collisions: run.diagnostics.collisions,
        bound_violations: run.diagnostics.bound_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub cell: Cell,
    pub replications: Vec<Replication>,
    /// `None` when the fit is undefined (too few runs, constant regressor).
    pub models: Vec<(Variable, Option<RegressionModel<f64>>)>,
}

impl CellReport {
    pub fn from_replications(cell: Cell, replications: Vec<Replication>) -> Self {
        let y: Vec<f64> = replications.iter().map(|r| r.travel_time).collect();
        let models = Variable::ALL
            .iter()
            .map(|&v| {
                let x: Vec<f64> = replications.iter().map(|r| v.of(&r.means())).collect();
                (v, fit_ols(&x, &y).ok())
            })
            .collect();
        CellReport { cell, replications, models }
    }

    pub fn model(&self, v: Variable) -> Option<&RegressionModel<f64>> {
        self.models.iter().find(|(w, _)| *w == v).and_then(|(_, m)| m.as_ref())
    }

    pub fn mean_travel_time(&self) -> f64 {
        self.replications.iter().map(|r| r.travel_time).sum::<f64>() / self.replications.len() as f64
    }

    pub fn travel_times(&self) -> Vec<(u64, f64)> {
        self.replications.iter().map(|r| (r.seed, r.travel_time)).collect()
    }

    fn xy(&self, v: Variable) -> (Vec<f64>, Vec<f64>) {
        self.replications.iter().map(|r| (v.of(&r.means()), r.travel_time)).unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChowRow {
    pub use_case: UseCase,
    pub variable: Variable,
    pub result: FTestResult<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reduction {
    pub dataset: Dataset,
    pub manual_mean: f64,
    pub platoon_mean: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub cells: Vec<CellReport>,
    pub chow: Vec<ChowRow>,
    pub reductions: Vec<Reduction>,
}

impl RunReport {
    pub fn cell(&self, cell: Cell) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.cell == cell)
    }

    /// Builds the cross-cell parts (F-test blocks, reductions) from cell reports.
    pub fn assemble(
        master_seed: u64,
        seeds: Vec<u64>,
        alpha: f64,
        cells: Vec<CellReport>,
    ) -> Result<Self, ReportError> {
        let mut report = RunReport { master_seed, seeds, alpha, cells, chow: Vec::new(), reductions: Vec::new() };
        for uc in UseCase::ALL {
            let (Some(exp), Some(sim)) =
                (report.cell(Cell::new(uc, Dataset::Exp)), report.cell(Cell::new(uc, Dataset::Sim)))
            else {
                continue;
            };
            let mut rows = Vec::new();
            for v in Variable::ALL {
                let ((xe, ye), (xs, ys)) = (exp.xy(v), sim.xy(v));
                if let Ok(result) = chow_f_test(&xe, &ye, &xs, &ys, alpha) {
                    rows.push(ChowRow { use_case: uc, variable: v, result });
                }
            }
            report.chow.extend(rows);
        }
        for ds in Dataset::ALL {
            let (Some(m), Some(p)) =
                (report.cell(Cell::new(UseCase::Manual, ds)), report.cell(Cell::new(UseCase::DynamicFlexible, ds)))
            else {
                continue;
            };
            let percent = compare_modes(m, p)?;
            let r = Reduction {
                dataset: ds,
                manual_mean: m.mean_travel_time(),
                platoon_mean: p.mean_travel_time(),
                percent,
            };
            report.reductions.push(r);
        }
        Ok(report)
    }
}

/// Travel-time reduction of `platoon` against `manual`, in percent.
pub fn reduction_percent(manual: f64, platoon: f64) -> f64 {
    (manual - platoon) / manual * 100.0
}

/// Reduction of mean travel time over paired replications.
pub fn compare_modes(manual: &CellReport, platoon: &CellReport) -> Result<f64, ReportError> {
    if manual.replications.is_empty() || platoon.replications.is_empty() {
        return Err(ReportError::Empty);
    }
    if manual.cell.dataset != platoon.cell.dataset {
        return Err(ReportError::Mismatch(format!("datasets {} and {}", manual.cell.dataset, platoon.cell.dataset)));
    }
    let mut a: Vec<u64> = manual.replications.iter().map(|r| r.seed).collect();
    let mut b: Vec<u64> = platoon.replications.iter().map(|r| r.seed).collect();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(ReportError::Mismatch(format!("{} seeds vs {} seeds, not the same set", a.len(), b.len())));
    }
    Ok(reduction_percent(manual.mean_travel_time(), platoon.mean_travel_time()))
}

/// Runs every cell over the paired seeds; `each` sees every finished run.
pub fn run_experiment(
    sc: &Scenario,
    cells: &[Cell],
    master_seed: u64,
    replications: usize,
    mut each: impl FnMut(Cell, usize, &RunOutput) -> Result<(), ReportError>,
) -> Result<RunReport, ReportError> {
    if replications == 0 || cells.is_empty() {
        return Err(ReportError::Empty);
    }
    let seeds = replication_seeds(master_seed, replications);
    let mut out = Vec::with_capacity(cells.len());
    for &cell in cells {
        let mut reps = Vec::with_capacity(replications);
        for (i, &seed) in seeds.iter().enumerate() {
            let run = run_cell(sc, cell.use_case, cell.dataset, seed)?;
            reps.push(analyse_run(sc, cell, &run)?);
            each(cell, i, &run)?;
        }
        out.push(CellReport::from_replications(cell, reps));
    }
    RunReport::assemble(master_seed, seeds, sc.run.alpha, out)
}

/// `<1e-12` below the display floor, otherwise four significant digits.
pub fn format_p(p: f64) -> String {
    if p < 1e-12 {
        "<1e-12".to_string()
    } else {
        format!("{p:.4e}")
    }
}

pub const REGRESSION_COLUMNS: [&str; 7] = ["R-Squared", "ESS", "P-Value", "Mean", "Intercept", "Coef", "F-Statistic"];

const REPLICATION_HEADER: [&str; 10] = [
    "seed",
    "travel_time_s",
    "speed_mps",
    "abs_accel_mps2",
    "gap_m",
    "samples",
    "outliers_removed",
    "platoon_events",
    "collisions",
    "bound_violations",
];

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub fn write_replications_csv(path: &Path, reps: &[Replication]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(REPLICATION_HEADER).map_err(csv_err(path))?;
    for r in reps {
        w.write_record([
            r.seed.to_string(),
            r.travel_time.to_string(),
            r.speed.to_string(),
            r.abs_accel.to_string(),
            r.gap.to_string(),
            r.samples.to_string(),
            r.outliers_removed.to_string(),
            r.platoon_events.to_string(),
            r.collisions.to_string(),
            r.bound_violations.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_replications_csv(path: &Path) -> Result<Vec<Replication>, ReportError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(REPLICATION_HEADER) {
        return Err(ReportError::Format { path: path.to_path_buf(), msg: format!("unexpected header {header:?}") });
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad =
            |msg: String| ReportError::Format { path: path.to_path_buf(), msg: format!("row {}: {msg}", line + 1) };
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", REPLICATION_HEADER[i])));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|e| bad(format!("{}: {e}", REPLICATION_HEADER[i])));
        out.push(Replication {
            seed: int(0)?,
            travel_time: num(1)?,
            speed: num(2)?,
            abs_accel: num(3)?,
            gap: num(4)?,
            samples: int(5)? as usize,
            outliers_removed: int(6)? as usize,
            platoon_events: int(7)? as usize,
            collisions: int(8)?,
            bound_violations: int(9)?,
        });
    }
    if out.is_empty() {
        return Err(ReportError::Empty);
    }
    Ok(out)
}

/// Cell reports found as `replications_<cell>.csv` in a report directory.
pub fn load_report_dir(dir: &Path) -> Result<Vec<CellReport>, ReportError> {
    let mut cells = Vec::new();
    for cell in Cell::ALL {
        let path = dir.join(format!("replications_{}.csv", cell.stem()));
        if path.exists() {
            cells.push(CellReport::from_replications(cell, read_replications_csv(&path)?));
        }
    }
    if cells.is_empty() {
        return Err(ReportError::Format { path: dir.to_path_buf(), msg: "no replications_<cell>.csv files".into() });
    }
    Ok(cells)
}

pub fn write_regression_csv(path: &Path, report: &RunReport) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["Mode", "Dataset", "Variable", "N"];
    header.extend(REGRESSION_COLUMNS);
    w.write_record(&header).map_err(csv_err(path))?;
    for c in &report.cells {
        for (v, m) in &c.models {
            let mut row = vec![c.cell.use_case.to_string(), c.cell.dataset.to_string(), v.to_string()];
            match m {
                Some(m) => row.extend([
                    m.n.to_string(),
                    m.r_squared.to_string(),
                    m.ess.to_string(),
                    m.p_value.to_string(),
                    m.x_mean.to_string(),
                    m.beta0.to_string(),
                    m.beta1.to_string(),
                    m.f_stat.to_string(),
                ]),
                None => {
                    row.extend(std::iter::once(c.replications.len().to_string()).chain((0..7).map(|_| String::new())))
                }
            }
            w.write_record(&row).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_comparison_csv(path: &Path, report: &RunReport) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "Mode",
        "Variable",
        "ESS_R",
        "ESS_UR",
        "K",
        "N_sim",
        "N_exp",
        "F",
        "df1",
        "df2",
        "P-Value",
        "Critical",
        "alpha",
        "reject_null",
    ])
    .map_err(csv_err(path))?;
    for c in &report.chow {
        let r = &c.result;
        w.write_record([
            c.use_case.to_string(),
            c.variable.to_string(),
            r.ess_r.to_string(),
            r.ess_ur.to_string(),
            r.k.to_string(),
            r.n_sim.to_string(),
            r.n_exp.to_string(),
            r.f.to_string(),
            r.df1.to_string(),
            r.df2.to_string(),
            r.p_value.to_string(),
            r.critical_value.to_string(),
            r.alpha.to_string(),
            r.reject_null.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Plain-text rendering of the regression table, the F-test blocks and the
/// mode comparison.
pub fn render_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "master seed {}, {} paired replications", report.master_seed, report.seeds.len());
    let _ = writeln!(s);
    let _ = writeln!(s, "Travel time of the semi-autonomous van (s)");
    for c in &report.cells {
        let tt: Vec<f64> = c.replications.iter().map(|r| r.travel_time).collect();
        let (lo, hi) = tt.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
        let _ = writeln!(
            s,
            "  {:<16} mean {:>8.2}  min {:>8.2}  max {:>8.2}",
            c.cell.to_string(),
            c.mean_travel_time(),
            lo,
            hi
        );
    }
    if !report.reductions.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "Reduction, dynamic-flexible vs manual");
        for r in &report.reductions {
            let _ = writeln!(
                s,
                "  {:<4} {:>8.2} s -> {:>8.2} s  {:>6.2} %",
                r.dataset.as_str(),
                r.manual_mean,
                r.platoon_mean,
                r.percent
            );
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Regression models, travel time on run means");
    let _ = write!(s, "  {:<8} {:<4} {:<6} {:>3}", "Mode", "Data", "Var", "N");
    let widths = [10, 12, 12, 10, 12, 12, 12];
    for (c, w) in REGRESSION_COLUMNS.iter().zip(widths) {
        let _ = write!(s, " {c:>w$}");
    }
    let _ = writeln!(s);
    for c in &report.cells {
        for (v, m) in &c.models {
            let _ = write!(s, "  {:<8} {:<4} {:<6}", c.cell.use_case.as_str(), c.cell.dataset.as_str(), v.as_str());
            match m {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        " {:>3} {:>10.5} {:>12.4} {:>12} {:>10.4} {:>12.4} {:>12.4} {:>12.4}",
                        m.n,
                        m.r_squared,
                        m.ess,
                        format_p(m.p_value),
                        m.x_mean,
                        m.beta0,
                        m.beta1,
                        m.f_stat
                    );
                }
                None => {
                    let _ =
                        writeln!(s, " {:>3}  (undefined: constant regressor or too few runs)", c.replications.len());
                }
            }
        }
    }
    if !report.chow.is_empty() {
        let _ = writeln!(s);
        let _ =
            writeln!(s, "Exp vs sim coefficient equality, F = ((ESS_R - ESS_UR)/K) / (ESS_UR/(N_sim + N_exp - 2K))");
        for c in &report.chow {
            let r = &c.result;
            let verdict = if r.reject_null { "reject equality" } else { "equality not rejected" };
            let _ = writeln!(
                s,
                "  {:<8} {:<6} ESS_R {:>12.4}  ESS_UR {:>12.4}  F({}, {}) = {:>9.4}  p {:>10}  crit {:>7.4}  {}",
                c.use_case.as_str(),
                c.variable.as_str(),
                r.ess_r,
                r.ess_ur,
                r.df1,
                r.df2,
                r.f,
                format_p(r.p_value),
                r.critical_value,
                verdict
            );
        }
    }
    s
}

/// Runs kept for file output: telemetry and events of one replication per cell.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub runs: Vec<(Cell, RunOutput)>,
}

/// Writes every report file for `report` into `out_dir`.
pub fn emit_reports(
    sc: &Scenario,
    report: &RunReport,
    artifacts: &Artifacts,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    if report.cells.is_empty() || report.cells.iter().any(|c| c.replications.is_empty()) {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    for (cell, run) in &artifacts.runs {
        let path = out_dir.join(format!("telemetry_{}.csv", cell.stem()));
        write_telemetry_csv(&run.telemetry, &sc.route, create(&path)?).map_err(csv_err(&path))?;
        written.push(path);
        let path = out_dir.join(format!("events_{}.csv", cell.stem()));
        write_events_csv(&run.events, create(&path)?).map_err(csv_err(&path))?;
        written.push(path);
    }
    for c in &report.cells {
        let path = out_dir.join(format!("replications_{}.csv", c.cell.stem()));
        write_replications_csv(&path, &c.replications)?;
        written.push(path);
    }
    let path = out_dir.join("regression.csv");
    write_regression_csv(&path, report)?;
    written.push(path);
    let path = out_dir.join("comparison.csv");
    write_comparison_csv(&path, report)?;
    written.push(path);
    let path = out_dir.join("summary.txt");
    fs::write(&path, render_text(report)).map_err(io_err(&path))?;
    written.push(path);
    let path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&path, json).map_err(io_err(&path))?;
    written.push(path);
    let plots = out_dir.join("plots");
    fs::create_dir_all(&plots).map_err(io_err(&plots))?;
    written.extend(crate::plot::emit_plots(sc, report, artifacts, &plots)?);
    Ok(written)
}

/// Cell encoded in a report file name such as `telemetry_manual_exp.csv`.
pub fn cell_of_file(path: &Path, prefix: &str) -> Option<Cell> {
    let stem = path.file_stem()?.to_str()?;
    Cell::parse_stem(stem.strip_prefix(prefix)?.strip_prefix('_')?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(seed: u64, t: f64) -> Replication {
        Replication {
            seed,
            travel_time: t,
            speed: 4930.0 / t,
            abs_accel: 0.2,
            gap: 7.0 + t / 100.0,
            samples: 100,
            outliers_removed: 0,
            platoon_events: 0,
            collisions: 0,
            bound_violations: 0,
        }
    }

    #[test]
    fn reduction_arithmetic() {
        assert!((reduction_percent(450.0, 343.0) - 23.777).abs() < 0.01);
        assert!((reduction_percent(508.0, 400.0) - 21.2598).abs() < 0.01);
        assert_eq!(reduction_percent(400.0, 400.0), 0.0);
    }

    #[test]
    fn mismatched_seeds_rejected() {
        let m = CellReport::from_replications(Cell::ALL[0], vec![rep(1, 450.0), rep(2, 460.0)]);
        let p = CellReport::from_replications(Cell::ALL[2], vec![rep(1, 350.0), rep(3, 360.0)]);
        assert!(matches!(compare_modes(&m, &p), Err(ReportError::Mismatch(_))));
        let p = CellReport::from_replications(Cell::ALL[2], vec![rep(2, 360.0), rep(1, 350.0)]);
        let r = compare_modes(&m, &p).unwrap();
        assert!((r - reduction_percent(455.0, 355.0)).abs() < 1e-12);
    }

    #[test]
    fn cross_dataset_comparison_rejected() {
        let m = CellReport::from_replications(Cell::ALL[0], vec![rep(1, 450.0)]);
        let p = CellReport::from_replications(Cell::ALL[3], vec![rep(1, 350.0)]);
        assert!(matches!(compare_modes(&m, &p), Err(ReportError::Mismatch(_))));
    }

    #[test]
    fn p_floor() {
        assert_eq!(format_p(1e-13), "<1e-12");
        assert_eq!(format_p(0.0), "<1e-12");
        assert_eq!(format_p(0.05), "5.0000e-2");
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = replication_seeds(7, 20);
        assert_eq!(a, replication_seeds(7, 20));
        assert_eq!(&replication_seeds(7, 5)[..], &a[..5]);
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 20);
    }

    #[test]
    fn replications_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replications_manual_sim.csv");
        let reps = vec![rep(11, 450.25), rep(12, 461.5)];
        write_replications_csv(&path, &reps).unwrap();
        let back = read_replications_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].seed, 11);
        assert_eq!(back[1].travel_time, 461.5);
        assert_eq!(back[0].gap, reps[0].gap);
        assert_eq!(cell_of_file(&path, "replications"), Some(Cell::ALL[0]));
    }

    #[test]
    fn stem_roundtrip() {
        for c in Cell::ALL {
            assert_eq!(Cell::parse_stem(&c.stem()), Some(c));
        }
    }
}
