use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use convoy_core::report::{
    emit_reports, format_p, load_report_dir, reduction_percent, render_text, run_experiment, Artifacts, Cell,
    CellReport, ReportError, Variable,
};
use convoy_core::road_net::{import_gps_trace, read_gps_csv};
use convoy_core::scenario::{load_scenario, Scenario, ScenarioError};
use convoy_core::sim::{Dataset, UseCase};
use convoy_core::stats::chow_f_test;

/// Dynamic-flexible platoon simulator and validation harness.
#[derive(Debug, Parser)]
#[command(name = "convoy", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the selected cells over paired seeds and write the report.
    Run(RunArgs),
    /// Travel-time reduction between a manual and a platooning report.
    Compare {
        /// Report directory holding the manual cells.
        manual: PathBuf,
        /// Report directory holding the dynamic-flexible cells.
        platoon: PathBuf,
    },
    /// Test whether exp and sim share regression coefficients.
    Validate(ValidateArgs),
    /// Turn a GPS trace into a network and route file.
    ImportTrace(ImportArgs),
    /// Run the built-in oracle checks.
    Selftest {
        /// Fewer Monte Carlo trials.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UseCaseArg {
    Manual,
    Dynamic,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetArg {
    Sim,
    Exp,
    All,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file; the built-in desk scenario when omitted.
    #[arg(long, short)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    use_case: UseCaseArg,
    #[arg(long, value_enum, default_value = "all")]
    dataset: DatasetArg,
    /// Master seed; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.replications`.
    #[arg(long, short)]
    replications: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Exp replications CSV.
    #[arg(long)]
    exp: PathBuf,
    /// Sim replications CSV.
    #[arg(long)]
    sim: PathBuf,
    #[arg(long, default_value = "speed")]
    variable: Variable,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// CSV with `timestamp,lat,lon[,speed]`.
    #[arg(long, short)]
    input: PathBuf,
    /// Network file to write (TOML).
    #[arg(long, short)]
    output: PathBuf,
    /// m; points closer than this to the previous kept point are merged.
    #[arg(long, default_value_t = 5.0)]
    snap: f64,
    #[arg(long, default_value = "gps")]
    route_id: String,
    /// m into the first edge where the route starts, leaving room for the followers.
    #[arg(long, default_value_t = 30.0)]
    origin_offset: f64,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Rejected,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Sim(_) | ReportError::Io { .. } => Failure::Runtime(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

fn cells(u: UseCaseArg, d: DatasetArg) -> Vec<Cell> {
    let ucs: &[UseCase] = match u {
        UseCaseArg::Manual => &[UseCase::Manual],
        UseCaseArg::Dynamic => &[UseCase::DynamicFlexible],
        UseCaseArg::All => &UseCase::ALL,
    };
    let dss: &[Dataset] = match d {
        DatasetArg::Sim => &[Dataset::Sim],
        DatasetArg::Exp => &[Dataset::Exp],
        DatasetArg::All => &Dataset::ALL,
    };
    ucs.iter().flat_map(|&u| dss.iter().map(move |&d| Cell::new(u, d))).collect()
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let sc = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::default(),
    };
    let master = a.seed.unwrap_or(sc.run.seed);
    let reps = a.replications.unwrap_or(sc.run.replications);
    if reps == 0 {
        return Err(Failure::Config(anyhow!("--replications must be >= 1")));
    }
    let mut artifacts = Artifacts::default();
    let report = run_experiment(&sc, &cells(a.use_case, a.dataset), master, reps, |cell, i, out| {
        if i == 0 {
            artifacts.runs.push((cell, out.clone()));
        }
        eprintln!("{cell} seed {} travel time {:.2} s", out.seed, out.travel_time);
        Ok(())
    })?;
    let written = emit_reports(&sc, &report, &artifacts, &a.out)?;
    print!("{}", render_text(&report));
    println!();
    println!("{} files written to {}", written.len(), a.out.display());
    Ok(())
}

fn pick(reports: &[CellReport], uc: UseCase, ds: Dataset) -> Option<&CellReport> {
    reports.iter().find(|c| c.cell == Cell::new(uc, ds))
}

fn compare(manual: &Path, platoon: &Path) -> Result<(), Failure> {
    let m = load_report_dir(manual)?;
    let p = load_report_dir(platoon)?;
    let mut any = false;
    for ds in Dataset::ALL {
        let (Some(a), Some(b)) = (pick(&m, UseCase::Manual, ds), pick(&p, UseCase::DynamicFlexible, ds)) else {
            continue;
        };
        let pct = convoy_core::report::compare_modes(a, b)?;
        println!(
            "{:<4} manual {:>8.2} s  dynamic {:>8.2} s  reduction {:>6.2} %",
            ds.as_str(),
            a.mean_travel_time(),
            b.mean_travel_time(),
            pct
        );
        debug_assert_eq!(pct, reduction_percent(a.mean_travel_time(), b.mean_travel_time()));
        any = true;
    }
    if !any {
        return Err(Failure::Config(anyhow!(
            "no dataset has a manual cell in {} and a dynamic cell in {}",
            manual.display(),
            platoon.display()
        )));
    }
    Ok(())
}

/// `(x, travel time)` columns from a replications CSV.
fn read_xy(path: &Path, v: Variable) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let reps = convoy_core::report::read_replications_csv(path)?;
    Ok(reps.iter().map(|r| (v.of(&r.means()), r.travel_time)).unzip())
}

fn validate(a: ValidateArgs) -> Result<(), Failure> {
    let (xe, ye) = read_xy(&a.exp, a.variable).map_err(Failure::Config)?;
    let (xs, ys) = read_xy(&a.sim, a.variable).map_err(Failure::Config)?;
    let r = chow_f_test(&xe, &ye, &xs, &ys, a.alpha).map_err(|e| Failure::Config(e.into()))?;
    println!("variable      {}", a.variable);
    println!("ESS_R         {:.6}", r.ess_r);
    println!("ESS_UR        {:.6}", r.ess_ur);
    println!("N_exp N_sim   {} {}", r.n_exp, r.n_sim);
    println!("F({}, {})     {:.6}", r.df1, r.df2, r.f);
    println!("p             {}", format_p(r.p_value));
    println!("critical      {:.6} at alpha {}", r.critical_value, r.alpha);
    if r.reject_null {
        println!("coefficients differ: exp and sim models are not equivalent");
        Err(Failure::Rejected)
    } else {
        println!("equality of coefficients not rejected");
        Ok(())
    }
}

fn import_trace(a: ImportArgs) -> Result<(), Failure> {
    let file = fs::File::open(&a.input)
        .with_context(|| format!("cannot open {}", a.input.display()))
        .map_err(Failure::Config)?;
    let trace = read_gps_csv(file).with_context(|| a.input.display().to_string()).map_err(Failure::Config)?;
    let mut imported = import_gps_trace(&trace, a.snap).map_err(|e| Failure::Config(e.into()))?;
    let first = imported.edges[0].length;
    if !(0.0..first).contains(&a.origin_offset) {
        return Err(Failure::Config(anyhow!(
            "--origin-offset {} m must lie within the first edge ({first:.1} m)",
            a.origin_offset
        )));
    }
    imported.route.origin_offset = a.origin_offset;
    let net = imported.to_network_file(&a.route_id);
    let text = toml::to_string_pretty(&net).map_err(|e| Failure::Runtime(e.into()))?;
    fs::write(&a.output, text)
        .with_context(|| format!("cannot write {}", a.output.display()))
        .map_err(Failure::Runtime)?;
    let total: f64 = imported.edges.iter().map(|e| e.length).sum();
    println!(
        "{} points -> {} edges, {:.1} m, written to {}",
        trace.len(),
        imported.edges.len(),
        total,
        a.output.display()
    );
    Ok(())
}

fn selftest(quick: bool) -> Result<(), Failure> {
    let checks = convoy_core::selftest::run_all(quick);
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{tag} {}", c.name);
        } else {
            println!("{tag} {} ({})", c.name, c.detail);
        }
    }
    println!("{} checks, {} failed", checks.len(), failed);
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!("{failed} self-test checks failed")));
    }
    Ok(())
}

/// Error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !out.contains(&c) {
            out = format!("{out}: {c}");
        }
    }
    out
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Compare { manual, platoon } => compare(&manual, &platoon),
        Command::Validate(a) => validate(a),
        Command::ImportTrace(a) => import_trace(a),
        Command::Selftest { quick } => selftest(quick),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(Failure::Rejected) => ExitCode::from(3),
    }
}
