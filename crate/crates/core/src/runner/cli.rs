//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 simulation
//! abort or I/O failure, 3 invariant violation (or an inadmissible speed).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use super::{
    emit_outputs, execute, load_config, load_table, split_values, status_name, svg, sweep_scenarios, CheckStatus,
    RunReport, Scenario,
};
use crate::diag;
use crate::speed::{check_admissibility, parse_speed, AdmissibilityOptions, AlphaGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hcflow", version, about = "Constrained curvature flows of h-convex hypersurfaces in hyperbolic space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its series, snapshots, plots and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory of the scenario.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Screen a speed law phi(H) for admissibility.
    CheckSpeed {
        #[arg(long)]
        expr: String,
        #[arg(long, default_value_t = 1e-6)]
        alpha_min: f64,
        #[arg(long, default_value_t = 1e6)]
        alpha_max: f64,
        #[arg(long, default_value_t = 241)]
        points: usize,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Accept the limit conditions when the grid is inconclusive.
        #[arg(long)]
        attest_limits: bool,
    },
    /// Run a batch varying one configuration key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key path, e.g. `flow.speed`.
        #[arg(long)]
        param: String,
        /// Comma-separated values (commas inside parentheses are kept).
        #[arg(long)]
        values: String,
        /// Scenarios run concurrently.
        #[arg(long, env = "HCFLOW_JOBS", default_value_t = 1)]
        jobs: usize,
    },
    /// Render a series CSV as SVG plots.
    Plot {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario and check every invariant; writes no files.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parses `args` (program name first) and executes the subcommand.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::CheckSpeed { expr, alpha_min, alpha_max, points, json, attest_limits } => {
            cmd_check_speed(&expr, AlphaGrid { min: alpha_min, max: alpha_max, points }, json, attest_limits)
        }
        Command::Sweep { config, param, values, jobs } => cmd_sweep(config, &param, &values, jobs),
        Command::Plot { series, out } => cmd_plot(series, out),
        Command::Verify { config } => cmd_verify(config),
    }
}

fn load(config: &Path) -> Result<Scenario, i32> {
    load_config(config).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn simulate(s: &Scenario) -> Result<RunReport, i32> {
    execute(s).map_err(|e| {
        eprintln!("error: {}: {e}", s.name);
        EXIT_ABORT
    })
}

/// Exit code of a finished run: abort beats invariant violations.
fn report_code(r: &RunReport) -> i32 {
    if r.aborted() {
        EXIT_ABORT
    } else if r.violations().next().is_some() {
        EXIT_INVARIANT
    } else {
        EXIT_OK
    }
}

fn print_checks(r: &RunReport) {
    for c in &r.checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        println!("  [{tag}] {:<24} {}", c.name, c.detail);
    }
}

fn print_summary(s: &Scenario, r: &RunReport) {
    let o = &r.outcome;
    println!(
        "{}: {} at t = {:.6} after {} steps ({} records)",
        s.name,
        status_name(&o.termination),
        o.final_state.t,
        o.monitor.steps,
        o.records.len()
    );
    if let Some(e) = &o.abort {
        eprintln!("run aborted: {e}");
    }
    if let Some(c) = &o.convergence {
        println!("  limit radius {:.12} (predicted {:.12}, sphericity {:.2e})", c.radius, c.predicted_radius, c.sphericity);
    }
}

fn cmd_run(config: PathBuf, out: Option<PathBuf>) -> i32 {
    let s = match load(&config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let r = match simulate(&s) {
        Ok(r) => r,
        Err(code) => return code,
    };
    print_summary(&s, &r);
    print_checks(&r);
    let dir = out.unwrap_or_else(|| s.outputs.clone());
    if let Err(e) = emit_outputs(&s, &r, &dir) {
        eprintln!("error: writing outputs to {}: {e}", dir.display());
        return EXIT_ABORT;
    }
    println!("  outputs in {}", dir.display());
    report_code(&r)
}

fn cmd_verify(config: PathBuf) -> i32 {
    let s = match load(&config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let r = match simulate(&s) {
        Ok(r) => r,
        Err(code) => return code,
    };
    print_summary(&s, &r);
    print_checks(&r);
    let code = report_code(&r);
    if code == EXIT_INVARIANT {
        for c in r.violations() {
            eprintln!("invariant violated: {}: {}", c.name, c.detail);
        }
    }
    code
}

fn cmd_check_speed(expr: &str, grid: AlphaGrid, json: bool, attest_limits: bool) -> i32 {
    let f = match parse_speed(expr) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let opts = AdmissibilityOptions { attest_limits, ..Default::default() };
    let report = match check_admissibility(&f, &grid, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if json {
        match serde_json::to_string_pretty(&report) {
            Ok(s) => println!("{s}"),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_ABORT;
            }
        }
    } else {
        print!("{}", report.to_text());
    }
    if report.is_admissible() {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}

fn cmd_sweep(config: PathBuf, param: &str, values: &str, jobs: usize) -> i32 {
    let table = match load_table(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let values = split_values(values);
    if values.is_empty() {
        eprintln!("error: --values lists no values");
        return EXIT_CONFIG;
    }
    let runs = match sweep_scenarios(&table, param, &values) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_ABORT;
        }
    };
    let results: Vec<i32> = pool.install(|| {
        runs.par_iter()
            .map(|(_, s)| match execute(s) {
                Ok(r) => match emit_outputs(s, &r, &s.outputs) {
                    Ok(_) => (report_code(&r), Some(r)),
                    Err(e) => {
                        eprintln!("error: writing {}: {e}", s.outputs.display());
                        (EXIT_ABORT, Some(r))
                    }
                },
                Err(e) => {
                    eprintln!("error: {}: {e}", s.name);
                    (EXIT_ABORT, None)
                }
            })
            .collect::<Vec<_>>()
            .into_iter()
            .zip(&runs)
            .map(|((code, report), (value, s))| {
                let (status, radius, rate) = match &report {
                    Some(r) => (
                        status_name(&r.outcome.termination),
                        r.outcome.convergence.as_ref().map(|c| format!("{:.12}", c.radius)).unwrap_or("-".into()),
                        r.fits
                            .sup_phi_minus_h
                            .as_ref()
                            .and_then(|f| f.fit)
                            .map(|f| format!("{:.6}", f.rate))
                            .unwrap_or("-".into()),
                    ),
                    None => ("error", "-".into(), "-".into()),
                };
                println!("{param} = {value:<20} {status:<12} R = {radius:<16} rate = {rate:<10} -> {}", s.outputs.display());
                code
            })
            .collect()
    });
    results.into_iter().max().unwrap_or(EXIT_OK)
}

fn cmd_plot(series: PathBuf, out: PathBuf) -> i32 {
    let file = match fs::File::open(&series) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}: {e}", series.display());
            return EXIT_ABORT;
        }
    };
    let records = match diag::read_series_csv(file) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", series.display());
            return EXIT_CONFIG;
        }
    };
    let title = series.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned());
    let title = title.unwrap_or_else(|| "series".into());
    let residual_series = |f: fn(&diag::FlowRecord) -> f64| records.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>();
    let panels = [
        svg::Panel::new(format!("{title}: convergence"), "t", "log10 value")
            .log_y()
            .with(svg::Series::new("sup|phi(H) - h|", residual_series(|r| r.sup_phi_minus_h)))
            .with(svg::Series::new("f_max", residual_series(|r| r.f_max))),
        svg::Panel::new(format!("{title}: area"), "t", "A").with(svg::Series::new("A", residual_series(|r| r.area))),
        svg::Panel::new(format!("{title}: volume"), "t", "V").with(svg::Series::new("V", residual_series(|r| r.volume))),
    ];
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if let Err(e) = fs::create_dir_all(parent) {
            eprintln!("error: {}: {e}", parent.display());
            return EXIT_ABORT;
        }
    }
    match fs::write(&out, svg::figure(&panels)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}: {e}", out.display());
            EXIT_ABORT
        }
    }
}
