//! Scenario configuration, execution, invariant verdicts, and output files
//! (CSV series, JSON snapshots and manifest, SVG plots).

pub mod cli;
pub mod svg;

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diag::{self, DecayFit, FlowRecord};
use crate::flow::{self, Constraint, ConvergenceReport, FlowConfig, FlowError, RunOutcome, StepMonitor, Termination};
use crate::hypmath::SpaceParams;
use crate::speed::parse_speed;
use crate::surface::{hconvexity_margin, GeometryFrame, RadialGraph, Snapshot, HCONVEX_TOL};

/// Bumped whenever the manifest layout changes.
pub const MANIFEST_FORMAT: &str = "hcflow-manifest/1";

// ---------------------------------------------------------------------------
// configuration

/// A scenario file as written by the user. Every field except the space
/// dimension, the initial datum and the speed has a default, and unknown
/// keys are rejected. After [`load_config`] the defaults are filled in, so
/// serializing this struct lists every effective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub space: SpaceSection,
    pub initial: InitialSection,
    pub flow: FlowSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    /// The ambient curvature is `-a^2`.
    #[serde(default = "default_a")]
    pub a: f64,
    pub n: usize,
    /// Grid size; 512 for curves and 256 for surfaces when omitted.
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    /// Geodesic sphere about the origin.
    Sphere { radius: f64 },
    /// `u = radius + amplitude cos(mode theta)`.
    Perturbed {
        radius: f64,
        #[serde(default = "default_mode")]
        mode: u32,
        amplitude: f64,
    },
    /// Radii at the grid nodes.
    Explicit { u: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default = "default_constraint")]
    pub constraint: Constraint,
    pub speed: String,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_true")]
    pub projection: bool,
    #[serde(default = "default_stop_eps")]
    pub stop_eps: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub run_to_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; `out/<name>` when omitted.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Number of surface snapshots written, evenly spread over the records.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Tail fraction used by the decay fits.
    #[serde(default = "default_fit_fraction")]
    pub fit_fraction: f64,
    #[serde(default = "default_true")]
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, snapshots: default_snapshots(), fit_fraction: default_fit_fraction(), plots: true }
    }
}

fn default_name() -> String {
    "scenario".into()
}
fn default_a() -> f64 {
    1.0
}
fn default_mode() -> u32 {
    2
}
fn default_constraint() -> Constraint {
    Constraint::Volume
}
fn default_cfl() -> f64 {
    0.4
}
fn default_t_end() -> f64 {
    100.0
}
fn default_true() -> bool {
    true
}
fn default_stop_eps() -> f64 {
    1e-8
}
fn default_record_every() -> usize {
    100
}
fn default_snapshots() -> usize {
    8
}
fn default_fit_fraction() -> f64 {
    0.5
}

/// Default grid size for curves (`n = 1`) and axisymmetric surfaces.
pub fn default_nodes(n: usize) -> usize {
    if n == 1 {
        512
    } else {
        256
    }
}

/// A configuration problem, located by key path and (when known) line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(key: Option<&str>, message: impl Into<String>) -> Self {
        Self { file: None, key: key.map(str::to_string), line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{}", file.display())?;
            if let Some(line) = self.line {
                write!(f, ":{line}")?;
            }
            write!(f, ": ")?;
        } else if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// A fully validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub space: SpaceParams,
    pub nodes: usize,
    pub initial_data: InitialSection,
    pub initial: RadialGraph,
    pub flow: FlowConfig,
    pub outputs: PathBuf,
    pub output: OutputSection,
    /// The effective configuration, every default filled in.
    pub config: ConfigFile,
}

/// Reads a scenario from a TOML file, or from a JSON file holding either a
/// configuration or a run manifest (whose `config` entry is used).
pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        file: Some(path.to_path_buf()),
        ..ConfigError::new(None, format!("cannot read file: {e}"))
    })?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let result = if is_json { parse_json_config(&text) } else { parse_toml_config(&text) };
    result.map_err(|e| ConfigError { file: Some(path.to_path_buf()), ..e })
}

/// Parses and validates a TOML scenario.
pub fn parse_toml_config(text: &str) -> Result<Scenario, ConfigError> {
    let de = toml::Deserializer::new(text);
    let config: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        let line = inner.span().map(|s| line_of_offset(text, s.start));
        ConfigError {
            line,
            ..ConfigError::new((key != ".").then_some(key.as_str()), inner.message().to_string())
        }
    })?;
    build_scenario(config, Some(text))
}

/// Parses and validates a JSON scenario or run manifest.
pub fn parse_json_config(text: &str) -> Result<Scenario, ConfigError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError { line: Some(e.line()), ..ConfigError::new(None, e.to_string()) })?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    let config: ConfigFile = serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::new((key != ".").then_some(key.as_str()), e.into_inner().to_string())
    })?;
    build_scenario(config, None)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `section.key` in a TOML document, if it is spelled out there.
fn key_line(text: &str, path: &str) -> Option<usize> {
    let (section, key) = match path.rsplit_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, path),
    };
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(header) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = Some(header.trim().to_string());
            continue;
        }
        let Some((lhs, _)) = trimmed.split_once('=') else { continue };
        if lhs.trim() != key {
            continue;
        }
        let in_section = current.as_deref() == section;
        let dotted = current.is_none() && section.is_some_and(|s| lhs.trim() == format!("{s}.{key}"));
        if in_section || dotted {
            return Some(i + 1);
        }
    }
    None
}

/// Validates a parsed configuration and builds its initial surface.
pub fn build_scenario(mut config: ConfigFile, text: Option<&str>) -> Result<Scenario, ConfigError> {
    let locate = |key: &str, message: String| ConfigError {
        line: text.and_then(|t| key_line(t, key)),
        ..ConfigError::new(Some(key), message)
    };

    let sp = &config.space;
    if !(sp.a > 0.0 && sp.a.is_finite()) {
        return Err(locate("space.a", format!("curvature scale must be positive, got {}", sp.a)));
    }
    let space = SpaceParams::new(sp.a, sp.n).map_err(|e| locate("space.n", e.to_string()))?;
    let nodes = match (&config.initial, sp.nodes) {
        (InitialSection::Explicit { u }, Some(k)) if k != u.len() => {
            return Err(locate("initial.u", format!("{} radii given but space.nodes = {k}", u.len())));
        }
        (InitialSection::Explicit { u }, _) => u.len(),
        (_, Some(k)) => k,
        (_, None) => default_nodes(sp.n),
    };
    config.space.nodes = Some(nodes);

    let fl = &config.flow;
    let speed = parse_speed(&fl.speed).map_err(|e| locate("flow.speed", e.to_string()))?;
    if !(fl.cfl > 0.0 && fl.cfl <= 1.0) {
        return Err(locate("flow.cfl", format!("must lie in (0, 1], got {}", fl.cfl)));
    }
    if !(fl.t_end > 0.0 && fl.t_end.is_finite()) {
        return Err(locate("flow.t_end", format!("must be positive, got {}", fl.t_end)));
    }
    if !(fl.stop_eps > 0.0) {
        return Err(locate("flow.stop_eps", format!("must be positive, got {}", fl.stop_eps)));
    }
    if fl.record_every == 0 {
        return Err(locate("flow.record_every", "must be positive".into()));
    }
    let flow = FlowConfig {
        constraint: fl.constraint,
        speed,
        cfl: fl.cfl,
        t_end: fl.t_end,
        projection: fl.projection,
        stop_eps: fl.stop_eps,
        record_every: fl.record_every,
        run_to_end: fl.run_to_end,
    };

    let out = &config.output;
    if !(out.fit_fraction > 0.0 && out.fit_fraction <= 1.0) {
        return Err(locate("output.fit_fraction", format!("must lie in (0, 1], got {}", out.fit_fraction)));
    }
    let outputs = out.dir.clone().unwrap_or_else(|| Path::new("out").join(&config.name));
    config.output.dir = Some(outputs.clone());

    let (initial, key) = match &config.initial {
        InitialSection::Sphere { radius } => {
            if !(*radius > 0.0) {
                return Err(locate("initial.radius", format!("must be positive, got {radius}")));
            }
            (RadialGraph::sphere(space, nodes, *radius), "initial.radius")
        }
        InitialSection::Perturbed { radius, mode, amplitude } => {
            if !(amplitude.abs() < *radius) {
                return Err(locate(
                    "initial.amplitude",
                    format!("|amplitude| must be below the radius {radius}, got {amplitude}"),
                ));
            }
            let (r, m, e) = (*radius, *mode as f64, *amplitude);
            (RadialGraph::from_fn(space, nodes, |t| r + e * (m * t).cos()), "initial.amplitude")
        }
        InitialSection::Explicit { u } => (RadialGraph::new(space, u.clone()), "initial.u"),
    };
    let initial = initial.map_err(|e| locate(key, e.to_string()))?;
    let frame = GeometryFrame::compute(&initial).map_err(|e| locate(key, e.to_string()))?;
    let margin = hconvexity_margin(&frame, space.a);
    if margin < -HCONVEX_TOL {
        return Err(locate(
            key,
            format!("initial datum is not h-convex: margin {margin:.6e} is below -{HCONVEX_TOL:e}"),
        ));
    }

    Ok(Scenario {
        name: config.name.clone(),
        space,
        nodes,
        initial_data: config.initial.clone(),
        initial,
        flow,
        outputs,
        output: config.output.clone(),
        config,
    })
}

// ---------------------------------------------------------------------------
// execution and verdicts

/// A decay fit or the reason it could not be made.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitEntry {
    pub fit: Option<DecayFit>,
    pub error: Option<String>,
}

impl FitEntry {
    fn from_series(series: &[(f64, f64)], fraction: f64) -> Self {
        match diag::fit_decay(series, fraction) {
            Ok(fit) => Self { fit: Some(fit), error: None },
            Err(e) => Self { fit: None, error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fits {
    /// Fit of `sup |phi(H) - h|`.
    pub sup_phi_minus_h: Option<FitEntry>,
    /// Fit of `f_max` (surfaces only).
    pub f_max: Option<FitEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one invariant check on a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, ok: bool, detail: String) -> Self {
        Self { name, status: if ok { CheckStatus::Pass } else { CheckStatus::Fail }, detail }
    }

    fn skipped(name: &'static str, detail: impl Into<String>) -> Self {
        Self { name, status: CheckStatus::Skipped, detail: detail.into() }
    }
}

/// Everything produced by executing a scenario.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: RunOutcome,
    pub fits: Fits,
    pub checks: Vec<Check>,
    /// Snapshots at evenly spread records, first and last included.
    pub snapshots: Vec<Snapshot>,
}

impl RunReport {
    pub fn aborted(&self) -> bool {
        matches!(self.outcome.termination, Termination::Aborted(_))
    }

    pub fn violations(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

/// Runs a scenario and evaluates the invariant suite on the result.
pub fn execute(s: &Scenario) -> Result<RunReport, FlowError> {
    let mut all_snapshots = Vec::new();
    let outcome = flow::run_observed(s.initial.clone(), &s.flow, |state, _| {
        all_snapshots.push(state.graph.to_snapshot(state.t));
    })?;
    let snapshots = thin(all_snapshots, s.output.snapshots);
    let fits = decay_fits(s, &outcome);
    let checks = evaluate(s, &outcome, &fits);
    Ok(RunReport { outcome, fits, checks, snapshots })
}

fn thin<T>(items: Vec<T>, keep: usize) -> Vec<T> {
    let len = items.len();
    if keep == 0 {
        return Vec::new();
    }
    if len <= keep {
        return items;
    }
    let chosen: Vec<usize> =
        (0..keep).map(|k| if keep == 1 { len - 1 } else { k * (len - 1) / (keep - 1) }).collect();
    items.into_iter().enumerate().filter(|(i, _)| chosen.contains(i)).map(|(_, x)| x).collect()
}

fn decay_fits(s: &Scenario, o: &RunOutcome) -> Fits {
    if s.flow.constraint == Constraint::Standard {
        return Fits { sup_phi_minus_h: None, f_max: None };
    }
    let residual: Vec<(f64, f64)> = o.records.iter().map(|r| (r.t, r.sup_phi_minus_h)).collect();
    let f_max = (s.space.n == 2).then(|| {
        let series: Vec<(f64, f64)> = o.records.iter().map(|r| (r.t, r.f_max)).collect();
        FitEntry::from_series(&series, s.output.fit_fraction)
    });
    Fits { sup_phi_minus_h: Some(FitEntry::from_series(&residual, s.output.fit_fraction)), f_max }
}

/// Tolerances of the invariant suite.
pub mod tolerances {
    /// Relative drift of the conserved quantity per step, with projection.
    pub const CONSTRAINT_DRIFT: f64 = 1e-10;
    /// Allowed wrong-way change of `A` (or `V`) per accepted step.
    pub const MONOTONICITY: f64 = 1e-9;
    /// Slack for the support-function ratio.
    pub const SUPPORT: f64 = 1e-6;
    /// Limit radius, conserved quantity, and sphericity on convergence.
    pub const CONVERGENCE: f64 = 1e-6;
    /// Smallest acceptable coefficient of determination of a decay fit.
    pub const FIT_R2: f64 = 0.99;
    /// Sup-norm drift of a sphere under a constrained flow.
    pub const STATIONARITY: f64 = 1e-10;
}

fn worst<F: Fn(&FlowRecord) -> f64>(records: &[FlowRecord], f: F) -> f64 {
    records.iter().map(f).fold(f64::INFINITY, f64::min)
}

/// The invariant suite on a finished (or aborted) run.
pub fn evaluate(s: &Scenario, o: &RunOutcome, fits: &Fits) -> Vec<Check> {
    use tolerances::*;
    let m: &StepMonitor = &o.monitor;
    let mut checks = Vec::new();

    checks.push(match &o.termination {
        Termination::Aborted(reason) => Check::new("completed", false, format!("aborted: {reason}")),
        t => Check::new("completed", true, format!("{t:?} at t = {} after {} steps", o.final_state.t, m.steps)),
    });

    checks.push(match (o.final_state.target, s.flow.projection) {
        (None, _) => Check::skipped("constraint_conservation", "standard flow conserves nothing"),
        (Some(_), false) => Check::skipped(
            "constraint_conservation",
            format!("projection off; max relative drift {:.3e}", m.max_constraint_drift),
        ),
        (Some(_), true) => Check::new(
            "constraint_conservation",
            m.max_constraint_drift <= CONSTRAINT_DRIFT,
            format!("max relative drift {:.3e} (limit {CONSTRAINT_DRIFT:e})", m.max_constraint_drift),
        ),
    });

    checks.push(match s.flow.constraint {
        Constraint::Volume => Check::new(
            "monotonicity",
            m.max_area_increase <= MONOTONICITY,
            format!("largest area increase per step {:.3e}", m.max_area_increase),
        ),
        Constraint::Area => Check::new(
            "monotonicity",
            m.max_volume_decrease <= MONOTONICITY,
            format!("largest volume decrease per step {:.3e}", m.max_volume_decrease),
        ),
        Constraint::Standard => Check::skipped("monotonicity", "not asserted for the standard flow"),
    });

    checks.push(Check::new(
        "h_convexity",
        m.min_hconv_margin >= -HCONVEX_TOL,
        format!("smallest margin {:.6e}", m.min_hconv_margin),
    ));
    checks.push(Check::new("parabolicity", m.min_dphi > 0.0, format!("smallest phi'(H) {:.6e}", m.min_dphi)));
    checks.push(Check::new(
        "speed_bound",
        m.max_phi.is_finite(),
        format!("max phi(H) {:.6e}; largest rise of max phi per step after t = 0.1: {:.3e}", m.max_phi, m.max_phi_increase_late),
    ));

    let records = &o.records;
    let bad = records.iter().filter(|r| !r.all_finite()).count();
    checks.push(Check::new("records_finite", bad == 0, format!("{bad} of {} records with non-finite fields", records.len())));

    let verdicts: Vec<_> = records.iter().map(|r| diag::check_inradius_sandwich(r, &s.space)).collect();
    let first_bad = verdicts.iter().zip(records).find(|(v, _)| !v.sandwich_ok);
    checks.push(Check::new(
        "inradius_sandwich",
        first_bad.is_none(),
        match first_bad {
            Some((v, r)) => format!("t = {}: {} <= {} <= {} violated", r.t, v.lower, v.inradius, v.upper),
            None => format!(
                "holds at all {} records; tightest upper gap {:.3e}",
                records.len(),
                worst(records, |r| r.psi_v - r.inradius_est)
            ),
        },
    ));
    let first_bad = verdicts.iter().zip(records).find(|(v, _)| !v.diameter_ok);
    checks.push(Check::new(
        "diameter_bound",
        first_bad.is_none(),
        match first_bad {
            Some((v, r)) => format!("t = {}: diameter {} exceeds {}", r.t, v.diameter, v.diameter_bound),
            None => format!("holds at all {} records", records.len()),
        },
    ));

    let sigma = worst(records, |r| r.sigma_min_ratio);
    checks.push(Check::new("support_bound", sigma >= 1.0 - SUPPORT, format!("smallest ratio {sigma:.9}")));

    checks.push(if s.space.n == 1 {
        Check::skipped("tilde_range", "f vanishes identically for curves")
    } else {
        let top = 0.25;
        let worst_f = records.iter().map(|r| r.f_max).fold(f64::NEG_INFINITY, f64::max);
        let ok = records.iter().all(|r| r.f_max >= 0.0 && r.f_max < top);
        Check::new("tilde_range", ok, format!("largest f_max {worst_f:.6e} (must stay in [0, 1/4))"))
    });

    checks.push(match (&o.convergence, s.flow.constraint, s.flow.run_to_end) {
        (_, Constraint::Standard, _) => Check::skipped("convergence", "standard flow has no limit sphere"),
        (_, _, true) => Check::skipped("convergence", "run_to_end disables the stopping test"),
        (None, _, _) => Check::new("convergence", false, format!("did not converge: {:?}", o.termination)),
        (Some(c), _, _) => Check::new(
            "convergence",
            c.radius_rel_error <= CONVERGENCE && c.constraint_rel_error <= CONVERGENCE && c.sphericity <= CONVERGENCE,
            format!(
                "R = {:.12} vs predicted {:.12} (rel {:.2e}); constraint rel {:.2e}; sphericity {:.2e}",
                c.radius, c.predicted_radius, c.radius_rel_error, c.constraint_rel_error, c.sphericity
            ),
        ),
    });

    if let (InitialSection::Sphere { radius }, false) = (&s.initial_data, s.flow.constraint == Constraint::Standard) {
        let drift = o.final_state.graph.u().iter().map(|u| (u - radius).abs()).fold(0.0, f64::max);
        checks.push(Check::new(
            "sphere_stationarity",
            drift <= STATIONARITY,
            format!("sup |u - R| = {drift:.3e} at t = {}", o.final_state.t),
        ));
    }

    for (name, entry) in [("decay_fit", &fits.sup_phi_minus_h), ("tilde_decay_fit", &fits.f_max)] {
        let Some(entry) = entry else { continue };
        checks.push(match (&entry.fit, o.converged()) {
            (_, false) => Check::skipped(name, "run did not converge"),
            (None, _) => Check::skipped(name, entry.error.clone().unwrap_or_default()),
            (Some(f), _) => Check::new(
                name,
                f.r_squared >= FIT_R2 && f.rate > 0.0,
                format!("rate {:.6} amplitude {:.3e} r^2 {:.6} over t in [{:.3}, {:.3}]", f.rate, f.amplitude, f.r_squared, f.window.0, f.window.1),
            ),
        });
    }
    checks
}

// ---------------------------------------------------------------------------
// outputs

/// Paths written by [`emit_outputs`], relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutputFiles {
    pub series: String,
    pub snapshots: Vec<String>,
    pub plots: Vec<String>,
    pub manifest: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    format: &'static str,
    version: &'static str,
    name: &'a str,
    config: &'a ConfigFile,
    status: &'static str,
    termination: &'a Termination,
    abort: Option<String>,
    final_time: f64,
    steps: usize,
    records: usize,
    monitor: &'a StepMonitor,
    convergence: &'a Option<ConvergenceReport>,
    fits: &'a Fits,
    verdicts: &'a [Check],
    files: &'a OutputFiles,
}

pub fn status_name(t: &Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::ReachedEnd => "reached_end",
        Termination::Aborted(_) => "aborted",
    }
}

/// Snapshot file name for time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("t_{t:.8}.json")
}

/// Writes `series.csv`, `snapshots/`, `plots/` and `manifest.json` under
/// `dir`.
pub fn emit_outputs(s: &Scenario, report: &RunReport, dir: &Path) -> io::Result<OutputFiles> {
    fs::create_dir_all(dir.join("snapshots"))?;
    let o = &report.outcome;
    let mut files = OutputFiles { series: "series.csv".into(), manifest: "manifest.json".into(), ..Default::default() };

    let csv_file = fs::File::create(dir.join(&files.series))?;
    diag::write_series_csv(io::BufWriter::new(csv_file), &o.records).map_err(io::Error::other)?;

    for snap in &report.snapshots {
        let name = format!("snapshots/{}", snapshot_name(snap.meta.t));
        fs::write(dir.join(&name), serde_json::to_string(snap).map_err(io::Error::other)?)?;
        files.snapshots.push(name);
    }

    if s.output.plots {
        fs::create_dir_all(dir.join("plots"))?;
        for (name, body) in [
            ("plots/residuals.svg", residual_figure(&s.name, &o.records, &report.fits)),
            ("plots/area_volume.svg", area_volume_figure(&s.name, &o.records)),
            ("plots/profiles.svg", profile_figure(&s.name, &report.snapshots)),
        ] {
            fs::write(dir.join(name), body)?;
            files.plots.push(name.into());
        }
    }

    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        version: env!("CARGO_PKG_VERSION"),
        name: &s.name,
        config: &s.config,
        status: status_name(&o.termination),
        termination: &o.termination,
        abort: o.abort.as_ref().map(|e| e.to_string()),
        final_time: o.final_state.t,
        steps: o.monitor.steps,
        records: o.records.len(),
        monitor: &o.monitor,
        convergence: &o.convergence,
        fits: &report.fits,
        verdicts: &report.checks,
        files: &files,
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    fs::write(dir.join(&files.manifest), body + "\n")?;
    Ok(files)
}

/// Log-linear plot of `sup |phi - h|` and `f_max`, with fitted lines.
pub fn residual_figure(title: &str, records: &[FlowRecord], fits: &Fits) -> String {
    let mut panel = svg::Panel::new(format!("{title}: convergence"), "t", "log10 value")
        .log_y()
        .with(svg::Series::new("sup|phi(H) - h|", records.iter().map(|r| (r.t, r.sup_phi_minus_h)).collect()));
    if records.iter().any(|r| r.f_max > 0.0) {
        panel = panel.with(svg::Series::new("f_max", records.iter().map(|r| (r.t, r.f_max)).collect()));
    }
    for (label, entry) in [("sup|phi - h|", &fits.sup_phi_minus_h), ("f_max", &fits.f_max)] {
        if let Some(FitEntry { fit: Some(f), .. }) = entry {
            let line = [f.window.0, f.window.1].map(|t| (t, f.amplitude * (-f.rate * t).exp())).to_vec();
            panel = panel.with(svg::Series::new(format!("fit {label}: delta = {:.4}", f.rate), line).dashed());
        }
    }
    svg::figure(&[panel])
}

/// `A(t)` and `V(t)` in two panels.
pub fn area_volume_figure(title: &str, records: &[FlowRecord]) -> String {
    let a = svg::Panel::new(format!("{title}: area"), "t", "A")
        .with(svg::Series::new("A", records.iter().map(|r| (r.t, r.area)).collect()));
    let v = svg::Panel::new(format!("{title}: volume"), "t", "V")
        .with(svg::Series::new("V", records.iter().map(|r| (r.t, r.volume)).collect()));
    svg::figure(&[a, v])
}

/// Snapshots in the Poincaré disk (display only). Surfaces of revolution
/// are drawn by their full meridian section.
pub fn profile_figure(title: &str, snapshots: &[Snapshot]) -> String {
    let curves: Vec<(String, Vec<(f64, f64)>)> = snapshots
        .iter()
        .map(|snap| {
            let a = snap.meta.a;
            let disk = |r: f64| (0.5 * a * r).tanh();
            let pts = if snap.meta.n == 1 {
                snap.theta.iter().zip(&snap.u).map(|(t, u)| (disk(*u) * t.cos(), disk(*u) * t.sin())).collect()
            } else {
                let right = snap.theta.iter().zip(&snap.u).map(|(t, u)| (disk(*u) * t.sin(), disk(*u) * t.cos()));
                let left = snap.theta.iter().zip(&snap.u).rev().map(|(t, u)| (-disk(*u) * t.sin(), disk(*u) * t.cos()));
                right.chain(left).collect()
            };
            (format!("t = {:.4}", snap.meta.t), pts)
        })
        .collect();
    svg::disk_figure(&format!("{title}: profiles (Poincaré disk)"), &curves)
}

// ---------------------------------------------------------------------------
// sweeps

/// Parses a sweep value list, splitting at commas outside parentheses.
pub fn split_values(list: &str) -> Vec<String> {
    let (mut out, mut depth, mut cur) = (Vec::new(), 0i32, String::new());
    for ch in list.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// The base configuration with `param` (a dotted key path) set to `value`.
/// Values replacing a string, or that do not parse as a TOML literal, are
/// taken as strings.
pub fn with_param(base: &toml::Table, param: &str, value: &str) -> Result<toml::Table, ConfigError> {
    let mut table = base.clone();
    let parts: Vec<&str> = param.split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(|| ConfigError::new(None, "empty parameter path"))?;
    let mut node = &mut table;
    for p in parents {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(Some(param), format!("`{p}` is not a section")))?;
    }
    let literal = toml::from_str::<toml::Table>(&format!("v = {value}")).ok().and_then(|mut t| t.remove("v"));
    let new = match (node.get(*last), literal) {
        (Some(toml::Value::String(_)), _) | (_, None) => toml::Value::String(value.to_string()),
        (_, Some(v)) => v,
    };
    node.insert(last.to_string(), new);
    Ok(table)
}

/// Reads a configuration file into a generic table for sweeping.
pub fn load_table(path: &Path) -> Result<toml::Table, ConfigError> {
    let with_file = |e: ConfigError| ConfigError { file: Some(path.to_path_buf()), ..e };
    let text = fs::read_to_string(path).map_err(|e| with_file(ConfigError::new(None, format!("cannot read file: {e}"))))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| with_file(ConfigError::new(None, e.to_string())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        // drop nulls, which TOML cannot represent; they stand for defaults
        if let Some(obj) = value.as_object_mut() {
            for section in obj.values_mut() {
                if let Some(s) = section.as_object_mut() {
                    s.retain(|_, v| !v.is_null());
                }
            }
        }
        toml::Table::try_from(value).map_err(|e| with_file(ConfigError::new(None, e.to_string())))
    } else {
        text.parse::<toml::Table>().map_err(|e| {
            let line = e.span().map(|s| line_of_offset(&text, s.start));
            with_file(ConfigError { line, ..ConfigError::new(None, e.message().to_string()) })
        })
    }
}

/// Validates a configuration table.
pub fn scenario_from_table(table: toml::Table) -> Result<Scenario, ConfigError> {
    let config: ConfigFile = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::new((key != ".").then_some(key.as_str()), e.into_inner().message().to_string())
    })?;
    build_scenario(config, None)
}

/// One scenario per sweep value, each with its own output directory below
/// the base scenario's.
pub fn sweep_scenarios(
    base: &toml::Table,
    param: &str,
    values: &[String],
) -> Result<Vec<(String, Scenario)>, ConfigError> {
    let base_scenario = scenario_from_table(base.clone())?;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut s = scenario_from_table(with_param(base, param, v)?)
                .map_err(|e| ConfigError { message: format!("{param} = {v}: {}", e.message), ..e })?;
            let slug: String = v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
            s.name = format!("{}_{i:02}", base_scenario.name);
            s.outputs = base_scenario.outputs.join(format!("{i:02}_{slug}"));
            s.config.name = s.name.clone();
            s.config.output.dir = Some(s.outputs.clone());
            s.output.dir = Some(s.outputs.clone());
            Ok((v.clone(), s))
        })
        .collect()
}
