//! Time integration of the radial-graph form of the constrained flow,
//!
//! ```text
//! du/dt = v (h(t) - phi(H)),
//! ```
//!
//! with Heun's method under a parabolic step restriction. The forcing `h`
//! is recomputed at both stages, and an optional uniform radial shift
//! restores the conserved quantity exactly after every step.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{self, FlowRecord};
use crate::hypmath::{self, SpaceParams};
use crate::sphere_oracle::{self, SphereState, Target};
use crate::speed::{SpeedError, SpeedFunction};
use crate::surface::{self, hconvexity_margin, GeometryFrame, Grid, RadialGraph, SurfaceError, HCONVEX_TOL};

/// Steps shorter than this abort the run.
pub const MIN_DT: f64 = 1e-14;

/// Relative constraint error left in place by the projection.
pub const PROJECTION_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `h = (1/A) int phi(H)`, keeps the enclosed volume.
    Volume,
    /// `h = int H phi(H) / int H`, keeps the area.
    Area,
    /// `h = 0`.
    Standard,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::Volume => "volume",
            Constraint::Area => "area",
            Constraint::Standard => "standard",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("time step underflow at t = {t}: dt = {dt:e}")]
    DtUnderflow { t: f64, dt: f64 },
    #[error("parabolicity lost at t = {t}, node {index}: phi'({mean}) = {dphi}")]
    Parabolicity { t: f64, index: usize, mean: f64, dphi: f64 },
    #[error("degenerate state at t = {t}: {reason}")]
    Degenerate { t: f64, reason: String },
    #[error("initial datum is not h-convex: margin {margin:e}")]
    NotHConvex { margin: f64 },
    #[error("constraint projection failed at t = {t}")]
    Projection { t: f64 },
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error("speed evaluation failed: {0}")]
    Speed(#[from] SpeedError),
    #[error("geometry failed: {0}")]
    Surface(#[from] SurfaceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub constraint: Constraint,
    pub speed: SpeedFunction,
    /// Fraction of the explicit stability limit used as time step.
    pub cfl: f64,
    pub t_end: f64,
    /// Restore the conserved quantity by a uniform radial shift each step.
    pub projection: bool,
    /// Stop once `sup |phi(H) - h| < stop_eps`.
    pub stop_eps: f64,
    pub record_every: usize,
    /// Ignore the convergence test and integrate up to `t_end`.
    pub run_to_end: bool,
}

impl FlowConfig {
    pub fn new(constraint: Constraint, speed: SpeedFunction) -> Self {
        Self {
            constraint,
            speed,
            cfl: 0.4,
            t_end: 100.0,
            projection: true,
            stop_eps: 1e-8,
            record_every: 100,
            run_to_end: false,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(FlowError::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.stop_eps > 0.0) {
            return Err(FlowError::Config(format!("stop_eps must be positive, got {}", self.stop_eps)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(FlowError::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(FlowError::Config("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// The evolving hypersurface with everything derived from it.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub graph: RadialGraph,
    pub frame: GeometryFrame,
    /// `phi(H)` and `phi'(H)` at each node.
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub h: f64,
    pub dt_last: f64,
    pub steps: usize,
    /// Shift applied by the last projection.
    pub projection_eps: f64,
    /// Conserved value fixed at `t = 0` (volume or area), if any.
    pub target: Option<f64>,
}

impl FlowState {
    pub fn new(graph: RadialGraph, cfg: &FlowConfig) -> Result<Self, FlowError> {
        let frame = GeometryFrame::compute(&graph)?;
        let mut state = Self {
            t: 0.0,
            graph,
            frame,
            phi: Vec::new(),
            dphi: Vec::new(),
            h: 0.0,
            dt_last: 0.0,
            steps: 0,
            projection_eps: 0.0,
            target: None,
        };
        state.refresh_speed(cfg)?;
        state.target = match cfg.constraint {
            Constraint::Volume => Some(state.frame.volume),
            Constraint::Area => Some(state.frame.area),
            Constraint::Standard => None,
        };
        Ok(state)
    }

    fn refresh_speed(&mut self, cfg: &FlowConfig) -> Result<(), FlowError> {
        evaluate_speed(&self.frame, &cfg.speed, &mut self.phi, &mut self.dphi)?;
        self.h = forcing_from_values(&self.frame, &self.phi, cfg.constraint, self.t)?;
        Ok(())
    }

    pub fn space(&self) -> SpaceParams {
        self.graph.space()
    }

    /// `sup_i |phi(H_i) - h|`.
    pub fn speed_residual(&self) -> f64 {
        self.phi.iter().map(|p| (p - self.h).abs()).fold(0.0, f64::max)
    }
}

fn evaluate_speed(
    frame: &GeometryFrame,
    speed: &SpeedFunction,
    phi: &mut Vec<f64>,
    dphi: &mut Vec<f64>,
) -> Result<(), SpeedError> {
    phi.clear();
    dphi.clear();
    for &mean in &frame.mean {
        let d = speed.eval(mean)?;
        phi.push(d.v);
        dphi.push(d.d1);
    }
    Ok(())
}

/// The nonlocal forcing `h(t)` for a frame.
pub fn forcing_h(frame: &GeometryFrame, speed: &SpeedFunction, constraint: Constraint) -> Result<f64, FlowError> {
    let phi = frame.mean.iter().map(|&m| speed.value(m)).collect::<Result<Vec<_>, _>>()?;
    forcing_from_values(frame, &phi, constraint, f64::NAN)
}

fn forcing_from_values(frame: &GeometryFrame, phi: &[f64], constraint: Constraint, t: f64) -> Result<f64, FlowError> {
    match constraint {
        Constraint::Standard => Ok(0.0),
        Constraint::Volume => {
            let total: f64 = phi.iter().zip(&frame.dmu).map(|(p, w)| p * w).sum();
            Ok(total / frame.area)
        }
        Constraint::Area => {
            let (mut num, mut den) = (0.0, 0.0);
            for ((p, m), w) in phi.iter().zip(&frame.mean).zip(&frame.dmu) {
                num += m * p * w;
                den += m * w;
            }
            if !(den > 0.0) {
                return Err(FlowError::Degenerate { t, reason: format!("total mean curvature {den} is not positive") });
            }
            Ok(num / den)
        }
    }
}

/// Largest stable step, `cfl * min s_a(u)^2 v^3 dtheta^2 / (n phi'(H))`.
fn stable_dt(state: &FlowState, grid: &Grid, cfl: f64) -> f64 {
    let n = grid.space().n as f64;
    let h2 = grid.dtheta() * grid.dtheta();
    let mut dt = f64::INFINITY;
    for i in 0..state.phi.len() {
        let (s, v) = (state.frame.s[i], state.frame.v[i]);
        dt = dt.min(s * s * v * v * v * h2 / (n * state.dphi[i]));
    }
    cfl * dt
}

fn check_parabolic(frame: &GeometryFrame, dphi: &[f64], t: f64) -> Result<(), FlowError> {
    match dphi.iter().position(|d| !(*d > 0.0)) {
        Some(index) => Err(FlowError::Parabolicity { t, index, mean: frame.mean[index], dphi: dphi[index] }),
        None => Ok(()),
    }
}

/// Radial velocity `v (h - phi)` at each node.
fn velocity(frame: &GeometryFrame, phi: &[f64], h: f64) -> Vec<f64> {
    frame.v.iter().zip(phi).map(|(v, p)| v * (h - p)).collect()
}

/// One Heun step followed by the optional constraint projection.
pub fn step(state: &FlowState, cfg: &FlowConfig) -> Result<FlowState, FlowError> {
    let t = state.t;
    let grid = state.graph.grid().clone();
    check_parabolic(&state.frame, &state.dphi, t)?;

    let mut dt = stable_dt(state, &grid, cfg.cfl);
    let remaining = cfg.t_end - t;
    let clipped = dt >= remaining;
    if clipped {
        dt = remaining;
    }
    if !(dt >= MIN_DT) && !(clipped && dt > 0.0) {
        return Err(FlowError::DtUnderflow { t, dt });
    }

    let u0 = state.graph.u();
    let k1 = velocity(&state.frame, &state.phi, state.h);
    let stage: Vec<f64> = u0.iter().zip(&k1).map(|(u, k)| u + dt * k).collect();
    let stage = RadialGraph::on_grid(grid.clone(), stage)?;
    let stage_frame = GeometryFrame::compute(&stage)?;
    let (mut phi2, mut dphi2) = (Vec::new(), Vec::new());
    evaluate_speed(&stage_frame, &cfg.speed, &mut phi2, &mut dphi2)?;
    check_parabolic(&stage_frame, &dphi2, t + dt)?;
    let h2 = forcing_from_values(&stage_frame, &phi2, cfg.constraint, t + dt)?;
    let k2 = velocity(&stage_frame, &phi2, h2);

    let u1: Vec<f64> = u0.iter().zip(k1.iter().zip(&k2)).map(|(u, (a, b))| u + 0.5 * dt * (a + b)).collect();
    let mut graph = RadialGraph::on_grid(grid.clone(), u1)?;
    let mut frame = GeometryFrame::compute(&graph)?;

    let mut eps = 0.0;
    if let (true, Some(target)) = (cfg.projection, state.target) {
        let current = conserved(&frame, cfg.constraint);
        if (current - target).abs() > PROJECTION_RTOL * target {
            eps = projection_shift(&grid, graph.u(), cfg.constraint, target)
                .ok_or(FlowError::Projection { t: t + dt })?;
            graph = graph.shifted(eps)?;
            frame.recompute(&graph)?;
        }
    }

    let t_new = if clipped { cfg.t_end } else { t + dt };
    let mut next = FlowState {
        t: t_new,
        frame,
        graph,
        phi: phi2,
        dphi: dphi2,
        h: 0.0,
        dt_last: dt,
        steps: state.steps + 1,
        projection_eps: eps,
        target: state.target,
    };
    next.refresh_speed(cfg)?;
    Ok(next)
}

fn conserved(frame: &GeometryFrame, constraint: Constraint) -> f64 {
    match constraint {
        Constraint::Area => frame.area,
        _ => frame.volume,
    }
}

/// Shift `eps` with `V(u + eps) = target` (or `A(u + eps) = target`), by
/// Newton's method safeguarded with bisection.
fn projection_shift(grid: &Grid, u: &[f64], constraint: Constraint, target: f64) -> Option<f64> {
    let eval = |eps: f64| -> (f64, f64) {
        match constraint {
            Constraint::Area => area_with_derivative(grid, u, eps),
            _ => (
                surface::enclosed_volume(grid, u, eps),
                surface::enclosed_volume_derivative(grid, u, eps),
            ),
        }
    };
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (-0.5 * umin, 0.5 * umin);
    let mut eps = 0.0;
    for _ in 0..100 {
        let (value, deriv) = eval(eps);
        let r = value - target;
        if r.abs() <= PROJECTION_RTOL * target {
            return Some(eps);
        }
        if r > 0.0 {
            hi = eps;
        } else {
            lo = eps;
        }
        let newton = eps - r / deriv;
        let next = if deriv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if next == eps {
            return Some(eps);
        }
        eps = next;
    }
    None
}

/// Area of the graph `u + eps` and its derivative in `eps`.
#[allow(clippy::needless_range_loop)] // neighbour stencil indexes several arrays
fn area_with_derivative(grid: &Grid, u: &[f64], eps: f64) -> (f64, f64) {
    let a = grid.space().a;
    let n = grid.space().n as i32;
    let len = u.len();
    let w: Vec<f64> = u.iter().map(|&x| ((0.5 * a * (x + eps)).tanh()).ln()).collect();
    let inv_s: Vec<f64> = u.iter().map(|&x| 1.0 / hypmath::s_a(a, x + eps)).collect();
    let inv2h = 0.5 / grid.dtheta();
    let periodic = n == 1;
    let (mut area, mut deriv) = (0.0, 0.0);
    for i in 0..len {
        let (l, r) = if periodic {
            ((i + len - 1) % len, (i + 1) % len)
        } else {
            (i.saturating_sub(1), (i + 1).min(len - 1))
        };
        let wp = (w[r] - w[l]) * inv2h;
        let dwp = (inv_s[r] - inv_s[l]) * inv2h;
        let v = (1.0 + wp * wp).sqrt();
        let x = u[i] + eps;
        let s = hypmath::s_a(a, x);
        let c = hypmath::c_a(a, x);
        let sn = s.powi(n);
        let weight = grid.weights()[i];
        area += sn * v * weight;
        deriv += (n as f64 * s.powi(n - 1) * c * v + sn * wp / v * dwp) * weight;
    }
    (area, deriv)
}

/// Per-step invariant monitors accumulated over a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMonitor {
    pub steps: usize,
    pub min_hconv_margin: f64,
    /// `max |Q(t) - Q_0| / Q_0` for the conserved quantity `Q`.
    pub max_constraint_drift: f64,
    /// Largest single-step increase of `A` (volume mode).
    pub max_area_increase: f64,
    /// Largest single-step decrease of `V` (area mode).
    pub max_volume_decrease: f64,
    pub min_dphi: f64,
    pub max_phi: f64,
    /// Largest single-step increase of `max phi(H)` once `t >= 0.1`.
    pub max_phi_increase_late: f64,
    pub max_projection_eps: f64,
    pub min_dt: f64,
    pub max_dt: f64,
}

impl StepMonitor {
    fn new(state: &FlowState) -> Self {
        let mut m = Self {
            steps: 0,
            min_hconv_margin: f64::INFINITY,
            max_constraint_drift: 0.0,
            max_area_increase: 0.0,
            max_volume_decrease: 0.0,
            min_dphi: f64::INFINITY,
            max_phi: f64::NEG_INFINITY,
            max_phi_increase_late: 0.0,
            max_projection_eps: 0.0,
            min_dt: f64::INFINITY,
            max_dt: 0.0,
        };
        m.observe_state(state);
        m
    }

    fn observe_state(&mut self, s: &FlowState) {
        let a = s.space().a;
        self.min_hconv_margin = self.min_hconv_margin.min(hconvexity_margin(&s.frame, a));
        self.min_dphi = self.dphi_min(s).min(self.min_dphi);
        self.max_phi = self.max_phi.max(max_of(&s.phi));
    }

    fn dphi_min(&self, s: &FlowState) -> f64 {
        s.dphi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn observe_step(&mut self, prev: &FlowState, next: &FlowState, constraint: Constraint) {
        self.steps += 1;
        self.observe_state(next);
        if let Some(target) = next.target {
            let current = conserved(&next.frame, constraint);
            self.max_constraint_drift = self.max_constraint_drift.max(((current - target) / target).abs());
        }
        match constraint {
            Constraint::Volume => {
                self.max_area_increase = self.max_area_increase.max(next.frame.area - prev.frame.area);
            }
            Constraint::Area => {
                self.max_volume_decrease = self.max_volume_decrease.max(prev.frame.volume - next.frame.volume);
            }
            Constraint::Standard => {}
        }
        if prev.t >= 0.1 {
            let rise = max_of(&next.phi) - max_of(&prev.phi);
            self.max_phi_increase_late = self.max_phi_increase_late.max(rise);
        }
        self.max_projection_eps = self.max_projection_eps.max(next.projection_eps.abs());
        self.min_dt = self.min_dt.min(next.dt_last);
        self.max_dt = self.max_dt.max(next.dt_last);
    }
}

fn max_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Termination {
    /// `sup |phi(H) - h|` dropped below the stopping threshold.
    Converged,
    ReachedEnd,
    Aborted(String),
}

/// Limit sphere of a converged constrained run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Mean distance from the inball center to the nodes.
    pub radius: f64,
    /// Radius of the sphere with the conserved volume or area.
    pub predicted_radius: f64,
    pub radius_rel_error: f64,
    /// `|Q(sphere of radius R) - Q_0| / Q_0`.
    pub constraint_rel_error: f64,
    /// `(max - min) / mean` of the distances from the inball center.
    pub sphericity: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub initial: FlowState,
    pub final_state: FlowState,
    pub records: Vec<FlowRecord>,
    pub monitor: StepMonitor,
    pub termination: Termination,
    pub abort: Option<FlowError>,
    pub convergence: Option<ConvergenceReport>,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Integrates from `initial` until convergence, `t_end`, or an abort.
///
/// Rejects initial data whose h-convexity margin is below `-1e-6`. Aborts
/// (step underflow, loss of positivity, loss of parabolicity) are reported
/// in the outcome together with everything recorded up to that point.
pub fn run(initial: RadialGraph, cfg: &FlowConfig) -> Result<RunOutcome, FlowError> {
    run_observed(initial, cfg, |_, _| {})
}

/// [`run`] that also hands every recorded state to `observer`.
pub fn run_observed(
    initial: RadialGraph,
    cfg: &FlowConfig,
    mut observer: impl FnMut(&FlowState, &FlowRecord),
) -> Result<RunOutcome, FlowError> {
    cfg.validate()?;
    let state = FlowState::new(initial, cfg)?;
    let margin = hconvexity_margin(&state.frame, state.space().a);
    if margin < -HCONVEX_TOL {
        return Err(FlowError::NotHConvex { margin });
    }
    if margin < 0.0 {
        warn!("initial datum is h-convex only within tolerance (margin {margin:e})");
    }

    let mut monitor = StepMonitor::new(&state);
    let mut tracker = diag::RecordTracker::default();
    let mut records = vec![tracker.record(&state)];
    observer(&state, &records[0]);
    let initial = state.clone();
    let mut state = state;
    let mut abort = None;

    let termination = loop {
        if !cfg.run_to_end && cfg.constraint != Constraint::Standard && state.speed_residual() < cfg.stop_eps {
            break Termination::Converged;
        }
        if state.t >= cfg.t_end {
            break Termination::ReachedEnd;
        }
        match step(&state, cfg) {
            Ok(next) => {
                monitor.observe_step(&state, &next, cfg.constraint);
                state = next;
                if state.steps % cfg.record_every == 0 {
                    let rec = tracker.record(&state);
                    observer(&state, &rec);
                    records.push(rec);
                }
            }
            Err(e) => {
                let reason = e.to_string();
                abort = Some(e);
                break Termination::Aborted(reason);
            }
        }
    };
    if records.last().map(|r| r.t) != Some(state.t) {
        let rec = tracker.record(&state);
        observer(&state, &rec);
        records.push(rec);
    }

    let convergence = match termination {
        Termination::Converged => Some(convergence_report(&state, cfg.constraint, &mut tracker)?),
        _ => None,
    };
    Ok(RunOutcome { initial, final_state: state, records, monitor, termination, abort, convergence })
}

fn convergence_report(
    state: &FlowState,
    constraint: Constraint,
    tracker: &mut diag::RecordTracker,
) -> Result<ConvergenceReport, FlowError> {
    let space = state.space();
    let center = tracker.center(&state.graph);
    let (radius, sphericity) = diag::recentered_sphericity(&state.graph, &center);
    let target = state.target.expect("constrained runs carry a target");
    let (goal, achieved) = match constraint {
        Constraint::Area => (
            Target::Area(target),
            sphere_oracle::sphere_quantities(&SphereState { radius, space }).area,
        ),
        _ => (
            Target::Volume(target),
            sphere_oracle::sphere_quantities(&SphereState { radius, space }).volume,
        ),
    };
    let predicted = sphere_oracle::radius_from_constraint(goal, &space)
        .map_err(|e| FlowError::Degenerate { t: state.t, reason: e.to_string() })?;
    Ok(ConvergenceReport {
        radius,
        predicted_radius: predicted,
        radius_rel_error: ((radius - predicted) / predicted).abs(),
        constraint_rel_error: ((achieved - target) / target).abs(),
        sphericity,
    })
}
