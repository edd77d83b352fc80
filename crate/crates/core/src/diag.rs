//! Monitors for the geometric estimates along a run: inradius sandwich,
//! diameter bound, support-function bound, tilde-quantity decay, and
//! exponential-rate fits.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowState;
use crate::hypmath::{self, HPoint, SpaceParams};
use crate::surface::{self, hconvexity_margin, GeometryFrame, RadialGraph};

/// Slack allowed in the inradius sandwich for discretization error.
pub const SANDWICH_TOL: f64 = 1e-3;

/// Most nodes used by the pairwise diameter search.
pub const DIAMETER_NODES: usize = 256;

/// Values at or below this are treated as numerically zero by [`fit_decay`].
pub const FIT_FLOOR: f64 = 1e-12;

/// Fewest points accepted by [`fit_decay`].
pub const FIT_MIN_POINTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("insufficient data for a decay fit: {usable} usable points, need {FIT_MIN_POINTS}")]
    InsufficientData { usable: usize },
    #[error("series is not decaying (fitted slope {slope})")]
    NotDecaying { slope: f64 },
    #[error("not strictly h-convex: H~ = {value} at node {index}")]
    NotStrictlyHConvex { index: usize, value: f64 },
    #[error(transparent)]
    Surface(#[from] surface::SurfaceError),
    #[error(transparent)]
    Hyp(#[from] hypmath::HypError),
}

/// One row of the monitored time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub t: f64,
    #[serde(rename = "A")]
    pub area: f64,
    #[serde(rename = "V")]
    pub volume: f64,
    pub h: f64,
    #[serde(rename = "maxH")]
    pub max_mean: f64,
    #[serde(rename = "minH")]
    pub min_mean: f64,
    pub hconv_margin: f64,
    pub inradius_est: f64,
    #[serde(rename = "psiV")]
    pub psi_v: f64,
    #[serde(rename = "xi_psiV")]
    pub xi_psi_v: f64,
    pub diameter_est: f64,
    pub sigma_min_ratio: f64,
    pub f_max: f64,
    pub sup_phi_minus_h: f64,
    pub projection_eps: f64,
}

impl FlowRecord {
    /// Column names of the CSV series, in field order.
    pub const HEADER: [&'static str; 15] = [
        "t",
        "A",
        "V",
        "h",
        "maxH",
        "minH",
        "hconv_margin",
        "inradius_est",
        "psiV",
        "xi_psiV",
        "diameter_est",
        "sigma_min_ratio",
        "f_max",
        "sup_phi_minus_h",
        "projection_eps",
    ];

    pub fn values(&self) -> [f64; 15] {
        [
            self.t,
            self.area,
            self.volume,
            self.h,
            self.max_mean,
            self.min_mean,
            self.hconv_margin,
            self.inradius_est,
            self.psi_v,
            self.xi_psi_v,
            self.diameter_est,
            self.sigma_min_ratio,
            self.f_max,
            self.sup_phi_minus_h,
            self.projection_eps,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|x| x.is_finite())
    }
}

/// Builds records along a run, warm-starting each inradius search from the
/// previous center.
#[derive(Debug, Clone, Default)]
pub struct RecordTracker {
    last_center: Option<HPoint>,
}

impl RecordTracker {
    pub fn record(&mut self, state: &FlowState) -> FlowRecord {
        let (rho, center) = estimate_inradius_from(&state.graph, self.last_center);
        self.last_center = Some(center);
        build_record(state, rho, &center)
    }

    /// Inball center of `g`, warm-started from the last record.
    pub fn center(&mut self, g: &RadialGraph) -> HPoint {
        let (_, center) = estimate_inradius_from(g, self.last_center);
        self.last_center = Some(center);
        center
    }
}

fn build_record(state: &FlowState, rho: f64, center: &HPoint) -> FlowRecord {
    let space = state.space();
    let frame = &state.frame;
    let psi_v = hypmath::psi(space.a, space.n, frame.volume).unwrap_or(f64::NAN);
    let xi_psi_v = hypmath::xi(space.a, psi_v).unwrap_or(f64::NAN);
    FlowRecord {
        t: state.t,
        area: frame.area,
        volume: frame.volume,
        h: state.h,
        max_mean: frame.max_mean(),
        min_mean: frame.min_mean(),
        hconv_margin: hconvexity_margin(frame, space.a),
        inradius_est: rho,
        psi_v,
        xi_psi_v,
        diameter_est: estimate_diameter(&state.graph),
        sigma_min_ratio: sigma_min_ratio(&state.graph, frame, center, rho).unwrap_or(f64::NAN),
        f_max: tilde_diagnostics(frame).map(|t| t.f_max).unwrap_or(f64::NAN),
        sup_phi_minus_h: state.speed_residual(),
        projection_eps: state.projection_eps,
    }
}

/// A point reduced to the two numbers that enter the distance formula:
/// `cosh(a r) - 1` and `a s_a(r) dir`.
#[derive(Debug, Clone, Copy)]
struct Chart {
    cm1: f64,
    y: [f64; 3],
}

impl Chart {
    fn new(a: f64, p: &HPoint) -> Self {
        let half = (0.5 * a * p.r).sinh();
        let sh = (a * p.r).sinh();
        Self { cm1: 2.0 * half * half, y: [sh * p.dir[0], sh * p.dir[1], sh * p.dir[2]] }
    }

    /// `cosh(a d) - 1` between two points, free of cancellation for small `a d`
    /// relative to the radii involved.
    #[inline]
    fn gap(&self, o: &Chart) -> f64 {
        let dot = self.y[0] * o.y[0] + self.y[1] * o.y[1] + self.y[2] * o.y[2];
        (self.cm1 * o.cm1 + self.cm1 + o.cm1 - dot).max(0.0)
    }
}

fn gap_to_distance(a: f64, gap: f64) -> f64 {
    2.0 * (0.5 * gap).sqrt().asinh() / a
}

fn node_charts(g: &RadialGraph) -> Vec<Chart> {
    let a = g.space().a;
    (0..g.len()).map(|i| Chart::new(a, &g.point(i))).collect()
}

fn min_gap(p: &Chart, nodes: &[Chart]) -> f64 {
    nodes.iter().map(|q| p.gap(q)).fold(f64::INFINITY, f64::min)
}

/// Largest geodesic ball inside the graph: maximizes the distance from a
/// candidate center to the nearest boundary node.
///
/// For curves the center ranges over the plane (pattern search in normal
/// coordinates at the origin); for axisymmetric surfaces it is restricted to
/// the symmetry axis.
pub fn estimate_inradius(g: &RadialGraph) -> (f64, HPoint) {
    estimate_inradius_from(g, None)
}

/// [`estimate_inradius`] started from a previous center, if any.
pub fn estimate_inradius_from(g: &RadialGraph, start: Option<HPoint>) -> (f64, HPoint) {
    let a = g.space().a;
    let nodes = node_charts(g);
    let umin = g.u().iter().copied().fold(f64::INFINITY, f64::min);
    let value = |p: &HPoint| min_gap(&Chart::new(a, p), &nodes);

    let center = match g.space().n {
        1 => pattern_search(&value, start, umin),
        _ => axis_search(&value, g.u()[g.len() - 1], g.u()[0]),
    };
    // the origin is always a feasible candidate
    let origin = HPoint::origin();
    let best = if value(&center) >= value(&origin) { center } else { origin };
    let rho = nodes
        .iter()
        .enumerate()
        .map(|(i, _)| hypmath::distance(a, &best, &g.point(i)))
        .fold(f64::INFINITY, f64::min);
    (rho, best)
}

/// Maximizes `value` over the plane by compass search with 16 directions,
/// rotated by the golden angle after every contraction so that narrow
/// ascent cones along ridges of the max-min objective are eventually hit.
fn pattern_search(value: &impl Fn(&HPoint) -> f64, start: Option<HPoint>, scale: f64) -> HPoint {
    const DIRECTIONS: usize = 16;
    let golden = PI * (3.0 - 5f64.sqrt());
    let (mut x, mut step) = match start {
        Some(p) => {
            let c = p.tangent_coords();
            ([c[0], c[1]], 1e-4 * scale)
        }
        None => ([0.0, 0.0], 0.1 * scale),
    };
    let point = |x: [f64; 2]| HPoint::from_tangent([x[0], x[1], 0.0]);
    let mut best = value(&point(x));
    let mut phase: f64 = 0.0;
    let tol = 1e-10 * scale.max(1.0);
    while step > tol {
        let mut improved = None;
        for k in 0..DIRECTIONS {
            let ang = phase + 2.0 * PI * k as f64 / DIRECTIONS as f64;
            let cand = [x[0] + step * ang.cos(), x[1] + step * ang.sin()];
            let val = value(&point(cand));
            if val > best {
                best = val;
                improved = Some(cand);
            }
        }
        match improved {
            Some(c) => {
                x = c;
                step = (2.0 * step).min(scale);
            }
            None => {
                step *= 0.5;
                phase += golden;
            }
        }
    }
    point(x)
}

/// Golden-section search of `value` along the symmetry axis between the
/// south (`-south`) and north (`north`) intersections.
fn axis_search(value: &impl Fn(&HPoint) -> f64, south: f64, north: f64) -> HPoint {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-south, north);
    let f = |z: f64| value(&HPoint::on_axis(z));
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-11 * (north + south) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    HPoint::on_axis(0.5 * (lo + hi))
}

/// Largest pairwise distance between boundary nodes, over at most
/// [`DIAMETER_NODES`] evenly subsampled nodes. Axisymmetric surfaces use the
/// full meridian section (both half-profiles), which contains a diameter.
pub fn estimate_diameter(g: &RadialGraph) -> f64 {
    let a = g.space().a;
    let len = g.len();
    let points: Vec<Chart> = match g.space().n {
        1 => {
            let stride = len.div_ceil(DIAMETER_NODES);
            (0..len).step_by(stride).map(|i| Chart::new(a, &g.point(i))).collect()
        }
        _ => {
            let stride = len.div_ceil(DIAMETER_NODES / 2);
            (0..len)
                .step_by(stride)
                .flat_map(|i| {
                    let p = g.point(i);
                    let mirror = HPoint { r: p.r, dir: [-p.dir[0], p.dir[1], p.dir[2]] };
                    [Chart::new(a, &p), Chart::new(a, &mirror)]
                })
                .collect()
        }
    };
    let mut widest: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            widest = widest.max(p.gap(q));
        }
    }
    gap_to_distance(a, widest)
}

/// `min_i <nu_i, d r_p> / (a ta_a(rho))` for the probe point `p` at distance
/// `rho` from the boundary.
pub fn sigma_min_ratio(g: &RadialGraph, frame: &GeometryFrame, p: &HPoint, rho: f64) -> Result<f64, DiagError> {
    let a = g.space().a;
    let bound = a * hypmath::ta_a(a, rho);
    let terms = surface::support_terms(g, frame, p)?;
    Ok(terms.iter().map(|(_, dot)| dot / bound).fold(f64::INFINITY, f64::min))
}

/// Extremes of the shifted curvature quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TildeSummary {
    /// `max (1/n^n - K~/H~^n)`; identically zero for curves.
    pub f_max: f64,
    pub q_min: f64,
    pub h_min: f64,
    /// Set for curves, where `f` vanishes identically and carries no information.
    pub vacuous: bool,
}

impl TildeSummary {
    /// `0 <= f_max < 1/n^n`.
    pub fn in_range(&self, n: usize) -> bool {
        let top = 1.0 / (n as f64).powi(n as i32);
        self.f_max >= 0.0 && (self.f_max < top || self.vacuous)
    }
}

pub fn tilde_diagnostics(frame: &GeometryFrame) -> Result<TildeSummary, DiagError> {
    if let Some((index, t)) = frame.tilde.iter().enumerate().find(|(_, t)| !(t.h > 0.0)) {
        return Err(DiagError::NotStrictlyHConvex { index, value: t.h });
    }
    let fold = |f: fn(&surface::Tilde) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        frame.tilde.iter().map(f).fold(init, pick)
    };
    Ok(TildeSummary {
        f_max: fold(|t| t.f, 0.0, f64::max),
        q_min: fold(|t| t.q, f64::INFINITY, f64::min),
        h_min: fold(|t| t.h, f64::INFINITY, f64::min),
        vacuous: frame.n == 1,
    })
}

/// Result of the inradius and diameter checks on one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichVerdict {
    pub lower: f64,
    pub inradius: f64,
    pub upper: f64,
    pub diameter: f64,
    pub diameter_bound: f64,
    pub sandwich_ok: bool,
    pub diameter_ok: bool,
}

impl SandwichVerdict {
    pub fn passed(&self) -> bool {
        self.sandwich_ok && self.diameter_ok
    }
}

/// `xi(psi(V)) - tol <= rho <= psi(V) + tol` and
/// `diameter < 2 (psi(V) + a ln 2) + tol`.
pub fn check_inradius_sandwich(rec: &FlowRecord, space: &SpaceParams) -> SandwichVerdict {
    let (diameter_bound, _) = hypmath::diameter_bounds(space.a, rec.psi_v);
    SandwichVerdict {
        lower: rec.xi_psi_v,
        inradius: rec.inradius_est,
        upper: rec.psi_v,
        diameter: rec.diameter_est,
        diameter_bound,
        sandwich_ok: rec.xi_psi_v - SANDWICH_TOL <= rec.inradius_est && rec.inradius_est <= rec.psi_v + SANDWICH_TOL,
        diameter_ok: rec.diameter_est < diameter_bound + SANDWICH_TOL,
    }
}

/// Mean distance from `center` to the boundary nodes and the spread
/// `(max - min) / mean` of those distances.
pub fn recentered_sphericity(g: &RadialGraph, center: &HPoint) -> (f64, f64) {
    let a = g.space().a;
    let d: Vec<f64> = (0..g.len()).map(|i| hypmath::distance(a, center, &g.point(i))).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    (mean, (hi - lo) / mean)
}

/// `int k ds - 2 pi - a^2 V` for a closed curve; zero in the continuum.
pub fn gauss_bonnet_residual(frame: &GeometryFrame) -> f64 {
    let total: f64 = frame.mean.iter().zip(&frame.dmu).map(|(k, w)| k * w).sum();
    total - 2.0 * PI - frame.a * frame.a * frame.volume
}

/// Least-squares exponential fit `y ~ c exp(-rate t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Fits a line to `(t, ln y)` over the last `fraction` of the points that
/// precede the first `y <= 1e-12`.
pub fn fit_decay(series: &[(f64, f64)], fraction: f64) -> Result<DecayFit, DiagError> {
    let usable = series.iter().position(|&(_, y)| !(y > FIT_FLOOR && y.is_finite())).unwrap_or(series.len());
    let take = ((usable as f64) * fraction.clamp(0.0, 1.0)).ceil() as usize;
    let tail = &series[usable - take.min(usable)..usable];
    if tail.len() < FIT_MIN_POINTS {
        return Err(DiagError::InsufficientData { usable: tail.len() });
    }
    let m = tail.len() as f64;
    let tm = tail.iter().map(|p| p.0).sum::<f64>() / m;
    let lm = tail.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in tail {
        let (dt, dl) = (t - tm, y.ln() - lm);
        stt += dt * dt;
        sty += dt * dl;
        syy += dl * dl;
    }
    if stt == 0.0 {
        return Err(DiagError::InsufficientData { usable: 1 });
    }
    let slope = sty / stt;
    let intercept = lm - slope * tm;
    let ss_res: f64 = tail.iter().map(|&(t, y)| (y.ln() - intercept - slope * t).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    if !(slope < 0.0) {
        return Err(DiagError::NotDecaying { slope });
    }
    Ok(DecayFit {
        rate: -slope,
        amplitude: intercept.exp(),
        r_squared,
        window: (tail[0].0, tail[tail.len() - 1].0),
        points: tail.len(),
    })
}

/// Writes the series as CSV with the [`FlowRecord::HEADER`] columns and
/// 17 significant digits per value.
pub fn write_series_csv<W: Write>(out: W, records: &[FlowRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FlowRecord::HEADER)?;
    for r in records {
        w.write_record(r.values().iter().map(|x| format!("{x:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a series written by [`write_series_csv`].
pub fn read_series_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<FlowRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(a: f64, n: usize) -> SpaceParams {
        SpaceParams::new(a, n).unwrap()
    }

    #[test]
    fn sphere_inradius_is_radius_at_origin() {
        for n in [1, 2] {
            let g = RadialGraph::sphere(space(1.0, n), 128, 1.3).unwrap();
            let (rho, c) = estimate_inradius(&g);
            assert!((rho - 1.3).abs() < 1e-9, "{rho}");
            assert!(c.r < 1e-6);
        }
    }

    /// Best center over a fine grid of candidates, refined twice around the
    /// best cell.
    fn brute_force(g: &RadialGraph) -> f64 {
        let a = g.space().a;
        let dist = |x: f64, y: f64| {
            let p = HPoint::from_tangent([x, y, 0.0]);
            (0..g.len()).map(|i| hypmath::distance(a, &p, &g.point(i))).fold(f64::INFINITY, f64::min)
        };
        let (mut cx, mut cy, mut half) = (0.0, 0.0, 0.5);
        let mut best = 0.0;
        for _ in 0..3 {
            let (mut bx, mut by) = (cx, cy);
            for i in 0..100 {
                for j in 0..100 {
                    let x = cx - half + 2.0 * half * i as f64 / 99.0;
                    let y = cy - half + 2.0 * half * j as f64 / 99.0;
                    let d = dist(x, y);
                    if d > best {
                        (best, bx, by) = (d, x, y);
                    }
                }
            }
            (cx, cy, half) = (bx, by, half / 20.0);
        }
        best
    }

    #[test]
    fn shifted_curve_inradius_matches_brute_force() {
        let g = RadialGraph::from_fn(space(1.0, 1), 256, |t| 1.0 + 0.2 * t.cos()).unwrap();
        let (rho, c) = estimate_inradius(&g);
        assert!(c.dir[0] > 0.0 && c.r > 1e-3, "center should move toward theta = 0");
        let oracle = brute_force(&g);
        assert!((rho - oracle).abs() < 1e-4, "{rho} vs {oracle}");
        assert!(rho >= oracle - 1e-9);
    }

    #[test]
    fn axis_search_finds_shifted_sphere_center() {
        let sp = space(1.0, 2);
        let g = RadialGraph::off_center_sphere(sp, 256, 1.0, 0.3).unwrap();
        let (rho, c) = estimate_inradius(&g);
        assert!((rho - 1.0).abs() < 1e-4, "{rho}");
        assert!((c.r - 0.3).abs() < 1e-3 && c.dir[2] > 0.0, "{c:?}");
    }

    #[test]
    fn diameter_of_spheres() {
        for n in [1, 2] {
            let g = RadialGraph::sphere(space(0.5, n), 512, 1.1).unwrap();
            let d = estimate_diameter(&g);
            assert!(d <= 2.2 + 1e-12 && d > 2.2 - 1e-4, "{d}");
        }
    }

    #[test]
    fn sphere_support_ratio_is_coth() {
        let g = RadialGraph::sphere(space(1.0, 2), 64, 0.8).unwrap();
        let fr = GeometryFrame::compute(&g).unwrap();
        let r = sigma_min_ratio(&g, &fr, &HPoint::origin(), 0.8).unwrap();
        assert!((r - 1.0 / 0.8_f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn tilde_summary_on_spheres_and_curves() {
        let g = RadialGraph::sphere(space(1.0, 2), 64, 0.8).unwrap();
        let t = tilde_diagnostics(&GeometryFrame::compute(&g).unwrap()).unwrap();
        assert!(t.f_max.abs() < 1e-12 && (t.q_min - 0.25).abs() < 1e-12 && t.in_range(2));
        let g = RadialGraph::from_fn(space(1.0, 1), 64, |x| 1.0 + 0.05 * (2.0 * x).cos()).unwrap();
        let t = tilde_diagnostics(&GeometryFrame::compute(&g).unwrap()).unwrap();
        assert!(t.vacuous && t.f_max == 0.0);
    }

    #[test]
    fn tilde_rejects_non_strictly_hconvex() {
        let g = RadialGraph::from_fn(space(1.0, 1), 128, |x| 1.2 + 0.3 * (3.0 * x).cos()).unwrap();
        let e = tilde_diagnostics(&GeometryFrame::compute(&g).unwrap()).unwrap_err();
        assert!(matches!(e, DiagError::NotStrictlyHConvex { .. }));
    }

    #[test]
    fn sandwich_is_tight_for_spheres() {
        let sp = space(1.0, 1);
        let g = RadialGraph::sphere(sp, 128, 1.5).unwrap();
        let v = GeometryFrame::compute(&g).unwrap().volume;
        let psi = hypmath::psi(1.0, 1, v).unwrap();
        assert!((psi - 1.5).abs() < 1e-12);
        let rec = FlowRecord {
            t: 0.0,
            area: 0.0,
            volume: v,
            h: 0.0,
            max_mean: 0.0,
            min_mean: 0.0,
            hconv_margin: 0.0,
            inradius_est: 1.5,
            psi_v: psi,
            xi_psi_v: hypmath::xi(1.0, psi).unwrap(),
            diameter_est: 3.0,
            sigma_min_ratio: 1.0,
            f_max: 0.0,
            sup_phi_minus_h: 0.0,
            projection_eps: 0.0,
        };
        assert!(check_inradius_sandwich(&rec, &sp).passed());
        let bad = FlowRecord { inradius_est: 1.6, ..rec };
        assert!(!check_inradius_sandwich(&bad, &sp).sandwich_ok);
    }

    #[test]
    fn gauss_bonnet_holds_on_perturbed_curves() {
        let g = RadialGraph::from_fn(space(1.0, 1), 512, |x| 1.0 + 0.1 * (2.0 * x).cos()).unwrap();
        let r = gauss_bonnet_residual(&GeometryFrame::compute(&g).unwrap());
        assert!(r.abs() < 1e-6, "{r}");
    }

    #[test]
    fn exact_exponential_fit() {
        let s: Vec<(f64, f64)> = (0..50).map(|k| (0.1 * k as f64, 3.0 * (-0.2 * k as f64).exp())).collect();
        let fit = fit_decay(&s, 1.0).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-12);
        assert!((fit.amplitude - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_exponential_fit() {
        let s: Vec<(f64, f64)> = (0..400)
            .map(|k| {
                let t = 0.025 * k as f64;
                (t, 3.0 * (-2.0 * t).exp() * (1.0 + 0.01 * t.sin()))
            })
            .collect();
        let fit = fit_decay(&s, 0.5).unwrap();
        assert!((fit.rate - 2.0).abs() < 0.02, "{}", fit.rate);
    }

    #[test]
    fn fit_window_stops_at_floor() {
        let s: Vec<(f64, f64)> = (0..100).map(|k| (k as f64, (-(k as f64)).exp())).collect();
        let fit = fit_decay(&s, 0.5).unwrap();
        assert!(fit.window.1 < 28.0);
        assert!(matches!(fit_decay(&s[..15], 0.5), Err(DiagError::InsufficientData { .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rec = FlowRecord {
            t: 0.1,
            area: 1.0 / 3.0,
            volume: PI,
            h: 1e-300,
            max_mean: -2.5,
            min_mean: 7.0,
            hconv_margin: 0.123_456_789_012_345_67,
            inradius_est: 1.0,
            psi_v: 2.0,
            xi_psi_v: 3.0,
            diameter_est: 4.0,
            sigma_min_ratio: 5.0,
            f_max: 0.0,
            sup_phi_minus_h: 1e-9,
            projection_eps: -1e-17,
        };
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &[rec, rec]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,A,V,h,maxH,minH,hconv_margin,inradius_est,psiV,xi_psiV,"));
        let back = read_series_csv(&buf[..]).unwrap();
        assert_eq!(back, vec![rec, rec]);
    }
}
