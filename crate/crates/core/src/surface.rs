//! Radial-graph hypersurfaces `r = u(theta)` and their discrete geometry.
//!
//! Curvatures are evaluated in the variable `w = ln tanh(a u / 2)`, for which
//! `dw/du = 1/s_a(u)` and the ambient metric becomes conformal to a cylinder.
//! With `v = sqrt(1 + w'^2)` the principal curvatures are
//!
//! ```text
//! meridian:  (c_a(u) v^2 - w'') / (s_a(u) v^3)
//! parallel:  (c_a(u) - cot(theta) w') / (s_a(u) v)          (n = 2 only)
//! ```
//!
//! Derivatives are second-order centered differences. Closed curves use a
//! periodic grid `theta_i = 2 pi i / N`; axisymmetric surfaces use the
//! cell-centered polar grid `theta_i = (i + 1/2) pi / N` with even reflection
//! across both poles.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypmath::{self, HPoint, HypError, Mink, SpaceParams};

/// Discrete h-convexity tolerance on `min(lambda) - a`.
pub const HCONVEX_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("radius u[{index}] = {value} is not positive")]
    NonPositiveRadius { index: usize, value: f64 },
    #[error("non-finite geometry at node {index}")]
    Overflow { index: usize },
    #[error("graph needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Hyp(#[from] HypError),
}

/// Angular grid shared by every graph of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    space: SpaceParams,
    dtheta: f64,
    theta: Vec<f64>,
    /// Measure of the `S^n` cell around each node; sums to `vol(S^n)`.
    weights: Vec<f64>,
    /// `cot(theta_i)` for `n = 2`, empty otherwise.
    cot: Vec<f64>,
}

impl Grid {
    pub fn new(space: SpaceParams, nodes: usize) -> Result<Self, SurfaceError> {
        let min = if space.n == 1 { 8 } else { 4 };
        if nodes < min {
            return Err(SurfaceError::TooFewNodes { min, got: nodes });
        }
        let grid = match space.n {
            1 => {
                let dtheta = 2.0 * PI / nodes as f64;
                Self {
                    space,
                    dtheta,
                    theta: (0..nodes).map(|i| i as f64 * dtheta).collect(),
                    weights: vec![dtheta; nodes],
                    cot: Vec::new(),
                }
            }
            _ => {
                let dtheta = PI / nodes as f64;
                let theta: Vec<f64> = (0..nodes).map(|i| (i as f64 + 0.5) * dtheta).collect();
                // exact integral of sin over each cell, so the weights sum to 4 pi
                let half = (0.5 * dtheta).sin();
                let weights = theta.iter().map(|t| 2.0 * PI * 2.0 * t.sin() * half).collect();
                let cot = theta.iter().map(|t| t.cos() / t.sin()).collect();
                Self { space, dtheta, theta, weights, cot }
            }
        };
        Ok(grid)
    }

    pub fn space(&self) -> SpaceParams {
        self.space
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Left and right stencil neighbours of node `i`.
    #[inline]
    fn neighbours(&self, i: usize) -> (usize, usize) {
        let n = self.theta.len();
        if self.space.n == 1 {
            ((i + n - 1) % n, (i + 1) % n)
        } else {
            (i.saturating_sub(1), (i + 1).min(n - 1))
        }
    }

    /// Point on the surface at node `i` with radius `r`.
    pub fn point(&self, i: usize, r: f64) -> HPoint {
        match self.space.n {
            1 => HPoint::polar(r, self.theta[i]),
            _ => HPoint::meridian(r, self.theta[i]),
        }
    }

    /// Unit vector `d/dtheta` of the direction sphere at node `i`.
    fn dir_derivative(&self, i: usize) -> [f64; 3] {
        let t = self.theta[i];
        match self.space.n {
            1 => [-t.sin(), t.cos(), 0.0],
            _ => [t.cos(), 0.0, -t.sin()],
        }
    }
}

/// A radial graph `r = u(theta)` over a fixed angular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGraph {
    grid: Arc<Grid>,
    u: Vec<f64>,
}

impl RadialGraph {
    pub fn new(space: SpaceParams, u: Vec<f64>) -> Result<Self, SurfaceError> {
        let grid = Arc::new(Grid::new(space, u.len())?);
        Self::on_grid(grid, u)
    }

    pub fn on_grid(grid: Arc<Grid>, u: Vec<f64>) -> Result<Self, SurfaceError> {
        if u.len() != grid.len() {
            return Err(SurfaceError::Domain(format!(
                "expected {} radii, got {}",
                grid.len(),
                u.len()
            )));
        }
        if let Some((index, &value)) = u.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            return Err(SurfaceError::NonPositiveRadius { index, value });
        }
        Ok(Self { grid, u })
    }

    pub fn from_fn(space: SpaceParams, nodes: usize, f: impl Fn(f64) -> f64) -> Result<Self, SurfaceError> {
        let grid = Arc::new(Grid::new(space, nodes)?);
        let u = grid.theta.iter().map(|&t| f(t)).collect();
        Self::on_grid(grid, u)
    }

    pub fn sphere(space: SpaceParams, nodes: usize, radius: f64) -> Result<Self, SurfaceError> {
        Self::from_fn(space, nodes, |_| radius)
    }

    /// Geodesic sphere of radius `radius` whose center lies at distance
    /// `offset` from the origin in the direction `theta = 0`.
    pub fn off_center_sphere(
        space: SpaceParams,
        nodes: usize,
        radius: f64,
        offset: f64,
    ) -> Result<Self, SurfaceError> {
        if !(offset.abs() < radius) {
            return Err(SurfaceError::Domain("sphere must contain the origin".into()));
        }
        let a = space.a;
        let (ch, sh) = ((a * offset).cosh(), (a * offset).sinh());
        let target = (a * radius).cosh();
        Self::from_fn(space, nodes, |t| {
            // cosh(a R) = ch cosh(a u) - sh cos(t) sinh(a u) = m cosh(a u - beta)
            let b = sh * t.cos();
            let m = (ch * ch - b * b).sqrt();
            let beta = (b / ch).atanh();
            (beta + (target / m).acosh()) / a
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn space(&self) -> SpaceParams {
        self.grid.space
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn theta(&self) -> &[f64] {
        &self.grid.theta
    }

    pub fn with_u(&self, u: Vec<f64>) -> Result<Self, SurfaceError> {
        Self::on_grid(self.grid.clone(), u)
    }

    /// Uniform radial shift `u + eps`.
    pub fn shifted(&self, eps: f64) -> Result<Self, SurfaceError> {
        self.with_u(self.u.iter().map(|x| x + eps).collect())
    }

    pub fn point(&self, i: usize) -> HPoint {
        self.grid.point(i, self.u[i])
    }

    /// Enclosed volume from the closed-form radial antiderivatives.
    pub fn volume(&self) -> f64 {
        enclosed_volume(&self.grid, &self.u, 0.0)
    }

    pub fn area(&self) -> Result<f64, SurfaceError> {
        Ok(GeometryFrame::compute(self)?.area)
    }

    /// Whether `p` lies strictly inside the enclosed domain, judged by
    /// linear interpolation of `u` in the direction of `p`.
    pub fn contains(&self, p: &HPoint) -> bool {
        if p.r == 0.0 {
            return true;
        }
        p.r < self.interpolate_radius(p)
    }

    /// Radius of the graph in the direction of `p`.
    pub fn interpolate_radius(&self, p: &HPoint) -> f64 {
        let g = &self.grid;
        let n = g.len();
        match g.space.n {
            1 => {
                let ang = p.dir[1].atan2(p.dir[0]).rem_euclid(2.0 * PI);
                let x = ang / g.dtheta;
                let i = (x.floor() as usize) % n;
                let frac = x - x.floor();
                (1.0 - frac) * self.u[i] + frac * self.u[(i + 1) % n]
            }
            _ => {
                let rho = (p.dir[0] * p.dir[0] + p.dir[1] * p.dir[1]).sqrt();
                let ang = rho.atan2(p.dir[2]);
                let x = ang / g.dtheta - 0.5;
                if x <= 0.0 {
                    return self.u[0];
                }
                if x >= (n - 1) as f64 {
                    return self.u[n - 1];
                }
                let i = x.floor() as usize;
                let frac = x - x.floor();
                (1.0 - frac) * self.u[i] + frac * self.u[i + 1]
            }
        }
    }

    pub fn to_snapshot(&self, t: f64) -> Snapshot {
        let space = self.space();
        Snapshot {
            meta: SnapshotMeta { a: space.a, n: space.n, nodes: self.len(), t },
            theta: self.grid.theta.clone(),
            u: self.u.clone(),
        }
    }
}

/// `sum_i I_n(u_i + shift) w_i` with `I_n(r) = int_0^r s_a^n`.
pub(crate) fn enclosed_volume(grid: &Grid, u: &[f64], shift: f64) -> f64 {
    let a = grid.space.a;
    let radial: fn(f64, f64) -> f64 =
        if grid.space.n == 1 { hypmath::ball_integral_1 } else { hypmath::ball_integral_2 };
    u.iter().zip(&grid.weights).map(|(&r, &w)| radial(a, r + shift) * w).sum()
}

/// `d/dshift` of [`enclosed_volume`], i.e. `sum_i s_a(u_i + shift)^n w_i`.
pub(crate) fn enclosed_volume_derivative(grid: &Grid, u: &[f64], shift: f64) -> f64 {
    let a = grid.space.a;
    let n = grid.space.n as i32;
    u.iter().zip(&grid.weights).map(|(&r, &w)| hypmath::s_a(a, r + shift).powi(n) * w).sum()
}

/// Shifted Weingarten quantities at a node.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Tilde {
    /// `H - n a`
    pub h: f64,
    /// `prod (lambda_i - a)`
    pub k: f64,
    /// `K~ / H~^n`
    pub q: f64,
    /// `1/n^n - Q~`
    pub f: f64,
}

/// Pointwise and integrated geometry of a radial graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeometryFrame {
    pub n: usize,
    pub a: f64,
    pub v: Vec<f64>,
    /// Principal curvatures; the second entry is unused for curves.
    pub lambda: Vec<[f64; 2]>,
    pub mean: Vec<f64>,
    pub norm2: Vec<f64>,
    pub tilde: Vec<Tilde>,
    pub dmu: Vec<f64>,
    /// `w'` at each node, with `u' = s_a(u) w'`.
    pub wprime: Vec<f64>,
    /// `s_a(u)` at each node.
    pub s: Vec<f64>,
    pub area: f64,
    pub volume: f64,
}

impl GeometryFrame {
    pub fn compute(g: &RadialGraph) -> Result<Self, SurfaceError> {
        let mut frame = Self::default();
        frame.recompute(g)?;
        Ok(frame)
    }

    /// Refreshes the frame in place for a new graph.
    pub fn recompute(&mut self, g: &RadialGraph) -> Result<(), SurfaceError> {
        let grid = &*g.grid;
        let (a, n) = (grid.space.a, grid.space.n);
        let len = g.len();
        self.n = n;
        self.a = a;
        for vec in [&mut self.v, &mut self.mean, &mut self.norm2, &mut self.dmu, &mut self.wprime, &mut self.s] {
            vec.resize(len, 0.0);
        }
        self.lambda.resize(len, [0.0; 2]);
        self.tilde.resize(len, Tilde::default());

        // w = ln tanh(a u / 2), c = cosh(a u), s = sinh(a u) / a and the
        // radial volume integrand from one exponential and one logarithm
        let mut w = vec![0.0; len];
        let mut c = vec![0.0; len];
        let mut volume = 0.0;
        for i in 0..len {
            let x = a * g.u[i];
            let em = (-x).exp_m1();
            let ei = 1.0 + em;
            let e = 1.0 / ei;
            w[i] = (-em / (2.0 + em)).ln();
            c[i] = 0.5 * (e + ei);
            let sh = -0.5 * e * em * (2.0 + em);
            self.s[i] = sh / a;
            let radial = if n == 1 {
                // (cosh x - 1) / a^2
                0.5 * em * em * e / (a * a)
            } else if x < 0.25 {
                hypmath::ball_integral_2(a, g.u[i])
            } else {
                (sh * c[i] - x) / (2.0 * a * a * a)
            };
            volume += radial * grid.weights[i];
        }

        let inv2h = 0.5 / grid.dtheta;
        let invh2 = 1.0 / (grid.dtheta * grid.dtheta);
        let mut area = 0.0;
        for i in 0..len {
            let (l, r) = grid.neighbours(i);
            let wp = (w[r] - w[l]) * inv2h;
            let wpp = (w[r] - 2.0 * w[i] + w[l]) * invh2;
            let v2 = 1.0 + wp * wp;
            let v = v2.sqrt();
            let (s, ci) = (self.s[i], c[i]);
            let lam1 = (ci * v2 - wpp) / (s * v2 * v);
            let lam2 = if n == 2 {
                if i == 0 || i == len - 1 {
                    (ci - wpp) / (s * v)
                } else {
                    (ci - grid.cot[i] * wp) / (s * v)
                }
            } else {
                0.0
            };
            let dmu = s.powi(n as i32) * v * grid.weights[i];
            if !(lam1.is_finite() && lam2.is_finite() && dmu.is_finite()) {
                return Err(SurfaceError::Overflow { index: i });
            }
            self.v[i] = v;
            self.wprime[i] = wp;
            self.dmu[i] = dmu;
            area += dmu;
            let (mean, norm2, tilde) = if n == 1 {
                let ht = lam1 - a;
                (lam1, lam1 * lam1, Tilde { h: ht, k: ht, q: 1.0, f: 0.0 })
            } else {
                let (t1, t2) = (lam1 - a, lam2 - a);
                let ht = t1 + t2;
                let k = t1 * t2;
                // 1/4 - t1 t2 / (t1 + t2)^2 written without cancellation
                let f = (t1 - t2) * (t1 - t2) / (4.0 * ht * ht);
                (lam1 + lam2, lam1 * lam1 + lam2 * lam2, Tilde { h: ht, k, q: k / (ht * ht), f })
            };
            self.lambda[i] = [lam1, lam2];
            self.mean[i] = mean;
            self.norm2[i] = norm2;
            self.tilde[i] = tilde;
        }
        self.area = area;
        self.volume = volume;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Principal curvatures at node `i` (one for curves, two for surfaces).
    pub fn principal(&self, i: usize) -> &[f64] {
        &self.lambda[i][..self.n]
    }

    pub fn max_mean(&self) -> f64 {
        self.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_mean(&self) -> f64 {
        self.mean.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `min_{i,j} (lambda_j(i) - a)`; nonnegative iff discretely h-convex.
pub fn hconvexity_margin(frame: &GeometryFrame, a: f64) -> f64 {
    (0..frame.len())
        .flat_map(|i| frame.principal(i).iter().map(move |l| l - a))
        .fold(f64::INFINITY, f64::min)
}

/// Outer unit normal at node `i` in hyperboloid coordinates.
pub fn outward_normal(g: &RadialGraph, frame: &GeometryFrame, i: usize) -> Mink {
    let a = g.space().a;
    let p = g.point(i);
    let radial = p.radial_unit(a);
    let dd = g.grid.dir_derivative(i);
    let wp = frame.wprime[i];
    let tangential = Mink([0.0, dd[0], dd[1], dd[2]]).scale(-wp);
    radial.add(&tangential).scale(1.0 / frame.v[i])
}

/// `sigma_i = s_a(r_p) <nu, d r_p>` at every node for an interior probe point.
pub fn support_sigma(g: &RadialGraph, frame: &GeometryFrame, p: &HPoint) -> Result<Vec<f64>, SurfaceError> {
    Ok(support_terms(g, frame, p)?.into_iter().map(|(s, dot)| s * dot).collect())
}

/// `(s_a(r_p), <nu, d r_p>)` at every node.
pub(crate) fn support_terms(
    g: &RadialGraph,
    frame: &GeometryFrame,
    p: &HPoint,
) -> Result<Vec<(f64, f64)>, SurfaceError> {
    if !g.contains(p) {
        return Err(SurfaceError::Domain(format!(
            "probe point (r = {}, dir = {:?}) is not strictly inside the graph",
            p.r, p.dir
        )));
    }
    let a = g.space().a;
    (0..g.len())
        .map(|i| {
            let q = g.point(i);
            let d = hypmath::distance(a, p, &q);
            let t = hypmath::radial_tangent(a, p, &q)?;
            let nu = outward_normal(g, frame, i);
            Ok((hypmath::s_a(a, d), nu.dot(&t)))
        })
        .collect()
}

/// Canonical surface snapshot: `{meta: {a, n, N, t}, theta: [...], u: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub a: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub t: f64,
}

impl Snapshot {
    pub fn to_graph(&self) -> Result<RadialGraph, SurfaceError> {
        let space = SpaceParams::new(self.meta.a, self.meta.n)?;
        if self.u.len() != self.meta.nodes {
            return Err(SurfaceError::Domain(format!(
                "snapshot declares N = {} but holds {} radii",
                self.meta.nodes,
                self.u.len()
            )));
        }
        RadialGraph::new(space, self.u.clone())
    }
}
