//! Hyperbolic primitives for the space form of curvature `-a^2`.
//!
//! Points are handled in geodesic polar coordinates `(r, dir)` about a fixed
//! origin and embedded on the hyperboloid `<X, X> = -1/a^2` of Minkowski space
//! `R^{n+1,1}` whenever distances or tangent vectors are needed.

use std::f64::consts::{LN_2, PI};

use thiserror::Error;

/// Largest `|a t|` accepted by the hyperbolic function family.
pub const MAX_ARG: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("argument overflow: |a*t| = {0} exceeds {MAX_ARG}")]
    Overflow(f64),
    #[error("degenerate direction: points coincide")]
    Degenerate,
    #[error("root finder failed to converge for target {0}")]
    NoConvergence(f64),
}

/// Curvature scale and hypersurface dimension of `H^{n+1}_a`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpaceParams {
    pub a: f64,
    pub n: usize,
}

impl SpaceParams {
    pub fn new(a: f64, n: usize) -> Result<Self, HypError> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(HypError::Domain(format!("curvature scale a must be positive, got {a}")));
        }
        if n != 1 && n != 2 {
            return Err(HypError::Domain(format!("dimension n must be 1 or 2, got {n}")));
        }
        Ok(Self { a, n })
    }

    /// Volume of the unit sphere `S^n`.
    pub fn sphere_measure(&self) -> f64 {
        unit_sphere_measure(self.n)
    }
}

pub fn unit_sphere_measure(n: usize) -> f64 {
    match n {
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        _ => unreachable!("only n = 1, 2 are supported"),
    }
}

/// `s_a(t) = sinh(a t) / a`.
#[inline]
pub fn s_a(a: f64, t: f64) -> f64 {
    (a * t).sinh() / a
}

/// `c_a(t) = cosh(a t)`.
#[inline]
pub fn c_a(a: f64, t: f64) -> f64 {
    (a * t).cosh()
}

/// `ta_a(t) = s_a(t) / c_a(t)`.
#[inline]
pub fn ta_a(a: f64, t: f64) -> f64 {
    (a * t).tanh() / a
}

/// `co_a(t) = c_a(t) / s_a(t)`, infinite at the pole `t = 0`.
#[inline]
pub fn co_a(a: f64, t: f64) -> f64 {
    a / (a * t).tanh()
}

/// The four hyperbolic functions at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypFns {
    pub s: f64,
    pub c: f64,
    pub ta: f64,
    t: f64,
    a: f64,
}

impl HypFns {
    pub fn co(&self) -> Result<f64, HypError> {
        if self.t == 0.0 {
            return Err(HypError::Domain("co_a has a pole at t = 0".into()));
        }
        Ok(co_a(self.a, self.t))
    }
}

pub fn hyp_fns(a: f64, t: f64) -> Result<HypFns, HypError> {
    if !(a > 0.0) {
        return Err(HypError::Domain(format!("a must be positive, got {a}")));
    }
    if !t.is_finite() || (a * t).abs() > MAX_ARG {
        return Err(HypError::Overflow((a * t).abs()));
    }
    Ok(HypFns { s: s_a(a, t), c: c_a(a, t), ta: ta_a(a, t), t, a })
}

/// `(c_a(t) - 1) / a^2` without cancellation for small `a t`.
#[inline]
pub fn ball_integral_1(a: f64, t: f64) -> f64 {
    let h = (0.5 * a * t).sinh();
    2.0 * h * h / (a * a)
}

/// `(s_a(t) c_a(t) - t) / (2 a^2)`, i.e. the integral of `s_a^2` over `[0, t]`.
#[inline]
pub fn ball_integral_2(a: f64, t: f64) -> f64 {
    // (sinh(2x) - 2x) / (4 a^3) with x = a t
    let y = 2.0 * a * t;
    sinh_minus_id(y) / (4.0 * a * a * a)
}

/// `sinh(y) - y` accurate near zero.
fn sinh_minus_id(y: f64) -> f64 {
    if y.abs() < 0.5 {
        let y2 = y * y;
        // y^3/3! (1 + y^2/20 (1 + y^2/42 (1 + y^2/72 (1 + y^2/110 (1 + y^2/156)))))
        let mut acc = 1.0 + y2 / 156.0;
        acc = 1.0 + y2 / 110.0 * acc;
        acc = 1.0 + y2 / 72.0 * acc;
        acc = 1.0 + y2 / 42.0 * acc;
        acc = 1.0 + y2 / 20.0 * acc;
        y * y2 / 6.0 * acc
    } else {
        y.sinh() - y
    }
}

/// A point given by its geodesic distance `r` from the origin and a unit
/// direction in `R^3` (the third component is zero in the `n = 1` plane).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPoint {
    pub r: f64,
    pub dir: [f64; 3],
}

impl HPoint {
    pub fn origin() -> Self {
        Self { r: 0.0, dir: [1.0, 0.0, 0.0] }
    }

    /// Point in the `n = 1` plane at polar angle `theta`.
    pub fn polar(r: f64, theta: f64) -> Self {
        Self { r, dir: [theta.cos(), theta.sin(), 0.0] }
    }

    /// Point in the meridian half-plane of an axisymmetric `n = 2` surface,
    /// `theta` measured from the symmetry axis.
    pub fn meridian(r: f64, theta: f64) -> Self {
        Self { r, dir: [theta.sin(), 0.0, theta.cos()] }
    }

    /// Point at signed distance `z` along the `n = 2` symmetry axis.
    pub fn on_axis(z: f64) -> Self {
        if z >= 0.0 {
            Self { r: z, dir: [0.0, 0.0, 1.0] }
        } else {
            Self { r: -z, dir: [0.0, 0.0, -1.0] }
        }
    }

    /// Point with "normal coordinates" `x` at the origin, i.e. `exp_o(x)`.
    pub fn from_tangent(x: [f64; 3]) -> Self {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r == 0.0 {
            return Self::origin();
        }
        Self { r, dir: [x[0] / r, x[1] / r, x[2] / r] }
    }

    pub fn tangent_coords(&self) -> [f64; 3] {
        [self.r * self.dir[0], self.r * self.dir[1], self.r * self.dir[2]]
    }

    pub fn is_valid(&self) -> bool {
        let norm = (self.dir[0].powi(2) + self.dir[1].powi(2) + self.dir[2].powi(2)).sqrt();
        self.r >= 0.0 && self.r.is_finite() && (norm - 1.0).abs() < 1e-9
    }

    /// Embedding on the hyperboloid `<X, X> = -1/a^2`.
    pub fn embed(&self, a: f64) -> Mink {
        let s = s_a(a, self.r);
        Mink([c_a(a, self.r) / a, s * self.dir[0], s * self.dir[1], s * self.dir[2]])
    }

    /// Inverse of [`HPoint::embed`].
    pub fn from_embedding(a: f64, x: &Mink) -> Self {
        let sp = (x.0[1].powi(2) + x.0[2].powi(2) + x.0[3].powi(2)).sqrt();
        if sp == 0.0 {
            return Self::origin();
        }
        let r = (a * sp).asinh() / a;
        Self { r, dir: [x.0[1] / sp, x.0[2] / sp, x.0[3] / sp] }
    }

    /// Unit radial vector `d/dr` at this point, in ambient coordinates.
    pub fn radial_unit(&self, a: f64) -> Mink {
        let sh = (a * self.r).sinh();
        let ch = (a * self.r).cosh();
        Mink([sh, ch * self.dir[0], ch * self.dir[1], ch * self.dir[2]])
    }
}

/// A vector of Minkowski space `R^{3,1}`, time component first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mink(pub [f64; 4]);

impl Mink {
    #[inline]
    pub fn dot(&self, other: &Mink) -> f64 {
        -self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2] + self.0[3] * other.0[3]
    }

    pub fn scale(&self, k: f64) -> Mink {
        Mink(self.0.map(|x| k * x))
    }

    pub fn add(&self, other: &Mink) -> Mink {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o += b;
        }
        Mink(out)
    }

    pub fn sub(&self, other: &Mink) -> Mink {
        self.add(&other.scale(-1.0))
    }
}

/// Hyperbolic distance between two points.
pub fn distance(a: f64, p: &HPoint, q: &HPoint) -> f64 {
    // sinh(a d / 2) = (a / 2) |P - Q|_M, with the time difference written as a
    // product of sinh terms to avoid cancellation.
    let dt = 2.0 * (0.5 * a * (p.r + q.r)).sinh() * (0.5 * a * (p.r - q.r)).sinh() / a;
    let sp = s_a(a, p.r);
    let sq = s_a(a, q.r);
    let mut spatial = 0.0;
    for k in 0..3 {
        let d = sp * p.dir[k] - sq * q.dir[k];
        spatial += d * d;
    }
    let chord2 = (spatial - dt * dt).max(0.0);
    2.0 * (0.5 * a * chord2.sqrt()).asinh() / a
}

/// Unit tangent at `q` of the geodesic from `p` through `q`, pointing away
/// from `p`. This is the gradient of `r_p` at `q`.
pub fn radial_tangent(a: f64, p: &HPoint, q: &HPoint) -> Result<Mink, HypError> {
    let d = distance(a, p, q);
    if d == 0.0 {
        return Err(HypError::Degenerate);
    }
    let pe = p.embed(a);
    let qe = q.embed(a);
    let t = qe.scale(c_a(a, d)).sub(&pe).scale(1.0 / s_a(a, d));
    // remove roundoff components along Q and renormalise
    let along = t.dot(&qe) * (-a * a);
    let t = t.sub(&qe.scale(along));
    let norm = t.dot(&t).sqrt();
    Ok(t.scale(1.0 / norm))
}

/// Which integrand defines the forward map of [`psi`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiVariant {
    /// `vol(S^n) * int_0^s s_a(l)^n dl`, the volume of a geodesic ball.
    #[default]
    BallVolume,
    /// `vol(S^n) * int_0^s s_a(l) dl` for every `n`.
    LinearIntegrand,
}

/// Volume of the geodesic ball of radius `s` (or the linear-integrand variant).
pub fn psi_forward(a: f64, n: usize, s: f64, variant: PsiVariant) -> f64 {
    let power = match variant {
        PsiVariant::BallVolume => n,
        PsiVariant::LinearIntegrand => 1,
    };
    let integral = match power {
        1 => ball_integral_1(a, s),
        _ => ball_integral_2(a, s),
    };
    unit_sphere_measure(n) * integral
}

fn psi_forward_derivative(a: f64, n: usize, s: f64, variant: PsiVariant) -> f64 {
    let power = match variant {
        PsiVariant::BallVolume => n as i32,
        PsiVariant::LinearIntegrand => 1,
    };
    unit_sphere_measure(n) * s_a(a, s).powi(power)
}

/// Radius of the geodesic ball of volume `volume`.
pub fn psi(a: f64, n: usize, volume: f64) -> Result<f64, HypError> {
    psi_with(a, n, volume, PsiVariant::BallVolume)
}

pub fn psi_with(a: f64, n: usize, volume: f64, variant: PsiVariant) -> Result<f64, HypError> {
    if !(volume > 0.0) {
        return Err(HypError::Domain(format!("psi needs a positive volume, got {volume}")));
    }
    invert_increasing(
        |s| (psi_forward(a, n, s, variant), psi_forward_derivative(a, n, s, variant)),
        volume,
        MAX_ARG / a,
    )
}

/// `s + a ln((1 + sqrt(ta_a(s/2)))^2 / (1 + ta_a(s/2)))`.
pub fn xi_forward(a: f64, s: f64) -> f64 {
    let x = ta_a(a, 0.5 * s);
    s + a * (2.0 * x.sqrt().ln_1p() - x.ln_1p())
}

fn xi_forward_derivative(a: f64, s: f64) -> f64 {
    let x = ta_a(a, 0.5 * s);
    if x <= 0.0 {
        return f64::INFINITY;
    }
    let sech = 1.0 / (0.5 * a * s).cosh();
    let dx = 0.5 * sech * sech;
    let rx = x.sqrt();
    1.0 + a * (1.0 / (rx * (1.0 + rx)) - 1.0 / (1.0 + x)) * dx
}

/// Inverse of [`xi_forward`].
pub fn xi(a: f64, s: f64) -> Result<f64, HypError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(HypError::Domain(format!("xi is defined on (0, inf), got {s}")));
    }
    invert_increasing(|x| (xi_forward(a, x), xi_forward_derivative(a, x)), s, MAX_ARG / a)
}

/// Upper bound on the distance from the inball center to the boundary in
/// terms of the inradius; `xi` inverts this map.
pub fn max_distance_bound(a: f64, rho: f64) -> f64 {
    xi_forward(a, rho)
}

/// The diameter bound `2 (c + a ln 2)` together with the variant that scales
/// the logarithm as a length, `2 (c + ln 2 / a)`. They agree at `a = 1`.
pub fn diameter_bounds(a: f64, radius_bound: f64) -> (f64, f64) {
    (2.0 * (radius_bound + a * LN_2), 2.0 * (radius_bound + LN_2 / a))
}

/// Solves `f(x) = target` for a smooth increasing `f` with `f(0) <= target`.
/// `f` returns the value and the derivative. The bracket `[0, hi]` is grown
/// geometrically up to `cap`; Newton steps that leave the bracket fall back
/// to bisection.
pub(crate) fn invert_increasing<F>(f: F, target: f64, cap: f64) -> Result<f64, HypError>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut lo = 0.0;
    let mut hi = 1.0_f64.min(cap);
    while f(hi).0 < target {
        lo = hi;
        if hi >= cap {
            return Err(HypError::Overflow(hi));
        }
        hi = (hi * 2.0).min(cap);
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        let r = fx - target;
        if r == 0.0 {
            return Ok(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - r / dfx;
        let next = if dfx.is_finite() && dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-16 * x.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    // bisection bracket has collapsed to rounding level by now
    if hi - lo <= 1e-12 * hi.max(1.0) {
        Ok(0.5 * (lo + hi))
    } else {
        Err(HypError::NoConvergence(target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_case() {
        let f = hyp_fns(1.0, 0.0).unwrap();
        assert_eq!((f.s, f.c, f.ta), (0.0, 1.0, 0.0));
        assert!(matches!(f.co(), Err(HypError::Domain(_))));
    }

    #[test]
    fn reference_values() {
        // sinh(2)/2 and coth(1) to 1e-7
        assert!((hyp_fns(2.0, 1.0).unwrap().s - 1.813_430_2).abs() < 1e-7);
        assert!((hyp_fns(1.0, 1.0).unwrap().co().unwrap() - 1.313_035_3).abs() < 1e-7);
    }

    #[test]
    fn overflow_guard() {
        assert!(matches!(hyp_fns(2.0, 30.0), Err(HypError::Overflow(_))));
        assert!(hyp_fns(1.0, 50.0).is_ok());
    }

    #[test]
    fn distances() {
        let p = HPoint::polar(1.0, 0.0);
        assert_eq!(distance(1.0, &p, &p), 0.0);
        let q = HPoint::polar(1.0, PI);
        assert!((distance(1.0, &p, &q) - 2.0).abs() < 1e-14);
        let q = HPoint::polar(1.0, 0.5 * PI);
        let expected = (1.0_f64.cosh().powi(2)).acosh();
        assert!((distance(1.0, &p, &q) - expected).abs() < 1e-13);
        // arccosh(cosh^2 1) evaluated at 30 digits
        assert!((expected - 1.513_374_006_596_504).abs() < 1e-14);
    }

    #[test]
    fn tangent_on_radial_ray() {
        let p = HPoint::polar(0.5, 0.3);
        let q = HPoint::polar(1.7, 0.3);
        let t = radial_tangent(1.3, &p, &q).unwrap();
        let radial = q.radial_unit(1.3);
        for k in 0..4 {
            assert!((t.0[k] - radial.0[k]).abs() < 1e-12);
        }
        assert!(matches!(radial_tangent(1.0, &p, &p), Err(HypError::Degenerate)));
    }

    #[test]
    fn psi_closed_forms() {
        let v = 2.0 * PI * (1.0_f64.cosh() - 1.0);
        assert!((psi(1.0, 1, v).unwrap() - 1.0).abs() < 1e-12);
        // closed form for n = 2 at s = 0.7
        let s: f64 = 0.7;
        let v2 = 4.0 * PI * (s.sinh() * s.cosh() - s) / 2.0;
        assert!((psi(1.0, 2, v2).unwrap() - 0.7).abs() < 1e-10);
        assert!(psi(1.0, 2, 0.0).is_err());
        assert!(psi(1.0, 2, -1.0).is_err());
    }

    #[test]
    fn psi_variants_differ_only_for_surfaces() {
        let v = 3.0;
        assert_eq!(
            psi_with(0.7, 1, v, PsiVariant::BallVolume).unwrap(),
            psi_with(0.7, 1, v, PsiVariant::LinearIntegrand).unwrap()
        );
        assert_ne!(
            psi_with(0.7, 2, v, PsiVariant::BallVolume).unwrap(),
            psi_with(0.7, 2, v, PsiVariant::LinearIntegrand).unwrap()
        );
    }

    #[test]
    fn xi_round_trip() {
        let f = xi_forward(1.0, 1.0);
        assert!((xi(1.0, f).unwrap() - 1.0).abs() < 1e-10);
        assert!(xi(1.0, 0.0).is_err());
        assert!(xi(1.0, -2.0).is_err());
    }

    #[test]
    fn xi_forward_exceeds_identity() {
        for k in 1..400 {
            let s = 0.01 * k as f64;
            assert!(xi_forward(1.0, s) > s);
            assert!(xi(1.0, s).unwrap() < s);
        }
    }

    #[test]
    fn diameter_variants_agree_at_unit_scale() {
        let (p, q) = diameter_bounds(1.0, 2.0);
        assert_eq!(p, q);
        let (p, q) = diameter_bounds(2.0, 2.0);
        assert!(p > q);
    }
}
