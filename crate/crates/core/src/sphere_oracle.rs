//! Exact geodesic-sphere solutions used as ground truth.

use std::f64::consts::PI;

use thiserror::Error;

use crate::flow::Constraint;
use crate::hypmath::{self, co_a, s_a, HypError, SpaceParams};
use crate::speed::{SpeedError, SpeedFunction};

/// Step size of the reference integrator.
pub const REFERENCE_DT: f64 = 1e-5;

/// Radius below which a shrinking sphere counts as collapsed.
pub const COLLAPSE_RADIUS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("sphere collapsed at t = {time}")]
    Collapse { time: f64 },
    #[error("target must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error(transparent)]
    Hyp(#[from] HypError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereState {
    pub radius: f64,
    pub space: SpaceParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereQuantities {
    pub mean: f64,
    pub area: f64,
    pub volume: f64,
}

pub fn sphere_quantities(s: &SphereState) -> SphereQuantities {
    let (a, n, r) = (s.space.a, s.space.n, s.radius);
    let sr = s_a(a, r);
    let (area, volume) = match n {
        1 => (2.0 * PI * sr, 2.0 * PI * hypmath::ball_integral_1(a, r)),
        _ => (4.0 * PI * sr * sr, 4.0 * PI * hypmath::ball_integral_2(a, r)),
    };
    SphereQuantities { mean: n as f64 * co_a(a, r), area, volume }
}

/// Right side of the radius ODE `r' = h - phi(n co_a(r))`.
fn radius_rate(space: &SpaceParams, speed: &SpeedFunction, forcing: Constraint, r: f64) -> Result<f64, SpeedError> {
    let phi = speed.value(space.n as f64 * co_a(space.a, r))?;
    // any constrained forcing averages a constant integrand on a sphere
    let h = match forcing {
        Constraint::Standard => 0.0,
        Constraint::Volume | Constraint::Area => phi,
    };
    Ok(h - phi)
}

/// RK4 solution of the sphere radius ODE, reported at each of `times`
/// (ascending, starting at or after 0). Steps are shortened to land on the
/// requested times exactly.
pub fn standard_flow_ode(
    s: &SphereState,
    speed: &SpeedFunction,
    times: &[f64],
    dt: f64,
) -> Result<Vec<f64>, OracleError> {
    sphere_ode(s, speed, Constraint::Standard, times, dt)
}

pub fn sphere_ode(
    s: &SphereState,
    speed: &SpeedFunction,
    forcing: Constraint,
    times: &[f64],
    dt: f64,
) -> Result<Vec<f64>, OracleError> {
    let f = |r: f64| radius_rate(&s.space, speed, forcing, r);
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut r) = (0.0, s.radius);
    for &target in times {
        while t < target {
            let h = dt.min(target - t);
            let k1 = f(r)?;
            let k2 = f(r + 0.5 * h * k1)?;
            let k3 = f(r + 0.5 * h * k2)?;
            let k4 = f(r + h * k3)?;
            r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = if target - t <= dt { target } else { t + h };
            if !(r > COLLAPSE_RADIUS) {
                return Err(OracleError::Collapse { time: t });
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Value prescribed by a constrained run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Volume(f64),
    Area(f64),
}

/// Radius of the geodesic sphere with the given volume or area.
pub fn radius_from_constraint(target: Target, space: &SpaceParams) -> Result<f64, OracleError> {
    let (a, n) = (space.a, space.n);
    let value = match target {
        Target::Volume(v) | Target::Area(v) => v,
    };
    if !(value > 0.0) {
        return Err(OracleError::NonPositiveTarget(value));
    }
    let radius = match target {
        Target::Volume(v) => hypmath::psi(a, n, v)?,
        Target::Area(area) => hypmath::invert_increasing(
            |r| {
                let q = sphere_quantities(&SphereState { radius: r, space: *space });
                // dA/dR = n vol(S^n) s_a^{n-1} c_a
                let deriv = n as f64 * space.sphere_measure() * s_a(a, r).powi(n as i32 - 1) * hypmath::c_a(a, r);
                (q.area, deriv)
            },
            area,
            hypmath::MAX_ARG / a,
        )?,
    };
    Ok(radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed::parse_speed;

    fn space(a: f64, n: usize) -> SpaceParams {
        SpaceParams::new(a, n).unwrap()
    }

    #[test]
    fn unit_circle_quantities() {
        let q = sphere_quantities(&SphereState { radius: 1.0, space: space(1.0, 1) });
        assert!((q.mean - 1.313_035_285_499_331).abs() < 1e-14);
        assert!((q.area - 2.0 * PI * 1.0_f64.sinh()).abs() < 1e-14);
        assert!((q.volume - 2.0 * PI * (1.0_f64.cosh() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn euclidean_limit() {
        let q = sphere_quantities(&SphereState { radius: 1.3, space: space(1e-4, 1) });
        assert!((q.area - 2.0 * PI * 1.3).abs() < 1e-6);
        assert!((q.volume - PI * 1.3 * 1.3).abs() < 1e-6);
        let q = sphere_quantities(&SphereState { radius: 1.3, space: space(1e-4, 2) });
        assert!((q.area - 4.0 * PI * 1.69).abs() < 1e-6);
        assert!((q.volume - 4.0 / 3.0 * PI * 1.3_f64.powi(3)).abs() < 1e-6);
    }

    #[test]
    fn volume_derivative_is_area() {
        for n in [1, 2] {
            for r in [0.2, 1.0, 3.5] {
                let sp = space(0.8, n);
                let v = |r| sphere_quantities(&SphereState { radius: r, space: sp }).volume;
                let h = 1e-5 * r;
                let dv = (v(r + h) - v(r - h)) / (2.0 * h);
                let area = sphere_quantities(&SphereState { radius: r, space: sp }).area;
                assert!(((dv - area) / area).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn inverse_closed_forms() {
        let sp = space(1.0, 1);
        let r = radius_from_constraint(Target::Volume(2.0 * PI * (2.0_f64.cosh() - 1.0)), &sp).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        let r = radius_from_constraint(Target::Area(2.0 * PI * 1.5_f64.sinh()), &sp).unwrap();
        assert!((r - 1.5).abs() < 1e-12);
        assert!(radius_from_constraint(Target::Area(0.0), &sp).is_err());
    }

    #[test]
    fn constrained_sphere_is_stationary() {
        let f = parse_speed("H^2").unwrap();
        let s = SphereState { radius: 0.9, space: space(1.0, 2) };
        let out = sphere_ode(&s, &f, Constraint::Volume, &[0.5, 1.0], 1e-3).unwrap();
        assert_eq!(out, vec![0.9, 0.9]);
    }

    #[test]
    fn standard_flow_shrinks_and_collapses() {
        let f = parse_speed("H").unwrap();
        let s = SphereState { radius: 1.0, space: space(1.0, 1) };
        let times: Vec<f64> = (1..=10).map(|k| 0.01 * k as f64).collect();
        let r = standard_flow_ode(&s, &f, &times, 1e-4).unwrap();
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        let err = standard_flow_ode(&s, &f, &[5.0], 1e-4).unwrap_err();
        assert!(matches!(err, OracleError::Collapse { time } if time < 5.0));
    }
}
