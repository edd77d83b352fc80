//! Speed laws `phi(H)`: parsing, evaluation with exact first and second
//! derivatives, and admissibility screening.

mod admissibility;
mod dual;
mod parse;

use std::fmt;

use thiserror::Error;

pub use admissibility::{check_admissibility, convexity_shortcut, AdmissibilityOptions, AdmissibilityReport, AlphaGrid, Verdict};
pub use dual::Dual2;
pub use parse::{Expr, Func};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error("syntax error at column {}: {msg}", pos + 1)]
    Syntax { pos: usize, msg: String },
    #[error("domain error in {op} at H = {alpha}")]
    Domain { alpha: f64, op: &'static str },
    #[error("overflow evaluating the speed at H = {alpha}")]
    Overflow { alpha: f64 },
    #[error("invalid sampling grid: {0}")]
    Grid(String),
}

/// A parsed speed law. Immutable once built.
#[derive(Clone, PartialEq)]
pub struct SpeedFunction {
    source: String,
    expr: Expr,
}

impl fmt::Debug for SpeedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpeedFunction({:?})", self.source)
    }
}

impl fmt::Display for SpeedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

pub fn parse_speed(source: &str) -> Result<SpeedFunction, SpeedError> {
    let expr = parse::parse(source)?;
    Ok(SpeedFunction { source: source.trim().to_string(), expr })
}

impl SpeedFunction {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// `(phi, phi', phi'')` at `alpha`.
    pub fn eval(&self, alpha: f64) -> Result<Dual2, SpeedError> {
        let d = eval_node(&self.expr, Dual2::variable(alpha), alpha)?;
        if d.has_nan() {
            return Err(SpeedError::Domain { alpha, op: "evaluation" });
        }
        if !d.is_finite() {
            return Err(SpeedError::Overflow { alpha });
        }
        Ok(d)
    }

    /// Value only, without derivative bookkeeping.
    pub fn value(&self, alpha: f64) -> Result<f64, SpeedError> {
        self.eval(alpha).map(|d| d.v)
    }

    /// Admissibility report on the default grid `[1e-6, 1e6]`, 241 points.
    pub fn admissibility(&self) -> AdmissibilityReport {
        check_admissibility(self, &AlphaGrid::default(), &AdmissibilityOptions::default())
            .expect("default grid is valid")
    }
}

fn eval_node(e: &Expr, x: Dual2, alpha: f64) -> Result<Dual2, SpeedError> {
    let d = eval_inner(e, x, alpha)?;
    if d.v.is_infinite() || d.d1.is_infinite() || d.d2.is_infinite() {
        return Err(SpeedError::Overflow { alpha });
    }
    Ok(d)
}

fn eval_inner(e: &Expr, x: Dual2, alpha: f64) -> Result<Dual2, SpeedError> {
    Ok(match e {
        Expr::Var => x,
        Expr::Num(c) => Dual2::constant(*c),
        Expr::Add(l, r) => eval_node(l, x, alpha)? + eval_node(r, x, alpha)?,
        Expr::Sub(l, r) => eval_node(l, x, alpha)? - eval_node(r, x, alpha)?,
        Expr::Mul(l, r) => eval_node(l, x, alpha)? * eval_node(r, x, alpha)?,
        Expr::Div(l, r) => {
            let num = eval_node(l, x, alpha)?;
            let den = eval_node(r, x, alpha)?;
            if den.v == 0.0 {
                return Err(SpeedError::Domain { alpha, op: "division" });
            }
            num / den
        }
        Expr::Pow(b, k) => {
            let b = eval_node(b, x, alpha)?;
            let integer = k.fract() == 0.0;
            if b.v < 0.0 && !integer {
                return Err(SpeedError::Domain { alpha, op: "power" });
            }
            if b.v == 0.0 && !(integer && *k >= 2.0) && *k != 0.0 {
                return Err(SpeedError::Domain { alpha, op: "power" });
            }
            b.powf(*k)
        }
        Expr::Call(f, arg) => {
            let a = eval_node(arg, x, alpha)?;
            match f {
                Func::Exp => a.exp(),
                Func::Sinh => a.sinh(),
                Func::Cosh => a.cosh(),
                Func::Log if a.v > 0.0 => a.ln(),
                Func::Sqrt if a.v > 0.0 => a.sqrt(),
                Func::Log | Func::Sqrt => return Err(SpeedError::Domain { alpha, op: f.name() }),
            }
        }
    })
}
