//! Second-order forward-mode dual numbers.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// A value carried together with its first and second derivative with
/// respect to a single scalar input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Dual2 {
    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    /// The independent variable at `x`.
    pub const fn variable(x: f64) -> Self {
        Self { v: x, d1: 1.0, d2: 0.0 }
    }

    /// Applies `f` given `f(v)`, `f'(v)` and `f''(v)`.
    #[inline]
    pub fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self { v: f, d1: df * self.d1, d2: ddf * self.d1 * self.d1 + df * self.d2 }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    /// Natural logarithm; the caller guarantees `v > 0`.
    pub fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }

    /// Square root; the caller guarantees `v > 0`.
    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn sinh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.chain(s, c, s)
    }

    pub fn cosh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.chain(c, s, c)
    }

    /// Real power `v^k`.
    pub fn powf(self, k: f64) -> Self {
        if k == 0.0 {
            return Self::constant(1.0);
        }
        if k.fract() == 0.0 && k.abs() < i32::MAX as f64 {
            let ki = k as i32;
            let f = self.v.powi(ki);
            let df = k * self.v.powi(ki - 1);
            let ddf = k * (k - 1.0) * self.v.powi(ki - 2);
            return self.chain(f, df, if ki == 1 { 0.0 } else { ddf });
        }
        let f = self.v.powf(k);
        let df = k * self.v.powf(k - 1.0);
        let ddf = k * (k - 1.0) * self.v.powf(k - 2.0);
        self.chain(f, df, ddf)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    pub fn has_nan(&self) -> bool {
        self.v.is_nan() || self.d1.is_nan() || self.d2.is_nan()
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2 }
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        }
    }
}

impl Div for Dual2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        let q1 = (self.d1 - q * o.d1) / o.v;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.v;
        Self { v: q, d1: q1, d2: q2 }
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, d1: -self.d1, d2: -self.d2 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-4 * x.abs().max(1.0);
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (d1, d2)
    }

    #[test]
    fn quotient_and_product_rules() {
        let x = Dual2::variable(1.7);
        let g = (x * x.sinh()) / (Dual2::constant(1.0) + x.exp());
        let (d1, d2) = fd(|t| t * t.sinh() / (1.0 + t.exp()), 1.7);
        assert!((g.d1 - d1).abs() < 1e-7);
        assert!((g.d2 - d2).abs() < 1e-5);
    }

    #[test]
    fn integer_powers_of_negative_base() {
        let g = Dual2::variable(-2.0).powf(3.0);
        assert_eq!((g.v, g.d1, g.d2), (-8.0, 12.0, -12.0));
        let g = Dual2::variable(0.0).powf(2.0);
        assert_eq!((g.v, g.d1, g.d2), (0.0, 0.0, 2.0));
    }
}
