//! Grid-based screening of a speed law against the four structural
//! conditions required of `phi`:
//!
//! 1. `phi > 0` and `phi' > 0`,
//! 2. `phi -> inf`,
//! 3. `phi' a^2 / phi -> inf`,
//! 4. `phi'' a >= -2 phi'`.
//!
//! Conditions 1 and 4 are pointwise and are checked on every grid sample.
//! Conditions 2 and 3 are limits; the grid can only supply evidence for or
//! against them, so an honest answer is often "inconclusive".

use serde::Serialize;

use super::{SpeedError, SpeedFunction};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// Violated at `alpha`; `value` is the offending quantity.
    Fail { alpha: f64, value: f64 },
    Inconclusive { alpha: Option<f64>, reason: String },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    fn label(&self) -> String {
        match self {
            Verdict::Pass => "pass".into(),
            Verdict::Fail { alpha, value } => format!("FAIL at H = {alpha:.6e} (value {value:.6e})"),
            Verdict::Inconclusive { alpha: Some(a), reason } => format!("inconclusive at H = {a:.6e}: {reason}"),
            Verdict::Inconclusive { alpha: None, reason } => format!("inconclusive: {reason}"),
        }
    }
}

/// Log-spaced sample points for the mean curvature argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self { min: 1e-6, max: 1e6, points: 241 }
    }
}

impl AlphaGrid {
    pub fn validate(&self) -> Result<(), SpeedError> {
        if !(self.min > 0.0 && self.min <= 1e-6) || !(self.max >= 1e6) || !self.max.is_finite() {
            return Err(SpeedError::Grid(format!(
                "grid must span at least [1e-6, 1e6], got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.points < 200 {
            return Err(SpeedError::Grid(format!("need at least 200 points, got {}", self.points)));
        }
        Ok(())
    }

    pub fn samples(&self) -> Vec<f64> {
        let (l0, l1) = (self.min.ln(), self.max.ln());
        let last = self.points - 1;
        (0..self.points)
            .map(|i| match i {
                0 => self.min,
                i if i == last => self.max,
                i => (l0 + (l1 - l0) * i as f64 / last as f64).exp(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityOptions {
    /// `phi` must exceed this at the largest sample for condition 2.
    pub phi_threshold: f64,
    /// `phi' a^2 / phi` must exceed this at the largest sample for condition 3.
    pub growth_threshold: f64,
    /// A log-log slope below this at the largest sample counts as saturation.
    pub elasticity_floor: f64,
    /// Promote inconclusive limit conditions to pass on the user's word.
    pub attest_limits: bool,
}

impl Default for AdmissibilityOptions {
    fn default() -> Self {
        Self { phi_threshold: 1e3, growth_threshold: 1e3, elasticity_floor: 1e-3, attest_limits: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub expr: String,
    pub cond_i: Verdict,
    pub cond_ii: Verdict,
    pub cond_iii: Verdict,
    pub cond_iv: Verdict,
    pub convex: bool,
    /// Sampled domain actually evaluated, after any overflow truncation.
    pub checked_min: f64,
    pub checked_max: f64,
    pub samples: usize,
    pub notes: Vec<String>,
}

impl AdmissibilityReport {
    /// No condition failed. Inconclusive limit conditions are allowed.
    pub fn is_admissible(&self) -> bool {
        !self.conditions().iter().any(|(_, v)| v.is_fail())
    }

    pub fn all_pass(&self) -> bool {
        self.conditions().iter().all(|(_, v)| v.is_pass())
    }

    pub fn conditions(&self) -> [(&'static str, &Verdict); 4] {
        [
            ("i   phi > 0, phi' > 0", &self.cond_i),
            ("ii  phi -> inf", &self.cond_ii),
            ("iii phi' H^2 / phi -> inf", &self.cond_iii),
            ("iv  phi'' H >= -2 phi'", &self.cond_iv),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("speed law: {}\n", self.expr);
        out += &format!(
            "checked domain: [{:.3e}, {:.3e}], {} samples\n",
            self.checked_min, self.checked_max, self.samples
        );
        for (name, v) in self.conditions() {
            out += &format!("  {:<28} {}\n", name, v.label());
        }
        out += &format!("  {:<28} {}\n", "convex on grid", self.convex);
        out += &format!(
            "verdict: {}\n",
            if self.all_pass() {
                "admissible"
            } else if self.is_admissible() {
                "admissible (with inconclusive limits)"
            } else {
                "REJECTED"
            }
        );
        for note in &self.notes {
            out += &format!("note: {note}\n");
        }
        out
    }
}

struct Sample {
    alpha: f64,
    phi: f64,
    d1: f64,
    d2: f64,
}

pub fn check_admissibility(
    f: &SpeedFunction,
    grid: &AlphaGrid,
    opts: &AdmissibilityOptions,
) -> Result<AdmissibilityReport, SpeedError> {
    grid.validate()?;
    let mut notes = vec![
        "verdicts are numerical evidence on the sampled grid, not a proof".to_string(),
        "phi is only ever evaluated at H > 0; behaviour at 0 is not checked".to_string(),
    ];

    let mut samples = Vec::with_capacity(grid.points);
    let mut domain_errors = Vec::new();
    for alpha in grid.samples() {
        match f.eval(alpha) {
            Ok(d) => samples.push(Sample { alpha, phi: d.v, d1: d.d1, d2: d.d2 }),
            Err(SpeedError::Overflow { alpha }) => {
                notes.push(format!("grid truncated at H = {alpha:.6e}: floating-point overflow"));
                break;
            }
            Err(SpeedError::Domain { alpha, op }) => domain_errors.push((alpha, op)),
            Err(e) => return Err(e),
        }
    }
    let first_domain = domain_errors.first().map(|(a, _)| *a);
    for (alpha, op) in domain_errors.iter().take(3) {
        notes.push(format!("domain error in {op} at H = {alpha:.6e}"));
    }

    let (checked_min, checked_max) = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (a.alpha, b.alpha),
        _ => {
            let v = Verdict::Inconclusive { alpha: first_domain, reason: "no sample could be evaluated".into() };
            return Ok(AdmissibilityReport {
                expr: f.source().to_string(),
                cond_i: v.clone(),
                cond_ii: v.clone(),
                cond_iii: v.clone(),
                cond_iv: v,
                convex: false,
                checked_min: f64::NAN,
                checked_max: f64::NAN,
                samples: 0,
                notes,
            });
        }
    };

    let pointwise = |check: &dyn Fn(&Sample) -> Option<f64>| -> Verdict {
        for s in &samples {
            if let Some(value) = check(s) {
                return Verdict::Fail { alpha: s.alpha, value };
            }
        }
        match first_domain {
            Some(a) => Verdict::Inconclusive { alpha: Some(a), reason: "evaluation left its domain".into() },
            None => Verdict::Pass,
        }
    };

    let cond_i = pointwise(&|s| {
        if !(s.phi > 0.0) {
            Some(s.phi)
        } else if !(s.d1 > 0.0) {
            Some(s.d1)
        } else {
            None
        }
    });
    let mut cond_iv = pointwise(&|s| {
        let margin = s.d2 * s.alpha + 2.0 * s.d1;
        let scale = (s.d2 * s.alpha).abs() + 2.0 * s.d1.abs();
        (margin < -1e-12 * scale).then_some(margin)
    });

    let tail_start = (samples.len() * 9) / 10;
    let tail = &samples[tail_start.min(samples.len() - 1)..];
    let last = samples.last().expect("non-empty");

    let mut cond_ii = limit_verdict(
        tail.iter().map(|s| s.phi),
        last.phi,
        last.d1 * last.alpha / last.phi,
        last.alpha,
        opts.phi_threshold,
        opts,
    );
    let growth = |s: &Sample| s.d1 * s.alpha * s.alpha / s.phi;
    // d ln q / d ln H for q = phi' H^2 / phi
    let growth_elasticity = last.d2 * last.alpha / last.d1 + 2.0 - last.d1 * last.alpha / last.phi;
    let mut cond_iii = limit_verdict(
        tail.iter().map(growth),
        growth(last),
        growth_elasticity,
        last.alpha,
        opts.growth_threshold,
        opts,
    );
    if first_domain.is_some() {
        for c in [&mut cond_ii, &mut cond_iii] {
            if !c.is_fail() {
                *c = Verdict::Inconclusive { alpha: first_domain, reason: "evaluation left its domain".into() };
            }
        }
    }

    let convex = first_domain.is_none() && is_convex(&samples);
    if convex {
        notes.push("phi'' >= 0 with phi, phi' > 0 on the grid: ii)-iv) pass by convexity remark".into());
        cond_ii = Verdict::Pass;
        cond_iii = Verdict::Pass;
        cond_iv = Verdict::Pass;
    }
    if opts.attest_limits {
        for c in [&mut cond_ii, &mut cond_iii] {
            if matches!(c, Verdict::Inconclusive { .. }) {
                *c = Verdict::Pass;
                notes.push("inconclusive limit condition promoted to pass by user attestation".into());
            }
        }
    }
    if samples.len() < grid.points && first_domain.is_none() && cond_i.is_pass() {
        // overflow truncation: pointwise checks only cover the evaluated range
        notes.push(format!("pointwise conditions checked on [{checked_min:.3e}, {checked_max:.3e}] only"));
    }
    Ok(AdmissibilityReport {
        expr: f.source().to_string(),
        cond_i,
        cond_ii,
        cond_iii,
        cond_iv,
        convex,
        checked_min,
        checked_max,
        samples: samples.len(),
        notes,
    })
}

/// Evidence for `q(alpha) -> inf` from the grid tail: increasing and above
/// `threshold` passes, a vanishing log-log slope fails, anything else is
/// inconclusive.
fn limit_verdict(
    tail: impl Iterator<Item = f64>,
    last_value: f64,
    elasticity: f64,
    last_alpha: f64,
    threshold: f64,
    opts: &AdmissibilityOptions,
) -> Verdict {
    let tail: Vec<f64> = tail.collect();
    let increasing = tail.windows(2).all(|w| w[1] >= w[0]) && tail.last() > tail.first();
    if increasing && last_value > threshold {
        Verdict::Pass
    } else if elasticity.is_finite() && elasticity < opts.elasticity_floor {
        Verdict::Fail { alpha: last_alpha, value: last_value }
    } else if !increasing {
        Verdict::Inconclusive { alpha: Some(last_alpha), reason: "not increasing on the grid tail".into() }
    } else {
        Verdict::Inconclusive {
            alpha: Some(last_alpha),
            reason: format!("still growing (log-slope {elasticity:.3}) but below threshold {threshold:.1e}"),
        }
    }
}

fn is_convex(samples: &[Sample]) -> bool {
    !samples.is_empty() && samples.iter().all(|s| s.d2 >= 0.0 && s.phi > 0.0 && s.d1 > 0.0)
}

/// True when `phi'' >= 0` and `phi, phi' > 0` on the whole grid, in which
/// case conditions ii)-iv) follow from convexity.
pub fn convexity_shortcut(f: &SpeedFunction, grid: &AlphaGrid) -> bool {
    let mut samples = Vec::new();
    for alpha in grid.samples() {
        match f.eval(alpha) {
            Ok(d) => samples.push(Sample { alpha, phi: d.v, d1: d.d1, d2: d.d2 }),
            Err(SpeedError::Overflow { .. }) => break,
            Err(_) => return false,
        }
    }
    is_convex(&samples)
}
