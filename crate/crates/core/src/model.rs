//! The harvested one-predator two-prey model with distributed delay.
//!
//! With the fixed coefficient choice used throughout, the system reads
//!
//! ```text
//! x1' = x1 (1 - x1 - x2 - a x3)
//! x2' = x2 (1 - 1.5 x1 - x2 - x3)
//! x3' = x3 (-1 + (a/2) (f_E * x1)(t) + (1/2) (f_E * x2)(t)) - H
//! ```
//!
//! where `f_E * x` is the convolution of the history with the delay density.
//! Only `a` and the harvest rate `H` are free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible predation coefficient, `2 + sqrt(2)`.
pub const A_MIN: f64 = 2.0 + std::f64::consts::SQRT_2;

/// Tolerance used when checking fixed-point residuals.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Predation coefficient (`a13 = a`, `a31 = a/2`).
    pub a: f64,
    /// Harvest rate of the predator.
    #[serde(rename = "H")]
    pub h: f64,
}

impl ModelParams {
    pub fn new(a: f64, h: f64) -> Self {
        Self { a, h }
    }

    /// `(a - 2)(2a - 1)`, the leading coefficient of the equilibrium quadratic.
    fn quad_leading(&self) -> f64 {
        (self.a - 2.0) * (2.0 * self.a - 1.0)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { a: 4.0, h: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Equilibrium {
    pub fn as_array(&self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    fn from_x3(params: &ModelParams, x3: f64) -> Self {
        let a = params.a;
        Self {
            x1: 2.0 * (a - 1.0) * x3,
            x2: 1.0 - (3.0 * a - 2.0) * x3,
            x3,
        }
    }

    fn is_positive(&self) -> bool {
        self.x1 > 0.0 && self.x2 > 0.0 && self.x3 > 0.0
    }
}

/// Coefficients of the characteristic equation
/// `l^3 + a1 l^2 + a2 l + (a3 + a4 l) K(l) + a5 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
}

impl LinearCoeffs {
    /// Coefficients `[1, a1, a2 + a4, a3 + a5]` of the delay-free cubic.
    pub fn cubic(&self) -> [f64; 4] {
        [1.0, self.a1, self.a2 + self.a4, self.a3 + self.a5]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouthHurwitz {
    pub stable: bool,
    /// Slack of each inequality; all must be strictly positive.
    pub margins: Vec<(String, f64)>,
}

/// Stability inequalities applied to the delay-free cubic.
pub const ROUTH_HURWITZ_CONVENTION: &str = "Routh-Hurwitz on the delay-free cubic: a1 > 0, a2+a4 > 0, a3+a5 > 0, a1(a2+a4) > a3+a5";

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub a_ok: bool,
    pub positivity_ok: bool,
    /// Largest `H` keeping `x2* > 0`, `(a^2 - 4a + 2) / (3a - 2)^2` as derived.
    pub h_threshold: f64,
    pub routh_hurwitz_ok: bool,
    pub margins: Vec<(String, f64)>,
    pub reasons: Vec<String>,
    pub convention: &'static str,
}

/// Roots of `(a-2)(2a-1) x3^2 - x3 - 2H = 0`, larger first.
fn equilibrium_candidates(params: &ModelParams) -> Option<[f64; 2]> {
    let q = params.quad_leading();
    if !(q > 0.0) || !params.h.is_finite() {
        return None;
    }
    let disc = 1.0 + 8.0 * params.h * q;
    if disc < 0.0 {
        return None;
    }
    let plus = (1.0 + disc.sqrt()) / (2.0 * q);
    // product of roots is -2H/q
    let minus = (-2.0 * params.h / q) / plus;
    Some([plus, minus])
}

fn positive_equilibrium(params: &ModelParams) -> Result<Equilibrium> {
    let roots = equilibrium_candidates(params)
        .ok_or_else(|| Error::InfeasibleParams("equilibrium quadratic has no real root".into()))?;
    let positive: Vec<Equilibrium> = roots
        .iter()
        .map(|&x3| Equilibrium::from_x3(params, x3))
        .filter(Equilibrium::is_positive)
        .collect();
    match positive.as_slice() {
        [eq] => Ok(*eq),
        [] => Err(Error::InfeasibleParams(format!(
            "no interior equilibrium with all components positive (a = {}, H = {})",
            params.a, params.h
        ))),
        _ => Err(Error::InfeasibleParams(
            "both quadratic roots give positive equilibria".into(),
        )),
    }
}

/// The unique interior equilibrium.
pub fn compute_equilibrium(params: &ModelParams) -> Result<Equilibrium> {
    if !(params.a > A_MIN) {
        return Err(Error::InfeasibleParams(format!(
            "a = {} <= 2 + sqrt(2)",
            params.a
        )));
    }
    if !(params.h >= 0.0) {
        return Err(Error::InfeasibleParams(format!("H = {} < 0", params.h)));
    }
    positive_equilibrium(params)
}

/// Harvest rate at which `x2*` reaches zero.
pub fn h_threshold(a: f64) -> f64 {
    (a * a - 4.0 * a + 2.0) / ((3.0 * a - 2.0) * (3.0 * a - 2.0))
}

pub fn check_feasibility(params: &ModelParams) -> FeasibilityReport {
    let a_ok = params.a > A_MIN;
    let h_thr = h_threshold(params.a);
    let mut margins = vec![("a-(2+sqrt2)".to_string(), params.a - A_MIN)];
    let mut reasons = Vec::new();
    if !a_ok {
        reasons.push("a <= 2+sqrt(2)".to_string());
    }
    if !(params.h >= 0.0) {
        reasons.push("H < 0".to_string());
    }

    // Positivity is judged on the computed components, not on a closed-form bound.
    let eq = if params.h >= 0.0 {
        positive_equilibrium(params).ok()
    } else {
        None
    };
    let positivity_ok = eq.is_some();
    if let Some(e) = &eq {
        margins.push(("x1*".into(), e.x1));
        margins.push(("x2*".into(), e.x2));
        margins.push(("x3*".into(), e.x3));
    } else {
        reasons.push("some equilibrium component <= 0".to_string());
    }
    margins.push(("h_threshold-H".into(), h_thr - params.h));

    let feasible = a_ok && positivity_ok;
    let mut routh_hurwitz_ok = false;
    if let (true, Some(e)) = (feasible, eq) {
        if let Ok(c) = linear_coeffs(params, &e) {
            let rh = routh_hurwitz(&c);
            routh_hurwitz_ok = rh.stable;
            margins.extend(rh.margins);
        }
    }

    FeasibilityReport {
        feasible,
        a_ok,
        positivity_ok,
        h_threshold: h_thr,
        routh_hurwitz_ok,
        margins,
        reasons,
        convention: ROUTH_HURWITZ_CONVENTION,
    }
}

/// Right-hand side of the delay-free system.
pub fn rhs_no_delay(params: &ModelParams, state: &[f64; 3]) -> [f64; 3] {
    rhs_delayed(params, state, state[0], state[1])
}

/// Right-hand side with the two kernel-convolved prey histories supplied.
pub fn rhs_delayed(params: &ModelParams, state: &[f64; 3], conv1: f64, conv2: f64) -> [f64; 3] {
    let [x1, x2, x3] = *state;
    let a = params.a;
    [
        x1 * (1.0 - x1 - x2 - a * x3),
        x2 * (1.0 - 1.5 * x1 - x2 - x3),
        x3 * (-1.0 + 0.5 * a * conv1 + 0.5 * conv2) - params.h,
    ]
}

/// Jacobian of the delay-free system at the equilibrium.
pub fn jacobian_no_delay(params: &ModelParams, eq: &Equilibrium) -> [[f64; 3]; 3] {
    let a = params.a;
    [
        [-eq.x1, -eq.x1, -a * eq.x1],
        [-1.5 * eq.x2, -eq.x2, -eq.x2],
        [0.5 * a * eq.x3, 0.5 * eq.x3, params.h / eq.x3],
    ]
}

pub fn linear_coeffs(params: &ModelParams, eq: &Equilibrium) -> Result<LinearCoeffs> {
    if eq.x3 == 0.0 {
        return Err(Error::DivisionByZero("x3* = 0 in H/x3*"));
    }
    let a = params.a;
    let Equilibrium { x1, x2, x3 } = *eq;
    let h_over = params.h / x3;
    Ok(LinearCoeffs {
        a1: x1 + x2 - h_over,
        a2: -0.5 * x1 * x2 - (x1 + x2) * h_over,
        a3: 0.25 * x1 * x2 * x3 * (2.0 * a - 1.0) * (a - 2.0),
        a4: 0.5 * (a * a * x1 + x2) * x3,
        a5: 0.5 * x1 * x2 * h_over,
    })
}

/// Routh-Hurwitz test for the delay-free cubic `l^3 + a1 l^2 + (a2+a4) l + (a3+a5)`.
pub fn routh_hurwitz(c: &LinearCoeffs) -> RouthHurwitz {
    let b1 = c.a1;
    let b2 = c.a2 + c.a4;
    let b3 = c.a3 + c.a5;
    let margins = vec![
        ("a1".to_string(), b1),
        ("a2+a4".to_string(), b2),
        ("a3+a5".to_string(), b3),
        ("a1(a2+a4)-(a3+a5)".to_string(), b1 * b2 - b3),
    ];
    let stable = margins.iter().all(|(_, m)| *m > 0.0);
    RouthHurwitz { stable, margins }
}

/// Convenience bundle: equilibrium and coefficients for feasible parameters.
pub fn analyze_params(params: &ModelParams) -> Result<(Equilibrium, LinearCoeffs)> {
    let eq = compute_equilibrium(params)?;
    let coeffs = linear_coeffs(params, &eq)?;
    Ok((eq, coeffs))
}
