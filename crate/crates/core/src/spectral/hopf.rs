use num_complex::Complex64;

use super::{char_de, char_dlambda, char_eval, e1_lower_bound, omega0, rightmost_root};
use crate::error::{Error, Result};
use crate::kernel::{DelayKernel, KernelFamily};
use crate::model::{routh_hurwitz, LinearCoeffs};

/// Default threshold on `|Re dlambda/dE|` for a transversal crossing.
pub const SLOPE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfPoint {
    pub e_crit: f64,
    pub omega_crit: f64,
    /// `Re dlambda/dE` at the crossing.
    pub transversal_slope: f64,
    pub transversal_ok: bool,
    /// `|G(i omega_crit, e_crit)|`.
    pub residual: f64,
}

impl HopfPoint {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega_crit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfSearch {
    /// First expectation of the geometric scan.
    pub e_start: f64,
    /// Scan ceiling; `None` uses `1e3 * E1_lower_bound(omega0)`.
    pub e_max: Option<f64>,
    /// Bisection stops once the bracket is narrower than this.
    pub e_tol: f64,
    pub slope_tol: f64,
}

impl Default for HopfSearch {
    fn default() -> Self {
        Self {
            e_start: 0.01,
            e_max: None,
            e_tol: 1e-8,
            slope_tol: SLOPE_TOL,
        }
    }
}

/// `dlambda/dE = -G_E / G_lambda` along the root branch through `lambda`.
pub fn transversality(coeffs: &LinearCoeffs, kernel: &DelayKernel, lambda: Complex64) -> Result<Complex64> {
    let g_lambda = char_dlambda(coeffs, kernel, lambda)?;
    if g_lambda.norm() < 1e-12 {
        return Err(Error::DegenerateRoot(g_lambda.norm()));
    }
    Ok(-char_de(coeffs, kernel, lambda)? / g_lambda)
}

pub fn critical_expectation(coeffs: &LinearCoeffs, family: KernelFamily) -> Result<HopfPoint> {
    critical_expectation_with(coeffs, family, &HopfSearch::default())
}

/// Smallest `E > 0` at which the rightmost root reaches the imaginary axis.
///
/// Scans `E = e_start * 2^n` for a sign change of the leading real part,
/// bisects the bracket, then solves `G(i w, E) = 0` for `(E, w)` by Newton.
pub fn critical_expectation_with(
    coeffs: &LinearCoeffs,
    family: KernelFamily,
    search: &HopfSearch,
) -> Result<HopfPoint> {
    if !routh_hurwitz(coeffs).stable {
        return Err(Error::UnstableAtZero);
    }
    let kernel_at = |e: f64| DelayKernel::new(family, e);
    let mu = |e: f64| -> Result<f64> { Ok(rightmost_root(coeffs, &kernel_at(e)?)?.lambda.re) };

    let e_max = match search.e_max {
        Some(m) => m,
        None => {
            let w0 = omega0(coeffs)?;
            (1e3 * e1_lower_bound(coeffs, w0)).max(10.0)
        }
    };

    let mut lo = 0.0;
    let mut hi = search.e_start;
    loop {
        if hi > e_max {
            return Err(Error::NoCrossingFound { e_max });
        }
        if mu(hi)? >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > search.e_tol {
        let mid = 0.5 * (lo + hi);
        if mu(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let root = rightmost_root(coeffs, &kernel_at(hi)?)?;
    let mut e = 0.5 * (lo + hi);
    let mut w = root.lambda.im;
    if let Some((e_n, w_n)) = newton_crossing(coeffs, family, e, w) {
        if (e_n - e).abs() < 1e-6 * (1.0 + e) && (w_n - w).abs() < 1e-4 * (1.0 + w) {
            e = e_n;
            w = w_n;
        }
    }

    let kernel = kernel_at(e)?;
    let lambda = Complex64::new(0.0, w);
    let residual = char_eval(coeffs, &kernel, lambda)?.norm();
    let slope = transversality(coeffs, &kernel, lambda)?.re;
    Ok(HopfPoint {
        e_crit: e,
        omega_crit: w,
        transversal_slope: slope,
        transversal_ok: slope.abs() > search.slope_tol,
        residual,
    })
}

/// Newton on `G(i w, E) = 0` as two real equations in `(E, w)`.
fn newton_crossing(coeffs: &LinearCoeffs, family: KernelFamily, e0: f64, w0: f64) -> Option<(f64, f64)> {
    let (mut e, mut w) = (e0, w0);
    for _ in 0..20 {
        let kernel = DelayKernel::new(family, e).ok()?;
        let lambda = Complex64::new(0.0, w);
        let g = char_eval(coeffs, &kernel, lambda).ok()?;
        let g_e = char_de(coeffs, &kernel, lambda).ok()?;
        let g_w = Complex64::i() * char_dlambda(coeffs, &kernel, lambda).ok()?;
        // [g_e.re g_w.re; g_e.im g_w.im] [de dw]^T = -[g.re g.im]^T
        let det = g_e.re * g_w.im - g_w.re * g_e.im;
        if det == 0.0 {
            return None;
        }
        let de = (-g.re * g_w.im + g_w.re * g.im) / det;
        let dw = (-g_e.re * g.im + g.re * g_e.im) / det;
        e += de;
        w += dw;
        if de.abs() < 1e-15 * (1.0 + e) && dw.abs() < 1e-15 * (1.0 + w) {
            break;
        }
    }
    (e.is_finite() && w.is_finite() && e > 0.0).then_some((e, w))
}
