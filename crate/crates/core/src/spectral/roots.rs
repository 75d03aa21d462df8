//! Root location for the characteristic quasi-polynomial by the argument
//! principle on rectangles, followed by Newton polishing.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use super::{char_dlambda, char_eval, omega0};
use crate::error::{Error, Result};
use crate::kernel::{DelayKernel, KernelFamily};
use crate::model::LinearCoeffs;

/// Accepted roots satisfy `|G(lambda)| < ROOT_RESIDUAL`.
pub const ROOT_RESIDUAL: f64 = 1e-10;
const BOUNDARY_ZERO: f64 = 1e-12;
const MAX_NUDGES: usize = 8;
const EDGE_SEGMENTS: usize = 32;
const MAX_DEPTH: u32 = 48;
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharRoot {
    pub lambda: Complex64,
    /// `|G(lambda)|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rectangle {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Self { re_min, re_max, im_min, im_max }
    }

    fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.re_min - slack
            && z.re <= self.re_max + slack
            && z.im >= self.im_min - slack
            && z.im <= self.im_max + slack
    }

    fn grow(&self, d: f64) -> Self {
        Self::new(self.re_min - d, self.re_max + d, self.im_min - d, self.im_max + d)
    }

    /// Counter-clockwise corners.
    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    /// Split across the longer side at `frac`.
    fn split(&self, frac: f64) -> (Self, Self) {
        if self.width() >= self.height() {
            let m = self.re_min + frac * self.width();
            (
                Self::new(self.re_min, m, self.im_min, self.im_max),
                Self::new(m, self.re_max, self.im_min, self.im_max),
            )
        } else {
            let m = self.im_min + frac * self.height();
            (
                Self::new(self.re_min, self.re_max, self.im_min, m),
                Self::new(self.re_min, self.re_max, m, self.im_max),
            )
        }
    }
}

struct OnBoundary;

struct Contour<'a> {
    coeffs: &'a LinearCoeffs,
    kernel: &'a DelayKernel,
}

impl Contour<'_> {
    /// `(G, G'/G)` at `z`.
    fn eval(&self, z: Complex64) -> std::result::Result<(Complex64, Complex64), OnBoundary> {
        let f = char_eval(self.coeffs, self.kernel, z).map_err(|_| OnBoundary)?;
        let df = char_dlambda(self.coeffs, self.kernel, z).map_err(|_| OnBoundary)?;
        let dlog = df / f;
        let finite = f.re.is_finite() && f.im.is_finite() && dlog.re.is_finite() && dlog.im.is_finite();
        if !finite || f.norm() < BOUNDARY_ZERO {
            return Err(OnBoundary);
        }
        Ok((f, dlog))
    }

    /// Net change of `arg G` along the segment `z0 -> z1`.
    fn edge_phase(&self, z0: Complex64, z1: Complex64) -> std::result::Result<f64, OnBoundary> {
        let point = |t: f64| z0 + (z1 - z0) * t;
        let len = (z1 - z0).norm();
        let mut total = 0.0;
        let mut prev = (0.0, self.eval(z0)?);
        for i in 1..=EDGE_SEGMENTS {
            let t = i as f64 / EDGE_SEGMENTS as f64;
            let next = (t, self.eval(point(t))?);
            total += self.refine(&point, len, prev, next, 0)?;
            prev = next;
        }
        Ok(total)
    }

    /// Phase increment over `[a, b]`, bisecting until the increments are
    /// small and the logarithmic derivative cannot hide a full turn.
    fn refine(
        &self,
        point: &impl Fn(f64) -> Complex64,
        len: f64,
        (ta, (fa, la)): (f64, (Complex64, Complex64)),
        (tb, (fb, lb)): (f64, (Complex64, Complex64)),
        depth: u32,
    ) -> std::result::Result<f64, OnBoundary> {
        let tm = 0.5 * (ta + tb);
        let (fm, lm) = self.eval(point(tm))?;
        let h = (tb - ta) * len;
        let d = (fb / fa).arg();
        let d1 = (fm / fa).arg();
        let d2 = (fb / fm).arg();
        let smooth = la.norm().max(lm.norm()).max(lb.norm()) * h < 0.5;
        if smooth && d.abs() < FRAC_PI_4 && (d1 + d2 - d).abs() < 1e-9 {
            return Ok(d);
        }
        if depth >= MAX_DEPTH {
            return Err(OnBoundary);
        }
        let mid = (tm, (fm, lm));
        Ok(self.refine(point, len, (ta, (fa, la)), mid, depth + 1)?
            + self.refine(point, len, mid, (tb, (fb, lb)), depth + 1)?)
    }

    fn winding(&self, rect: &Rectangle) -> std::result::Result<i64, OnBoundary> {
        let c = rect.corners();
        let mut total = 0.0;
        for i in 0..4 {
            total += self.edge_phase(c[i], c[(i + 1) % 4])?;
        }
        let turns = total / (2.0 * PI);
        let rounded = turns.round();
        if (turns - rounded).abs() > 0.1 {
            return Err(OnBoundary);
        }
        Ok(rounded as i64)
    }

    /// Zeros inside `rect`: winding number plus the order of an enclosed pole.
    fn count(&self, rect: &Rectangle) -> std::result::Result<usize, OnBoundary> {
        let mut poles = 0;
        if let Some((p, order)) = self.kernel.transform_pole() {
            let scale = 1e-9 * (rect.width() + rect.height());
            if rect.contains(p, scale) {
                if !rect.contains(p, -scale) {
                    return Err(OnBoundary);
                }
                poles = order as i64;
            }
        }
        let n = self.winding(rect)? + poles;
        if n < 0 {
            return Err(OnBoundary);
        }
        Ok(n as usize)
    }
}

/// Number of roots of the characteristic equation inside `rect`.
///
/// If the function vanishes (numerically) on the boundary, the rectangle is
/// grown by a small amount and the count retried.
pub fn count_roots_in_rectangle(
    coeffs: &LinearCoeffs,
    kernel: &DelayKernel,
    rect: &Rectangle,
) -> Result<usize> {
    let contour = Contour { coeffs, kernel };
    let size = rect.width() + rect.height();
    for nudge in 0..=MAX_NUDGES {
        let r = if nudge == 0 {
            *rect
        } else {
            rect.grow(size * 1e-7 * (nudge as f64 * 1.618).powi(2))
        };
        if let Ok(n) = contour.count(&r) {
            return Ok(n);
        }
    }
    Err(Error::BoundaryRoot { nudges: MAX_NUDGES })
}

fn newton(coeffs: &LinearCoeffs, kernel: &DelayKernel, start: Complex64) -> Option<CharRoot> {
    let mut z = start;
    for _ in 0..100 {
        let f = char_eval(coeffs, kernel, z).ok()?;
        let df = char_dlambda(coeffs, kernel, z).ok()?;
        if df.norm() == 0.0 {
            return None;
        }
        let step = f / df;
        z -= step;
        if !(z.re.is_finite() && z.im.is_finite()) {
            return None;
        }
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    let residual = char_eval(coeffs, kernel, z).ok()?.norm();
    (residual < ROOT_RESIDUAL).then_some(CharRoot { lambda: z, residual })
}

fn polish_in_cell(coeffs: &LinearCoeffs, kernel: &DelayKernel, cell: &Rectangle) -> Option<CharRoot> {
    let slack = 1e-9 * (cell.width() + cell.height());
    let c = cell.center();
    let starts = [
        c,
        Complex64::new(c.re, cell.im_min + 0.25 * cell.height()),
        Complex64::new(c.re, cell.im_min + 0.75 * cell.height()),
        Complex64::new(cell.re_min + 0.25 * cell.width(), c.im),
        Complex64::new(cell.re_min + 0.75 * cell.width(), c.im),
    ];
    starts
        .iter()
        .filter_map(|&s| newton(coeffs, kernel, s))
        .find(|r| cell.contains(r.lambda, slack))
}

/// Split points tried in turn when a split line passes through a root.
const SPLIT_FRACTIONS: [f64; 5] = [0.5, 0.5371, 0.4629, 0.5813, 0.4187];

/// Order by real part (descending), then by smaller `|Im|`.
fn rightmost_order(a: &CharRoot, b: &CharRoot) -> Ordering {
    if (a.lambda.re - b.lambda.re).abs() <= TIE_TOL {
        a.lambda.im.abs().total_cmp(&b.lambda.im.abs())
    } else {
        b.lambda.re.total_cmp(&a.lambda.re)
    }
}

/// Roots inside `rect`, each polished to `|G| < ROOT_RESIDUAL`.
///
/// With `rightmost_only`, cells that cannot hold a root to the right of the
/// best one found so far are discarded.
pub fn find_roots(
    coeffs: &LinearCoeffs,
    kernel: &DelayKernel,
    rect: &Rectangle,
    rightmost_only: bool,
) -> Result<Vec<CharRoot>> {
    let min_size = 1e-9 * (rect.width() + rect.height());
    let total = count_roots_in_rectangle(coeffs, kernel, rect)?;
    let mut cells = vec![(*rect, total)];
    let mut roots: Vec<CharRoot> = Vec::new();

    while let Some(idx) = cells
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.re_max.total_cmp(&b.1 .0.re_max))
        .map(|(i, _)| i)
    {
        let (cell, n) = cells.swap_remove(idx);
        if n == 0 {
            continue;
        }
        if rightmost_only {
            if let Some(best) = roots.first() {
                if cell.re_max < best.lambda.re - TIE_TOL {
                    continue;
                }
            }
        }
        let tiny = cell.width() + cell.height() < min_size;
        if n == 1 || tiny {
            if let Some(r) = polish_in_cell(coeffs, kernel, &cell) {
                roots.push(r);
                roots.sort_by(rightmost_order);
                continue;
            }
            if tiny {
                return Err(Error::ConvergenceFailure(format!(
                    "Newton failed in cell around {} holding {n} root(s)",
                    cell.center()
                )));
            }
        }
        let mut split = None;
        for &frac in &SPLIT_FRACTIONS {
            let (lo, hi) = cell.split(frac);
            let contour = Contour { coeffs, kernel };
            if let (Ok(nl), Ok(nh)) = (contour.count(&lo), contour.count(&hi)) {
                if nl + nh == n {
                    split = Some(((lo, nl), (hi, nh)));
                    break;
                }
            }
        }
        let ((lo, nl), (hi, nh)) = split.ok_or_else(|| {
            Error::ConvergenceFailure(format!(
                "could not subdivide cell around {} consistently",
                cell.center()
            ))
        })?;
        cells.push((lo, nl));
        cells.push((hi, nh));
    }

    if !rightmost_only && roots.len() != total {
        // a double root collapses to a single polished value
        roots.dedup_by(|a, b| (a.lambda - b.lambda).norm() < 1e-8);
    }
    Ok(roots)
}

/// Default search window for the rightmost root: `Re in [-5 a1 - 1, max(1, w0)]`,
/// `Im in [0, 4 w0]`, with the lower edge dropped slightly below the real axis
/// so that real roots are interior.
pub fn search_window(coeffs: &LinearCoeffs, kernel: &DelayKernel) -> Rectangle {
    let w0 = omega0(coeffs).unwrap_or(1.0).max(1e-3);
    let mut re_min = -5.0 * coeffs.a1.abs() - 1.0;
    let e = kernel.expectation();
    // keep exp(-lambda E) finite on the left edge
    let reach = match kernel.family() {
        KernelFamily::Dirac => e,
        KernelFamily::Uniform => 2.0 * e,
        KernelFamily::Erlang { .. } => 0.0,
    };
    if reach > 0.0 {
        re_min = re_min.max(-300.0 / reach);
    }
    let im_max = 4.0 * w0;
    Rectangle::new(re_min, w0.max(1.0), -1e-3 * im_max, im_max)
}

/// The characteristic root with the largest real part in the upper half plane.
pub fn rightmost_root(coeffs: &LinearCoeffs, kernel: &DelayKernel) -> Result<CharRoot> {
    let mut window = search_window(coeffs, kernel);
    for _ in 0..4 {
        let roots = find_roots(coeffs, kernel, &window, true)?;
        let best = roots.into_iter().min_by(rightmost_order).ok_or_else(|| {
            Error::ConvergenceFailure("no characteristic root inside the search window".into())
        })?;
        let near_right = window.re_max - best.lambda.re < 1e-6 * window.width();
        let near_top = window.im_max - best.lambda.im.abs() < 1e-6 * window.height();
        if !(near_right || near_top) {
            let mut r = best;
            if r.lambda.im < 0.0 {
                r.lambda = r.lambda.conj();
            }
            if r.lambda.im < 1e-12 * (1.0 + r.lambda.re.abs()) {
                let real = Complex64::new(r.lambda.re, 0.0);
                if let Ok(g) = char_eval(coeffs, kernel, real) {
                    if g.norm() <= r.residual.max(ROOT_RESIDUAL) {
                        r = CharRoot { lambda: real, residual: g.norm() };
                    }
                }
            }
            return Ok(r);
        }
        window.re_max = window.re_min + 2.0 * window.width();
        window.im_max *= 2.0;
    }
    Err(Error::ConvergenceFailure(
        "rightmost root keeps touching the widened search window".into(),
    ))
}
