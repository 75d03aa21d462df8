//! Delay distributions and their Laplace transforms.
//!
//! Every family is parameterized by its expectation `E`, so `E` can serve as
//! the bifurcation parameter while the shape of the distribution stays fixed.
//! `E = 0` is the point mass at zero for every family.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default tail mass dropped when truncating a kernel for simulation.
pub const SIM_EPSILON: f64 = 1e-10;
/// Tail mass used when validating transforms by quadrature.
pub const QUADRATURE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// Point mass at `tau = E`.
    Dirac,
    /// Gamma density with integer shape and rate `shape / E`.
    Erlang { shape: u32 },
    /// Constant density on `[0, 2E]`.
    Uniform,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Dirac => "dirac",
            KernelFamily::Erlang { .. } => "erlang",
            KernelFamily::Uniform => "uniform",
        }
    }

    pub fn shape(&self) -> Option<u32> {
        match self {
            KernelFamily::Erlang { shape } => Some(*shape),
            _ => None,
        }
    }

    pub fn from_parts(name: &str, shape: Option<u32>) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "dirac" | "discrete" => Ok(KernelFamily::Dirac),
            "uniform" => Ok(KernelFamily::Uniform),
            "erlang" | "gamma" => {
                let shape = shape.unwrap_or(1);
                if shape == 0 {
                    return Err(Error::InvalidKernel("Erlang shape must be >= 1".into()));
                }
                Ok(KernelFamily::Erlang { shape })
            }
            other => Err(Error::InvalidKernel(format!("unknown kernel family '{other}'"))),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Erlang { shape } => write!(f, "erlang({shape})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    /// Accepts `dirac`, `uniform`, `erlang` and `erlang(k)` / `erlang:k`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("erlang") {
            let digits = rest.trim_matches(|c| c == '(' || c == ')' || c == ':');
            if digits.is_empty() {
                return KernelFamily::from_parts("erlang", None);
            }
            let k = digits
                .parse::<u32>()
                .map_err(|_| Error::InvalidKernel(format!("bad Erlang shape in '{s}'")))?;
            return KernelFamily::from_parts("erlang", Some(k));
        }
        KernelFamily::from_parts(s, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayKernel {
    family: KernelFamily,
    expectation: f64,
}

impl DelayKernel {
    pub fn new(family: KernelFamily, expectation: f64) -> Result<Self> {
        if !(expectation >= 0.0) || !expectation.is_finite() {
            return Err(Error::InvalidKernel(format!(
                "expectation must be finite and >= 0, got {expectation}"
            )));
        }
        if let KernelFamily::Erlang { shape: 0 } = family {
            return Err(Error::InvalidKernel("Erlang shape must be >= 1".into()));
        }
        Ok(Self { family, expectation })
    }

    pub fn dirac(expectation: f64) -> Result<Self> {
        Self::new(KernelFamily::Dirac, expectation)
    }

    pub fn erlang(shape: u32, expectation: f64) -> Result<Self> {
        Self::new(KernelFamily::Erlang { shape }, expectation)
    }

    pub fn uniform(expectation: f64) -> Result<Self> {
        Self::new(KernelFamily::Uniform, expectation)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn expectation(&self) -> f64 {
        self.expectation
    }

    /// Same family at a different expectation.
    pub fn with_expectation(&self, expectation: f64) -> Result<Self> {
        Self::new(self.family, expectation)
    }

    /// Pole of the transform (location, order), if any.
    pub fn transform_pole(&self) -> Option<(Complex64, u32)> {
        match self.family {
            KernelFamily::Erlang { shape } if self.expectation > 0.0 => Some((
                Complex64::new(-(shape as f64) / self.expectation, 0.0),
                shape,
            )),
            _ => None,
        }
    }

    /// Density at `tau`. The Dirac family has none.
    pub fn density(&self, tau: f64) -> Result<f64> {
        let e = self.expectation;
        match self.family {
            KernelFamily::Dirac => Err(Error::DiracNotDiscretizable),
            _ if e == 0.0 => Err(Error::DiracNotDiscretizable),
            _ if tau < 0.0 => Ok(0.0),
            KernelFamily::Uniform => Ok(if tau <= 2.0 * e { 0.5 / e } else { 0.0 }),
            KernelFamily::Erlang { shape } => {
                let k = shape as f64;
                let rate = k / e;
                if tau == 0.0 {
                    return Ok(if shape == 1 { rate } else { 0.0 });
                }
                let log_fact: f64 = (1..shape).map(|n| (n as f64).ln()).sum();
                let log_d = k * rate.ln() + (k - 1.0) * tau.ln() - rate * tau - log_fact;
                Ok(log_d.exp())
            }
        }
    }

    /// `int_0^inf f_E(tau) exp(-lambda tau) d tau`.
    pub fn transform(&self, lambda: Complex64) -> Result<Complex64> {
        let e = self.expectation;
        if e == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        match self.family {
            KernelFamily::Dirac => Ok((-lambda * e).exp()),
            KernelFamily::Erlang { shape } => {
                let base = self.erlang_base(lambda, shape)?;
                Ok(base.powi(-(shape as i32)))
            }
            KernelFamily::Uniform => Ok(uniform_g(lambda * (2.0 * e))),
        }
    }

    /// Derivative of [`Self::transform`] with respect to the expectation.
    pub fn transform_de(&self, lambda: Complex64) -> Result<Complex64> {
        let e = self.expectation;
        match self.family {
            KernelFamily::Dirac => Ok(-lambda * (-lambda * e).exp()),
            KernelFamily::Erlang { shape } => {
                let base = self.erlang_base(lambda, shape)?;
                Ok(-lambda * base.powi(-(shape as i32 + 1)))
            }
            KernelFamily::Uniform => Ok(lambda * 2.0 * uniform_g_prime(lambda * (2.0 * e))),
        }
    }

    /// Derivative of [`Self::transform`] with respect to `lambda`, which is
    /// minus the transform of `tau f_E(tau)`.
    pub fn transform_dlambda(&self, lambda: Complex64) -> Result<Complex64> {
        let e = self.expectation;
        if e == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        match self.family {
            KernelFamily::Dirac => Ok(-e * (-lambda * e).exp()),
            KernelFamily::Erlang { shape } => {
                let base = self.erlang_base(lambda, shape)?;
                Ok(-e * base.powi(-(shape as i32 + 1)))
            }
            KernelFamily::Uniform => Ok(2.0 * e * uniform_g_prime(lambda * (2.0 * e))),
        }
    }

    /// `int f_E(tau) cos(omega tau) d tau`.
    pub fn cosine_moment(&self, omega: f64) -> f64 {
        self.transform(Complex64::new(0.0, omega))
            .map(|z| z.re)
            .unwrap_or(f64::NAN)
    }

    /// `int f_E(tau) sin(omega tau) d tau`.
    pub fn sine_moment(&self, omega: f64) -> f64 {
        self.transform(Complex64::new(0.0, omega))
            .map(|z| -z.im)
            .unwrap_or(f64::NAN)
    }

    /// Survival function `P(tau > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        let e = self.expectation;
        if t < 0.0 {
            return 1.0;
        }
        match self.family {
            _ if e == 0.0 => 0.0,
            KernelFamily::Dirac => {
                if t < e {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Uniform => (1.0 - t / (2.0 * e)).max(0.0),
            KernelFamily::Erlang { shape } => {
                // regularized upper incomplete gamma, integer shape
                let x = shape as f64 * t / e;
                let mut term = 1.0;
                let mut sum = 1.0;
                for n in 1..shape {
                    term *= x / n as f64;
                    sum += term;
                }
                (-x).exp() * sum
            }
        }
    }

    /// Truncation point `T` with `P(tau > T) <= epsilon`.
    pub fn support_bound(&self, epsilon: f64) -> f64 {
        let e = self.expectation;
        match self.family {
            _ if e == 0.0 => 0.0,
            KernelFamily::Dirac => e,
            KernelFamily::Uniform => 2.0 * e,
            KernelFamily::Erlang { .. } => {
                let mut hi = e;
                while self.survival(hi) > epsilon {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.survival(mid) > epsilon {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * hi {
                        break;
                    }
                }
                hi
            }
        }
    }

    /// Trapezoid weights `w_j ~ f(j dt) dt` on `[0, support_bound(epsilon)]`,
    /// renormalized to unit sum.
    pub fn quadrature_weights(&self, dt: f64, epsilon: f64) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
        }
        if self.expectation == 0.0 {
            return Ok(vec![1.0]);
        }
        if self.family == KernelFamily::Dirac {
            return Err(Error::DiracNotDiscretizable);
        }
        let t_max = self.support_bound(epsilon);
        let n = (t_max / dt).ceil() as usize;
        let mut w = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut wj = self.density(j as f64 * dt)? * dt;
            if j == 0 || j == n {
                wj *= 0.5;
            }
            w.push(wj);
        }
        let total: f64 = w.iter().sum();
        for wj in &mut w {
            *wj /= total;
        }
        Ok(w)
    }

    fn erlang_base(&self, lambda: Complex64, shape: u32) -> Result<Complex64> {
        let base = 1.0 + lambda * (self.expectation / shape as f64);
        if base.norm() <= f64::EPSILON {
            return Err(Error::PoleReached(lambda));
        }
        Ok(base)
    }
}

impl fmt::Display for DelayKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(E={})", self.family, self.expectation)
    }
}

/// `(1 - exp(-z)) / z`, entire, with value 1 at the origin.
fn uniform_g(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        // sum_{n>=0} (-z)^n / (n+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term *= -z / (n as f64 + 1.0);
            sum += term;
        }
        sum
    } else {
        (1.0 - (-z).exp()) / z
    }
}

/// Derivative of [`uniform_g`], `((1 + z) exp(-z) - 1) / z^2`.
fn uniform_g_prime(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        // sum_{n>=1} n (-1)^n z^(n-1) / (n+1)!
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0); // z^(n-1)
        let mut fact = 1.0; // (n+1)!
        for n in 1..30 {
            fact *= n as f64 + 1.0;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += pow * (sign * n as f64 / fact);
            pow *= z;
        }
        sum
    } else {
        ((1.0 + z) * (-z).exp() - 1.0) / (z * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn all_families(e: f64) -> Vec<DelayKernel> {
        vec![
            DelayKernel::dirac(e).unwrap(),
            DelayKernel::erlang(1, e).unwrap(),
            DelayKernel::erlang(2, e).unwrap(),
            DelayKernel::erlang(3, e).unwrap(),
            DelayKernel::uniform(e).unwrap(),
        ]
    }

    /// Composite Simpson on [0, T] with n (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
        let h = t / n as f64;
        let mut s = f(0.0) + f(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn normalization_at_zero() {
        for k in all_families(1.3) {
            assert_eq!(k.transform(c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
            assert_eq!(k.transform_de(c(0.0, 0.0)).unwrap().norm(), 0.0);
            let d = k.transform_dlambda(c(0.0, 0.0)).unwrap();
            assert!((d - c(-1.3, 0.0)).norm() < 1e-14, "{k}: {d}");
            assert_eq!(k.cosine_moment(0.0), 1.0);
        }
        for k in all_families(0.0) {
            assert_eq!(k.transform(c(0.7, -3.0)).unwrap(), c(1.0, 0.0));
        }
    }

    #[test]
    fn closed_forms() {
        let e = 0.8;
        let k = DelayKernel::erlang(1, e).unwrap();
        assert!((k.transform(c(1.0 / e, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-15);

        let d = DelayKernel::dirac(e).unwrap();
        let w = 2.1;
        let t = d.transform(c(0.0, w)).unwrap();
        assert!((t - c((w * e).cos(), -(w * e).sin())).norm() < 1e-15);
        assert!((t.norm() - 1.0).abs() < 1e-15);
        assert!((d.cosine_moment(w) - (w * e).cos()).abs() < 1e-15);

        let d1 = DelayKernel::dirac(1.0).unwrap();
        let v = d1.transform_de(c(1.0, 0.0)).unwrap();
        assert!((v.re + (-1.0f64).exp()).abs() < 1e-15);
        assert!((v.re + 0.367879).abs() < 1e-6);

        let lam = c(0.3, -0.2);
        let dl = d.transform_dlambda(lam).unwrap();
        assert!((dl + e * (-lam * e).exp()).norm() < 1e-15);

        let k2 = DelayKernel::erlang(2, 1.0).unwrap();
        assert!((k2.cosine_moment(1.0) - 0.48).abs() < 1e-15);
    }

    #[test]
    fn erlang_pole() {
        let k = DelayKernel::erlang(2, 0.5).unwrap();
        assert!(matches!(k.transform(c(-4.0, 0.0)), Err(Error::PoleReached(_))));
        let (p, order) = k.transform_pole().unwrap();
        assert_eq!((p, order), (c(-4.0, 0.0), 2));
    }

    #[test]
    fn finite_difference_checks() {
        let h = 1e-5;
        let fd_e = |k: DelayKernel, lam: Complex64| {
            let e = k.expectation();
            let p = k.with_expectation(e + h).unwrap().transform(lam).unwrap();
            let m = k.with_expectation(e - h).unwrap().transform(lam).unwrap();
            (p - m) / (2.0 * h)
        };
        let fd_l = |k: DelayKernel, lam: Complex64| {
            let p = k.transform(lam + h).unwrap();
            let m = k.transform(lam - h).unwrap();
            (p - m) / (2.0 * h)
        };
        let k = DelayKernel::erlang(2, 0.5).unwrap();
        let lam = c(0.3, 0.4);
        assert!((k.transform_de(lam).unwrap() - fd_e(k, lam)).norm() < 1e-6);

        let k = DelayKernel::erlang(3, 1.0).unwrap();
        let lam = c(0.0, 0.2);
        assert!((k.transform_dlambda(lam).unwrap() - fd_l(k, lam)).norm() < 1e-6);

        // uniform near and away from the series switch-over
        for &e in &[0.01, 0.2, 1.0, 3.0] {
            let k = DelayKernel::uniform(e).unwrap();
            for lam in [c(0.1, 0.4), c(-0.3, 1.1), c(0.05, 0.0)] {
                assert!((k.transform_de(lam).unwrap() - fd_e(k, lam)).norm() < 1e-6);
                assert!((k.transform_dlambda(lam).unwrap() - fd_l(k, lam)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn moments_by_quadrature() {
        for k in [
            DelayKernel::erlang(1, 1.2).unwrap(),
            DelayKernel::erlang(2, 0.7).unwrap(),
            DelayKernel::erlang(3, 2.0).unwrap(),
        ] {
            let t = k.support_bound(QUADRATURE_EPSILON);
            let n = 200_000;
            let mass = simpson(|x| k.density(x).unwrap(), t, n);
            let mean = simpson(|x| x * k.density(x).unwrap(), t, n);
            assert!((mass - 1.0).abs() < 1e-8, "{k}: mass {mass}");
            assert!((mean - k.expectation()).abs() < 1e-8, "{k}: mean {mean}");
            for &w in &[0.3, 1.0, 2.5] {
                let cm = simpson(|x| k.density(x).unwrap() * (w * x).cos(), t, n);
                assert!((cm - k.cosine_moment(w)).abs() < 1e-8);
            }
        }
        // uniform: integrate exactly over its support
        let k = DelayKernel::uniform(1.5).unwrap();
        let n = 20_000;
        let mean = simpson(|x| x * k.density(x).unwrap(), 3.0, n);
        assert!((mean - 1.5).abs() < 1e-8);
        for &w in &[0.3, 1.0, 2.5] {
            let cm = simpson(|x| (w * x).cos() / 3.0, 3.0, n);
            assert!((cm - k.cosine_moment(w)).abs() < 1e-8);
        }
    }

    #[test]
    fn support_bounds() {
        assert_eq!(DelayKernel::uniform(2.0).unwrap().support_bound(1e-3), 4.0);
        assert_eq!(DelayKernel::dirac(1.5).unwrap().support_bound(1e-3), 1.5);
        let t = DelayKernel::erlang(1, 1.0).unwrap().support_bound((-10.0f64).exp());
        assert!((t - 10.0).abs() < 1e-9, "{t}");
        let k = DelayKernel::erlang(3, 0.9).unwrap();
        let t = k.support_bound(1e-10);
        assert!(k.survival(t) <= 1e-10 && k.survival(0.999 * t) > 1e-10);
    }

    #[test]
    fn weights() {
        assert!(matches!(
            DelayKernel::dirac(1.0).unwrap().quadrature_weights(0.1, 1e-10),
            Err(Error::DiracNotDiscretizable)
        ));
        let w = DelayKernel::uniform(1.0).unwrap().quadrature_weights(0.5, 1e-10).unwrap();
        assert_eq!(w, vec![0.125, 0.25, 0.25, 0.25, 0.125]);

        let k = DelayKernel::erlang(3, 1.1).unwrap();
        let w = k.quadrature_weights(0.01, 1e-10).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn weighted_mean_converges_second_order() {
        let k = DelayKernel::erlang(2, 1.0).unwrap();
        let err = |dt: f64| {
            let w = k.quadrature_weights(dt, 1e-14).unwrap();
            let mean: f64 = w.iter().enumerate().map(|(j, wj)| wj * j as f64 * dt).sum();
            (mean - 1.0).abs()
        };
        let (e1, e2) = (err(0.04), err(0.02));
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn parsing() {
        assert_eq!("dirac".parse::<KernelFamily>().unwrap(), KernelFamily::Dirac);
        assert_eq!(
            "erlang(3)".parse::<KernelFamily>().unwrap(),
            KernelFamily::Erlang { shape: 3 }
        );
        assert_eq!(
            "erlang:2".parse::<KernelFamily>().unwrap(),
            KernelFamily::Erlang { shape: 2 }
        );
        assert!("erlang(0)".parse::<KernelFamily>().is_err());
        assert!("cauchy".parse::<KernelFamily>().is_err());
        assert!(DelayKernel::dirac(-1.0).is_err());
    }

    fn arb_kernel() -> impl Strategy<Value = DelayKernel> {
        (0usize..5, 0.01f64..5.0).prop_map(|(f, e)| match f {
            0 => DelayKernel::dirac(e).unwrap(),
            1 => DelayKernel::uniform(e).unwrap(),
            k => DelayKernel::erlang(k as u32 - 1, e).unwrap(),
        })
    }

    proptest! {
        #[test]
        fn imaginary_axis_modulus(k in arb_kernel(), w in 0.0f64..20.0) {
            let m = k.transform(c(0.0, w)).unwrap().norm();
            prop_assert!(m <= 1.0 + 1e-14);
            if k.family() == KernelFamily::Dirac {
                prop_assert!((m - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn derivatives_match_central_differences(
            k in arb_kernel(), re in -0.2f64..1.0, im in -2.0f64..2.0
        ) {
            let lam = c(re, im);
            let h = 1e-6;
            let e = k.expectation();
            let fd_e = (k.with_expectation(e + h).unwrap().transform(lam).unwrap()
                - k.with_expectation(e - h).unwrap().transform(lam).unwrap()) / (2.0 * h);
            let fd_l = (k.transform(lam + h).unwrap() - k.transform(lam - h).unwrap()) / (2.0 * h);
            let de = k.transform_de(lam).unwrap();
            let dl = k.transform_dlambda(lam).unwrap();
            prop_assert!((de - fd_e).norm() <= 1e-6 * de.norm().max(1.0));
            prop_assert!((dl - fd_l).norm() <= 1e-6 * dl.norm().max(1.0));
        }
    }
}
