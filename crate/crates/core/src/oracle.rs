//! Independent reference computations used to cross-check the analysis:
//! dense eigenvalue solves, companion-matrix polynomial roots, the
//! Faddeev-LeVerrier characteristic polynomial and plain bisection.
//!
//! None of these share code paths with the quasi-polynomial root finder.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::model::{jacobian_no_delay, Equilibrium, LinearCoeffs, ModelParams};

/// Eigenvalues of the delay-free Jacobian.
pub fn jacobian_eigenvalues(params: &ModelParams, eq: &Equilibrium) -> Vec<Complex64> {
    let j = jacobian_no_delay(params, eq);
    let m = Matrix3::from_fn(|r, c| j[r][c]);
    m.complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalue of the Jacobian with the largest real part.
pub fn jacobian_leading_eigenvalue(params: &ModelParams, eq: &Equilibrium) -> Complex64 {
    rightmost(&jacobian_eigenvalues(params, eq))
}

fn rightmost(values: &[Complex64]) -> Complex64 {
    values
        .iter()
        .copied()
        .max_by(|a, b| {
            if (a.re - b.re).abs() <= 1e-10 {
                b.im.abs().total_cmp(&a.im.abs())
            } else {
                a.re.total_cmp(&b.re)
            }
        })
        .expect("non-empty spectrum")
}

/// Roots of `p[0] x^n + ... + p[n]` as eigenvalues of the companion matrix.
pub fn polynomial_roots(p: &[f64]) -> Vec<Complex64> {
    let lead = p.iter().position(|c| *c != 0.0).expect("nonzero polynomial");
    let p = &p[lead..];
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -p[j + 1] / p[0];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn rightmost_polynomial_root(p: &[f64]) -> Complex64 {
    rightmost(&polynomial_roots(p))
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `(1 + l E/k)^k (l^3 + a1 l^2 + a2 l + a5) + a3 + a4 l`, highest degree
/// first; its roots are the characteristic roots for an Erlang(k) kernel.
pub fn erlang_reduced_polynomial(c: &LinearCoeffs, shape: u32, e: f64) -> Vec<f64> {
    let mut p = vec![1.0, c.a1, c.a2, c.a5];
    for _ in 0..shape {
        p = poly_mul(&p, &[e / shape as f64, 1.0]);
    }
    let n = p.len();
    p[n - 1] += c.a3;
    p[n - 2] += c.a4;
    p
}

/// Characteristic polynomial `[1, c1, c2, c3]` of a 3x3 matrix by the
/// Faddeev-LeVerrier recurrence.
pub fn faddeev_leverrier(m: &[[f64; 3]; 3]) -> [f64; 4] {
    let a = Matrix3::from_fn(|r, c| m[r][c]);
    let mut c = [1.0, 0.0, 0.0, 0.0];
    let mut mk = Matrix3::zeros();
    for k in 1..=3 {
        mk = a * mk + Matrix3::identity() * c[k - 1];
        c[k] = -(a * mk).trace() / k as f64;
    }
    c
}

/// Largest root of a continuous function on `[lo, hi]` located by a uniform
/// scan from the right followed by bisection.
pub fn largest_sign_change(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Option<f64> {
    let mut right = hi;
    let f_right_sign = f(hi) > 0.0;
    for i in (0..n).rev() {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        if (f(x) > 0.0) != f_right_sign {
            let (mut a, mut b) = (x, right);
            let fa_pos = f(a) > 0.0;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (f(m) > 0.0) == fa_pos {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        right = x;
    }
    None
}

/// `omega0` by bisection on the frequency cubic in `z = w^2`.
pub fn bisection_omega0(c: &LinearCoeffs) -> Option<f64> {
    let b2 = c.a1 * c.a1 - 2.0 * c.a2;
    let b1 = c.a2 * c.a2 - 2.0 * c.a1 * c.a5 - c.a4 * c.a4;
    let b0 = c.a5 * c.a5 - c.a3 * c.a3;
    let p = |z: f64| ((z + b2) * z + b1) * z + b0;
    let cauchy = 1.0 + b2.abs().max(b1.abs()).max(b0.abs());
    largest_sign_change(p, 0.0, cauchy, 200_000).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{analyze_params, routh_hurwitz};

    #[test]
    fn companion_roots() {
        // (x - 1)(x + 2)(x^2 + 1)
        let p = poly_mul(&poly_mul(&[1.0, -1.0], &[1.0, 2.0]), &[1.0, 0.0, 1.0]);
        let mut r = polynomial_roots(&p);
        r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let want = [
            Complex64::new(-2.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
        ];
        for (x, y) in r.iter().zip(want.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn reduction_at_zero_delay_is_the_cubic() {
        let (_, c) = analyze_params(&ModelParams::default()).unwrap();
        let p = erlang_reduced_polynomial(&c, 2, 0.0);
        let cubic = c.cubic();
        assert_eq!(&p[2..], &cubic[..]);
        assert_eq!(&p[..2], &[0.0, 0.0]);
    }

    #[test]
    fn routh_hurwitz_agrees_with_eigenvalues_on_grid() {
        for i in 0..12 {
            for j in 0..12 {
                let a = 3.45 + 0.4 * i as f64;
                let h = crate::model::h_threshold(a) * j as f64 / 12.0;
                let p = ModelParams::new(a, h);
                let (eq, c) = analyze_params(&p).unwrap();
                let lead = jacobian_leading_eigenvalue(&p, &eq);
                assert_eq!(routh_hurwitz(&c).stable, lead.re < 0.0, "a={a} H={h}");
                let fl = faddeev_leverrier(&jacobian_no_delay(&p, &eq));
                let cubic = c.cubic();
                for k in 0..4 {
                    assert!((fl[k] - cubic[k]).abs() < 1e-10);
                }
            }
        }
    }
}
