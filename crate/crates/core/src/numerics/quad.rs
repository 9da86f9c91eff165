//! Gauss-Legendre quadrature: fixed rules, composite panels, and an adaptive
//! bisection scheme that compares a panel against its two halves.

use std::ops::{Add, Mul, Sub};
use std::sync::LazyLock;

use num_complex::Complex64;

use crate::error::{Result, RiskError};

/// Values that can be integrated: reals and complex numbers.
pub trait Integrand: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

static GL10: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| gauss_legendre(10));

/// Fixed-rule integral of `f` over [a, b] using precomputed nodes.
pub fn fixed<T: Integrand>(f: &mut impl FnMut(f64) -> T, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> T {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(&rule.1)
        .fold(T::zero(), |acc, (&x, &w)| acc + f(mid + half * x) * (w * half))
}

/// Composite rule with `panels` equal panels of an `n`-point rule.
pub fn composite<T: Integrand>(mut f: impl FnMut(f64) -> T, a: f64, b: f64, panels: usize, n: usize) -> T {
    let rule = gauss_legendre(n);
    let h = (b - a) / panels as f64;
    (0..panels).fold(T::zero(), |acc, k| {
        let lo = a + k as f64 * h;
        acc + fixed(&mut f, lo, lo + h, &rule)
    })
}

/// Adaptive integral of `f` over the finite interval [a, b] to absolute
/// tolerance `abs_tol` or relative tolerance `rel_tol`, whichever is looser.
pub fn adaptive<T: Integrand>(mut f: impl FnMut(f64) -> T, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let rule = &*GL10;
    let whole = fixed(&mut f, a, b, rule);
    // Rough magnitude estimate used for the relative criterion.
    let scale = composite(&mut f, a, b, 8, 10).magnitude().max(whole.magnitude());
    let tol = abs_tol.max(rel_tol * scale);
    let mut stack = vec![(a, b, whole, 0usize)];
    let mut total = T::zero();
    let mut evaluations = 0usize;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = fixed(&mut f, lo, mid, rule);
        let right = fixed(&mut f, mid, hi, rule);
        evaluations += 1;
        let refined = left + right;
        let err = (refined - est).magnitude();
        let width_share = (hi - lo) / (b - a).abs();
        if err <= (tol * width_share).max(1e-300) || depth >= 48 {
            total = total + refined;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
        if evaluations > 200_000 {
            return Err(RiskError::NoConvergence(format!(
                "adaptive quadrature on [{a}, {b}] exceeded the panel budget"
            )));
        }
    }
    Ok(total)
}

/// Adaptive integral over [a, ∞) through the map x = a + t/(1-t).
pub fn adaptive_to_infinity<T: Integrand>(mut f: impl FnMut(f64) -> T, a: f64, abs_tol: f64, rel_tol: f64) -> Result<T> {
    adaptive(
        |t| {
            if t >= 1.0 {
                return T::zero();
            }
            let one_minus = 1.0 - t;
            let x = a + t / one_minus;
            let v = f(x) * (1.0 / (one_minus * one_minus));
            if v.magnitude().is_finite() {
                v
            } else {
                T::zero()
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Adaptive integral over [a, ∞) split into geometrically growing panels,
/// stopping once a panel contributes less than `abs_tol`.
pub fn adaptive_panels_to_infinity<T: Integrand>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    first_width: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<T> {
    let mut total = T::zero();
    let mut lo = a;
    let mut width = first_width;
    let mut quiet = 0;
    for _ in 0..200 {
        let part = adaptive(&mut f, lo, lo + width, abs_tol * 1e-2, rel_tol)?;
        total = total + part;
        lo += width;
        width *= 2.0;
        if part.magnitude() <= abs_tol.max(rel_tol * total.magnitude()) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    Err(RiskError::NoConvergence(format!(
        "tail integral from {a} did not settle"
    )))
}
