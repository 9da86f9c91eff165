//! Dense complex polynomials with coefficients stored in ascending order.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    /// `s + a`
    pub fn linear(a: Complex64) -> Self {
        Self::new(vec![a, Complex64::new(1.0, 0.0)])
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if *c == Complex64::new(0.0, 0.0)) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn pow(&self, n: usize) -> Poly {
        (0..n).fold(Poly::one(), |acc, _| &acc * self)
    }

    /// All complex roots, by Aberth-Ehrlich iteration followed by Newton polishing.
    pub fn roots(&self) -> Vec<Complex64> {
        let n = self.degree();
        if self.is_zero() || n == 0 {
            return vec![];
        }
        let lead = self.coeffs[n];
        if n == 1 {
            return vec![-self.coeffs[0] / lead];
        }
        let monic: Vec<Complex64> = self.coeffs.iter().map(|&c| c / lead).collect();
        let monic = Poly { coeffs: monic };
        // Initial guesses on a circle bounded by the Fujiwara radius.
        let radius = (0..n)
            .map(|k| monic.coeffs[k].norm().powf(1.0 / (n - k) as f64))
            .fold(0.0_f64, f64::max)
            .max(1e-3)
            * 2.0;
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4;
                Complex64::from_polar(radius * (0.5 + 0.5 * (k as f64 + 1.0) / n as f64), theta)
            })
            .collect();
        for _ in 0..500 {
            let mut max_step = 0.0_f64;
            for k in 0..n {
                let (p, dp) = monic.eval_with_derivative(z[k]);
                if p.norm() == 0.0 {
                    continue;
                }
                let ratio = p / dp;
                let sum: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| {
                        let d = z[k] - z[j];
                        if d.norm() == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            d.inv()
                        }
                    })
                    .sum();
                let step = ratio / (Complex64::new(1.0, 0.0) - ratio * sum);
                if step.is_finite() {
                    z[k] -= step;
                    max_step = max_step.max(step.norm() / (1.0 + z[k].norm()));
                }
            }
            if max_step < 1e-15 {
                break;
            }
        }
        for root in z.iter_mut() {
            for _ in 0..5 {
                let (p, dp) = self.eval_with_derivative(*root);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = p / dp;
                if !step.is_finite() || step.norm() < 1e-17 * (1.0 + root.norm()) {
                    break;
                }
                *root -= step;
            }
        }
        z
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(zero)
                        + rhs.coeffs.get(k).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &rhs.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

/// Determinant of a square matrix of polynomials by cofactor expansion.
pub fn poly_det(m: &[Vec<Poly>]) -> Poly {
    let n = m.len();
    match n {
        0 => Poly::one(),
        1 => m[0][0].clone(),
        2 => &(&m[0][0] * &m[1][1]) - &(&m[0][1] * &m[1][0]),
        _ => {
            let mut acc = Poly::zero();
            for col in 0..n {
                if m[0][col].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<Poly>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != col)
                            .map(|(_, p)| p.clone())
                            .collect()
                    })
                    .collect();
                let term = &m[0][col] * &poly_det(&minor);
                acc = if col % 2 == 0 { &acc + &term } else { &acc - &term };
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn quadratic_roots() {
        // (s - 1)(s + 2) = s^2 + s - 2
        let p = Poly::from_real(&[-2.0, 1.0, 1.0]);
        let mut r: Vec<f64> = p.roots().iter().map(|z| z.re).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((r[0] + 2.0).abs() < 1e-13);
        assert!((r[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn roots_of_product_of_linears() {
        let targets = [c(-3.0), Complex64::new(0.5, 2.0), Complex64::new(0.5, -2.0), c(7.0), c(0.0)];
        let p = targets
            .iter()
            .fold(Poly::one(), |acc, &t| &acc * &Poly::linear(-t));
        let roots = p.roots();
        for t in targets {
            let best = roots.iter().map(|r| (r - t).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10, "missed root {t}");
        }
    }

    #[test]
    fn complex_coefficient_roots() {
        let a = Complex64::new(1.0, 1.0);
        let b = Complex64::new(-2.0, 0.5);
        let p = &Poly::linear(-a) * &Poly::linear(-b);
        let roots = p.roots();
        assert!(roots.iter().any(|r| (r - a).norm() < 1e-12));
        assert!(roots.iter().any(|r| (r - b).norm() < 1e-12));
    }

    #[test]
    fn determinant_of_polynomial_matrix() {
        let m = vec![
            vec![Poly::from_real(&[1.0, 1.0]), Poly::from_real(&[2.0])],
            vec![Poly::from_real(&[0.0, 3.0]), Poly::from_real(&[1.0, 0.0, 1.0])],
        ];
        let d = poly_det(&m);
        // (1+s)(1+s^2) - 6s = 1 - 5s + s^2 + s^3
        let z = c(0.7);
        let expect = 1.0 - 5.0 * 0.7 + 0.49 + 0.343;
        assert!((d.eval(z).re - expect).abs() < 1e-12);
    }
}
