//! Numerical inversion of Laplace transforms by the Fourier-series (Bromwich)
//! method with Euler summation of the alternating tail.

use num_complex::Complex64;

/// Contour and summation parameters of the Euler algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerParams {
    /// Discretization parameter; the aliasing error is about `exp(-a)`.
    pub a: f64,
    /// Number of plain terms before averaging.
    pub terms: usize,
    /// Number of binomial averaging levels.
    pub levels: usize,
}

impl Default for EulerParams {
    fn default() -> Self {
        EulerParams { a: 18.4, terms: 30, levels: 10 }
    }
}

/// Abscissae `s_k` and real weights `w_k` such that
/// `f(t) ≈ Σ_k w_k · Re F(s_k)`.
pub fn euler_nodes(t: f64, params: EulerParams) -> Vec<(Complex64, f64)> {
    assert!(t > 0.0, "inversion point must be positive");
    let EulerParams { a, terms, levels } = params;
    let total = terms + levels;
    let scale = (a / 2.0).exp() / t;
    // Binomial tail weights of the Euler average.
    let denom = 2f64.powi(levels as i32);
    let mut binom = vec![1.0; levels + 1];
    for j in 1..=levels {
        binom[j] = binom[j - 1] * (levels - j + 1) as f64 / j as f64;
    }
    (0..=total)
        .map(|k| {
            let s = Complex64::new(a, 2.0 * std::f64::consts::PI * k as f64) / (2.0 * t);
            let base = if k == 0 { 0.5 * scale } else { scale };
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let euler: f64 = if k <= terms {
                1.0
            } else {
                (k - terms..=levels).map(|j| binom[j]).sum::<f64>() / denom
            };
            (s, base * sign * euler)
        })
        .collect()
}

/// Inverts a vector-valued transform at `t > 0`.
pub fn euler_invert_vec(mut transform: impl FnMut(Complex64) -> Vec<Complex64>, t: f64, params: EulerParams) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for (s, w) in euler_nodes(t, params) {
        let v = transform(s);
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        for (o, z) in out.iter_mut().zip(v) {
            *o += w * z.re;
        }
    }
    out
}

pub fn euler_invert(mut transform: impl FnMut(Complex64) -> Complex64, t: f64, params: EulerParams) -> f64 {
    euler_invert_vec(|s| vec![transform(s)], t, params)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_exponential() {
        let p = EulerParams::default();
        for &t in &[0.1, 1.0, 3.0, 10.0] {
            let f = euler_invert(|s| 1.0 / (s + 2.0), t, p);
            assert!((f - (-2.0 * t).exp()).abs() < 1e-8, "t={t} f={f}");
        }
    }

    #[test]
    fn inverts_cdf_of_gamma() {
        // 1/(s (1+s)^2) is the transform of the Erlang(2,1) cdf.
        let p = EulerParams::default();
        let t: f64 = 1.7;
        let f = euler_invert(|s| 1.0 / (s * (1.0 + s) * (1.0 + s)), t, p);
        let exact = 1.0 - (-t).exp() * (1.0 + t);
        assert!((f - exact).abs() < 1e-8);
    }

    #[test]
    fn inverts_oscillating_function() {
        let p = EulerParams::default();
        let t: f64 = 2.0;
        let f = euler_invert(|s| 1.0 / (s * s + 1.0), t, p);
        assert!((f - t.sin()).abs() < 1e-7);
    }
}
