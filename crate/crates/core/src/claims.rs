//! Claim-size distributions.
//!
//! Light-tailed families (exponential, Erlang, hyperexponential, phase-type)
//! have rational Laplace-Stieltjes transforms and are closed under
//! exponential tilting; they drive the spectral and scale-matrix machinery.
//! Heavy-tailed families (Pareto/Lomax, Weibull, lognormal) are supported for
//! tails, integrated tails, sampling and quadrature transforms only.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Result, RiskError};
use crate::numerics::linalg::CMatrix;
use crate::numerics::poly::Poly;
use crate::numerics::quad;

/// Supported family names, as accepted by the configuration reader.
pub const FAMILIES: &[&str] = &[
    "degenerate",
    "exponential",
    "erlang",
    "hyperexponential",
    "phase-type",
    "pareto",
    "weibull",
    "lognormal",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ClaimLaw {
    /// Point mass at zero: "no claim".
    Degenerate,
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    HyperExponential { probs: Vec<f64>, rates: Vec<f64> },
    /// Phase-type law with initial vector `alpha` (any deficit from 1 is an
    /// atom at zero) and sub-generator `generator`.
    PhaseType { alpha: Vec<f64>, generator: Vec<Vec<f64>> },
    /// Lomax form: tail `(1 + x/scale)^(-shape)`.
    Pareto { shape: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl ClaimLaw {
    pub fn exponential(rate: f64) -> Self {
        ClaimLaw::Exponential { rate }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ClaimLaw::Degenerate => "degenerate",
            ClaimLaw::Exponential { .. } => "exponential",
            ClaimLaw::Erlang { .. } => "erlang",
            ClaimLaw::HyperExponential { .. } => "hyperexponential",
            ClaimLaw::PhaseType { .. } => "phase-type",
            ClaimLaw::Pareto { .. } => "pareto",
            ClaimLaw::Weibull { .. } => "weibull",
            ClaimLaw::LogNormal { .. } => "lognormal",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ClaimLaw::Degenerate => "degenerate(0)".into(),
            ClaimLaw::Exponential { rate } => format!("exponential(rate={rate})"),
            ClaimLaw::Erlang { shape, rate } => format!("erlang(shape={shape}, rate={rate})"),
            ClaimLaw::HyperExponential { probs, rates } => {
                format!("hyperexponential(probs={probs:?}, rates={rates:?})")
            }
            ClaimLaw::PhaseType { alpha, .. } => format!("phase-type({} phases)", alpha.len()),
            ClaimLaw::Pareto { shape, scale } => format!("pareto(shape={shape}, scale={scale})"),
            ClaimLaw::Weibull { shape, scale } => format!("weibull(shape={shape}, scale={scale})"),
            ClaimLaw::LogNormal { mu, sigma } => format!("lognormal(mu={mu}, sigma={sigma})"),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, ClaimLaw::Degenerate)
    }

    /// Light tail: a moment generating function exists to the right of zero.
    pub fn has_mgf(&self) -> bool {
        !self.is_heavy()
    }

    pub fn is_heavy(&self) -> bool {
        matches!(
            self,
            ClaimLaw::Pareto { .. } | ClaimLaw::Weibull { .. } | ClaimLaw::LogNormal { .. }
        )
    }

    pub fn closed_under_tilting(&self) -> bool {
        !self.is_heavy()
    }

    /// Every parameter problem of this law, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = |name: &str, x: f64, v: &mut Vec<String>| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{} {name} must be positive and finite, got {x}", self.family()));
            }
        };
        match self {
            ClaimLaw::Degenerate => {}
            ClaimLaw::Exponential { rate } => positive("rate", *rate, &mut v),
            ClaimLaw::Erlang { shape, rate } => {
                positive("rate", *rate, &mut v);
                if *shape == 0 {
                    v.push("erlang shape must be at least 1".into());
                }
            }
            ClaimLaw::HyperExponential { probs, rates } => {
                if probs.len() != rates.len() || probs.is_empty() {
                    v.push("hyperexponential probs and rates must be non-empty and of equal length".into());
                }
                for &r in rates {
                    positive("rate", r, &mut v);
                }
                if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    v.push("hyperexponential probabilities must lie in [0,1]".into());
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-10 {
                    v.push(format!("hyperexponential probabilities sum to {s}, not 1"));
                }
            }
            ClaimLaw::PhaseType { alpha, generator } => {
                let m = alpha.len();
                if m == 0 || generator.len() != m || generator.iter().any(|r| r.len() != m) {
                    v.push("phase-type alpha and generator dimensions disagree".into());
                    return v;
                }
                if alpha.iter().any(|&a| a < 0.0) || alpha.iter().sum::<f64>() > 1.0 + 1e-12 {
                    v.push("phase-type alpha must be nonnegative with sum at most 1".into());
                }
                for (i, row) in generator.iter().enumerate() {
                    if row[i] >= 0.0 {
                        v.push(format!("phase-type generator diagonal entry {} must be negative", i + 1));
                    }
                    if row.iter().enumerate().any(|(j, &x)| j != i && x < 0.0) {
                        v.push(format!("phase-type generator row {} has negative off-diagonal", i + 1));
                    }
                    if row.iter().sum::<f64>() > 1e-12 {
                        v.push(format!("phase-type generator row {} sums above zero", i + 1));
                    }
                }
                if v.is_empty() && self.phase_type_matrices().1.clone().try_inverse().is_none() {
                    v.push("phase-type generator is singular (absorption not certain)".into());
                }
            }
            ClaimLaw::Pareto { shape, scale } => {
                positive("shape", *shape, &mut v);
                positive("scale", *scale, &mut v);
            }
            ClaimLaw::Weibull { shape, scale } => {
                positive("shape", *shape, &mut v);
                positive("scale", *scale, &mut v);
            }
            ClaimLaw::LogNormal { mu, sigma } => {
                positive("sigma", *sigma, &mut v);
                if !mu.is_finite() {
                    v.push("lognormal mu must be finite".into());
                }
            }
        }
        v
    }

    fn phase_type_matrices(&self) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            ClaimLaw::PhaseType { alpha, generator } => {
                let m = alpha.len();
                let t = DMatrix::from_fn(m, m, |i, j| generator[i][j]);
                (DVector::from_column_slice(alpha), t)
            }
            _ => unreachable!("not a phase-type law"),
        }
    }

    /// Supremum of `s` with `E e^{sC} < ∞`: infinite for the point mass,
    /// zero for heavy tails.
    pub fn mgf_abscissa(&self) -> f64 {
        match self {
            ClaimLaw::Degenerate => f64::INFINITY,
            ClaimLaw::Exponential { rate } | ClaimLaw::Erlang { rate, .. } => *rate,
            ClaimLaw::HyperExponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .filter(|(p, _)| **p > 0.0)
                .map(|(_, r)| *r)
                .fold(f64::INFINITY, f64::min),
            ClaimLaw::PhaseType { .. } => {
                let (_, t) = self.phase_type_matrices();
                let eig = t.complex_eigenvalues();
                -eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
            }
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> Result<f64> {
        match self {
            ClaimLaw::Degenerate => Ok(0.0),
            ClaimLaw::Exponential { rate } => Ok(1.0 / rate),
            ClaimLaw::Erlang { shape, rate } => Ok(*shape as f64 / rate),
            ClaimLaw::HyperExponential { probs, rates } => {
                Ok(probs.iter().zip(rates).map(|(p, r)| p / r).sum())
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let inv = (-t).try_inverse().ok_or_else(|| RiskError::Numerical("singular generator".into()))?;
                Ok((alpha.transpose() * inv * DVector::from_element(alpha.len(), 1.0))[0])
            }
            ClaimLaw::Pareto { shape, scale } => {
                if *shape <= 1.0 {
                    Err(RiskError::Domain(format!("{} has infinite mean", self.describe())))
                } else {
                    Ok(scale / (shape - 1.0))
                }
            }
            ClaimLaw::Weibull { shape, scale } => Ok(scale * gamma(1.0 + 1.0 / shape)),
            ClaimLaw::LogNormal { mu, sigma } => Ok((mu + 0.5 * sigma * sigma).exp()),
        }
    }

    pub fn second_moment(&self) -> Result<f64> {
        match self {
            ClaimLaw::Degenerate => Ok(0.0),
            ClaimLaw::Exponential { rate } => Ok(2.0 / (rate * rate)),
            ClaimLaw::Erlang { shape, rate } => {
                let k = *shape as f64;
                Ok(k * (k + 1.0) / (rate * rate))
            }
            ClaimLaw::HyperExponential { probs, rates } => {
                Ok(probs.iter().zip(rates).map(|(p, r)| 2.0 * p / (r * r)).sum())
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let inv = (-t).try_inverse().ok_or_else(|| RiskError::Numerical("singular generator".into()))?;
                Ok(2.0 * (alpha.transpose() * &inv * &inv * DVector::from_element(alpha.len(), 1.0))[0])
            }
            ClaimLaw::Pareto { shape, scale } => {
                if *shape <= 2.0 {
                    Err(RiskError::Domain(format!("{} has infinite variance", self.describe())))
                } else {
                    Ok(2.0 * scale * scale / ((shape - 1.0) * (shape - 2.0)))
                }
            }
            ClaimLaw::Weibull { shape, scale } => Ok(scale * scale * gamma(1.0 + 2.0 / shape)),
            ClaimLaw::LogNormal { mu, sigma } => Ok((2.0 * mu + 2.0 * sigma * sigma).exp()),
        }
    }

    /// Survival function `P(C > x)`.
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self {
            ClaimLaw::Degenerate => 0.0,
            ClaimLaw::Exponential { rate } => (-rate * x).exp(),
            ClaimLaw::Erlang { shape, rate } => {
                let y = rate * x;
                let mut term = 1.0;
                let mut sum = 1.0;
                for n in 1..*shape {
                    term *= y / n as f64;
                    sum += term;
                }
                (-y).exp() * sum
            }
            ClaimLaw::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p * (-r * x).exp()).sum()
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let e = (t * x).exp();
                (alpha.transpose() * e * DVector::from_element(alpha.len(), 1.0))[0].clamp(0.0, 1.0)
            }
            ClaimLaw::Pareto { shape, scale } => (1.0 + x / scale).powf(-shape),
            ClaimLaw::Weibull { shape, scale } => (-(x / scale).powf(*shape)).exp(),
            ClaimLaw::LogNormal { mu, sigma } => {
                if x == 0.0 {
                    return 1.0;
                }
                std_normal().sf((x.ln() - mu) / sigma)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// Density for absolutely continuous laws (the point mass has none).
    pub fn density(&self, x: f64) -> Option<f64> {
        if x < 0.0 {
            return Some(0.0);
        }
        Some(match self {
            ClaimLaw::Degenerate => return None,
            ClaimLaw::Exponential { rate } => rate * (-rate * x).exp(),
            ClaimLaw::Erlang { shape, rate } => {
                let k = *shape as i32;
                let fact: f64 = (1..k).map(|n| n as f64).product();
                rate.powi(k) * x.powi(k - 1) * (-rate * x).exp() / fact
            }
            ClaimLaw::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p * r * (-r * x).exp()).sum()
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let exit = -(&t * DVector::from_element(alpha.len(), 1.0));
                (alpha.transpose() * (t * x).exp() * exit)[0].max(0.0)
            }
            ClaimLaw::Pareto { shape, scale } => shape / scale * (1.0 + x / scale).powf(-shape - 1.0),
            ClaimLaw::Weibull { shape, scale } => {
                if x == 0.0 {
                    return Some(if *shape < 1.0 { f64::INFINITY } else if *shape == 1.0 { 1.0 / scale } else { 0.0 });
                }
                let z = x / scale;
                shape / scale * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
            ClaimLaw::LogNormal { mu, sigma } => {
                if x == 0.0 {
                    return Some(0.0);
                }
                let z = (x.ln() - mu) / sigma;
                (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
        })
    }

    /// `∫_x^∞ P(C > z) dz = E(C - x)^+` without the cap at one.
    pub fn stop_loss(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(self.mean()? - x);
        }
        Ok(match self {
            ClaimLaw::Degenerate => 0.0,
            ClaimLaw::Exponential { rate } => (-rate * x).exp() / rate,
            ClaimLaw::Erlang { shape, rate } => {
                let y = rate * x;
                let mut term = 1.0;
                let mut sum = *shape as f64;
                for j in 1..*shape {
                    term *= y / j as f64;
                    sum += (*shape - j) as f64 * term;
                }
                (-y).exp() * sum / rate
            }
            ClaimLaw::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p * (-r * x).exp() / r).sum()
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let inv = (-&t).try_inverse().ok_or_else(|| RiskError::Numerical("singular generator".into()))?;
                (alpha.transpose() * inv * (t * x).exp() * DVector::from_element(alpha.len(), 1.0))[0].max(0.0)
            }
            ClaimLaw::Pareto { shape, scale } => {
                self.mean()?;
                scale / (shape - 1.0) * (1.0 + x / scale).powf(1.0 - shape)
            }
            ClaimLaw::Weibull { shape, scale } => {
                if x == 0.0 {
                    return self.mean();
                }
                let a = 1.0 / shape;
                scale / shape * gamma(a) * gamma_ur(a, (x / scale).powf(*shape))
            }
            ClaimLaw::LogNormal { mu, sigma } => {
                if x == 0.0 {
                    return self.mean();
                }
                let n = std_normal();
                let lx = x.ln();
                (mu + 0.5 * sigma * sigma).exp() * n.sf((lx - mu - sigma * sigma) / sigma)
                    - x * n.sf((lx - mu) / sigma)
            }
        })
    }

    /// Integrated tail `min(1, ∫_x^∞ P(C > z) dz)`.
    pub fn integrated_tail(&self, x: f64) -> Result<f64> {
        if x.is_infinite() {
            return Ok(0.0);
        }
        Ok(self.stop_loss(x.max(0.0))?.min(1.0))
    }

    /// Rational transform `num(s)/den(s)` for light-tailed families.
    pub fn rational(&self) -> Option<(Poly, Poly)> {
        let c = |x: f64| Complex64::new(x, 0.0);
        match self {
            ClaimLaw::Degenerate => Some((Poly::one(), Poly::one())),
            ClaimLaw::Exponential { rate } => Some((Poly::constant(c(*rate)), Poly::linear(c(*rate)))),
            ClaimLaw::Erlang { shape, rate } => Some((
                Poly::constant(c(rate.powi(*shape as i32))),
                Poly::linear(c(*rate)).pow(*shape as usize),
            )),
            ClaimLaw::HyperExponential { probs, rates } => {
                let den = rates.iter().fold(Poly::one(), |acc, &r| &acc * &Poly::linear(c(r)));
                let num = probs.iter().zip(rates).enumerate().fold(Poly::zero(), |acc, (j, (&p, &r))| {
                    let others = rates
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| *l != j)
                        .fold(Poly::constant(c(p * r)), |a, (_, &rl)| &a * &Poly::linear(c(rl)));
                    &acc + &others
                });
                Some((num, den))
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let m = alpha.len();
                let exit = -(&t * DVector::from_element(m, 1.0));
                let atom = 1.0 - alpha.sum();
                // Faddeev-LeVerrier: char poly of T and adj(sI - T) = Σ M_k s^{m-k}.
                let mut char_coeffs = vec![0.0; m + 1];
                char_coeffs[m] = 1.0;
                let mut mk = DMatrix::<f64>::zeros(m, m);
                let mut num_coeffs = vec![0.0; m + 1];
                for k in 1..=m {
                    mk = &t * &mk + DMatrix::identity(m, m) * char_coeffs[m - k + 1];
                    char_coeffs[m - k] = -(&t * &mk).trace() / k as f64;
                    num_coeffs[m - k] += (alpha.transpose() * &mk * &exit)[0];
                }
                let den = Poly::from_real(&char_coeffs);
                let num = &Poly::from_real(&num_coeffs) + &den.scale(c(atom));
                Some((num, den))
            }
            _ => None,
        }
    }

    /// Laplace-Stieltjes transform `E e^{-sC}`.
    pub fn transform(&self, s: Complex64) -> Result<Complex64> {
        let abscissa = self.mgf_abscissa();
        if s.re < -abscissa || (s.re == -abscissa && abscissa > 0.0 && abscissa.is_finite()) {
            return Err(RiskError::Domain(format!(
                "transform of {} at s={s} is beyond the abscissa -{}",
                self.describe(),
                self.mgf_abscissa()
            )));
        }
        match self {
            ClaimLaw::Degenerate => Ok(Complex64::new(1.0, 0.0)),
            ClaimLaw::Exponential { rate } => Ok(*rate / (s + rate)),
            ClaimLaw::Erlang { shape, rate } => Ok((*rate / (s + rate)).powi(*shape as i32)),
            ClaimLaw::HyperExponential { probs, rates } => {
                Ok(probs.iter().zip(rates).map(|(p, r)| *p * *r / (s + r)).sum())
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let m = alpha.len();
                let exit = -(&t * DVector::from_element(m, 1.0));
                let a = CMatrix::identity(m, m) * s - t.map(|x| Complex64::new(x, 0.0));
                let b = exit.map(|x| Complex64::new(x, 0.0));
                let sol = a.lu().solve(&b).ok_or_else(|| RiskError::Numerical("phase-type transform".into()))?;
                let dot: Complex64 = alpha.iter().zip(sol.iter()).map(|(a, z)| *z * *a).sum();
                Ok(dot + (1.0 - alpha.sum()))
            }
            _ => self.heavy_transform(s),
        }
    }

    fn heavy_transform(&self, s: Complex64) -> Result<Complex64> {
        if s.norm() == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        // E e^{-sC} = 1 - s ∫ e^{-sx} P(C > x) dx
        let width = if s.im.abs() > 0.0 {
            (std::f64::consts::PI / s.im.abs()).min(1.0 / s.re.max(1e-3))
        } else {
            1.0 / s.re.max(1e-3)
        };
        let integral = quad::adaptive_panels_to_infinity(
            |x| (-s * x).exp() * self.tail(x),
            0.0,
            width.max(1e-3),
            1e-13,
            1e-11,
        )?;
        Ok(Complex64::new(1.0, 0.0) - s * integral)
    }

    /// Derivative `d/ds E e^{-sC} = -E[C e^{-sC}]`.
    pub fn transform_derivative(&self, s: Complex64) -> Result<Complex64> {
        if s.re < -self.mgf_abscissa() {
            return Err(RiskError::Domain(format!(
                "transform derivative of {} at s={s} is beyond the abscissa",
                self.describe()
            )));
        }
        match self {
            ClaimLaw::Degenerate => Ok(Complex64::new(0.0, 0.0)),
            ClaimLaw::Exponential { rate } => Ok(-*rate / ((s + rate) * (s + rate))),
            ClaimLaw::Erlang { shape, rate } => {
                let k = *shape as i32;
                Ok(-(k as f64) * rate.powi(k) / (s + rate).powi(k + 1))
            }
            ClaimLaw::HyperExponential { probs, rates } => {
                Ok(probs.iter().zip(rates).map(|(p, r)| -*p * *r / ((s + r) * (s + r))).sum())
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let m = alpha.len();
                let exit = -(&t * DVector::from_element(m, 1.0));
                let a = CMatrix::identity(m, m) * s - t.map(|x| Complex64::new(x, 0.0));
                let lu = a.lu();
                let b = exit.map(|x| Complex64::new(x, 0.0));
                let once = lu.solve(&b).ok_or_else(|| RiskError::Numerical("phase-type transform".into()))?;
                let twice = lu.solve(&once).ok_or_else(|| RiskError::Numerical("phase-type transform".into()))?;
                Ok(-alpha.iter().zip(twice.iter()).map(|(a, z)| *z * *a).sum::<Complex64>())
            }
            _ => {
                if s.norm() == 0.0 {
                    return Ok(Complex64::new(-self.mean()?, 0.0));
                }
                // -E[C e^{-sC}] = -∫ e^{-sx} (P(C>x) - s ∫_x^∞ ... ) ; use the density.
                let width = 1.0 / s.re.max(1e-3);
                let v = quad::adaptive_panels_to_infinity(
                    |x| (-s * x).exp() * (x * self.density(x).unwrap_or(0.0)),
                    0.0,
                    width.max(1e-3),
                    1e-13,
                    1e-11,
                )?;
                Ok(-v)
            }
        }
    }

    /// Exponentially tilted law with density proportional to `e^{θx} f(x)`.
    pub fn tilt(&self, theta: f64) -> Result<ClaimLaw> {
        if !self.closed_under_tilting() {
            return Err(RiskError::Unsupported(self.describe(), "exponential tilting".into()));
        }
        if theta >= self.mgf_abscissa() {
            return Err(RiskError::Domain(format!(
                "tilt {theta} is beyond the abscissa of {}",
                self.describe()
            )));
        }
        Ok(match self {
            ClaimLaw::Degenerate => ClaimLaw::Degenerate,
            ClaimLaw::Exponential { rate } => ClaimLaw::Exponential { rate: rate - theta },
            ClaimLaw::Erlang { shape, rate } => ClaimLaw::Erlang { shape: *shape, rate: rate - theta },
            ClaimLaw::HyperExponential { probs, rates } => {
                let w: Vec<f64> = probs.iter().zip(rates).map(|(p, r)| p * r / (r - theta)).collect();
                let total: f64 = w.iter().sum();
                ClaimLaw::HyperExponential {
                    probs: w.iter().map(|x| x / total).collect(),
                    rates: rates.iter().map(|r| r - theta).collect(),
                }
            }
            ClaimLaw::PhaseType { .. } => {
                let (alpha, t) = self.phase_type_matrices();
                let m = alpha.len();
                let exit = -(&t * DVector::from_element(m, 1.0));
                let shifted = &t + DMatrix::identity(m, m) * theta;
                let g = (-&shifted)
                    .try_inverse()
                    .ok_or_else(|| RiskError::Numerical("tilted generator singular".into()))?
                    * exit;
                let mgf = alpha.dot(&g) + (1.0 - alpha.sum());
                let new_alpha: Vec<f64> = (0..m).map(|i| alpha[i] * g[i] / mgf).collect();
                let generator = (0..m)
                    .map(|i| (0..m).map(|j| shifted[(i, j)] * g[j] / g[i]).collect())
                    .collect();
                ClaimLaw::PhaseType { alpha: new_alpha, generator }
            }
            _ => unreachable!(),
        })
    }

    /// Smallest `x` (to bisection precision) with `P(C > x) <= eps`.
    pub fn tail_quantile(&self, eps: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let mut hi = self.mean().unwrap_or(1.0).max(1e-3);
        let mut guard = 0;
        while self.tail(hi) > eps && guard < 2000 {
            hi *= 2.0;
            guard += 1;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail(mid) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi.max(1.0) {
                break;
            }
        }
        hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ClaimLaw::Degenerate => 0.0,
            ClaimLaw::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            ClaimLaw::Erlang { shape, rate } => Gamma::new(*shape as f64, 1.0 / rate)
                .expect("validated erlang")
                .sample(rng),
            ClaimLaw::HyperExponential { probs, rates } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut idx = rates.len() - 1;
                for (j, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        idx = j;
                        break;
                    }
                }
                Exp::new(rates[idx]).expect("validated rate").sample(rng)
            }
            ClaimLaw::PhaseType { alpha, generator } => {
                let m = alpha.len();
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut phase = None;
                for (j, a) in alpha.iter().enumerate() {
                    acc += a;
                    if u < acc {
                        phase = Some(j);
                        break;
                    }
                }
                let mut total = 0.0;
                while let Some(i) = phase {
                    let out_rate = -generator[i][i];
                    total += Exp::new(out_rate).expect("negative diagonal").sample(rng);
                    let v: f64 = rng.gen::<f64>() * out_rate;
                    let mut acc = 0.0;
                    phase = None;
                    for j in (0..m).filter(|&j| j != i) {
                        acc += generator[i][j];
                        if v < acc {
                            phase = Some(j);
                            break;
                        }
                    }
                }
                total
            }
            ClaimLaw::Pareto { shape, scale } => {
                let u: f64 = rng.gen();
                scale * ((1.0 - u).powf(-1.0 / shape) - 1.0)
            }
            ClaimLaw::Weibull { shape, scale } => Weibull::new(*scale, *shape)
                .expect("validated weibull")
                .sample(rng),
            ClaimLaw::LogNormal { mu, sigma } => LogNormal::new(*mu, *sigma)
                .expect("validated lognormal")
                .sample(rng),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}
