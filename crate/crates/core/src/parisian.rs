//! Parisian ruin: ruin is declared only when an excursion below zero lasts
//! at least the delay `ζ`.
//!
//! With `D(z)` the deficit density at ruin from level 0 and `U_ζ(z)` the
//! probability of climbing back from `−z` within `ζ`, the survival vector
//! from 0 solves `(I − A) s = survival(0)` with `A = ∫ D(z) U_ζ(z) dz`, and
//! from `x > 0` it is `survival(x) + B(x) s` with `B` built from the deficit
//! density at `x`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{subexp_asymptote, McBudget};
use crate::error::{Result, RiskError};
use crate::model::{require_net_profit, RegimeModel};
use crate::numerics::laplace::{euler_nodes, EulerParams};
use crate::numerics::linalg::{real_part, CMatrix};
use crate::numerics::quad::gauss_legendre;
use crate::ruin::{ruin_probability, DeficitDensity};
use crate::scale::{g_matrix_complex, ScaleModes};
use crate::simulate::{mc_functionals, Functional};
use crate::spectral::{adjustment_coefficient, RationalExponent};

/// Default Gauss-Legendre order per panel of the deficit integral.
pub const DEFAULT_NODES: usize = 64;

/// `θ ↦ e^{G^(θ) z}` sampled at the Euler nodes for inversion at `ζ`.
pub struct UpcrossKernel {
    zeta: f64,
    premiums: Vec<f64>,
    event_rates: Vec<f64>,
    nodes: Vec<(Complex64, f64, CMatrix, CMatrix, Vec<Complex64>)>,
}

impl UpcrossKernel {
    pub fn new(model: &RegimeModel, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(RiskError::InvalidArgument(format!("delay ζ = {zeta} must be positive and finite")));
        }
        let exponent = RationalExponent::new(model)?;
        let nodes = euler_nodes(zeta, EulerParams::default())
            .into_par_iter()
            .map(|(theta, w)| {
                let (h, hinv, lambdas) = g_matrix_complex(&exponent, theta)?;
                Ok((theta, w, h, hinv, lambdas))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = model.n_states();
        Ok(UpcrossKernel {
            zeta,
            premiums: model.premiums().to_vec(),
            event_rates: (0..n).map(|i| model.event_rate(i)).collect(),
            nodes,
        })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// `P_k(τ_z^+ ≤ ζ, J_{τ_z^+} = j)`.
    ///
    /// The atom `e^{−μ_k z/p_k}` at `s = z/p_k` (no event before reaching `z`)
    /// is removed from the transform before inversion and added back exactly.
    pub fn cdf(&self, z: f64) -> DMatrix<f64> {
        let n = self.premiums.len();
        let p_max = self.premiums.iter().cloned().fold(0.0, f64::max);
        if z > p_max * self.zeta {
            return DMatrix::zeros(n, n);
        }
        if z == 0.0 {
            return DMatrix::identity(n, n);
        }
        let atoms: Vec<f64> = (0..n).map(|k| (-self.event_rates[k] * z / self.premiums[k]).exp()).collect();
        let mut total = DMatrix::zeros(n, n);
        for (theta, w, h, hinv, lambdas) in &self.nodes {
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, lambdas.iter().map(|l| (-l * z).exp())));
            let mut f = h * d * hinv;
            for k in 0..n {
                f[(k, k)] -= atoms[k] * (-theta * z / self.premiums[k]).exp();
            }
            f /= *theta;
            total += real_part(&f) * *w;
        }
        for k in 0..n {
            if z <= self.premiums[k] * self.zeta {
                total[(k, k)] += atoms[k];
            }
        }
        total.apply(|v| *v = v.clamp(0.0, 1.0));
        total
    }
}

/// Up-crossing probabilities with the route that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct UpcrossCdf {
    pub matrix: Vec<Vec<f64>>,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<Vec<Vec<f64>>>,
}

/// `P_k(τ_z^+ ≤ ζ, J_{τ_z^+} = j)` by transform inversion, falling back to
/// simulation when the transform is not available.
pub fn upcross_cdf(model: &RegimeModel, z: f64, zeta: f64, fallback: McBudget) -> Result<UpcrossCdf> {
    if !(z >= 0.0) {
        return Err(RiskError::InvalidArgument(format!("level z = {z} must be nonnegative")));
    }
    let n = model.n_states();
    let to_rows = |m: &DMatrix<f64>| (0..n).map(|i| m.row(i).iter().cloned().collect()).collect();
    match UpcrossKernel::new(model, zeta) {
        Ok(kernel) => Ok(UpcrossCdf { matrix: to_rows(&kernel.cdf(z)), method: "euler-inversion".into(), se: None }),
        Err(RiskError::InvalidArgument(m)) => Err(RiskError::InvalidArgument(m)),
        Err(e) => {
            log::warn!("up-crossing transform unavailable ({e}); using simulation");
            let f = Functional::UpcrossTime { z, horizon: zeta, edges: vec![0.0, zeta.max(1e-12)] };
            let mut matrix = vec![];
            let mut se = vec![];
            for k in 0..n {
                let r = mc_functionals(model, 0.0, k, fallback.n, fallback.seed, &f)?;
                matrix.push(r.estimates.iter().map(|e| e.value).collect());
                se.push(r.estimates.iter().map(|e| e.se).collect());
            }
            Ok(UpcrossCdf { matrix, method: "monte-carlo".into(), se: Some(se) })
        }
    }
}

/// Gauss-Legendre nodes on `[0, p_max ζ]`, split at every `p_i ζ` where the
/// up-crossing atom switches off.
fn z_nodes(model: &RegimeModel, zeta: f64, order: usize) -> Vec<(f64, f64)> {
    let mut breaks: Vec<f64> = model.premiums().iter().map(|p| p * zeta).collect();
    breaks.push(0.0);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let (xs, ws) = gauss_legendre(order);
    let mut nodes = vec![];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, wt) in xs.iter().zip(&ws) {
            nodes.push((mid + half * x, half * wt));
        }
    }
    nodes
}

/// `∫ D^x(z) U_ζ(z) dz` on the given nodes.
fn kernel_at(
    modes: &ScaleModes,
    model: &RegimeModel,
    upcross: &UpcrossKernel,
    x: f64,
    nodes: &[(f64, f64)],
) -> Result<DMatrix<f64>> {
    let deficit = DeficitDensity::new(modes, model, x)?;
    let parts = nodes
        .par_iter()
        .map(|&(z, w)| Ok(deficit.density(z)? * upcross.cdf(z) * w))
        .collect::<Result<Vec<_>>>()?;
    let n = model.n_states();
    Ok(parts.into_iter().fold(DMatrix::zeros(n, n), |acc, m| acc + m))
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solution of the Parisian fixed-point system at delay `ζ`.
#[derive(Debug, Clone, Serialize)]
pub struct ParisianSolution {
    pub zeta: f64,
    /// `s_j = P_{0,j}(τ^ζ = ∞)`.
    pub s: Vec<f64>,
    pub kernel: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    /// Largest change of `A` between the full and half-order rules.
    pub quadrature_error: f64,
    /// Deficit mass beyond `p_max ζ` is multiplied by an up-crossing
    /// probability that is exactly zero, so nothing is truncated.
    pub truncation_bound: f64,
    pub survival0: Vec<f64>,
    pub method: String,
    #[serde(skip)]
    state: Option<SolverState>,
}

#[derive(Debug, Clone)]
struct SolverState {
    model: RegimeModel,
    nodes: Vec<(f64, f64)>,
}

/// Solve `(I − A) s = survival(0)` for the Parisian survival from level 0.
pub fn parisian_solve(model: &RegimeModel, zeta: f64) -> Result<ParisianSolution> {
    parisian_solve_with(model, zeta, DEFAULT_NODES)
}

pub fn parisian_solve_with(model: &RegimeModel, zeta: f64, order: usize) -> Result<ParisianSolution> {
    require_net_profit(model)?;
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(RiskError::InvalidArgument(format!("delay ζ = {zeta} must be finite and nonnegative")));
    }
    let n = model.n_states();
    let phi0 = ruin_probability(model, 0.0)?;
    let survival0: Vec<f64> = phi0.iter().map(|p| 1.0 - p).collect();
    if zeta == 0.0 {
        return Ok(ParisianSolution {
            zeta,
            s: survival0.clone(),
            kernel: vec![vec![0.0; n]; n],
            spectral_radius: 0.0,
            quadrature_error: 0.0,
            truncation_bound: 0.0,
            survival0,
            method: "classical-extension".into(),
            state: None,
        });
    }
    let modes = ScaleModes::new(model, 0.0)?;
    let upcross = UpcrossKernel::new(model, zeta)?;
    let nodes = z_nodes(model, zeta, order);
    let a = kernel_at(&modes, model, &upcross, 0.0, &nodes)?;
    let coarse = kernel_at(&modes, model, &upcross, 0.0, &z_nodes(model, zeta, (order / 2).max(4)))?;
    let quadrature_error = (&a - &coarse).amax();
    let rho = spectral_radius(&a);
    let system = DMatrix::identity(n, n) - &a;
    let rhs = DVector::from_vec(survival0.clone());
    let dump = || {
        format!(
            "I − A is singular (spectral radius of A = {rho}); A = {:?}, row sums = {:?}",
            a.row_iter().map(|r| r.iter().cloned().collect::<Vec<_>>()).collect::<Vec<_>>(),
            a.column_sum().iter().cloned().collect::<Vec<_>>()
        )
    };
    if rho >= 1.0 {
        return Err(RiskError::Numerical(dump()));
    }
    let s = system.lu().solve(&rhs).ok_or_else(|| RiskError::Numerical(dump()))?;
    let s: Vec<f64> = s.iter().zip(&survival0).map(|(v, lo)| v.clamp(*lo, 1.0)).collect();
    Ok(ParisianSolution {
        zeta,
        s,
        kernel: (0..n).map(|i| a.row(i).iter().cloned().collect()).collect(),
        spectral_radius: rho,
        quadrature_error,
        truncation_bound: 0.0,
        survival0,
        method: "fixed-point".into(),
        state: Some(SolverState { model: model.clone(), nodes }),
    })
}

impl ParisianSolution {
    /// `P_{x,i}(τ^ζ < ∞) = φ_i(x) − (B(x) s)_i`.
    pub fn ruin(&self, x: f64) -> Result<DVector<f64>> {
        if !(x >= 0.0) {
            return Err(RiskError::InvalidArgument(format!("initial capital {x} is negative")));
        }
        let Some(state) = &self.state else {
            return Ok(DVector::from_iterator(self.s.len(), self.s.iter().map(|_| 0.0)) + self.classical(x)?);
        };
        let phi = ruin_probability(&state.model, x)?;
        let modes = ScaleModes::new(&state.model, 0.0)?;
        let upcross = UpcrossKernel::new(&state.model, self.zeta)?;
        let b = kernel_at(&modes, &state.model, &upcross, x, &state.nodes)?;
        let s = DVector::from_vec(self.s.clone());
        let ruin = &phi - b * s;
        Ok(ruin.zip_map(&phi, |r, p| r.clamp(0.0, p)))
    }

    fn classical(&self, x: f64) -> Result<DVector<f64>> {
        Err(RiskError::InvalidArgument(format!(
            "the ζ = 0 extension has no stored model; call parisian_survival for x = {x}"
        )))
    }

    pub fn survival(&self, x: f64) -> Result<DVector<f64>> {
        Ok(self.ruin(x)?.map(|r| 1.0 - r))
    }
}

/// `P_{x,i}(τ^ζ = ∞)`; `ζ = 0` is classical survival.
pub fn parisian_survival(model: &RegimeModel, zeta: f64, x: f64) -> Result<DVector<f64>> {
    Ok(parisian_ruin(model, zeta, x)?.map(|r| 1.0 - r))
}

/// `P_{x,i}(τ^ζ < ∞)`.
pub fn parisian_ruin(model: &RegimeModel, zeta: f64, x: f64) -> Result<DVector<f64>> {
    if zeta == 0.0 {
        require_net_profit(model)?;
        return ruin_probability(model, x);
    }
    parisian_solve(model, zeta)?.ruin(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParisianCramer {
    pub zeta: f64,
    pub gamma: f64,
    /// `C^ζ` per initial state.
    pub constants: Vec<f64>,
    /// Change of the fit when `x₀` doubles, as an error estimate.
    pub se: Vec<f64>,
    pub x0: f64,
}

/// Aitken extrapolation of `e^{γx} f(x)` from `x₀, 1.5x₀, 2x₀`.
fn tail_fit(gamma: f64, x0: f64, f: &impl Fn(f64) -> Result<DVector<f64>>) -> Result<DVector<f64>> {
    let scaled = |x: f64| -> Result<DVector<f64>> { Ok(f(x)? * (gamma * x).exp()) };
    let (a, b, c) = (scaled(x0)?, scaled(1.5 * x0)?, scaled(2.0 * x0)?);
    Ok(DVector::from_iterator(
        a.len(),
        (0..a.len()).map(|i| {
            let denom = (c[i] - b[i]) - (b[i] - a[i]);
            if denom.abs() < 1e-14 * c[i].abs().max(1e-300) {
                c[i]
            } else {
                c[i] - (c[i] - b[i]).powi(2) / denom
            }
        }),
    ))
}

/// `lim e^{γx} P_{x,i}(τ^ζ < ∞)` by a tail fit on `x₀, 1.5x₀, 2x₀`.
pub fn parisian_cramer(model: &RegimeModel, zeta: f64) -> Result<ParisianCramer> {
    let gamma = adjustment_coefficient(model)?;
    let solution = parisian_solve(model, zeta)?;
    let ruin = |x: f64| solution.ruin(x);
    let x0 = 10.0 / gamma;
    let first = tail_fit(gamma, x0, &ruin)?;
    let second = tail_fit(gamma, 2.0 * x0, &ruin)?;
    let change = (&second - &first).abs();
    for i in 0..first.len() {
        if change[i] > 0.02 * second[i].abs() || !(second[i] > 0.0) {
            return Err(RiskError::NoConvergence(format!(
                "Parisian Cramér fit for state {} moved from {} to {} when x₀ doubled",
                i + 1,
                first[i],
                second[i]
            )));
        }
    }
    let classical = tail_fit(gamma, 2.0 * x0, &|x| ruin_probability(model, x))?;
    for i in 0..second.len() {
        if second[i] > classical[i] * (1.0 + 1e-6) + change[i] {
            return Err(RiskError::Numerical(format!(
                "Parisian constant {} exceeds the classical constant {} in state {}",
                second[i],
                classical[i],
                i + 1
            )));
        }
    }
    Ok(ParisianCramer {
        zeta,
        gamma,
        constants: second.iter().cloned().collect(),
        se: change.iter().cloned().collect(),
        x0: 2.0 * x0,
    })
}

/// Heavy-tailed Parisian asymptote; by the single big jump it does not
/// depend on `ζ` and equals the classical subexponential asymptote.
pub fn parisian_subexp(model: &RegimeModel, x: f64, zeta: f64) -> Result<Vec<f64>> {
    if !(zeta > 0.0) {
        return Err(RiskError::InvalidArgument(format!("delay ζ = {zeta} must be positive")));
    }
    subexp_asymptote(model, x)
}

/// CSV with columns `zeta, x, ruin_1, …, ruin_N, spectral_radius, quadrature_error`.
pub fn parisian_csv(solution: &ParisianSolution, xs: &[f64], ruins: &[DVector<f64>]) -> String {
    let n = solution.s.len();
    let mut out = String::from("zeta,x");
    for i in 1..=n {
        let _ = write!(out, ",ruin_{i}");
    }
    out.push_str(",spectral_radius,quadrature_error\n");
    for (x, r) in xs.iter().zip(ruins) {
        let _ = write!(out, "{},{x}", solution.zeta);
        for v in r.iter() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{}", solution.spectral_radius, solution.quadrature_error);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quad;
    use crate::testing::{model_a, model_b};

    #[test]
    fn upcross_boundaries() {
        let b = model_b();
        let k = UpcrossKernel::new(&b, 1.0).unwrap();
        assert_eq!(k.cdf(0.0), DMatrix::identity(2, 2));
        assert_eq!(k.cdf(2.5), DMatrix::zeros(2, 2));
        let m = k.cdf(0.7);
        assert!(m.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(m.column_sum().iter().all(|&s| s <= 1.0 + 1e-9));
    }

    #[test]
    fn upcross_transform_identity() {
        // ∫_0^∞ e^{−θζ} P(τ_z^+ ≤ ζ) dζ = θ^{-1} e^{G^(θ) z}, model A at z = 0.5.
        let a = model_a();
        let z = 0.5;
        for &theta in &[0.5, 1.0, 3.0] {
            let modes = ScaleModes::new(&a, theta).unwrap();
            let exact = modes.exp_g(z).unwrap()[(0, 0)] / theta;
            // The cdf vanishes below ζ = z/p = 0.5 and jumps there.
            let f = |zeta: f64| (-theta * zeta).exp() * UpcrossKernel::new(&a, zeta).unwrap().cdf(z)[(0, 0)];
            let end = 0.5 + 22.0 / theta;
            let approx = quad::composite(f, 0.5, end, 40, 16) + (-theta * end).exp() / theta;
            assert!((approx - exact).abs() < 2e-5 * exact, "θ={theta}: {approx} vs {exact}");
        }
    }

    #[test]
    fn zeta_zero_is_classical() {
        let a = model_a();
        let r = parisian_ruin(&a, 0.0, 1.0).unwrap();
        assert!((r[0] - 0.5 * (-1.0f64).exp()).abs() < 1e-12);
        let small = parisian_ruin(&a, 1e-3, 1.0).unwrap();
        assert!((small[0] - r[0]).abs() < 1e-3);
    }

    #[test]
    fn parisian_is_rarer_and_monotone() {
        let b = model_b();
        let phi = ruin_probability(&b, 1.0).unwrap();
        let short = parisian_ruin(&b, 0.5, 1.0).unwrap();
        let long = parisian_ruin(&b, 1.5, 1.0).unwrap();
        for i in 0..2 {
            assert!(long[i] <= short[i] && short[i] <= phi[i], "{long} {short} {phi}");
        }
        let sol = parisian_solve(&b, 1.0).unwrap();
        assert!(sol.spectral_radius < 1.0);
        for (i, row) in sol.kernel.iter().enumerate() {
            assert!(row.iter().sum::<f64>() <= 1.0 - sol.survival0[i] + 1e-9);
        }
        for (s, lo) in sol.s.iter().zip(&sol.survival0) {
            assert!(*s >= *lo && *s <= 1.0);
        }
    }

    #[test]
    fn subexp_is_delay_free() {
        let m = RegimeModel::single_state(1.0, 1.0, crate::ClaimLaw::Pareto { shape: 2.5, scale: 1.0 }).unwrap();
        let a = parisian_subexp(&m, 40.0, 0.5).unwrap();
        let b = parisian_subexp(&m, 40.0, 5.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, subexp_asymptote(&m, 40.0).unwrap());
    }
}
