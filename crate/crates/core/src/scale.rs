//! Scale matrices `W^(q)`, `Z^(q)`, the first-passage matrices `G^(q)` and
//! `R^(q)`, the limit `C_∞`, the potential density and the two-sided exit
//! identities.
//!
//! For rational claim transforms the resolvent `(F(α) − qI)^{-1}` has simple
//! poles `r_k` with rank-one residues `R_k = h_k u_k^T`, so
//! `W(x) = Σ_k R_k e^{r_k x}`. Everything else is assembled from these modes.
//! Models without rational transforms fall back to numerical inversion.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, RiskError};
use crate::model::RegimeModel;
use crate::numerics::laplace::{euler_nodes, EulerParams};
use crate::numerics::linalg::{inverse_with_condition, real_part, CMatrix};
use crate::numerics::quad::{self, gauss_legendre};
use crate::spectral::{all_roots, inverse_exponent, matrix_exponent, ExponentRoot, RationalExponent};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

const COINCIDENCE: f64 = 1e-9;
const ILL_CONDITIONED: f64 = 1e12;

/// Which representation produced `W^(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMethod {
    Spectral,
    LaplaceInversion,
}

impl ScaleMethod {
    pub fn name(self) -> &'static str {
        match self {
            ScaleMethod::Spectral => "spectral",
            ScaleMethod::LaplaceInversion => "laplace-inversion",
        }
    }
}

/// Modal expansion of the scale matrices at a fixed `q ≥ 0`.
#[derive(Debug, Clone)]
pub struct ScaleModes {
    q: f64,
    n: usize,
    exponent: RationalExponent,
    /// All resolvent poles, by decreasing real part; the first `n` are the
    /// first-passage roots.
    roots: Vec<ExponentRoot>,
    /// `G_k(0)`: the `Z`-coefficient of each mode at `α = 0`.
    z_coeffs: Vec<CMatrix>,
    c_inf: CMatrix,
    /// Left null vectors as rows of `V`, and `V^{-1}`.
    r_basis: Option<(CMatrix, CMatrix)>,
}

impl ScaleModes {
    pub fn new(model: &RegimeModel, q: f64) -> Result<Self> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(RiskError::InvalidArgument(format!("q must be nonnegative, got {q}")));
        }
        let n = model.n_states();
        let exponent = RationalExponent::new(model)?;
        let roots = all_roots(&exponent, c(q))?;
        if roots.len() < n
            || roots[n - 1].lambda.re < -1e-9
            || (roots.len() > n && roots[n].lambda.re >= -1e-9)
        {
            return Err(RiskError::Numerical(format!(
                "resolvent does not have exactly {n} poles in the closed right half-plane"
            )));
        }
        let mut modes =
            ScaleModes { q, n, exponent, roots, z_coeffs: vec![], c_inf: CMatrix::zeros(n, n), r_basis: None };
        modes.z_coeffs = modes.roots.iter().map(|r| modes.z_coeff(r, c(0.0))).collect();
        modes.c_inf = modes.c_infinity_doubling()?;
        let v = modes.growing_v();
        modes.r_basis = inverse_with_condition(&v).ok().map(|(vinv, _)| (v, vinv));
        Ok(modes)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn roots(&self) -> &[ExponentRoot] {
        &self.roots
    }

    /// The `N` first-passage roots.
    pub fn growing(&self) -> &[ExponentRoot] {
        &self.roots[..self.n]
    }

    fn decaying(&self) -> &[ExponentRoot] {
        &self.roots[self.n..]
    }

    fn shifted_exponent(&self, alpha: Complex64) -> CMatrix {
        self.exponent.eval(alpha) - CMatrix::identity(self.n, self.n) * c(self.q)
    }

    /// `(F(α) − qI)/(α − r)`, continued by `F'(r)` when `α = r`.
    fn z_coeff(&self, root: &ExponentRoot, alpha: Complex64) -> CMatrix {
        let gap = alpha - root.lambda;
        if gap.norm() < COINCIDENCE * (1.0 + alpha.norm()) {
            self.exponent.eval_derivative(root.lambda)
        } else {
            self.shifted_exponent(alpha) / gap
        }
    }

    pub fn w_complex(&self, x: f64) -> CMatrix {
        if x < 0.0 {
            return CMatrix::zeros(self.n, self.n);
        }
        self.roots
            .iter()
            .fold(CMatrix::zeros(self.n, self.n), |acc, r| acc + &r.residue * (r.lambda * x).exp())
    }

    /// `W^(q)(x)`; zero for `x < 0`.
    pub fn w(&self, x: f64) -> DMatrix<f64> {
        real_part(&self.w_complex(x))
    }

    /// `Z^(q)(α, x) = Σ_k R_k (F(α) − qI)/(α − r_k) e^{r_k x}`, which equals
    /// `e^{αx}(I − ∫_0^x e^{−αy} W(y) dy (F(α) − qI))` as an identity.
    pub fn z_alpha(&self, alpha: f64, x: f64) -> DMatrix<f64> {
        if x <= 0.0 {
            return DMatrix::identity(self.n, self.n) * (alpha * x).exp();
        }
        let a = c(alpha);
        let total = self.roots.iter().fold(CMatrix::zeros(self.n, self.n), |acc, r| {
            acc + &r.residue * self.z_coeff(r, a) * (r.lambda * x).exp()
        });
        real_part(&total)
    }

    /// `Z^(q)(x) = Z^(q)(0, x)`.
    pub fn z(&self, x: f64) -> DMatrix<f64> {
        if x <= 0.0 {
            return DMatrix::identity(self.n, self.n);
        }
        let total = self
            .roots
            .iter()
            .zip(&self.z_coeffs)
            .fold(CMatrix::zeros(self.n, self.n), |acc, (r, g)| acc + &r.residue * g * (r.lambda * x).exp());
        real_part(&total)
    }

    fn growing_h(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.roots[j].h[i])
    }

    fn growing_v(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.roots[i].v[j])
    }

    /// `G^(q) = H diag(−λ_j) H^{-1}`.
    pub fn g(&self) -> Result<DMatrix<f64>> {
        let h = self.growing_h();
        let (hinv, cond) = inverse_with_condition(&h)?;
        if cond > ILL_CONDITIONED {
            return Err(RiskError::IllConditioned(cond, "first-passage eigenvectors are defective".into()));
        }
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.n,
            self.growing().iter().map(|r| -r.lambda),
        ));
        Ok(real_part(&(&h * d * hinv)))
    }

    /// `e^{G^(q) x}` from the eigen-decomposition.
    pub fn exp_g(&self, x: f64) -> Result<DMatrix<f64>> {
        let h = self.growing_h();
        let (hinv, _) = inverse_with_condition(&h)?;
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.n,
            self.growing().iter().map(|r| (-r.lambda * x).exp()),
        ));
        Ok(real_part(&(&h * d * hinv)))
    }

    /// `R^(q) = V^{-1} diag(−λ_j) V` with the left null vectors as rows of `V`.
    pub fn r(&self) -> Result<DMatrix<f64>> {
        let v = self.growing_v();
        let (vinv, cond) = inverse_with_condition(&v)?;
        if cond > ILL_CONDITIONED {
            return Err(RiskError::IllConditioned(cond, "left eigenvectors are defective".into()));
        }
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.n,
            self.growing().iter().map(|r| -r.lambda),
        ));
        Ok(real_part(&(vinv * d * v)))
    }

    pub fn exp_r(&self, z: f64) -> Result<DMatrix<f64>> {
        Ok(real_part(&self.exp_r_complex(z)?))
    }

    fn exp_r_complex(&self, z: f64) -> Result<CMatrix> {
        let (v, vinv) = self
            .r_basis
            .as_ref()
            .ok_or_else(|| RiskError::IllConditioned(f64::INFINITY, "left eigenvectors are defective".into()))?;
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.n,
            self.growing().iter().map(|r| (-r.lambda * z).exp()),
        ));
        Ok(vinv * d * v)
    }

    /// `W(a)^{-1} Z(a)` with the growing modes factored out analytically, so
    /// the quotient stays well conditioned for large `a`.
    fn scaled_quotient(&self, hinv: &CMatrix, a: f64) -> Result<CMatrix> {
        let n = self.n;
        let mut mw = CMatrix::zeros(n, n);
        let mut mz = CMatrix::zeros(n, n);
        for (j, root) in self.growing().iter().enumerate() {
            let uj = root.u.transpose();
            mw.row_mut(j).copy_from(&uj);
            mz.row_mut(j).copy_from(&(&uj * &self.z_coeffs[j]));
        }
        for (k, root) in self.decaying().iter().enumerate() {
            let coords = hinv * &root.h;
            let uk = root.u.transpose();
            let uz = &uk * &self.z_coeffs[self.n + k];
            for j in 0..n {
                let w = coords[j] * ((root.lambda - self.roots[j].lambda) * a).exp();
                let mut row = mw.row_mut(j);
                row += &uk * w;
                let mut row = mz.row_mut(j);
                row += &uz * w;
            }
        }
        let (mwinv, _) = inverse_with_condition(&mw)?;
        Ok(mwinv * mz)
    }

    fn c_infinity_doubling(&self) -> Result<CMatrix> {
        let (hinv, _) = inverse_with_condition(&self.growing_h())?;
        let mut a = 1.0;
        let mut prev = self.scaled_quotient(&hinv, a)?;
        for _ in 0..20 {
            a *= 2.0;
            let next = self.scaled_quotient(&hinv, a)?;
            let diff = (&next - &prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if diff < 1e-8 {
                return Ok(next);
            }
            prev = next;
        }
        Err(RiskError::NoConvergence("W(a)^{-1} Z(a) did not settle after 20 doublings".into()))
    }

    /// `C_∞ = lim_{a→∞} W(a)^{-1} Z(a)`.
    pub fn c_infinity(&self) -> DMatrix<f64> {
        real_part(&self.c_inf)
    }

    /// `Z(x) − W(x) C_∞`, summed over the decaying modes only (the growing
    /// modes cancel exactly by construction of `C_∞`).
    pub fn ruin_matrix(&self, x: f64) -> DMatrix<f64> {
        let x = x.max(0.0);
        let total = self
            .decaying()
            .iter()
            .zip(&self.z_coeffs[self.n..])
            .fold(CMatrix::zeros(self.n, self.n), |acc, (r, g)| {
                acc + &r.residue * (g - &self.c_inf) * (r.lambda * x).exp()
            });
        real_part(&total)
    }

    /// The same quantity from the defining formula, without mode cancellation.
    pub fn ruin_matrix_direct(&self, x: f64) -> DMatrix<f64> {
        self.z(x) - self.w(x) * self.c_infinity()
    }

    /// `u^(q)(x, z) = W(x) e^{Rz} − W(x − z)` without clamping.
    ///
    /// The growing modes of `W(x) e^{Rz}` coincide with those of `W(x − z)`
    /// (left null vectors diagonalize `e^{Rz}`), so they are cancelled
    /// analytically and large `x` keeps full precision.
    pub fn potential_kernel(&self, x: f64, z: f64) -> Result<DMatrix<f64>> {
        let n = self.n;
        let head = self
            .decaying()
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, r| acc + &r.residue * (r.lambda * x).exp());
        let mut u = head * self.exp_r_complex(z)?;
        let tail = if z <= x { self.decaying() } else { self.growing() };
        let sign = if z <= x { -1.0 } else { 1.0 };
        for r in tail {
            u += &r.residue * (r.lambda * (x - z)).exp() * c(sign);
        }
        Ok(real_part(&u))
    }

    /// `u^(q)(x, z)`; negative round-off is clamped.
    pub fn potential_density(&self, x: f64, z: f64) -> Result<DMatrix<f64>> {
        let mut u = self.potential_kernel(x, z)?;
        let worst = u.iter().cloned().fold(0.0, f64::min);
        if worst < -1e-10 {
            log::warn!("potential density has entry {worst:e} at x={x}, z={z}; clamped to 0");
        }
        u.apply(|v| *v = v.max(0.0));
        Ok(u)
    }
}

/// Chooses the spectral representation when every transform is rational.
pub fn default_method(model: &RegimeModel) -> ScaleMethod {
    if RationalExponent::new(model).is_ok() {
        ScaleMethod::Spectral
    } else {
        ScaleMethod::LaplaceInversion
    }
}

/// `W^(q)(x)` by Euler-summation inversion of `(F(α) − qI)^{-1}`, after
/// shifting the contour past the first-passage root `Φ(q)`.
pub fn w_matrix_inversion(model: &RegimeModel, q: f64, x: f64, params: EulerParams) -> Result<DMatrix<f64>> {
    let n = model.n_states();
    if x < 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if x == 0.0 {
        return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            model.premiums().iter().map(|p| 1.0 / p),
        )));
    }
    let shift = inverse_exponent(model, q)? + 1.0;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for (s, weight) in euler_nodes(x, params) {
        let a = matrix_exponent(model, s + shift)? - CMatrix::identity(n, n) * c(q);
        let inv = a
            .try_inverse()
            .ok_or_else(|| RiskError::Numerical(format!("F(α) − qI singular at α = {}", s + shift)))?;
        acc += inv.map(|z| z.re) * weight;
    }
    let out = acc * (shift * x).exp();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(RiskError::NoConvergence(format!("inversion of W at x = {x} produced non-finite values")));
    }
    Ok(out)
}

/// Matrix integral by composite Gauss-Legendre with panel doubling.
fn integrate_matrix(mut f: impl FnMut(f64) -> Result<DMatrix<f64>>, a: f64, b: f64, rel_tol: f64) -> Result<DMatrix<f64>> {
    let rule = gauss_legendre(10);
    let mut panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
    let mut run = |panels: usize| -> Result<DMatrix<f64>> {
        let h = (b - a) / panels as f64;
        let mut acc: Option<DMatrix<f64>> = None;
        for k in 0..panels {
            let lo = a + k as f64 * h;
            for (x, w) in rule.0.iter().zip(&rule.1) {
                let v = f(lo + 0.5 * h * (x + 1.0))? * (0.5 * h * w);
                acc = Some(match acc {
                    None => v,
                    Some(s) => s + v,
                });
            }
        }
        Ok(acc.expect("at least one node"))
    };
    let mut prev = run(panels)?;
    for _ in 0..8 {
        panels *= 2;
        let next = run(panels)?;
        let scale = next.amax().max(1e-300);
        if (&next - &prev).amax() <= rel_tol * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(RiskError::NoConvergence(format!("matrix quadrature on [{a}, {b}] did not converge")))
}

/// `W^(q)(x)` with the default representation.
pub fn w_matrix(model: &RegimeModel, q: f64, x: f64) -> Result<DMatrix<f64>> {
    match default_method(model) {
        ScaleMethod::Spectral => Ok(ScaleModes::new(model, q)?.w(x)),
        ScaleMethod::LaplaceInversion => w_matrix_inversion(model, q, x, EulerParams::default()),
    }
}

/// `Z^(q)(α, x)`.
pub fn z_matrix(model: &RegimeModel, q: f64, x: f64, alpha: f64) -> Result<DMatrix<f64>> {
    match default_method(model) {
        ScaleMethod::Spectral => Ok(ScaleModes::new(model, q)?.z_alpha(alpha, x)),
        ScaleMethod::LaplaceInversion => z_matrix_quadrature(model, q, x, alpha),
    }
}

/// `Z^(q)(α, x)` from its defining integral over inverted `W`.
pub fn z_matrix_quadrature(model: &RegimeModel, q: f64, x: f64, alpha: f64) -> Result<DMatrix<f64>> {
    let n = model.n_states();
    if x <= 0.0 {
        return Ok(DMatrix::identity(n, n) * (alpha * x).exp());
    }
    let params = EulerParams::default();
    let integral = integrate_matrix(|y| Ok(w_matrix_inversion(model, q, y, params)? * (-alpha * y).exp()), 0.0, x, 1e-8)?;
    let fq = matrix_exponent(model, c(alpha))?.map(|z| z.re) - DMatrix::identity(n, n) * q;
    Ok((DMatrix::identity(n, n) - integral * fq) * (alpha * x).exp())
}

pub fn g_matrix(model: &RegimeModel, q: f64) -> Result<DMatrix<f64>> {
    ScaleModes::new(model, q)?.g()
}

pub fn r_matrix(model: &RegimeModel, q: f64) -> Result<DMatrix<f64>> {
    ScaleModes::new(model, q)?.r()
}

/// `G^(θ)` at a complex discount rate, needed for transform inversion in `θ`.
pub fn g_matrix_complex(exponent: &RationalExponent, theta: Complex64) -> Result<(CMatrix, CMatrix, Vec<Complex64>)> {
    let n = exponent.n();
    let roots = crate::spectral::right_roots(exponent, theta)?;
    let h = CMatrix::from_fn(n, n, |i, j| roots[j].h[i]);
    let (hinv, _) = inverse_with_condition(&h)?;
    Ok((h, hinv, roots.iter().map(|r| r.lambda).collect()))
}

/// `C_∞` by the doubling sequence `a = 2^k`.
pub fn c_infinity(model: &RegimeModel, q: f64) -> Result<DMatrix<f64>> {
    match default_method(model) {
        ScaleMethod::Spectral => Ok(ScaleModes::new(model, q)?.c_infinity()),
        ScaleMethod::LaplaceInversion => {
            if q == 0.0 {
                crate::model::require_net_profit(model)?;
            }
            let quotient = |a: f64| -> Result<DMatrix<f64>> {
                let w = w_matrix_inversion(model, q, a, EulerParams::default())?;
                let (winv, cond) = inverse_with_condition(&w.map(c))?;
                if cond > ILL_CONDITIONED {
                    return Err(RiskError::IllConditioned(cond, format!("W({a}) while computing C_∞")));
                }
                Ok(real_part(&winv) * z_matrix_quadrature(model, q, a, 0.0)?)
            };
            let mut a = 1.0;
            let mut prev = quotient(a)?;
            for _ in 0..20 {
                a *= 2.0;
                let next = quotient(a)?;
                if (&next - &prev).amax() < 1e-8 {
                    return Ok(next);
                }
                prev = next;
            }
            Err(RiskError::NoConvergence("W(a)^{-1} Z(a) did not settle after 20 doublings".into()))
        }
    }
}

pub fn potential_density(model: &RegimeModel, q: f64, x: f64, z: f64) -> Result<DMatrix<f64>> {
    ScaleModes::new(model, q)?.potential_density(x, z)
}

fn check_exit_args(x: f64, a: f64) -> Result<()> {
    if !(0.0 <= x && x <= a) {
        return Err(RiskError::InvalidArgument(format!("need 0 ≤ x ≤ a, got x = {x}, a = {a}")));
    }
    Ok(())
}

fn w_inverse(w: &DMatrix<f64>, a: f64) -> Result<DMatrix<f64>> {
    let (inv, cond) = inverse_with_condition(&w.map(c))?;
    if cond > ILL_CONDITIONED {
        return Err(RiskError::IllConditioned(
            cond,
            format!("W({a}) is ill-conditioned; use a smaller upper level"),
        ));
    }
    Ok(real_part(&inv))
}

impl ScaleModes {
    /// `E_x[e^{−qτ_a^+}; τ_a^+ < τ_0^-, J] = W(x) W(a)^{-1}`.
    pub fn exit_upward(&self, x: f64, a: f64) -> Result<DMatrix<f64>> {
        check_exit_args(x, a)?;
        if x == a {
            return Ok(DMatrix::identity(self.n, self.n));
        }
        Ok(self.w(x) * w_inverse(&self.w(a), a)?)
    }

    /// `E_x[e^{−qτ_0^- + αX_{τ_0^-}}; τ_0^- < τ_a^+, J]
    ///  = Z(α, x) − W(x) W(a)^{-1} Z(α, a)`.
    pub fn exit_downward(&self, x: f64, a: f64, alpha: f64) -> Result<DMatrix<f64>> {
        check_exit_args(x, a)?;
        if x == a {
            return Ok(DMatrix::zeros(self.n, self.n));
        }
        Ok(self.z_alpha(alpha, x) - self.w(x) * w_inverse(&self.w(a), a)? * self.z_alpha(alpha, a))
    }
}

pub fn exit_upward(model: &RegimeModel, q: f64, x: f64, a: f64) -> Result<DMatrix<f64>> {
    ScaleModes::new(model, q)?.exit_upward(x, a)
}

pub fn exit_downward(model: &RegimeModel, q: f64, x: f64, a: f64, alpha: f64) -> Result<DMatrix<f64>> {
    if alpha < 0.0 {
        return Err(RiskError::InvalidArgument(format!("α must be nonnegative, got {alpha}")));
    }
    ScaleModes::new(model, q)?.exit_downward(x, a, alpha)
}

/// Largest entrywise relative gap between `∫ e^{−αx} W^(q)(x) dx` and
/// `(F(α) − qI)^{-1}`.
///
/// The integral is taken by quadrature on `[0, 4]`; the remainder is the
/// analytic continuation of the modal sum, so `α` below the largest root is
/// allowed and compares the continued transform.
pub fn laplace_round_trip(model: &RegimeModel, alpha: f64, q: f64) -> Result<f64> {
    let n = model.n_states();
    let modes = ScaleModes::new(model, q)?;
    let cut = 4.0;
    let mut numeric = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            numeric[(i, j)] = quad::adaptive(|x| modes.w(x)[(i, j)] * (-alpha * x).exp(), 0.0, cut, 1e-12, 1e-11)?;
        }
    }
    let tail = modes.roots().iter().fold(CMatrix::zeros(n, n), |acc, r| {
        acc + &r.residue * ((r.lambda - alpha) * cut).exp() / (c(alpha) - r.lambda)
    });
    numeric += real_part(&tail);
    let exact = (crate::spectral::matrix_exponent_real(model, alpha)? - DMatrix::identity(n, n) * q)
        .try_inverse()
        .ok_or_else(|| RiskError::Numerical(format!("F({alpha}) − {q}I is singular")))?;
    Ok(numeric.iter().zip(exact.iter()).map(|(a, e)| (a - e).abs() / e.abs().max(1e-12)).fold(0.0, f64::max))
}

/// Grid options for a tabulated scale set.
#[derive(Debug, Clone, Copy)]
pub struct GridOptions {
    pub step: f64,
    /// Upper end of the grid; `None` means ten times the largest mean claim.
    pub extent: Option<f64>,
    pub method: Option<ScaleMethod>,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { step: 0.01, extent: None, method: None }
    }
}

/// Tabulated scale matrices on a uniform grid.
#[derive(Debug, Clone)]
pub struct ScaleSet {
    pub q: f64,
    pub grid: Vec<f64>,
    pub w: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
    pub g: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub c_infinity: DMatrix<f64>,
    pub method: ScaleMethod,
    /// 1-norm condition number of `W(x)` at each positive grid point.
    pub conditions: Vec<f64>,
}

impl ScaleSet {
    pub fn build(model: &RegimeModel, q: f64, options: GridOptions) -> Result<Self> {
        if !(options.step > 0.0) {
            return Err(RiskError::InvalidArgument(format!("grid step must be positive, got {}", options.step)));
        }
        let extent = options.extent.unwrap_or_else(|| 10.0 * model.largest_mean_claim().max(0.1));
        let count = (extent / options.step).round() as usize;
        let grid: Vec<f64> = (0..=count).map(|k| k as f64 * options.step).collect();
        let method = options.method.unwrap_or_else(|| default_method(model));
        let modes = ScaleModes::new(model, q);
        let (w, z, g, r, c_infinity) = match method {
            ScaleMethod::Spectral => {
                let modes = modes?;
                let w: Vec<_> = grid.par_iter().map(|&x| modes.w(x)).collect();
                let z: Vec<_> = grid.par_iter().map(|&x| modes.z(x)).collect();
                (w, z, modes.g()?, modes.r()?, modes.c_infinity())
            }
            ScaleMethod::LaplaceInversion => {
                let params = EulerParams::default();
                let w = grid
                    .par_iter()
                    .map(|&x| w_matrix_inversion(model, q, x, params))
                    .collect::<Result<Vec<_>>>()?;
                let z = grid
                    .par_iter()
                    .map(|&x| z_matrix_quadrature(model, q, x, 0.0))
                    .collect::<Result<Vec<_>>>()?;
                let modes = modes?;
                (w, z, modes.g()?, modes.r()?, c_infinity(model, q)?)
            }
        };
        let conditions = w
            .iter()
            .map(|m| inverse_with_condition(&m.map(c)).map(|r| r.1).unwrap_or(f64::INFINITY))
            .collect();
        Ok(ScaleSet { q, grid, w, z, g, r, c_infinity, method, conditions })
    }

    /// CSV with columns `x`, then `W` and `Z` entries in row-major order.
    pub fn to_csv(&self) -> String {
        let n = self.g.nrows();
        let mut out = String::from("x");
        for name in ["W", "Z"] {
            for i in 1..=n {
                for j in 1..=n {
                    let _ = write!(out, ",{name}_{i}{j}");
                }
            }
        }
        out.push('\n');
        for (k, x) in self.grid.iter().enumerate() {
            let _ = write!(out, "{x}");
            for m in [&self.w[k], &self.z[k]] {
                for i in 0..n {
                    for j in 0..n {
                        let _ = write!(out, ",{}", m[(i, j)]);
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
