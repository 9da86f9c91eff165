//! Matrix exponent `F(α)`, its Perron-Frobenius data, the adjustment
//! coefficient, exponential tilting, and the roots of `det(F(λ) − qI)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::claims::ClaimLaw;
use crate::error::{Result, RiskError};
use crate::model::{communicating_classes, stationary_distribution, RegimeModel};
use crate::numerics::linalg::{left_null_vector, right_null_vector, CMatrix, CVector};
use crate::numerics::poly::{poly_det, Poly};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `F(α) = diag(p_i α + λ_i(E e^{−α C^(i)} − 1)) + (q_ij E e^{−α C^(ij)})`.
pub fn matrix_exponent(model: &RegimeModel, alpha: Complex64) -> Result<CMatrix> {
    let n = model.n_states();
    let mut f = CMatrix::zeros(n, n);
    for i in 0..n {
        let lam = model.arrival_rate(i);
        let mut d = model.premium(i) * alpha + model.q()[(i, i)];
        if lam > 0.0 {
            d += lam * (model.state_claim(i).transform(alpha)? - 1.0);
        }
        f[(i, i)] = d;
        for j in 0..n {
            let qij = model.q()[(i, j)];
            if i != j && qij > 0.0 {
                f[(i, j)] = qij * model.transition_claim(i, j).transform(alpha)?;
            }
        }
    }
    Ok(f)
}

/// Entrywise derivative `F'(α)`.
pub fn matrix_exponent_derivative(model: &RegimeModel, alpha: Complex64) -> Result<CMatrix> {
    let n = model.n_states();
    let mut f = CMatrix::zeros(n, n);
    for i in 0..n {
        let lam = model.arrival_rate(i);
        let mut d = c(model.premium(i));
        if lam > 0.0 {
            d += lam * model.state_claim(i).transform_derivative(alpha)?;
        }
        f[(i, i)] = d;
        for j in 0..n {
            let qij = model.q()[(i, j)];
            if i != j && qij > 0.0 {
                f[(i, j)] = qij * model.transition_claim(i, j).transform_derivative(alpha)?;
            }
        }
    }
    Ok(f)
}

/// `F(α)` at real `α`.
pub fn matrix_exponent_real(model: &RegimeModel, alpha: f64) -> Result<DMatrix<f64>> {
    Ok(matrix_exponent(model, c(alpha))?.map(|z| z.re))
}

fn matrix_exponent_derivative_real(model: &RegimeModel, alpha: f64) -> Result<DMatrix<f64>> {
    Ok(matrix_exponent_derivative(model, c(alpha))?.map(|z| z.re))
}

/// Perron-Frobenius data of `F(α)` at a real point.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub alpha: f64,
    pub f: DMatrix<f64>,
    /// Eigenvalue of maximal real part.
    pub k: f64,
    /// Right eigenvector, normalized by `πh = 1`.
    pub h: DVector<f64>,
    /// Left eigenvector, normalized by `vh = 1`.
    pub v: DVector<f64>,
    /// `k'(α) = v F'(α) h`.
    pub dk: f64,
    /// `k''(α)` when both finite-difference neighbours lie in the domain.
    pub d2k: Option<f64>,
}

fn perron_core(model: &RegimeModel, f: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let n = f.nrows();
    if n == 1 {
        return Ok((f[(0, 0)], DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)));
    }
    let classes = communicating_classes(model.q());
    if classes.len() > 1 {
        return Err(RiskError::Reducible(
            classes.into_iter().map(|c| c.into_iter().map(|i| i + 1).collect()).collect(),
        ));
    }
    let k = f
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = f - DMatrix::identity(n, n) * k;
    let (h, _) = right_null_vector(&shifted.map(c));
    let (v, _) = left_null_vector(&shifted.map(c));
    // Fix complex phases so the vectors are real.
    let real_of = |x: &CVector| -> DVector<f64> {
        let pivot = x.iter().fold(c(0.0), |a, z| if z.norm() > a.norm() { *z } else { a });
        let phase = pivot / pivot.norm();
        x.map(|z| (z / phase).re)
    };
    let pi = stationary_distribution(model.q())?;
    let mut h = real_of(&h);
    let mut v = real_of(&v);
    h /= pi.dot(&h);
    v /= v.dot(&h);
    if h.iter().any(|&x| x <= 0.0) || v.iter().any(|&x| x <= 0.0) {
        return Err(RiskError::Numerical(format!("Perron vectors are not positive (k = {k})")));
    }
    Ok((k, h, v))
}

/// Perron eigenvalue only.
pub fn perron_eigenvalue(model: &RegimeModel, alpha: f64) -> Result<f64> {
    let f = matrix_exponent_real(model, alpha)?;
    Ok(perron_core(model, &f)?.0)
}

fn first_derivative(model: &RegimeModel, alpha: f64) -> Result<(f64, DMatrix<f64>, f64, DVector<f64>, DVector<f64>)> {
    let f = matrix_exponent_real(model, alpha)?;
    let (k, h, v) = perron_core(model, &f)?;
    let fp = matrix_exponent_derivative_real(model, alpha)?;
    let dk = v.dot(&(&fp * &h));
    Ok((k, f, dk, h, v))
}

/// `(k'(α), k''(α))`; the second derivative by Richardson-extrapolated
/// central differences of the exact first derivative.
pub fn k_derivatives(model: &RegimeModel, alpha: f64) -> Result<(f64, f64)> {
    let dk = first_derivative(model, alpha)?.2;
    let h = 1e-5 * alpha.abs().max(1.0);
    let dk_at = |a: f64| first_derivative(model, a).map(|r| r.2);
    let d1 = (dk_at(alpha + h)? - dk_at(alpha - h)?) / (2.0 * h);
    let d2 = (dk_at(alpha + h / 2.0)? - dk_at(alpha - h / 2.0)?) / h;
    Ok((dk, (4.0 * d2 - d1) / 3.0))
}

pub fn perron_triple(model: &RegimeModel, alpha: f64) -> Result<SpectralData> {
    let (k, f, dk, h, v) = first_derivative(model, alpha)?;
    let d2k = k_derivatives(model, alpha).ok().map(|d| d.1);
    Ok(SpectralData { alpha, f, k, h, v, dk, d2k })
}

/// The adjustment coefficient: the positive root of `k(−γ) = 0`.
pub fn adjustment_coefficient(model: &RegimeModel) -> Result<f64> {
    if !model.is_light_tailed() {
        return Err(RiskError::NoCramerRoot(
            "some claim law has no moment generating function".into(),
        ));
    }
    let drift = first_derivative(model, 0.0)?.2;
    if drift <= 0.0 {
        return Err(RiskError::NetProfit(format!("stationary drift {drift} is not positive")));
    }
    let abscissa = model.mgf_abscissa();
    let g = |a: f64| perron_eigenvalue(model, -a);
    // Approach the abscissa geometrically until k(−α) turns positive.
    let mut hi = None;
    if abscissa.is_infinite() {
        let mut a = 1.0;
        for _ in 0..200 {
            if g(a)? > 0.0 {
                hi = Some(a);
                break;
            }
            a *= 2.0;
        }
    } else {
        for j in 1..=60 {
            let a = abscissa * (1.0 - 0.5f64.powi(j));
            if g(a)? > 0.0 {
                hi = Some(a);
                break;
            }
        }
    }
    let mut hi = hi.ok_or_else(|| {
        RiskError::NoCramerRoot(format!("k(−α) stays negative up to the abscissa {abscissa}"))
    })?;
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * hi {
            break;
        }
    }
    // Newton polish on k(−γ) with the exact derivative.
    let mut gamma = 0.5 * (lo + hi);
    for _ in 0..20 {
        let (k, _, dk, _, _) = first_derivative(model, -gamma)?;
        let step = k / -dk;
        let next = gamma - step;
        if !(next > lo && next < hi) {
            break;
        }
        gamma = next;
        if step.abs() < 1e-16 * gamma {
            break;
        }
    }
    Ok(gamma)
}

/// The process seen under the exponential change of measure.
#[derive(Debug, Clone)]
pub struct TiltedModel {
    pub model: RegimeModel,
    /// Tilt parameter `θ`: claims are reweighted by `e^{θC}`.
    pub theta: f64,
    /// `k(−θ)`; zero for the Cramér tilt.
    pub k_value: f64,
    /// `h(−θ)`.
    pub h: DVector<f64>,
}

/// Exponential tilt by `θ`: the tilted exponent is
/// `Δ_h^{-1} F(α − θ) Δ_h − k(−θ) I` with `h = h(−θ)`.
pub fn exponential_tilt(model: &RegimeModel, theta: f64) -> Result<TiltedModel> {
    for law in model.active_laws() {
        if !law.closed_under_tilting() {
            return Err(RiskError::Unsupported(law.describe(), "exponential tilting".into()));
        }
    }
    let n = model.n_states();
    let f = matrix_exponent_real(model, -theta)?;
    let (k, h, _) = perron_core(model, &f)?;
    let mut q = DMatrix::zeros(n, n);
    let mut rates = vec![0.0; n];
    let mut state_claims = Vec::with_capacity(n);
    let mut transition_claims = vec![vec![ClaimLaw::Degenerate; n]; n];
    for i in 0..n {
        let lam = model.arrival_rate(i);
        if lam > 0.0 {
            rates[i] = lam * model.state_claim(i).transform(c(-theta))?.re;
            state_claims.push(model.state_claim(i).tilt(theta)?);
        } else {
            state_claims.push(model.state_claim(i).clone());
        }
        let mut off = 0.0;
        for j in 0..n {
            let qij = model.q()[(i, j)];
            if i != j && qij > 0.0 {
                let law = model.transition_claim(i, j);
                q[(i, j)] = qij * law.transform(c(-theta))?.re * h[j] / h[i];
                transition_claims[i][j] = law.tilt(theta)?;
                off += q[(i, j)];
            }
        }
        q[(i, i)] = -off;
    }
    let tilted = RegimeModel::from_parts(q, model.premiums().to_vec(), rates, state_claims, transition_claims)?;
    Ok(TiltedModel { model: tilted, theta, k_value: k, h })
}

/// Tilt by the adjustment coefficient, under which ruin is certain.
pub fn tilt_model(model: &RegimeModel, gamma: f64) -> Result<TiltedModel> {
    let t = exponential_tilt(model, gamma)?;
    if t.k_value.abs() > 1e-8 {
        return Err(RiskError::InvalidArgument(format!(
            "{gamma} is not the adjustment coefficient: k(−γ) = {}",
            t.k_value
        )));
    }
    Ok(t)
}

/// Largest real `α ≥ 0` with `k(α) = q`.
pub fn inverse_exponent(model: &RegimeModel, q: f64) -> Result<f64> {
    let drift = first_derivative(model, 0.0)?.2;
    if q == 0.0 && drift >= 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while perron_eigenvalue(model, hi)? <= q {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(RiskError::NoConvergence("no upper bracket for k(α) = q".into()));
        }
    }
    let mut lo = if q == 0.0 {
        // Start past the minimum of the convex exponent.
        let mut a = hi;
        while a > 1e-12 && perron_eigenvalue(model, a)? > 0.0 {
            a *= 0.5;
        }
        a
    } else {
        0.0
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if perron_eigenvalue(model, mid)? <= q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `F(α)` written as `diag(1/d_i(α)) M(α)` with polynomial rows, for models
/// whose claim transforms are all rational.
#[derive(Debug, Clone)]
pub struct RationalExponent {
    n: usize,
    rows: Vec<Vec<Poly>>,
    row_den: Vec<Poly>,
    /// Distinct claim denominators of each row, used to spot poles.
    factors: Vec<Vec<Poly>>,
}

impl RationalExponent {
    pub fn new(model: &RegimeModel) -> Result<Self> {
        let n = model.n_states();
        let mut rows = Vec::with_capacity(n);
        let mut row_den = Vec::with_capacity(n);
        let mut factors = Vec::with_capacity(n);
        for i in 0..n {
            let lam = model.arrival_rate(i);
            let mut laws: Vec<&ClaimLaw> = Vec::new();
            if lam > 0.0 {
                laws.push(model.state_claim(i));
            }
            for j in 0..n {
                if i != j && model.q()[(i, j)] > 0.0 {
                    laws.push(model.transition_claim(i, j));
                }
            }
            let mut distinct: Vec<(&ClaimLaw, Poly, Poly)> = Vec::new();
            for law in laws {
                if law.is_degenerate() || distinct.iter().any(|(l, _, _)| *l == law) {
                    continue;
                }
                let (num, den) = law.rational().ok_or_else(|| {
                    RiskError::Unsupported(law.describe(), "rational matrix exponent".into())
                })?;
                distinct.push((law, num, den));
            }
            let d = distinct.iter().fold(Poly::one(), |acc, (_, _, den)| &acc * den);
            // num_ℓ times every other distinct denominator.
            let scaled_num = |law: &ClaimLaw| -> Poly {
                if law.is_degenerate() {
                    return d.clone();
                }
                let idx = distinct.iter().position(|(l, _, _)| *l == law).expect("law registered");
                distinct
                    .iter()
                    .enumerate()
                    .filter(|(m, _)| *m != idx)
                    .fold(distinct[idx].1.clone(), |acc, (_, (_, _, den))| &acc * den)
            };
            let mut row = vec![Poly::zero(); n];
            let base = Poly::from_real(&[model.q()[(i, i)] - lam, model.premium(i)]);
            row[i] = &base * &d;
            if lam > 0.0 {
                row[i] = &row[i] + &scaled_num(model.state_claim(i)).scale(c(lam));
            }
            for j in 0..n {
                let qij = model.q()[(i, j)];
                if i != j && qij > 0.0 {
                    row[j] = scaled_num(model.transition_claim(i, j)).scale(c(qij));
                }
            }
            rows.push(row);
            row_den.push(d);
            factors.push(distinct.into_iter().map(|(_, _, den)| den).collect());
        }
        Ok(RationalExponent { n, rows, row_den, factors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `F(α)` by analytic continuation of the rational transforms.
    pub fn eval(&self, alpha: Complex64) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.rows[i][j].eval(alpha) / self.row_den[i].eval(alpha))
    }

    pub fn eval_derivative(&self, alpha: Complex64) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| {
            let (m, dm) = self.rows[i][j].eval_with_derivative(alpha);
            let (d, dd) = self.row_den[i].eval_with_derivative(alpha);
            (dm * d - m * dd) / (d * d)
        })
    }

    /// `det(diag(d_i)(F(α) − qI))` as a polynomial in `α`.
    pub fn det_poly(&self, q: Complex64) -> Poly {
        let m: Vec<Vec<Poly>> = (0..self.n)
            .map(|i| {
                let mut row = self.rows[i].clone();
                row[i] = &row[i] - &self.row_den[i].scale(q);
                row
            })
            .collect();
        poly_det(&m)
    }

    /// True when `α` is (numerically) a pole of some claim transform.
    fn is_pole(&self, alpha: Complex64) -> bool {
        self.factors.iter().flatten().any(|den| {
            let scale: f64 = den.coeffs().iter().map(|z| z.norm()).sum::<f64>() * (1.0 + alpha.norm()).powi(den.degree() as i32);
            den.eval(alpha).norm() < 1e-9 * scale
        })
    }
}

/// A root `λ` of `det(F(λ) − qI) = 0` with its null vectors.
#[derive(Debug, Clone)]
pub struct ExponentRoot {
    pub lambda: Complex64,
    /// Right null vector of `F(λ) − qI`, largest entry scaled to 1.
    pub h: CVector,
    /// Left null vector (as a column), normalized so that `v^T h = 1`.
    pub v: CVector,
    /// `v / (v^T F'(λ) h)`, so that the residue is `h u^T`.
    pub u: CVector,
    /// Residue of `(F(α) − qI)^{-1}` at `λ`: `h v^T / (v^T F'(λ) h)`.
    pub residue: CMatrix,
}

/// Every root of `det(F(λ) − qI)` that is a genuine pole of the resolvent,
/// sorted by decreasing real part.
pub fn all_roots(exponent: &RationalExponent, q: Complex64) -> Result<Vec<ExponentRoot>> {
    let roots = sorted_roots(exponent, q)?;
    require_simple(&roots, roots.len())?;
    roots.into_iter().map(|l| build_root(exponent, q, l)).collect()
}

/// Rejects near-coincident pairs involving one of the first `keep` roots.
fn require_simple(roots: &[Complex64], keep: usize) -> Result<()> {
    for a in 0..keep.min(roots.len()) {
        for b in a + 1..roots.len() {
            let gap = (roots[a] - roots[b]).norm();
            if gap < 1e-7 * (1.0 + roots[a].norm()) {
                return Err(RiskError::MultipleRoot(format!(
                    "det(F(λ) − qI) has a (near) multiple root at {}; perturb q",
                    roots[a]
                )));
            }
        }
    }
    Ok(())
}

/// Polished zeros of the determinant, sorted by decreasing real part.
fn sorted_roots(exponent: &RationalExponent, q: Complex64) -> Result<Vec<Complex64>> {
    let poly = exponent.det_poly(q);
    let mut raw: Vec<Complex64> = poly
        .roots()
        .into_iter()
        .map(|mut r| {
            for _ in 0..3 {
                let (p, dp) = poly.eval_with_derivative(r);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = p / dp;
                if !step.is_finite() || step.norm() > 1e-3 * (1.0 + r.norm()) {
                    break;
                }
                r -= step;
            }
            r
        })
        .filter(|&r| !exponent.is_pole(r))
        .collect();
    raw.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(b.im.partial_cmp(&a.im).unwrap()));
    Ok(raw)
}

fn build_root(exponent: &RationalExponent, q: Complex64, lambda: Complex64) -> Result<ExponentRoot> {
    let n = exponent.n();
    let a = exponent.eval(lambda) - CMatrix::identity(n, n) * q;
    let (h, _) = right_null_vector(&a);
    let (v, _) = left_null_vector(&a);
    let pivot = h.iter().fold(c(0.0), |acc, z| if z.norm() > acc.norm() { *z } else { acc });
    let h = h / pivot;
    let vh = v.transpose() * &h;
    let v = v / vh[0];
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residual = (&a * &h).norm() / scale;
    if residual > 1e-9 {
        return Err(RiskError::Numerical(format!("null vector residual {residual:e} at root {lambda}")));
    }
    let fp = exponent.eval_derivative(lambda);
    let denom = (v.transpose() * &fp * &h)[0];
    if denom.norm() < 1e-12 {
        return Err(RiskError::MultipleRoot(format!("root {lambda} is not simple; perturb q")));
    }
    let u = &v / denom;
    let residue = &h * u.transpose();
    Ok(ExponentRoot { lambda, h, v, u, residue })
}

/// The `N` roots with nonnegative real part (the first-passage roots).
pub fn right_roots(exponent: &RationalExponent, q: Complex64) -> Result<Vec<ExponentRoot>> {
    let n = exponent.n();
    let roots = sorted_roots(exponent, q)?;
    if roots.len() < n {
        return Err(RiskError::Numerical(format!("only {} roots found, expected at least {n}", roots.len())));
    }
    require_simple(&roots, n)?;
    let tol = 1e-9;
    if roots[n - 1].re < -tol || (roots.len() > n && roots[n].re >= -tol) {
        return Err(RiskError::Numerical(format!(
            "expected exactly {n} roots in the closed right half-plane"
        )));
    }
    roots.into_iter().take(n).map(|l| build_root(exponent, q, l)).collect()
}

/// Number of zeros of `p` in `Re α > −ε` by the argument principle.
pub fn right_half_plane_count(p: &Poly, eps: f64) -> usize {
    let n = p.degree();
    let lead = p.coeffs()[n].norm();
    let radius = 2.0 * (1.0 + p.coeffs().iter().map(|z| z.norm() / lead).fold(0.0, f64::max));
    let pi = std::f64::consts::PI;
    let path = |t: f64| -> Complex64 {
        // t in [0, 1]: semicircle for t < 1/2, then down the line Re = −ε.
        if t < 0.5 {
            let phi = -pi / 2.0 + 2.0 * t * pi;
            Complex64::new(-eps, 0.0) + Complex64::from_polar(radius, phi)
        } else {
            let s = (t - 0.5) * 2.0;
            Complex64::new(-eps, radius * (1.0 - 2.0 * s))
        }
    };
    let mut total = 0.0;
    let pieces = 64;
    let mut stack: Vec<(f64, f64, usize)> = (0..pieces)
        .map(|k| (k as f64 / pieces as f64, (k + 1) as f64 / pieces as f64, 0))
        .collect();
    while let Some((a, b, depth)) = stack.pop() {
        let d = (p.eval(path(b)) / p.eval(path(a))).arg();
        if d.abs() > 0.3 && depth < 40 {
            let m = 0.5 * (a + b);
            stack.push((a, m, depth + 1));
            stack.push((m, b, depth + 1));
        } else {
            total += d;
        }
    }
    (total / (2.0 * pi)).round().max(0.0) as usize
}

/// The `N` roots of `det(F(λ) − qI) = 0` in the closed right half-plane,
/// with the count certified by the argument principle.
pub fn exponent_roots(model: &RegimeModel, q: f64) -> Result<Vec<ExponentRoot>> {
    if q < 0.0 {
        return Err(RiskError::InvalidArgument(format!("q must be nonnegative, got {q}")));
    }
    if q == 0.0 {
        crate::model::require_net_profit(model)?;
    }
    let exponent = RationalExponent::new(model)?;
    let roots = right_roots(&exponent, c(q))?;
    let count = right_half_plane_count(&exponent.det_poly(c(q)), 1e-6);
    let n = model.n_states();
    if count != n {
        return Err(RiskError::Numerical(format!(
            "argument principle counts {count} roots in the right half-plane, expected {n}"
        )));
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::drift_report;
    use crate::testing::{model_a, model_b};

    #[test]
    fn exponent_examples() {
        let a = model_a();
        assert_eq!(matrix_exponent(&a, c(0.0)).unwrap()[(0, 0)], c(0.0));
        assert!((matrix_exponent(&a, c(1.0)).unwrap()[(0, 0)].re - 2.0 / 3.0).abs() < 1e-15);
        let b = model_b();
        let f0 = matrix_exponent_real(&b, 0.0).unwrap();
        assert_eq!(f0, *b.q());
    }

    #[test]
    fn perron_examples() {
        let b = model_b();
        let s = perron_triple(&b, 0.0).unwrap();
        assert!(s.k.abs() < 1e-14);
        assert!((s.h[0] - 1.0).abs() < 1e-12 && (s.h[1] - 1.0).abs() < 1e-12);
        assert!((s.v[0] - 0.5).abs() < 1e-12);
        assert!(perron_eigenvalue(&b, 0.5).unwrap() > 0.0);
        let s = perron_triple(&b, 0.7).unwrap();
        let fh = &s.f * &s.h - &s.h * s.k;
        let vf = s.v.transpose() * &s.f - s.v.transpose() * s.k;
        assert!(fh.amax() < 1e-10 && vf.amax() < 1e-10);
        assert!((s.v.dot(&s.h) - 1.0).abs() < 1e-12);
        assert!((perron_eigenvalue(&model_a(), 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn adjustment_coefficient_closed_forms() {
        assert!((adjustment_coefficient(&model_a()).unwrap() - 1.0).abs() < 1e-10);
        let m = RegimeModel::single_state(2.0, 2.0, ClaimLaw::exponential(2.0)).unwrap();
        assert!((adjustment_coefficient(&m).unwrap() - 1.0).abs() < 1e-10);
        let heavy = RegimeModel::single_state(1.0, 1.0, ClaimLaw::Pareto { shape: 2.5, scale: 1.0 }).unwrap();
        let err = adjustment_coefficient(&heavy).unwrap_err();
        assert!(err.to_string().contains("no Cramér root"));
        let g = adjustment_coefficient(&model_b()).unwrap();
        assert!(perron_eigenvalue(&model_b(), -g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn derivatives_closed_forms() {
        let (d1, _) = k_derivatives(&model_a(), 0.0).unwrap();
        assert!((d1 - 0.5).abs() < 1e-12);
        let (d1, d2) = k_derivatives(&model_a(), -1.0).unwrap();
        assert!((d1 + 1.0).abs() < 1e-12);
        assert!((d2 - 4.0).abs() < 1e-6);
        let b = model_b();
        let (d1, _) = k_derivatives(&b, 0.0).unwrap();
        assert!((d1 - drift_report(&b).unwrap().stationary_drift).abs() < 1e-8);
    }

    #[test]
    fn tilted_model_a() {
        let t = tilt_model(&model_a(), 1.0).unwrap();
        assert!((t.model.arrival_rate(0) - 2.0).abs() < 1e-14);
        assert_eq!(*t.model.state_claim(0), ClaimLaw::exponential(1.0));
        assert_eq!(t.model.q()[(0, 0)], 0.0);
        assert!((drift_report(&t.model).unwrap().stationary_drift + 1.0).abs() < 1e-14);
    }

    #[test]
    fn tilted_exponent_is_conjugated() {
        let b = model_b();
        let g = adjustment_coefficient(&b).unwrap();
        let t = tilt_model(&b, g).unwrap();
        assert!(drift_report(&t.model).unwrap().stationary_drift < 0.0);
        for &a in &[-0.3, 0.0, 0.4, 1.5] {
            let ft = matrix_exponent_real(&t.model, a).unwrap();
            let f = matrix_exponent_real(&b, a - g).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let expect = f[(i, j)] * t.h[j] / t.h[i];
                    assert!((ft[(i, j)] - expect).abs() < 1e-8);
                }
            }
            let kt = perron_eigenvalue(&t.model, a).unwrap();
            assert!((kt - perron_eigenvalue(&b, a - g).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn exponent_is_convex() {
        let b = model_b();
        let g = adjustment_coefficient(&b).unwrap();
        let ks: Vec<f64> = (0..50)
            .map(|i| perron_eigenvalue(&b, -0.9 * 1.0 + i as f64 * 0.06).unwrap())
            .collect();
        assert!(g > 0.0);
        for w in ks.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-12);
        }
    }

    #[test]
    fn roots_model_a() {
        let a = model_a();
        let r = exponent_roots(&a, 0.0).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].lambda.norm() < 1e-12);
        let r = exponent_roots(&a, 0.5).unwrap();
        // λ² + (pμ − λ_arr − q)λ − qμ = 0 with p = 1, μ = 2, λ_arr = 1.
        let b: f64 = 2.0 - 1.0 - 0.5;
        let phi = (-b + (b * b + 4.0).sqrt()) / 2.0;
        assert!((r[0].lambda.re - phi).abs() < 1e-12);
        assert!((inverse_exponent(&a, 0.5).unwrap() - phi).abs() < 1e-12);
    }

    #[test]
    fn roots_model_b() {
        let r = exponent_roots(&model_b(), 1.0).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|x| x.lambda.re > 0.0));
    }

    #[test]
    fn residues_sum_to_inverse_premiums() {
        let b = model_b();
        let e = RationalExponent::new(&b).unwrap();
        for &q in &[0.0, 0.7] {
            let roots = all_roots(&e, c(q)).unwrap();
            let total = roots.iter().fold(CMatrix::zeros(2, 2), |acc, r| acc + &r.residue);
            assert!((total[(0, 0)] - 0.5).norm() < 1e-10);
            assert!((total[(1, 1)] - 1.0).norm() < 1e-10);
            assert!(total[(0, 1)].norm() < 1e-10);
        }
    }

    #[test]
    fn argument_principle_counts() {
        // (s − 1)(s + 2)(s − i)(s + i)
        let p = &(&Poly::linear(c(-1.0)) * &Poly::linear(c(2.0)))
            * &Poly::new(vec![c(1.0), c(0.0), c(1.0)]);
        assert_eq!(right_half_plane_count(&p, 1e-6), 3);
    }

    #[test]
    fn rational_exponent_matches_direct() {
        let b = model_b();
        let e = RationalExponent::new(&b).unwrap();
        let z = Complex64::new(0.3, 1.7);
        let d = matrix_exponent(&b, z).unwrap() - e.eval(z);
        assert!(d.iter().all(|x| x.norm() < 1e-13));
    }
}
