//! Exact ruin quantities: survival and ruin probabilities, the discounted
//! ruin transform, Gerber-Shiu functions by the compensation formula, the
//! deficit law, the Pollaczek-Khintchine series and the embedded random walk.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::claims::ClaimLaw;
use crate::error::{Result, RiskError};
use crate::model::{require_net_profit, RegimeModel};
use crate::numerics::linalg::stationary_of_stochastic;
use crate::numerics::quad;
use crate::scale::{c_infinity, default_method, w_matrix_inversion, ScaleMethod, ScaleModes};

/// Penalty `w(surplus before ruin, deficit at ruin)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyFunction {
    Constant(f64),
    /// `1{lo < deficit ≤ hi}`.
    DeficitIndicator { lo: f64, hi: f64 },
    /// `e^{−α · deficit}`.
    ExpDeficit { alpha: f64 },
    /// Bilinear interpolation of a table indexed by (surplus, deficit), held
    /// constant outside the table.
    Tabulated { surplus: Vec<f64>, deficit: Vec<f64>, values: Vec<Vec<f64>> },
}

impl PenaltyFunction {
    pub fn one() -> Self {
        PenaltyFunction::Constant(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RiskError::InvalidArgument(m));
        match self {
            PenaltyFunction::Constant(c) if !(*c >= 0.0 && c.is_finite()) => bad(format!("constant penalty {c} must be nonnegative")),
            PenaltyFunction::DeficitIndicator { lo, hi } if !(0.0 <= *lo && lo <= hi) => {
                bad(format!("deficit indicator needs 0 ≤ lo ≤ hi, got [{lo}, {hi}]"))
            }
            PenaltyFunction::ExpDeficit { alpha } if !(*alpha >= 0.0) => bad(format!("penalty rate {alpha} must be nonnegative")),
            PenaltyFunction::Tabulated { surplus, deficit, values } => {
                if surplus.len() < 2 || deficit.len() < 2 {
                    return bad("tabulated penalty needs at least a 2x2 table".into());
                }
                if values.len() != surplus.len() || values.iter().any(|r| r.len() != deficit.len()) {
                    return bad("tabulated penalty shape does not match its axes".into());
                }
                if surplus.windows(2).any(|w| w[1] <= w[0]) || deficit.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("tabulated penalty axes must be increasing".into());
                }
                if values.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("tabulated penalty values must be finite and nonnegative".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, surplus: f64, deficit: f64) -> f64 {
        match self {
            PenaltyFunction::Constant(c) => *c,
            PenaltyFunction::DeficitIndicator { lo, hi } => {
                if deficit > *lo && deficit <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            PenaltyFunction::ExpDeficit { alpha } => (-alpha * deficit).exp(),
            PenaltyFunction::Tabulated { surplus: xs, deficit: ys, values } => {
                let locate = |axis: &[f64], v: f64| -> (usize, f64) {
                    let v = v.clamp(axis[0], axis[axis.len() - 1]);
                    let k = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
                    (k, (v - axis[k]) / (axis[k + 1] - axis[k]))
                };
                let (i, s) = locate(xs, surplus);
                let (j, t) = locate(ys, deficit);
                let v = |a: usize, b: usize| values[a][b];
                (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1)) + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
            }
        }
    }

    /// Upper bound of `w`.
    pub fn bound(&self) -> f64 {
        match self {
            PenaltyFunction::Constant(c) => *c,
            PenaltyFunction::DeficitIndicator { .. } | PenaltyFunction::ExpDeficit { .. } => 1.0,
            PenaltyFunction::Tabulated { values, .. } => values.iter().flatten().cloned().fold(0.0, f64::max),
        }
    }

    pub fn is_unit(&self) -> bool {
        *self == PenaltyFunction::Constant(1.0)
    }

    /// `∫_{(z,∞)} w(z, c − z) F(dc)`: the expected penalty when a claim of
    /// law `law` hits surplus `z`.
    pub fn expected_at_claim(&self, law: &ClaimLaw, z: f64) -> Result<f64> {
        if law.is_degenerate() {
            return Ok(0.0);
        }
        Ok(match self {
            PenaltyFunction::Constant(c) => c * law.tail(z),
            PenaltyFunction::DeficitIndicator { lo, hi } => law.tail(z + lo) - law.tail(z + hi),
            _ => {
                let upper = law.tail_quantile(1e-14) - z;
                if upper <= 0.0 {
                    return Ok(0.0);
                }
                quad::adaptive(
                    |y| self.eval(z, y) * law.density(z + y).unwrap_or(0.0),
                    0.0,
                    upper,
                    1e-13,
                    1e-10,
                )?
            }
        })
    }
}

/// `ν^(ij)(dy)`: `λ_i F^(i)` on the diagonal, `q_ij F^(ij)` off it.
#[derive(Debug, Clone)]
pub struct JumpMeasure {
    pub entries: Vec<Vec<(f64, ClaimLaw)>>,
}

impl JumpMeasure {
    pub fn new(model: &RegimeModel) -> Self {
        let n = model.n_states();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            (model.arrival_rate(i), model.state_claim(i).clone())
                        } else {
                            (model.q()[(i, j)], model.transition_claim(i, j).clone())
                        }
                    })
                    .collect()
            })
            .collect();
        JumpMeasure { entries }
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j].0
    }

    /// `ν^(ij)((z, ∞))`; jumps of size zero do not count.
    pub fn tail(&self, i: usize, j: usize, z: f64) -> f64 {
        let (w, law) = &self.entries[i][j];
        if *w == 0.0 || law.is_degenerate() {
            0.0
        } else {
            w * law.tail(z)
        }
    }

    pub fn density(&self, i: usize, j: usize, y: f64) -> f64 {
        let (w, law) = &self.entries[i][j];
        if *w == 0.0 || law.is_degenerate() {
            0.0
        } else {
            w * law.density(y).unwrap_or(0.0)
        }
    }

    /// Largest claim size worth integrating over.
    pub fn cutoff(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .filter(|(w, l)| *w > 0.0 && !l.is_degenerate())
            .map(|(_, l)| l.tail_quantile(1e-14))
            .fold(0.0, f64::max)
    }
}

fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// Ruin probabilities `φ_i(x)`, computed from the decaying modes so that
/// small values keep full relative precision.
pub fn ruin_probability(model: &RegimeModel, x: f64) -> Result<DVector<f64>> {
    require_net_profit(model)?;
    check_level(x)?;
    let n = model.n_states();
    match default_method(model) {
        ScaleMethod::Spectral => {
            let modes = ScaleModes::new(model, 0.0)?;
            Ok((modes.ruin_matrix(x) * ones(n)).map(|v| v.clamp(0.0, 1.0)))
        }
        ScaleMethod::LaplaceInversion => Ok(survival(model, x)?.map(|s| 1.0 - s)),
    }
}

fn check_level(x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(RiskError::InvalidArgument(format!("initial capital must be a finite x ≥ 0, got {x}")));
    }
    Ok(())
}

/// Survival probabilities `(W(x) C_∞ 𝟙)_i`, clamped to [0, 1].
pub fn survival(model: &RegimeModel, x: f64) -> Result<DVector<f64>> {
    require_net_profit(model)?;
    check_level(x)?;
    let n = model.n_states();
    match default_method(model) {
        ScaleMethod::Spectral => Ok(ruin_probability(model, x)?.map(|p| 1.0 - p)),
        ScaleMethod::LaplaceInversion => {
            let w = w_matrix_inversion(model, 0.0, x, Default::default())?;
            Ok((w * c_infinity(model, 0.0)? * ones(n)).map(|v| v.clamp(0.0, 1.0)))
        }
    }
}

/// `E_{x,i}[e^{−qτ_0^-}; τ_0^- < ∞, J_{τ_0^-} = j] = Z(x) − W(x) C_∞`.
pub fn discounted_ruin(model: &RegimeModel, q: f64, x: f64) -> Result<DMatrix<f64>> {
    if !(q > 0.0) {
        return Err(RiskError::InvalidArgument(format!("discount rate must be positive, got {q}")));
    }
    check_level(x)?;
    Ok(ScaleModes::new(model, q)?.ruin_matrix(x).map(|v| v.clamp(0.0, 1.0)))
}

/// Gerber-Shiu functions by the compensation formula
/// `φ_{w,i}(x) = Σ_{k,j} ∫_0^∞ u^(q)_{ik}(x, z) ∫ w(z, y) ν^(kj)(z + dy) dz`.
pub fn gerber_shiu(model: &RegimeModel, q: f64, x: f64, w: &PenaltyFunction) -> Result<DVector<f64>> {
    if q == 0.0 {
        require_net_profit(model)?;
    }
    check_level(x)?;
    w.validate()?;
    let modes = ScaleModes::new(model, q)?;
    gerber_shiu_with(&modes, model, x, w)
}

fn gerber_shiu_with(modes: &ScaleModes, model: &RegimeModel, x: f64, w: &PenaltyFunction) -> Result<DVector<f64>> {
    let n = model.n_states();
    let nu = JumpMeasure::new(model);
    // b_k(z) = Σ_j ∫ w(z, y) ν^(kj)(z + dy)
    let b = |z: f64| -> Result<DVector<f64>> {
        let mut out = DVector::zeros(n);
        for k in 0..n {
            for j in 0..n {
                let (mass, law) = &nu.entries[k][j];
                if *mass > 0.0 {
                    out[k] += mass * w.expected_at_claim(law, z)?;
                }
            }
        }
        Ok(out)
    };
    let u = |z: f64| modes.potential_kernel(x, z);
    let cutoff = nu.cutoff().max(x + 1.0);
    let mut result = DVector::zeros(n);
    for i in 0..n {
        let mut failure = None;
        let mut integrand = |z: f64| -> f64 {
            match (u(z), b(z)) {
                (Ok(u), Ok(b)) => (u.row(i) * b)[0],
                (Err(e), _) | (_, Err(e)) => {
                    failure = Some(e);
                    0.0
                }
            }
        };
        let mut total = 0.0;
        if x > 0.0 {
            total += quad::adaptive(&mut integrand, 0.0, x, 1e-12, 1e-10)?;
        }
        total += quad::adaptive(&mut integrand, x, cutoff, 1e-12, 1e-10)?;
        if let Some(e) = failure {
            return Err(e);
        }
        result[i] = total;
    }
    Ok(result)
}

/// Joint law of the deficit and the phase at ruin, tabulated on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct DeficitKernel {
    pub x: f64,
    pub state: usize,
    pub grid: Vec<f64>,
    /// `densities[j][k]`: density at `grid[k]` of ruin in phase `j`.
    pub densities: Vec<Vec<f64>>,
    /// Total mass per target phase; sums to `φ_i(x)`.
    pub masses: Vec<f64>,
}

/// `P_{x,i}(τ_0^- < ∞, −X_{τ_0^-} ∈ dz, J_{τ_0^-} = j)` on `z = 0, step, …, extent`.
pub fn deficit_kernel(model: &RegimeModel, x: f64, i: usize, step: f64, extent: f64) -> Result<DeficitKernel> {
    require_net_profit(model)?;
    check_level(x)?;
    let n = model.n_states();
    if i >= n {
        return Err(RiskError::InvalidArgument(format!("state {} does not exist", i + 1)));
    }
    if !(step > 0.0 && extent >= 0.0) {
        return Err(RiskError::InvalidArgument("deficit grid needs a positive step".into()));
    }
    let modes = ScaleModes::new(model, 0.0)?;
    let deficit = DeficitDensity::new(&modes, model, x)?;
    let count = (extent / step).round() as usize;
    let grid: Vec<f64> = (0..=count).map(|k| k as f64 * step).collect();
    let mut densities = vec![vec![0.0; grid.len()]; n];
    for (k, &z) in grid.iter().enumerate() {
        let row = deficit.density(z)?;
        for j in 0..n {
            densities[j][k] = row[(i, j)];
        }
    }
    let m = deficit.masses()?;
    Ok(DeficitKernel { x, state: i, grid, densities, masses: (0..n).map(|j| m[(i, j)]).collect() })
}

/// Deficit density matrix `D(z)_{ij}` at a fixed initial capital.
pub(crate) struct DeficitDensity<'a> {
    modes: &'a ScaleModes,
    nu: JumpMeasure,
    x: f64,
    cutoff: f64,
}

impl<'a> DeficitDensity<'a> {
    pub(crate) fn new(modes: &'a ScaleModes, model: &RegimeModel, x: f64) -> Result<Self> {
        let nu = JumpMeasure::new(model);
        let cutoff = nu.cutoff().max(x + 1.0);
        Ok(DeficitDensity { modes, nu, x, cutoff })
    }

    fn u(&self, s: f64) -> Result<DMatrix<f64>> {
        self.modes.potential_kernel(self.x, s)
    }

    fn integrate(&self, mut kernel: impl FnMut(usize, usize, f64) -> f64) -> Result<DMatrix<f64>> {
        let n = self.nu.entries.len();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut failure = None;
                let mut f = |s: f64| -> f64 {
                    match self.u(s) {
                        Ok(u) => (0..n).map(|k| u[(i, k)] * kernel(k, j, s)).sum(),
                        Err(e) => {
                            failure = Some(e);
                            0.0
                        }
                    }
                };
                let mut total = 0.0;
                if self.x > 0.0 {
                    total += quad::adaptive(&mut f, 0.0, self.x, 1e-13, 1e-10)?;
                }
                total += quad::adaptive(&mut f, self.x, self.cutoff, 1e-13, 1e-10)?;
                if let Some(e) = failure {
                    return Err(e);
                }
                out[(i, j)] = total;
            }
        }
        Ok(out)
    }

    /// Density in the deficit `z > 0`.
    pub(crate) fn density(&self, z: f64) -> Result<DMatrix<f64>> {
        let nu = &self.nu;
        self.integrate(|k, j, s| nu.density(k, j, s + z))
    }

    /// Total masses `P_{x,i}(τ_0^- < ∞, J = j)`.
    pub(crate) fn masses(&self) -> Result<DMatrix<f64>> {
        let nu = &self.nu;
        self.integrate(|k, j, s| nu.tail(k, j, s))
    }
}

/// Lower and upper discretization brackets of the Pollaczek-Khintchine
/// survival function on the lattice `δℕ`.
#[derive(Debug, Clone, Serialize)]
pub struct PkCurve {
    pub step: f64,
    pub rho: f64,
    /// Number of geometric terms that carry mass above `1e-10`.
    pub k_max: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PkCurve {
    fn index(&self, x: f64) -> usize {
        ((x / self.step) + 1e-9).floor() as usize
    }

    /// `(lower, upper)` bracket of the survival probability at `x`.
    pub fn bracket(&self, x: f64) -> (f64, f64) {
        let k = self.index(x).min(self.lower.len() - 1);
        (self.lower[k], self.upper[k])
    }

    /// Midpoint estimate of the survival probability.
    pub fn survival(&self, x: f64) -> f64 {
        let (l, u) = self.bracket(x);
        0.5 * (l + u)
    }

    pub fn ruin(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }
}

/// Survival brackets up to `x_max` from the geometric compound
/// `(1 − ρ) Σ_k ρ^k (F^I)^{*k}`, with `F^I` rounded down (upper bracket) and
/// up (lower bracket) to the lattice, summed by Panjer's recursion.
pub fn pollaczek_khintchine(model: &RegimeModel, x_max: f64, step: f64) -> Result<PkCurve> {
    if model.n_states() != 1 {
        return Err(RiskError::InvalidArgument("the Pollaczek-Khintchine formula needs a single state".into()));
    }
    if !(step > 0.0 && x_max >= 0.0) {
        return Err(RiskError::InvalidArgument("lattice step must be positive".into()));
    }
    let law = model.state_claim(0);
    let mean = law.mean()?;
    let rho = model.arrival_rate(0) * mean / model.premium(0);
    if rho >= 1.0 {
        return Err(RiskError::NetProfit(format!("ρ = {rho} ≥ 1; ruin certain; survival identically 0")));
    }
    let n = (x_max / step).ceil() as usize + 1;
    if rho == 0.0 {
        return Ok(PkCurve { step, rho, k_max: 0, lower: vec![1.0; n], upper: vec![1.0; n] });
    }
    // Cell masses of the equilibrium law: P(Y ∈ [jδ, (j+1)δ)).
    let sl: Vec<f64> = (0..=n).map(|j| law.stop_loss(j as f64 * step)).collect::<Result<_>>()?;
    let cell: Vec<f64> = (0..n).map(|j| ((sl[j] - sl[j + 1]) / mean).max(0.0)).collect();
    let down = cell.clone();
    let mut up = vec![0.0; n];
    up[1..n].copy_from_slice(&cell[..(n - 1)]);
    let compound = |g: &[f64]| -> Vec<f64> {
        let norm = 1.0 - rho * g[0];
        let mut f = vec![0.0; n];
        f[0] = (1.0 - rho) / norm;
        for m in 1..n {
            let mut acc = 0.0;
            for j in 1..=m {
                acc += g[j] * f[m - j];
            }
            f[m] = rho * acc / norm;
        }
        let mut cdf = Vec::with_capacity(n);
        let mut s = 0.0;
        for v in f {
            s += v;
            cdf.push(s.min(1.0));
        }
        cdf
    };
    let upper = compound(&down);
    let lower = compound(&up);
    let k_max = ((1e-10 * (1.0 - rho)).ln() / rho.ln()).ceil().max(0.0) as usize;
    Ok(PkCurve { step, rho, k_max, lower, upper })
}

/// Residual of the integro-differential equation at interior grid points.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    /// `max |φ|` over the grid, for relative comparisons.
    pub phi_norm: f64,
    pub worst_x: f64,
}

/// Maximum over states and interior grid points (at least two steps from 0)
/// of the generator equation
/// `p_i φ_i' + λ_i[∫_0^x φ_i(x−y) f_i(y)dy + ∫_x^∞ w f_i − φ_i]
///  + Σ_{j≠i} q_ij [∫_0^x φ_j(x−y) F_ij(dy) + ∫_x^∞ w F_ij(dy)] + q_ii φ_i − q φ_i`.
pub fn ode_residual(model: &RegimeModel, q: f64, w: &PenaltyFunction, x_grid: &[f64]) -> Result<ResidualReport> {
    w.validate()?;
    for law in model.active_laws() {
        if !law.is_degenerate() && law.density(1.0).is_none() {
            return Err(RiskError::Unsupported(law.describe(), "the integro-differential residual".into()));
        }
    }
    if x_grid.len() < 5 {
        return Err(RiskError::InvalidArgument("residual grid needs at least 5 points".into()));
    }
    let h = x_grid[1] - x_grid[0];
    let n = model.n_states();
    let modes = ScaleModes::new(model, q)?;
    if q == 0.0 {
        require_net_profit(model)?;
    }
    let phi = |x: f64| -> Result<DVector<f64>> {
        if w.is_unit() {
            Ok(modes.ruin_matrix(x) * ones(n))
        } else {
            gerber_shiu_with(&modes, model, x, w)
        }
    };
    let nu = JumpMeasure::new(model);
    let mut worst = 0.0_f64;
    let mut worst_x = x_grid[0];
    let mut norm = 0.0_f64;
    for &x in x_grid {
        let here = phi(x)?;
        norm = norm.max(here.amax());
        if x < 2.0 * h - 1e-12 {
            continue;
        }
        let (pp, p, m, mm) = (phi(x + 2.0 * h)?, phi(x + h)?, phi(x - h)?, phi(x - 2.0 * h)?);
        let deriv = (-&pp + &p * 8.0 - &m * 8.0 + &mm) / (12.0 * h);
        for i in 0..n {
            let mut r = model.premium(i) * deriv[i] + (model.q()[(i, i)] - q) * here[i];
            for j in 0..n {
                let (mass, law) = &nu.entries[i][j];
                if *mass == 0.0 {
                    continue;
                }
                let conv = convolve(&phi, law, x, j)?;
                let beyond = w.expected_at_claim(law, x)?;
                r += mass * (conv + beyond);
                if i == j {
                    r -= mass * here[i];
                }
            }
            if r.abs() > worst {
                worst = r.abs();
                worst_x = x;
            }
        }
    }
    Ok(ResidualReport { max_residual: worst, phi_norm: norm, worst_x })
}

/// `∫_{[0,x]} φ_j(x − y) F(dy)`, including an atom at zero.
fn convolve(phi: &impl Fn(f64) -> Result<DVector<f64>>, law: &ClaimLaw, x: f64, j: usize) -> Result<f64> {
    let atom = match law {
        ClaimLaw::Degenerate => 1.0,
        ClaimLaw::PhaseType { alpha, .. } => 1.0 - alpha.iter().sum::<f64>(),
        _ => 0.0,
    };
    let mut total = atom * phi(x)?[j];
    if !law.is_degenerate() {
        let mut failure = None;
        let v = quad::adaptive(
            |y| match phi(x - y) {
                Ok(p) => p[j] * law.density(y).unwrap_or(0.0),
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            },
            0.0,
            x,
            1e-13,
            1e-11,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        total += v;
    }
    Ok(total)
}

/// The random walk of `−X` observed at event epochs.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedWalk {
    /// `𝒫`: claim without switch on the diagonal, switch `i → j` off it.
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    /// Event rates `λ_i − q_ii`.
    pub event_rates: Vec<f64>,
    /// `a_i = E ξ_i` with `ξ = claim − p_i · holding time`.
    pub means: Vec<f64>,
    /// `ā = −Σ π^𝒫_i a_i`.
    pub drift: f64,
    #[serde(skip)]
    claims: Vec<Vec<ClaimLaw>>,
    #[serde(skip)]
    premiums: Vec<f64>,
}

pub fn embedded_walk(model: &RegimeModel) -> Result<EmbeddedWalk> {
    let n = model.n_states();
    let mut transition = vec![vec![0.0; n]; n];
    let mut rates = vec![0.0; n];
    let mut means = vec![0.0; n];
    let mut claims = vec![vec![ClaimLaw::Degenerate; n]; n];
    for i in 0..n {
        let mu = model.event_rate(i);
        if !(mu > 0.0) {
            return Err(RiskError::InvalidArgument(format!(
                "state {} has no events (zero arrival rate and no exits)",
                i + 1
            )));
        }
        rates[i] = mu;
        let mut mean_claim = 0.0;
        for j in 0..n {
            let (p, law) = if i == j {
                (model.arrival_rate(i) / mu, model.state_claim(i).clone())
            } else {
                (model.q()[(i, j)] / mu, model.transition_claim(i, j).clone())
            };
            transition[i][j] = p;
            if p > 0.0 {
                mean_claim += p * law.mean()?;
            }
            claims[i][j] = law;
        }
        means[i] = mean_claim - model.premium(i) / mu;
    }
    let p = DMatrix::from_fn(n, n, |i, j| transition[i][j]);
    let stationary: Vec<f64> = stationary_of_stochastic(&p)?.iter().cloned().collect();
    let drift = -stationary.iter().zip(&means).map(|(a, b)| a * b).sum::<f64>();
    Ok(EmbeddedWalk {
        transition,
        stationary,
        event_rates: rates,
        means,
        drift,
        claims,
        premiums: model.premiums().to_vec(),
    })
}

impl EmbeddedWalk {
    pub fn n_states(&self) -> usize {
        self.stationary.len()
    }

    /// One step from state `i`: `(ξ, next state)`.
    pub fn step<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> (f64, usize) {
        let hold = Exp::new(self.event_rates[i]).expect("positive event rate").sample(rng);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = self.n_states() - 1;
        for (j, p) in self.transition[i].iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        let claim = self.claims[i][next].sample(rng);
        (claim - self.premiums[i] * hold, next)
    }

    /// `E(ξ_i − z)^+ = ∫_z^∞ P(ξ_i > y) dy` for `z ≥ 0`.
    pub fn increment_integrated_tail(&self, i: usize, z: f64) -> Result<f64> {
        // With Y ~ Exp(β), β = rate/p: E(C − Y − z)^+ = ∫_z^∞ F̄(y)(1 − e^{−β(y−z)}) dy.
        let beta = self.event_rates[i] / self.premiums[i];
        let mut total = 0.0;
        for (j, p) in self.transition[i].iter().enumerate() {
            let law = &self.claims[i][j];
            if *p == 0.0 || law.is_degenerate() {
                continue;
            }
            let damped = quad::adaptive_panels_to_infinity(
                |y| law.tail(z + y) * (-beta * y).exp(),
                0.0,
                1.0 / beta,
                1e-16,
                1e-11,
            )?;
            total += p * (law.stop_loss(z)? - damped);
        }
        Ok(total.max(0.0))
    }
}

/// CSV of ruin probabilities: `x, phi_1, …, phi_N`.
pub fn ruin_curve_csv(xs: &[f64], values: &[DVector<f64>]) -> String {
    let n = values.first().map_or(0, |v| v.len());
    let mut out = String::from("x");
    for i in 1..=n {
        let _ = write!(out, ",phi_{i}");
    }
    out.push('\n');
    for (x, v) in xs.iter().zip(values) {
        let _ = write!(out, "{x}");
        for p in v.iter() {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

/// CSV of a deficit kernel: `z, density_{i,1}, …, density_{i,N}`.
pub fn deficit_kernel_csv(kernel: &DeficitKernel) -> String {
    let i = kernel.state + 1;
    let mut out = String::from("z");
    for j in 1..=kernel.densities.len() {
        let _ = write!(out, ",density_{i}{j}");
    }
    out.push('\n');
    for (k, z) in kernel.grid.iter().enumerate() {
        let _ = write!(out, "{z}");
        for d in &kernel.densities {
            let _ = write!(out, ",{}", d[k]);
        }
        out.push('\n');
    }
    out
}
