//! Large-capital approximations: Cramér, subexponential, Segerdahl and
//! Höglund, plus a finite-horizon dispatcher.

use std::fmt::Write as _;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::claims::ClaimLaw;
use crate::error::{Result, RiskError};
use crate::model::{require_net_profit, RegimeModel};
use crate::ruin::{embedded_walk, pollaczek_khintchine, ruin_probability};
use crate::scale::{default_method, ScaleMethod};
use crate::simulate::{mc_ruin, mc_tilted_ruin, Estimate, McMode};
use crate::spectral::{adjustment_coefficient, inverse_exponent, k_derivatives, perron_eigenvalue};

/// Simulation budget for the Monte Carlo parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McBudget {
    pub n: usize,
    pub seed: u64,
}

impl Default for McBudget {
    fn default() -> Self {
        McBudget { n: 20_000, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CramerData {
    pub gamma: f64,
    /// `C_i`, from the tail fit when available and the tilted simulation otherwise.
    pub constants: Vec<f64>,
    pub method: String,
    pub tail_fit: Option<Vec<f64>>,
    pub tilted: Vec<Estimate>,
    /// Capital used for the tilted estimator.
    pub mc_level: f64,
    /// `k̂'(0)/k̂'(γ)` for a single state.
    pub single_state_formula: Option<f64>,
}

/// Aitken extrapolation of `c(x₀), c(1.5x₀), c(2x₀)`, exact for one
/// exponential transient.
fn aitken(a: f64, b: f64, c: f64) -> f64 {
    let denom = (c - b) - (b - a);
    if denom.abs() <= 1e-14 * c.abs().max(1e-300) {
        c
    } else {
        let v = c - (c - b) * (c - b) / denom;
        // A transient that is not yet geometric would send Aitken astray.
        if (v - c).abs() <= (c - b).abs().max(1e-12 * c.abs()) * 10.0 {
            v
        } else {
            c
        }
    }
}

/// `φ_i(x) e^{γx}` extrapolated in `x`.
fn tail_fit(model: &RegimeModel, gamma: f64) -> Result<Vec<f64>> {
    let mut x0 = 10.0 / gamma;
    let fit = |x0: f64| -> Result<Vec<f64>> {
        let at = |x: f64| -> Result<Vec<f64>> {
            Ok(ruin_probability(model, x)?.iter().map(|p| p * (gamma * x).exp()).collect())
        };
        let (a, b, c) = (at(x0)?, at(1.5 * x0)?, at(2.0 * x0)?);
        Ok((0..a.len()).map(|i| aitken(a[i], b[i], c[i])).collect())
    };
    let mut prev = fit(x0)?;
    for _ in 0..6 {
        x0 *= 2.0;
        let next = fit(x0)?;
        let change = prev.iter().zip(&next).map(|(p, n)| ((p - n) / n).abs()).fold(0.0, f64::max);
        if change < 1e-6 {
            return Ok(next);
        }
        prev = next;
    }
    Err(RiskError::NoConvergence("Cramér tail fit did not stabilize under doubling of x₀".into()))
}

/// Cramér constants by the tail fit and by tilted simulation, which must
/// agree within 5 standard errors.
pub fn cramer_constant(model: &RegimeModel, budget: McBudget) -> Result<CramerData> {
    let gamma = adjustment_coefficient(model)?;
    let tail = if default_method(model) == ScaleMethod::Spectral { Some(tail_fit(model, gamma)?) } else { None };
    let mc_level = 20.0 / gamma;
    let tilted: Vec<Estimate> = mc_ruin(model, mc_level, None, budget.n, budget.seed, McMode::Tilted)?
        .into_iter()
        .map(|mut e| {
            let s = (gamma * mc_level).exp();
            e.value *= s;
            e.se *= s;
            e.ci_lo *= s;
            e.ci_hi *= s;
            e.max_likelihood_ratio = e.max_likelihood_ratio.map(|m| m * s);
            e
        })
        .collect();
    if let Some(fit) = &tail {
        for (i, (c, e)) in fit.iter().zip(&tilted).enumerate() {
            let z = e.z_score(*c);
            if z > 5.0 {
                return Err(RiskError::Numerical(format!(
                    "Cramér constant of state {}: tail fit {c} and tilted estimate {} ± {} differ by {z:.1} SE; one route is biased",
                    i + 1,
                    e.value,
                    e.se
                )));
            }
            if z > 3.0 {
                log::warn!("Cramér constant of state {}: estimators differ by {z:.1} SE", i + 1);
            }
        }
    }
    let single_state_formula = if model.n_states() == 1 {
        let (d0, _) = k_derivatives(model, 0.0)?;
        let (dg, _) = k_derivatives(model, -gamma)?;
        Some(d0 / -dg)
    } else {
        None
    };
    let (constants, method) = match &tail {
        Some(fit) => (fit.clone(), "tail-fit"),
        None => (tilted.iter().map(|e| e.value).collect(), "tilted-MC"),
    };
    Ok(CramerData { gamma, constants, method: method.into(), tail_fit: tail, tilted, mc_level, single_state_formula })
}

/// Tilted mean and variance rate of `−X`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SegerdahlData {
    pub gamma: f64,
    pub m: f64,
    pub c2: f64,
}

impl SegerdahlData {
    pub fn new(model: &RegimeModel) -> Result<Self> {
        let gamma = adjustment_coefficient(model)?;
        let (d1, d2) = k_derivatives(model, -gamma)?;
        Ok(SegerdahlData { gamma, m: -d1, c2: d2 })
    }

    /// `y = (t − x/m) m^{3/2} / (c√x)`.
    pub fn y(&self, x: f64, t: f64) -> f64 {
        if t.is_infinite() {
            return f64::INFINITY;
        }
        (t - x / self.m) * self.m.powf(1.5) / (self.c2.sqrt() * x.sqrt())
    }

    /// Horizon with the given `y`.
    pub fn horizon(&self, x: f64, y: f64) -> f64 {
        x / self.m + y * self.c2.sqrt() * x.sqrt() / self.m.powf(1.5)
    }
}

fn normal_cdf(y: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(y)
}

#[derive(Debug, Clone, Serialize)]
pub struct SegerdahlValue {
    pub y: f64,
    pub values: Vec<f64>,
}

/// `C_i e^{−γx} Φ_N(y(x, t))`.
pub fn segerdahl(data: &SegerdahlData, cramer: &CramerData, x: f64, t: f64) -> SegerdahlValue {
    let y = data.y(x, t);
    let factor = (-data.gamma * x).exp() * normal_cdf(y);
    SegerdahlValue { y, values: cramer.constants.iter().map(|c| c * factor).collect() }
}

/// `k̂(α) = k(−α)`.
pub fn k_hat(model: &RegimeModel, alpha: f64) -> Result<f64> {
    perron_eigenvalue(model, -alpha)
}

fn k_hat_prime(model: &RegimeModel, alpha: f64) -> Result<f64> {
    Ok(-k_derivatives_first(model, -alpha)?)
}

fn k_derivatives_first(model: &RegimeModel, alpha: f64) -> Result<f64> {
    let s = crate::spectral::perron_triple(model, alpha)?;
    Ok(s.dk)
}

/// Rate function data at velocity `v`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatePoint {
    pub v: f64,
    /// `Γ(v)`: solves `k̂'(Γ) = v`.
    pub big_gamma: f64,
    /// `k̂*(v) = vΓ − k̂(Γ)`.
    pub rate: f64,
    pub k_hat_at: f64,
    pub k_hat_second: f64,
}

/// Solve `k̂'(Γ) = v` on the interior of the domain of `k̂`.
pub fn rate_function(model: &RegimeModel, v: f64) -> Result<RatePoint> {
    let outside = || RiskError::Domain(format!("velocity outside admissible range: v = {v}"));
    if !(v > 0.0 && v.is_finite()) {
        return Err(outside());
    }
    let abscissa = model.mgf_abscissa();
    if abscissa <= 0.0 {
        return Err(outside());
    }
    let mut lo = 0.0;
    if k_hat_prime(model, lo)? >= v {
        return Err(outside());
    }
    let mut hi = if abscissa.is_finite() { 0.5 * abscissa } else { 1.0 };
    let mut found = false;
    for k in 0..200 {
        let d = match k_hat_prime(model, hi) {
            Ok(d) => d,
            Err(_) => return Err(outside()),
        };
        if d > v {
            found = true;
            break;
        }
        lo = hi;
        hi = if abscissa.is_finite() { abscissa * (1.0 - 0.5f64.powi(k + 2)) } else { 2.0 * hi };
        if abscissa.is_finite() && abscissa - hi < 1e-12 * abscissa {
            break;
        }
    }
    if !found {
        return Err(outside());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if k_hat_prime(model, mid)? > v {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let g = 0.5 * (lo + hi);
    let kh = k_hat(model, g)?;
    let (_, d2) = k_derivatives(model, -g)?;
    Ok(RatePoint { v, big_gamma: g, rate: v * g - kh, k_hat_at: kh, k_hat_second: d2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoglundRegime {
    Cramer,
    LargeDeviation,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoglundValue {
    pub v: f64,
    pub threshold: f64,
    pub regime: HoglundRegime,
    pub rate: Option<RatePoint>,
    /// `D_v` and its standard error (zero for the closed form).
    pub prefactor: Option<(f64, f64)>,
    pub values: Vec<f64>,
}

/// `Γ̃(v)`: the positive root of `k(θ) = k̂(Γ(v))`.
fn gamma_tilde(model: &RegimeModel, point: &RatePoint) -> Result<f64> {
    inverse_exponent(model, point.k_hat_at)
}

/// Closed-form prefactor for a single state.
pub fn hoglund_prefactor_single(model: &RegimeModel, point: &RatePoint) -> Result<f64> {
    if model.n_states() != 1 {
        return Err(RiskError::InvalidArgument("the closed-form prefactor needs a single state".into()));
    }
    let g = point.big_gamma;
    let gt = gamma_tilde(model, point)?;
    Ok((g + gt) / (g * gt) / (2.0 * std::f64::consts::PI * point.k_hat_second).sqrt())
}

/// `P_i(τ_0^- ≤ t) t^{1/2} e^{k̂*(v)t}` by simulation tilted at `Γ(v)`.
pub fn hoglund_prefactor_mc(model: &RegimeModel, point: &RatePoint, x: f64, t: f64, budget: McBudget) -> Result<Vec<Estimate>> {
    let est = mc_tilted_ruin(model, point.big_gamma, x, t, budget.n, budget.seed)?;
    let s = t.sqrt() * (point.rate * t).exp();
    Ok(est
        .into_iter()
        .map(|mut e| {
            e.value *= s;
            e.se *= s;
            e.ci_lo *= s;
            e.ci_hi *= s;
            e
        })
        .collect())
}

/// Finite-horizon ruin in the Höglund regime split at `v = k̂'(γ)`.
pub fn hoglund(model: &RegimeModel, cramer: &CramerData, x: f64, t: f64, budget: McBudget) -> Result<HoglundValue> {
    if !(x > 0.0 && t > 0.0 && t.is_finite()) {
        return Err(RiskError::InvalidArgument(format!("Höglund asymptotics need x > 0 and finite t > 0, got x = {x}, t = {t}")));
    }
    let v = x / t;
    let threshold = k_hat_prime(model, cramer.gamma)?;
    if v < threshold {
        let values = cramer.constants.iter().map(|c| c * (-cramer.gamma * x).exp()).collect();
        return Ok(HoglundValue { v, threshold, regime: HoglundRegime::Cramer, rate: None, prefactor: None, values });
    }
    let point = rate_function(model, v)?;
    let decay = t.powf(-0.5) * (-point.rate * t).exp();
    let (prefactors, summary) = if model.n_states() == 1 {
        let d = hoglund_prefactor_single(model, &point)?;
        (vec![d], (d, 0.0))
    } else {
        let est = hoglund_prefactor_mc(model, &point, x, t, budget)?;
        let summary = (est.iter().map(|e| e.value).sum::<f64>() / est.len() as f64, est.iter().map(|e| e.se).fold(0.0, f64::max));
        (est.iter().map(|e| e.value).collect(), summary)
    };
    Ok(HoglundValue {
        v,
        threshold,
        regime: HoglundRegime::LargeDeviation,
        rate: Some(point),
        prefactor: Some(summary),
        values: prefactors.iter().map(|d| d * decay).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubexpData {
    pub reference: ClaimLaw,
    pub c: Vec<f64>,
    pub c_s: f64,
    pub a_bar: f64,
    /// Capital levels and ratios used for each `c_i`.
    pub ladder: Vec<f64>,
}

impl SubexpData {
    /// `(C_S/ā) F̄^I(x)` with the unnormalized integrated tail.
    pub fn asymptote(&self, x: f64) -> Result<f64> {
        let tail = self.reference.stop_loss(x)?.min(1.0);
        Ok(self.c_s / self.a_bar * tail)
    }
}

/// Reference law: the heavy-tailed law with the thickest integrated tail
/// far out.
fn reference_law(model: &RegimeModel) -> Result<ClaimLaw> {
    let heavy: Vec<&ClaimLaw> = model.active_laws().into_iter().filter(|l| l.is_heavy()).collect();
    if heavy.is_empty() {
        return Err(RiskError::InvalidArgument("subexponential asymptotics need a heavy-tailed claim law".into()));
    }
    let far = heavy.iter().map(|l| l.tail_quantile(1e-8)).fold(0.0, f64::max);
    let mut best = heavy[0];
    let mut best_tail = -1.0;
    for law in heavy {
        let t = law.stop_loss(far)?;
        if t > best_tail {
            best = law;
            best_tail = t;
        }
    }
    Ok(best.clone())
}

/// Constants `c_i`, `C_S` and `ā` of the subexponential asymptote.
pub fn subexp_data(model: &RegimeModel) -> Result<SubexpData> {
    require_net_profit(model)?;
    let reference = reference_law(model)?;
    let walk = embedded_walk(model)?;
    let failed = || RiskError::Numerical("conditions (D1)-(D3) not numerically verified".into());
    let ladder: Vec<f64> = (2..=8).map(|n| reference.tail_quantile(10f64.powi(-n))).collect();
    let mut c = Vec::with_capacity(walk.n_states());
    for i in 0..walk.n_states() {
        let ratios: Vec<f64> = ladder
            .iter()
            .map(|&x| Ok(walk.increment_integrated_tail(i, x)? / reference.stop_loss(x)?))
            .collect::<Result<_>>()?;
        if ratios.iter().any(|r| !r.is_finite()) {
            return Err(failed());
        }
        let k = ratios.len();
        let last = ratios[k - 1];
        let change = (ratios[k - 1] - ratios[k - 2]).abs();
        let scale = last.abs().max(1e-3);
        // Successive changes must shrink and end small.
        if change > 0.02 * scale || change > (ratios[k - 2] - ratios[k - 3]).abs() * 1.5 + 1e-12 {
            return Err(failed());
        }
        c.push(last.max(0.0));
    }
    let c_s: f64 = c.iter().zip(&walk.stationary).map(|(c, p)| c * p).sum();
    if !(c_s > 0.0) {
        return Err(failed());
    }
    Ok(SubexpData { reference, c, c_s, a_bar: walk.drift, ladder })
}

/// `(C_S/ā) F̄^I(x)` for every initial state.
pub fn subexp_asymptote(model: &RegimeModel, x: f64) -> Result<Vec<f64>> {
    let data = subexp_data(model)?;
    let v = data.asymptote(x)?;
    Ok(vec![v; model.n_states()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiniteMethod {
    Auto,
    Segerdahl,
    Hoglund,
    Mc,
}

impl FiniteMethod {
    pub fn name(self) -> &'static str {
        match self {
            FiniteMethod::Auto => "auto",
            FiniteMethod::Segerdahl => "segerdahl",
            FiniteMethod::Hoglund => "hoglund",
            FiniteMethod::Mc => "mc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "auto" => FiniteMethod::Auto,
            "segerdahl" => FiniteMethod::Segerdahl,
            "hoglund" => FiniteMethod::Hoglund,
            "mc" => FiniteMethod::Mc,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteTimeValue {
    pub x: f64,
    pub t: f64,
    pub method: String,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<Vec<f64>>,
}

/// Infinite-horizon ruin probabilities by whichever exact route applies.
pub fn infinite_horizon_ruin(model: &RegimeModel, x: f64) -> Result<(Vec<f64>, &'static str)> {
    if default_method(model) == ScaleMethod::Spectral || model.is_light_tailed() {
        return Ok((ruin_probability(model, x)?.iter().cloned().collect(), "scale"));
    }
    if model.n_states() == 1 {
        let step = (x / 4000.0).clamp(1e-3, 0.05);
        let pk = pollaczek_khintchine(model, x, step)?;
        return Ok((vec![pk.ruin(x)], "pollaczek-khintchine"));
    }
    Err(RiskError::Unsupported(
        "heavy-tailed multi-state model".into(),
        "exact infinite-horizon ruin".into(),
    ))
}

/// Finite-horizon ruin `P_{x,i}(τ_0^- ≤ t)`.
///
/// The automatic rule takes Segerdahl when `|x/t − m| ≤ 2c√x·√m / t`,
/// Höglund when `x/t` exceeds `k̂'(γ)`, and simulation otherwise.
pub fn finite_time_ruin(model: &RegimeModel, x: f64, t: f64, method: FiniteMethod, budget: McBudget) -> Result<FiniteTimeValue> {
    if !(x >= 0.0) || !(t >= 0.0) {
        return Err(RiskError::InvalidArgument(format!("need x ≥ 0 and t ≥ 0, got x = {x}, t = {t}")));
    }
    if t.is_infinite() {
        let (values, tag) = infinite_horizon_ruin(model, x)?;
        return Ok(FiniteTimeValue { x, t, method: tag.into(), values, se: None });
    }
    let chosen = match method {
        FiniteMethod::Auto if x == 0.0 || t == 0.0 => FiniteMethod::Mc,
        FiniteMethod::Auto => match SegerdahlData::new(model) {
            Ok(seg) => {
                let c = seg.c2.sqrt();
                if (x / t - seg.m).abs() <= 2.0 * c * x.sqrt() / t * seg.m.sqrt() {
                    FiniteMethod::Segerdahl
                } else if x / t > seg.m {
                    FiniteMethod::Hoglund
                } else {
                    FiniteMethod::Mc
                }
            }
            Err(_) => FiniteMethod::Mc,
        },
        other => other,
    };
    let done = |values, se| Ok(FiniteTimeValue { x, t, method: chosen.name().into(), values, se });
    match chosen {
        FiniteMethod::Segerdahl => {
            let seg = SegerdahlData::new(model)?;
            let cramer = cramer_constant(model, budget)?;
            done(segerdahl(&seg, &cramer, x, t).values, None)
        }
        FiniteMethod::Hoglund => {
            let cramer = cramer_constant(model, budget)?;
            let h = hoglund(model, &cramer, x, t, budget)?;
            done(h.values, None)
        }
        _ => {
            let est = match adjustment_coefficient(model) {
                Ok(_) if x > 0.0 => mc_ruin(model, x, Some(t), budget.n, budget.seed, McMode::Tilted)?,
                _ => mc_ruin(model, x, Some(t), budget.n, budget.seed, McMode::Crude)?,
            };
            done(est.iter().map(|e| e.value).collect(), Some(est.iter().map(|e| e.se).collect()))
        }
    }
}

/// CSV with columns `x, t, method, value_1, …, value_N`.
pub fn finite_time_csv(rows: &[FiniteTimeValue]) -> String {
    let n = rows.first().map_or(0, |r| r.values.len());
    let mut out = String::from("x,t,method");
    for i in 1..=n {
        let _ = write!(out, ",value_{i}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.x, r.t, r.method);
        for v in &r.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{model_a, model_b};

    fn pareto_model() -> RegimeModel {
        RegimeModel::single_state(1.0, 1.0, ClaimLaw::Pareto { shape: 2.5, scale: 1.0 }).unwrap()
    }

    #[test]
    fn cramer_model_a() {
        let c = cramer_constant(&model_a(), McBudget { n: 20_000, seed: 3 }).unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-10);
        assert!((c.constants[0] - 0.5).abs() < 1e-8, "{c:?}");
        assert!((c.single_state_formula.unwrap() - 0.5).abs() < 1e-6);
        assert!(c.tilted[0].z_score(0.5) < 3.0);
    }

    #[test]
    fn cramer_model_b_routes_agree() {
        let c = cramer_constant(&model_b(), McBudget { n: 20_000, seed: 4 }).unwrap();
        for (e, v) in c.tilted.iter().zip(&c.constants) {
            assert!(e.z_score(*v) < 3.0, "{e:?} vs {v}");
            assert!(*v > 0.0);
        }
    }

    #[test]
    fn segerdahl_model_a() {
        let a = model_a();
        let seg = SegerdahlData::new(&a).unwrap();
        assert!((seg.m - 1.0).abs() < 1e-8);
        assert!((seg.c2 - 4.0).abs() < 1e-6);
        let cramer = cramer_constant(&a, McBudget { n: 2000, seed: 1 }).unwrap();
        let at = segerdahl(&seg, &cramer, 30.0, 30.0);
        assert_eq!(at.y, 0.0);
        assert!((at.values[0] - 0.25 * (-30.0f64).exp()).abs() < 1e-8 * (-30.0f64).exp());
        let mut prev = 0.0;
        for t in [10.0, 20.0, 30.0, 50.0, 1e6] {
            let v = segerdahl(&seg, &cramer, 30.0, t).values[0];
            assert!(v >= prev && v <= 0.5 * (-30.0f64).exp() * (1.0 + 1e-8));
            prev = v;
        }
    }

    #[test]
    fn rate_function_matches_grid_supremum() {
        let a = model_a();
        let p = rate_function(&a, 2.0).unwrap();
        assert!((k_hat_prime(&a, p.big_gamma).unwrap() - 2.0).abs() < 1e-8);
        // k̂(α) = −α + α/(2 − α) for model A.
        let grid_sup = (1..200_000)
            .map(|k| {
                let al = k as f64 * 1e-5;
                2.0 * al - (-al + al / (2.0 - al))
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((p.rate - grid_sup).abs() < 1e-6, "{} vs {grid_sup}", p.rate);
        assert!(p.rate > 0.0);
        // k̂* vanishes only at k̂'(0) = −0.5, so it is positive and convex for v > 0.
        let rates: Vec<f64> = [0.25, 0.5, 0.75, 1.0].iter().map(|&v| rate_function(&a, v).unwrap().rate).collect();
        assert!(rates.iter().all(|&r| r > 0.0));
        assert!(rates.windows(3).all(|w| w[0] + w[2] >= 2.0 * w[1]));
        let err = rate_function(&a, -1.0).unwrap_err();
        assert!(err.to_string().contains("velocity outside admissible range"));
    }

    #[test]
    fn hoglund_regimes() {
        let a = model_a();
        let cramer = cramer_constant(&a, McBudget { n: 2000, seed: 1 }).unwrap();
        let slow = hoglund(&a, &cramer, 10.0, 20.0, McBudget::default()).unwrap();
        assert_eq!(slow.regime, HoglundRegime::Cramer);
        assert!((slow.values[0] - 0.5 * (-10.0f64).exp()).abs() < 1e-12);
        let fast = hoglund(&a, &cramer, 20.0, 10.0, McBudget::default()).unwrap();
        assert_eq!(fast.regime, HoglundRegime::LargeDeviation);
        assert!(fast.values[0] > 0.0 && fast.values[0] < 0.5 * (-20.0f64).exp());
    }

    #[test]
    fn subexp_pareto_single_state() {
        let m = pareto_model();
        let d = subexp_data(&m).unwrap();
        assert!((d.a_bar - 1.0 / 3.0).abs() < 1e-12);
        assert!((d.c[0] - 1.0).abs() < 0.01, "{d:?}");
        // Pakes-Veraverbeke: (1/ā) ∫_x^∞ (1+z)^{−2.5} dz.
        let x = 50.0;
        let pv = 3.0 * (1.0 + x as f64).powf(-1.5) / 1.5;
        assert!((d.asymptote(x).unwrap() / pv - 1.0).abs() < 0.01);
        assert!(subexp_asymptote(&model_a(), 1.0).is_err());
    }

    #[test]
    fn subexp_equal_laws_give_equal_constants() {
        let law = ClaimLaw::Pareto { shape: 3.0, scale: 2.0 };
        let q = nalgebra::DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let m = RegimeModel::from_parts(q, vec![2.0, 2.0], vec![1.0, 1.0], vec![law.clone(), law], vec![vec![ClaimLaw::Degenerate; 2]; 2]).unwrap();
        let d = subexp_data(&m).unwrap();
        assert!((d.c[0] - d.c[1]).abs() < 1e-9);
        let v = subexp_asymptote(&m, 30.0).unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn dispatcher_routes() {
        let a = model_a();
        let b = McBudget { n: 2000, seed: 2 };
        let r = finite_time_ruin(&a, 30.0, 30.0, FiniteMethod::Auto, b).unwrap();
        assert_eq!(r.method, "segerdahl");
        assert!((r.values[0] / (0.25 * (-30.0f64).exp()) - 1.0).abs() < 1e-6);
        let r = finite_time_ruin(&a, 0.0, 5.0, FiniteMethod::Auto, b).unwrap();
        assert_eq!(r.method, "mc");
        assert!(r.values[0] > 0.0 && r.values[0] < 1.0);
        let r = finite_time_ruin(&a, 2.0, f64::INFINITY, FiniteMethod::Auto, b).unwrap();
        assert!((r.values[0] - 0.5 * (-2.0f64).exp()).abs() < 1e-10);
        let r = finite_time_ruin(&a, 40.0, 10.0, FiniteMethod::Auto, b).unwrap();
        assert_eq!(r.method, "hoglund");
        assert!(finite_time_csv(&[r]).starts_with("x,t,method,value_1\n40,10,hoglund,"));
    }
}
