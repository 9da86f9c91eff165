//! Exact event-driven simulation of the risk process and the Monte Carlo
//! estimators built on it.
//!
//! Replication `k` of a run seeded with `s` draws from the ChaCha8 stream
//! `(s, k)`, and results are reduced in replication order, so estimates are
//! bit-identical for any number of worker threads.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, RiskError};
use crate::model::RegimeModel;
use crate::ruin::{pollaczek_khintchine, ruin_probability, PenaltyFunction};
use crate::scale::{default_method, ScaleMethod, ScaleModes};
use crate::spectral::{adjustment_coefficient, exponential_tilt, TiltedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Claim,
    RegimeSwitch,
    LevelCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEvent {
    pub time: f64,
    pub kind: EventKind,
    pub pre_surplus: f64,
    pub post_surplus: f64,
    pub pre_phase: usize,
    pub post_phase: usize,
}

/// Monte Carlo estimate with a normal confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    pub seed: u64,
    pub method: String,
    pub level: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_likelihood_ratio: Option<f64>,
}

impl Estimate {
    pub fn from_scores(scores: impl IntoIterator<Item = f64>, seed: u64, method: &str) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for s in scores {
            n += 1;
            sum += s;
            sq += s * s;
        }
        let nf = n.max(1) as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        let se = (var / nf).sqrt();
        let level = 0.95;
        let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0);
        Estimate {
            value: mean,
            se,
            ci_lo: mean - z * se,
            ci_hi: mean + z * se,
            n,
            seed,
            method: method.to_string(),
            level,
            max_likelihood_ratio: None,
        }
    }

    /// `|value − target|` in standard errors; a zero SE counts as exact.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if self.se == 0.0 {
            if d < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.se
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum McMode {
    Crude,
    Tilted,
}

impl McMode {
    pub fn name(self) -> &'static str {
        match self {
            McMode::Crude => "crude",
            McMode::Tilted => "importance-tilted",
        }
    }
}

/// Run `n` replications, each with its own stream, returning results in order.
pub fn replicate<T, F>(n: usize, seed: u64, stream_base: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + k as u64);
            f(&mut rng)
        })
        .collect()
}

fn stream_base(state: usize) -> u64 {
    (state as u64) << 40
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Limits {
    pub horizon: f64,
    pub ruin: bool,
    pub upper: Option<f64>,
}

impl Limits {
    fn ruin_only() -> Self {
        Limits { horizon: f64::INFINITY, ruin: true, upper: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Stop {
    Ruin { pre: f64, from: usize },
    Upper,
    Horizon,
    /// Pure drift forever with nothing left to stop it.
    Escaped,
}

/// Surplus, phase and clock of one path.
#[derive(Debug, Clone)]
pub(crate) struct Walker<'a> {
    model: &'a RegimeModel,
    pub t: f64,
    pub x: f64,
    pub phase: usize,
}

impl<'a> Walker<'a> {
    pub(crate) fn new(model: &'a RegimeModel, x: f64, phase: usize) -> Self {
        Walker { model, t: 0.0, x, phase }
    }

    fn holding<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mu = self.model.event_rate(self.phase);
        if mu > 0.0 {
            Exp::new(mu).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    }

    /// Apply the event at the end of a holding period: `(claim, new phase)`.
    fn event<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (f64, usize) {
        let m = self.model;
        let i = self.phase;
        let mu = m.event_rate(i);
        let u: f64 = rng.gen::<f64>() * mu;
        let mut acc = m.arrival_rate(i);
        let mut next = i;
        if u >= acc {
            for j in 0..m.n_states() {
                if j == i {
                    continue;
                }
                acc += m.q()[(i, j)];
                next = j;
                if u < acc {
                    break;
                }
            }
        }
        let claim = if next == i { m.state_claim(i).sample(rng) } else { m.transition_claim(i, next).sample(rng) };
        self.x -= claim;
        self.phase = next;
        (claim, next)
    }

    /// Advance until ruin, the upper level or the horizon. `segment` sees every
    /// stretch of linear drift as `(phase, duration)`.
    pub(crate) fn advance<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        limits: Limits,
        mut segment: impl FnMut(usize, f64),
        mut on_event: impl FnMut(&PathEvent),
    ) -> Stop {
        loop {
            let i = self.phase;
            let hold = self.holding(rng);
            let p = self.model.premium(i);
            if let Some(level) = limits.upper {
                if self.x >= level {
                    return Stop::Upper;
                }
                let dt = (level - self.x) / p;
                if dt <= hold && self.t + dt <= limits.horizon {
                    segment(i, dt);
                    on_event(&PathEvent {
                        time: self.t + dt,
                        kind: EventKind::LevelCrossing,
                        pre_surplus: self.x,
                        post_surplus: level,
                        pre_phase: i,
                        post_phase: i,
                    });
                    self.t += dt;
                    self.x = level;
                    return Stop::Upper;
                }
            }
            if self.t + hold > limits.horizon {
                let dt = limits.horizon - self.t;
                segment(i, dt);
                self.x += p * dt;
                self.t = limits.horizon;
                return Stop::Horizon;
            }
            if hold.is_infinite() {
                return Stop::Escaped;
            }
            segment(i, hold);
            self.t += hold;
            self.x += p * hold;
            let pre = self.x;
            let (_, next) = self.event(rng);
            on_event(&PathEvent {
                time: self.t,
                kind: if next == i { EventKind::Claim } else { EventKind::RegimeSwitch },
                pre_surplus: pre,
                post_surplus: self.x,
                pre_phase: i,
                post_phase: next,
            });
            if limits.ruin && self.x < 0.0 {
                return Stop::Ruin { pre, from: i };
            }
        }
    }
}

/// Stopping rule for [`simulate_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub horizon: f64,
    pub stop_at_ruin: bool,
    pub upper: Option<f64>,
}

/// Event list of one path from `(x0, i0)`. Up-crossings of zero after a
/// negative excursion are reported as level crossings.
pub fn simulate_path(model: &RegimeModel, x0: f64, i0: usize, rule: StopRule, seed: u64) -> Result<Vec<PathEvent>> {
    check_state(model, i0)?;
    if !rule.horizon.is_finite() && !rule.stop_at_ruin && rule.upper.is_none() {
        return Err(RiskError::InvalidArgument("an infinite path needs a stopping level or ruin stop".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walker = Walker::new(model, x0, i0);
    let mut events = Vec::new();
    loop {
        // Stop at zero from below so that its crossing is recorded.
        let target = if walker.x < 0.0 { Some(0.0) } else { rule.upper };
        let limits = Limits { horizon: rule.horizon, ruin: true, upper: target };
        let stop = walker.advance(&mut rng, limits, |_, _| {}, |e| events.push(e.clone()));
        match stop {
            Stop::Upper if target == Some(0.0) && rule.upper.map_or(true, |u| u > 0.0) => continue,
            Stop::Ruin { .. } if !rule.stop_at_ruin => continue,
            _ => return Ok(events),
        }
    }
}

fn check_state(model: &RegimeModel, i: usize) -> Result<()> {
    if i >= model.n_states() {
        return Err(RiskError::InvalidArgument(format!("state {} does not exist", i + 1)));
    }
    Ok(())
}

fn check_budget(n: usize) -> Result<()> {
    if n < 2 {
        return Err(RiskError::InvalidArgument("at least 2 replications are needed".into()));
    }
    Ok(())
}

/// Largest ruin probability over initial states at level `b`, when an
/// analytic route is available.
pub(crate) fn ruin_bound(model: &RegimeModel, b: f64) -> Option<f64> {
    if default_method(model) == ScaleMethod::Spectral {
        return ruin_probability(model, b).ok().map(|v| v.max());
    }
    if model.n_states() == 1 {
        let step = (b / 4000.0).max(1e-3);
        return pollaczek_khintchine(model, b, step).ok().map(|pk| 1.0 - pk.bracket(b).0);
    }
    None
}

/// Smallest doubling level `b ≥ x` with `φ(b) ≤ target`.
pub(crate) fn regeneration_cap(model: &RegimeModel, x: f64, target: f64) -> f64 {
    let scale = model.largest_mean_claim().max(1e-3);
    let mut b = x.max(0.0) + scale;
    for _ in 0..30 {
        match ruin_bound(model, b) {
            Some(phi) if phi <= target => return b,
            Some(_) => b *= 2.0,
            None => {
                let b = x.max(0.0) + 200.0 * scale;
                log::warn!("no analytic ruin bound; regeneration cap set to {b}");
                return b;
            }
        }
    }
    b
}

/// Infinite-horizon ruin probability estimate per initial state.
pub fn mc_ruin(model: &RegimeModel, x: f64, horizon: Option<f64>, n: usize, seed: u64, mode: McMode) -> Result<Vec<Estimate>> {
    check_budget(n)?;
    if x < 0.0 {
        return Err(RiskError::InvalidArgument(format!("initial capital {x} is negative")));
    }
    match mode {
        McMode::Crude => {
            let t = horizon.ok_or_else(|| {
                RiskError::InvalidArgument("crude estimation of infinite-horizon ruin would not terminate; use tilted mode".into())
            })?;
            Ok((0..model.n_states())
                .map(|i| {
                    let scores = replicate(n, seed, stream_base(i), |rng| {
                        let mut w = Walker::new(model, x, i);
                        let limits = Limits { horizon: t, ruin: true, upper: None };
                        matches!(w.advance(rng, limits, |_, _| {}, |_| {}), Stop::Ruin { .. }) as u8 as f64
                    });
                    Estimate::from_scores(scores, seed, mode.name())
                })
                .collect())
        }
        McMode::Tilted => {
            let gamma = adjustment_coefficient(model)?;
            mc_tilted_ruin(model, gamma, x, horizon.unwrap_or(f64::INFINITY), n, seed)
        }
    }
}

/// `P_{x,i}(τ_0^- ≤ t)` by simulating the model tilted by `θ` and weighting
/// each ruined path by `e^{θ(X_τ − x) + k(−θ)τ} h_i / h_{J_τ}`.
pub fn mc_tilted_ruin(model: &RegimeModel, theta: f64, x: f64, horizon: f64, n: usize, seed: u64) -> Result<Vec<Estimate>> {
    check_budget(n)?;
    let tilted = exponential_tilt(model, theta)?;
    let drift = crate::model::drift_report(&tilted.model)?.stationary_drift;
    if drift >= 0.0 && horizon.is_infinite() {
        return Err(RiskError::InvalidArgument(format!(
            "the tilt θ = {theta} leaves a nonnegative drift {drift}; ruin is not certain under it"
        )));
    }
    Ok((0..model.n_states())
        .map(|i| {
            let samples = replicate(n, seed, stream_base(i), |rng| tilted_ruin_weight(&tilted, x, i, horizon, rng));
            let mut est = Estimate::from_scores(samples.iter().cloned(), seed, McMode::Tilted.name());
            est.max_likelihood_ratio = Some(samples.iter().cloned().fold(0.0, f64::max));
            est
        })
        .collect())
}

fn tilted_ruin_weight<R: Rng + ?Sized>(tilted: &TiltedModel, x: f64, i: usize, horizon: f64, rng: &mut R) -> f64 {
    let mut w = Walker::new(&tilted.model, x, i);
    let limits = Limits { horizon, ruin: true, upper: None };
    match w.advance(rng, limits, |_, _| {}, |_| {}) {
        Stop::Ruin { .. } => likelihood_ratio(tilted, x, i, &w),
        _ => 0.0,
    }
}

/// `dP/dP̃` on `F_t` for the walker's current position.
fn likelihood_ratio(tilted: &TiltedModel, x: f64, i: usize, w: &Walker) -> f64 {
    (tilted.theta * (w.x - x) + tilted.k_value * w.t).exp() * tilted.h[i] / tilted.h[w.phase]
}

/// Mean of `dP/dP̃` at the fixed time `t` under the tilted law; equals 1.
pub fn mc_likelihood_ratio_mean(model: &RegimeModel, theta: f64, x: f64, i: usize, t: f64, n: usize, seed: u64) -> Result<Estimate> {
    check_budget(n)?;
    check_state(model, i)?;
    let tilted = exponential_tilt(model, theta)?;
    let samples = replicate(n, seed, 0, |rng| {
        let mut w = Walker::new(&tilted.model, x, i);
        w.advance(rng, Limits { horizon: t, ruin: false, upper: None }, |_, _| {}, |_| {});
        likelihood_ratio(&tilted, x, i, &w)
    });
    let mut est = Estimate::from_scores(samples.iter().cloned(), seed, "likelihood-ratio");
    est.max_likelihood_ratio = Some(samples.iter().cloned().fold(0.0, f64::max));
    Ok(est)
}

/// Parisian ruin probability per initial state: ruin is declared when an
/// excursion below zero lasts `ζ`. Paths that reach the regeneration cap
/// count as survivors.
pub fn mc_parisian(model: &RegimeModel, x: f64, zeta: f64, n: usize, seed: u64) -> Result<Vec<Estimate>> {
    check_budget(n)?;
    if !(zeta >= 0.0) {
        return Err(RiskError::InvalidArgument(format!("delay ζ = {zeta} must be nonnegative")));
    }
    crate::model::require_net_profit(model)?;
    let classical = ruin_bound(model, x.max(0.0)).unwrap_or(1.0);
    let pilot_cap = regeneration_cap(model, x, 1e-6 * classical);
    let pilot_n = (n / 20).max(500);
    let pilot: f64 = (0..model.n_states())
        .map(|i| {
            let r = replicate(pilot_n, seed ^ 0x9e37_79b9_7f4a_7c15, stream_base(i), |rng| {
                parisian_path(model, x, i, zeta, pilot_cap, rng) as u8 as f64
            });
            r.iter().sum::<f64>() / pilot_n as f64
        })
        .fold(f64::INFINITY, f64::min);
    let cap = regeneration_cap(model, x, 1e-4 * pilot.max(1.0 / pilot_n as f64));
    Ok((0..model.n_states())
        .map(|i| {
            let scores = replicate(n, seed, stream_base(i), |rng| parisian_path(model, x, i, zeta, cap, rng) as u8 as f64);
            Estimate::from_scores(scores, seed, "crude-parisian")
        })
        .collect())
}

fn parisian_path<R: Rng + ?Sized>(model: &RegimeModel, x: f64, i: usize, zeta: f64, cap: f64, rng: &mut R) -> bool {
    let mut w = Walker::new(model, x, i);
    loop {
        if w.x < 0.0 {
            let deadline = w.t + zeta;
            let limits = Limits { horizon: deadline, ruin: false, upper: Some(0.0) };
            // Claims during the excursion keep it going; only the clock or
            // the crossing of zero ends it.
            match w.advance(rng, limits, |_, _| {}, |_| {}) {
                Stop::Upper => continue,
                Stop::Horizon => return true,
                Stop::Escaped | Stop::Ruin { .. } => return true,
            }
        }
        let limits = Limits { horizon: f64::INFINITY, ruin: true, upper: Some(cap) };
        match w.advance(rng, limits, |_, _| {}, |_| {}) {
            Stop::Ruin { .. } => {
                if zeta == 0.0 {
                    return true;
                }
            }
            _ => return false,
        }
    }
}

/// Weighted histogram with bin edges.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    pub se: Vec<f64>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,mass,se\n");
        for k in 0..self.mass.len() {
            out.push_str(&format!("{},{},{},{}\n", self.edges[k], self.edges[k + 1], self.mass[k], self.se[k]));
        }
        out
    }
}

/// Functionals estimated by [`mc_functionals`].
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// Deficit at ruin, conditional on ruin; histogram over `bins` edges.
    DeficitLaw { edges: Vec<f64> },
    /// `E[e^{−qτ_0^-}; J_τ = j]`.
    Discounted { q: f64 },
    /// `E[e^{−qτ_0^-} w(X_{τ−}, |X_τ|)]`.
    GerberShiu { w: PenaltyFunction, q: f64 },
    /// `P(τ_{x+z}^+ ≤ t, J = j)` and the histogram of `τ_{x+z}^+` on `edges`.
    UpcrossTime { z: f64, horizon: f64, edges: Vec<f64> },
    /// `E[e^{−qτ_{x+z}^+}; J = j]`, the first-passage matrix row.
    FirstPassage { z: f64, q: f64 },
    /// `E ∫_0^{τ_0^-} e^{−qt} 1{J_t = j} dt`.
    Occupation { q: f64 },
    /// `E[e^{−qτ_a^+}; τ_a^+ < τ_0^-, J = j]`.
    ExitUpward { a: f64, q: f64 },
    /// `E[e^{−qτ_0^- + αX_τ}; τ_0^- < τ_a^+, J = j]`.
    ExitDownward { a: f64, q: f64, alpha: f64 },
    /// `E e^{−q(t∧T)} W^(q)_{J, col}(X_{t∧T})`, `T = τ_0^- ∧ τ_a^+`, at each time.
    ScaleMartingale { q: f64, a: f64, column: usize, times: Vec<f64> },
}

impl Functional {
    pub fn name(&self) -> &'static str {
        match self {
            Functional::DeficitLaw { .. } => "deficit-law",
            Functional::Discounted { .. } => "discounted",
            Functional::GerberShiu { .. } => "gerber-shiu",
            Functional::UpcrossTime { .. } => "upcross-time",
            Functional::FirstPassage { .. } => "first-passage",
            Functional::Occupation { .. } => "occupation",
            Functional::ExitUpward { .. } => "exit-upward",
            Functional::ExitDownward { .. } => "exit-downward",
            Functional::ScaleMartingale { .. } => "scale-martingale",
        }
    }
}

/// Estimates of a functional started from `(x, i)`: one per target phase
/// (or per time for the martingale), plus a histogram where relevant.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalEstimate {
    pub functional: String,
    pub estimates: Vec<Estimate>,
    pub histogram: Option<Histogram>,
}

fn killing<R: Rng + ?Sized>(q: f64, rng: &mut R) -> f64 {
    if q > 0.0 {
        Exp::new(q).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}

fn check_rate(q: f64) -> Result<()> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(RiskError::InvalidArgument(format!("discount rate {q} must be finite and nonnegative")));
    }
    Ok(())
}

fn vector_estimates(rows: &[Vec<f64>], seed: u64, method: &str) -> Vec<Estimate> {
    let m = rows.first().map_or(0, |r| r.len());
    (0..m).map(|j| Estimate::from_scores(rows.iter().map(|r| r[j]), seed, method)).collect()
}

fn histogram(samples: &[(f64, f64)], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RiskError::InvalidArgument("histogram edges must be increasing".into()));
    }
    let bins = edges.len() - 1;
    let n = samples.len() as f64;
    let mut mass = vec![0.0; bins];
    let mut sq = vec![0.0; bins];
    for &(v, w) in samples {
        if v >= edges[0] && v < edges[bins] {
            let k = edges.partition_point(|&e| e <= v) - 1;
            mass[k] += w;
            sq[k] += w * w;
        }
    }
    let se = (0..bins)
        .map(|k| {
            let mean = mass[k] / n;
            ((sq[k] / n - mean * mean).max(0.0) / (n - 1.0).max(1.0)).sqrt()
        })
        .collect();
    Ok(Histogram { edges: edges.to_vec(), mass: mass.iter().map(|m| m / n).collect(), se })
}

/// Weighted sample of deficits at ruin from `(x, i)`, with weights summing
/// (in expectation over `n` paths) to the ruin probability. Uses the Cramér
/// tilt when available and a crude run with a regeneration cap otherwise.
pub fn mc_deficit_sample(model: &RegimeModel, x: f64, i: usize, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    check_budget(n)?;
    check_state(model, i)?;
    if let Ok(tilted) = adjustment_coefficient(model).and_then(|g| exponential_tilt(model, g)) {
        return Ok(replicate(n, seed, stream_base(i), |rng| {
            let mut w = Walker::new(&tilted.model, x, i);
            match w.advance(rng, Limits::ruin_only(), |_, _| {}, |_| {}) {
                Stop::Ruin { .. } => (-w.x, likelihood_ratio(&tilted, x, i, &w)),
                _ => (0.0, 0.0),
            }
        }));
    }
    crate::model::require_net_profit(model)?;
    let cap = regeneration_cap(model, x, 1e-6 * ruin_bound(model, x).unwrap_or(1.0));
    Ok(replicate(n, seed, stream_base(i), |rng| {
        let mut w = Walker::new(model, x, i);
        match w.advance(rng, Limits { horizon: f64::INFINITY, ruin: true, upper: Some(cap) }, |_, _| {}, |_| {}) {
            Stop::Ruin { .. } => (-w.x, 1.0),
            _ => (0.0, 0.0),
        }
    }))
}

pub fn mc_functionals(model: &RegimeModel, x: f64, i: usize, n: usize, seed: u64, functional: &Functional) -> Result<FunctionalEstimate> {
    check_budget(n)?;
    check_state(model, i)?;
    let nst = model.n_states();
    let base = stream_base(i);
    let name = functional.name();
    let pack = |estimates, histogram| Ok(FunctionalEstimate { functional: name.to_string(), estimates, histogram });
    // Infinite-horizon runs without killing stop at a cap where ruin is negligible.
    let cap_for = |q: f64| -> Result<Option<f64>> {
        if q > 0.0 {
            Ok(None)
        } else {
            crate::model::require_net_profit(model)?;
            Ok(Some(regeneration_cap(model, x, 1e-7)))
        }
    };
    match functional {
        Functional::DeficitLaw { edges } => {
            let samples = mc_deficit_sample(model, x, i, n, seed)?;
            let total = Estimate::from_scores(samples.iter().map(|s| s.1), seed, "deficit-mass");
            // Normalize to the conditional law given ruin.
            let mut hist = histogram(&samples, edges)?;
            if total.value > 0.0 {
                for (m, s) in hist.mass.iter_mut().zip(hist.se.iter_mut()) {
                    *m /= total.value;
                    *s /= total.value;
                }
            }
            pack(vec![total], Some(hist))
        }
        Functional::Discounted { q } | Functional::GerberShiu { q, .. } => {
            check_rate(*q)?;
            let penalty = match functional {
                Functional::GerberShiu { w, .. } => {
                    w.validate()?;
                    Some(w)
                }
                _ => None,
            };
            let cap = cap_for(*q)?;
            let rows = replicate(n, seed, base, |rng| {
                let kill = killing(*q, rng);
                let mut w = Walker::new(model, x, i);
                let mut row = vec![0.0; if penalty.is_some() { 1 } else { nst }];
                let limits = Limits { horizon: kill, ruin: true, upper: cap };
                if let Stop::Ruin { pre, .. } = w.advance(rng, limits, |_, _| {}, |_| {}) {
                    match penalty {
                        Some(p) => row[0] = p.eval(pre, -w.x),
                        None => row[w.phase] = 1.0,
                    }
                }
                row
            });
            pack(vector_estimates(&rows, seed, "crude"), None)
        }
        Functional::UpcrossTime { z, horizon, edges } => {
            let target = x + z;
            let rows = replicate(n, seed, base, |rng| {
                let mut w = Walker::new(model, x, i);
                let mut row = vec![0.0; nst + 1];
                if let Stop::Upper = w.advance(rng, Limits { horizon: *horizon, ruin: false, upper: Some(target) }, |_, _| {}, |_| {}) {
                    row[w.phase] = 1.0;
                    row[nst] = w.t;
                } else {
                    row[nst] = f64::INFINITY;
                }
                row
            });
            let times: Vec<(f64, f64)> = rows.iter().map(|r| (r[nst], 1.0)).collect();
            let hist = histogram(&times, edges)?;
            let probs: Vec<Vec<f64>> = rows.iter().map(|r| r[..nst].to_vec()).collect();
            pack(vector_estimates(&probs, seed, "crude"), Some(hist))
        }
        Functional::FirstPassage { z, q } => {
            check_rate(*q)?;
            let rows = replicate(n, seed, base, |rng| {
                let kill = killing(*q, rng);
                let mut w = Walker::new(model, x, i);
                let mut row = vec![0.0; nst];
                if let Stop::Upper = w.advance(rng, Limits { horizon: kill, ruin: false, upper: Some(x + z) }, |_, _| {}, |_| {}) {
                    row[w.phase] = 1.0;
                }
                row
            });
            pack(vector_estimates(&rows, seed, "crude"), None)
        }
        Functional::Occupation { q } => {
            check_rate(*q)?;
            let cap = cap_for(*q)?;
            let rows = replicate(n, seed, base, |rng| {
                let kill = killing(*q, rng);
                let mut w = Walker::new(model, x, i);
                let mut row = vec![0.0; nst];
                w.advance(rng, Limits { horizon: kill, ruin: true, upper: cap }, |j, dt| row[j] += dt, |_| {});
                row
            });
            pack(vector_estimates(&rows, seed, "crude"), None)
        }
        Functional::ExitUpward { a, q } | Functional::ExitDownward { a, q, .. } => {
            check_rate(*q)?;
            if !(0.0 <= x && x <= *a) {
                return Err(RiskError::InvalidArgument(format!("need 0 ≤ x ≤ a, got x = {x}, a = {a}")));
            }
            let alpha = match functional {
                Functional::ExitDownward { alpha, .. } => Some(*alpha),
                _ => None,
            };
            let rows = replicate(n, seed, base, |rng| {
                let kill = killing(*q, rng);
                let mut w = Walker::new(model, x, i);
                let mut row = vec![0.0; nst];
                let stop = w.advance(rng, Limits { horizon: kill, ruin: true, upper: Some(*a) }, |_, _| {}, |_| {});
                match (stop, alpha) {
                    (Stop::Upper, None) => row[w.phase] = 1.0,
                    (Stop::Ruin { .. }, Some(al)) => row[w.phase] = (al * w.x).exp(),
                    _ => {}
                }
                row
            });
            pack(vector_estimates(&rows, seed, "crude"), None)
        }
        Functional::ScaleMartingale { q, a, column, times } => {
            check_rate(*q)?;
            check_state(model, *column)?;
            if times.windows(2).any(|w| w[1] < w[0]) || times.first().map_or(true, |&t| t < 0.0) {
                return Err(RiskError::InvalidArgument("martingale times must be nonnegative and sorted".into()));
            }
            let modes = ScaleModes::new(model, *q)?;
            let scale = |x: f64, j: usize| if x < 0.0 { 0.0 } else { modes.w(x)[(j, *column)] };
            let rows = replicate(n, seed, base, |rng| {
                let mut w = Walker::new(model, x, i);
                let mut row = Vec::with_capacity(times.len());
                let mut stopped = false;
                for &t in times {
                    if !stopped {
                        let stop = w.advance(rng, Limits { horizon: t, ruin: true, upper: Some(*a) }, |_, _| {}, |_| {});
                        stopped = !matches!(stop, Stop::Horizon);
                    }
                    row.push((-q * w.t).exp() * scale(w.x, w.phase));
                }
                row
            });
            pack(vector_estimates(&rows, seed, "crude"), None)
        }
    }
}

/// Mean surplus `E_{x,i} X_t` from `n` paths.
pub fn mc_mean_surplus(model: &RegimeModel, x: f64, i: usize, t: f64, n: usize, seed: u64) -> Result<Estimate> {
    check_budget(n)?;
    check_state(model, i)?;
    let scores = replicate(n, seed, stream_base(i), |rng| {
        let mut w = Walker::new(model, x, i);
        w.advance(rng, Limits { horizon: t, ruin: false, upper: None }, |_, _| {}, |_| {});
        w.x
    });
    Ok(Estimate::from_scores(scores, seed, "crude"))
}

/// Convert per-state estimates into a vector of values.
pub fn values(estimates: &[Estimate]) -> DVector<f64> {
    DVector::from_iterator(estimates.len(), estimates.iter().map(|e| e.value))
}
