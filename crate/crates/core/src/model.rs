//! The Markov-modulated risk process
//!
//! `X_t = x + ∫_0^t p_{J_s} ds − Σ claims`, where claims arrive at rate
//! `λ_i` in phase `i` with law `C^(i)`, and a switch `i → j` of the modulating
//! chain may carry an extra claim `C^(ij)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::claims::ClaimLaw;
use crate::error::{Result, RiskError};

const ROW_SUM_TOL: f64 = 1e-12;

/// Unvalidated model description, as read from a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub q_matrix: Vec<Vec<f64>>,
    pub premiums: Vec<f64>,
    pub arrival_rates: Vec<f64>,
    pub state_claims: Vec<Option<ClaimLaw>>,
    /// `transition_claims[i][j]`; `None` means no claim on the switch.
    pub transition_claims: Vec<Vec<Option<ClaimLaw>>>,
}

/// A validated regime-switching risk model. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeModel {
    q: DMatrix<f64>,
    premiums: Vec<f64>,
    arrival_rates: Vec<f64>,
    state_claims: Vec<ClaimLaw>,
    transition_claims: Vec<Vec<ClaimLaw>>,
}

/// A validated model together with non-fatal findings.
#[derive(Debug, Clone)]
pub struct Validated {
    pub model: RegimeModel,
    pub warnings: Vec<String>,
}

/// Checks every invariant of `spec` and returns the model, or the full list
/// of violations.
pub fn validate_model(spec: ModelSpec) -> std::result::Result<Validated, Vec<String>> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let n = spec.q_matrix.len();
    if n == 0 {
        return Err(vec!["model must have at least one state".into()]);
    }
    if spec.q_matrix.iter().any(|r| r.len() != n) {
        errors.push(format!("q_matrix must be {n}x{n}"));
    }
    for (name, len) in [
        ("premiums", spec.premiums.len()),
        ("arrival_rates", spec.arrival_rates.len()),
        ("state_claims", spec.state_claims.len()),
    ] {
        if len != n {
            errors.push(format!("{name} has length {len}, expected {n}"));
        }
    }
    if !spec.transition_claims.is_empty()
        && (spec.transition_claims.len() != n || spec.transition_claims.iter().any(|r| r.len() != n))
    {
        errors.push(format!("transition_claims must be {n}x{n}"));
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    for (i, row) in spec.q_matrix.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() {
                errors.push(format!("q[{}][{}] is not finite", i + 1, j + 1));
            } else if i != j && x < 0.0 {
                errors.push(format!("q[{}][{}] = {x} is a negative off-diagonal rate", i + 1, j + 1));
            }
        }
        let s: f64 = row.iter().sum();
        if s.abs() > ROW_SUM_TOL {
            errors.push(format!("row {} sums to {}", i + 1, fmt_sum(s)));
        }
    }
    for (i, &p) in spec.premiums.iter().enumerate() {
        if !(p > 0.0 && p.is_finite()) {
            errors.push(format!("premium of state {} must be positive, got {p}", i + 1));
        }
    }
    let mut state_claims = Vec::with_capacity(n);
    for (i, (&lam, law)) in spec.arrival_rates.iter().zip(&spec.state_claims).enumerate() {
        if !(lam >= 0.0 && lam.is_finite()) {
            errors.push(format!("arrival rate of state {} must be nonnegative, got {lam}", i + 1));
        }
        match law {
            None if lam > 0.0 => {
                errors.push(format!("state {} has arrival rate {lam} but no claim law", i + 1));
                state_claims.push(ClaimLaw::Degenerate);
            }
            None => state_claims.push(ClaimLaw::Degenerate),
            Some(law) => {
                for v in law.violations() {
                    errors.push(format!("state {} claims: {v}", i + 1));
                }
                if law.mean().is_err() {
                    errors.push(format!("state {} claims: {} has infinite mean", i + 1, law.describe()));
                }
                if lam > 0.0 && law.is_degenerate() {
                    warnings.push(format!("state {} claims are null", i + 1));
                }
                state_claims.push(law.clone());
            }
        }
    }
    let mut transition_claims = vec![vec![ClaimLaw::Degenerate; n]; n];
    for (i, row) in spec.transition_claims.iter().enumerate() {
        for (j, law) in row.iter().enumerate() {
            let Some(law) = law else { continue };
            if i == j {
                if !law.is_degenerate() {
                    errors.push(format!("transition claim ({},{}) on the diagonal is not allowed", i + 1, j + 1));
                }
                continue;
            }
            for v in law.violations() {
                errors.push(format!("transition ({},{}) claims: {v}", i + 1, j + 1));
            }
            if law.mean().is_err() {
                errors.push(format!("transition ({},{}) claims: {} has infinite mean", i + 1, j + 1, law.describe()));
            }
            transition_claims[i][j] = law.clone();
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let q = DMatrix::from_fn(n, n, |i, j| spec.q_matrix[i][j]);
    Ok(Validated {
        model: RegimeModel {
            q,
            premiums: spec.premiums,
            arrival_rates: spec.arrival_rates,
            state_claims,
            transition_claims,
        },
        warnings,
    })
}

fn fmt_sum(s: f64) -> String {
    let rounded = (s * 1e10).round() / 1e10;
    format!("{rounded}")
}

impl RegimeModel {
    /// Validating constructor; fails with every violated invariant.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        validate_model(spec).map(|v| v.model).map_err(RiskError::InvalidModel)
    }

    /// Classical compound Poisson model with one phase.
    pub fn single_state(premium: f64, arrival_rate: f64, claims: ClaimLaw) -> Result<Self> {
        Self::new(ModelSpec {
            q_matrix: vec![vec![0.0]],
            premiums: vec![premium],
            arrival_rates: vec![arrival_rate],
            state_claims: vec![Some(claims)],
            transition_claims: vec![],
        })
    }

    pub fn n_states(&self) -> usize {
        self.premiums.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn premium(&self, i: usize) -> f64 {
        self.premiums[i]
    }

    pub fn premiums(&self) -> &[f64] {
        &self.premiums
    }

    pub fn arrival_rate(&self, i: usize) -> f64 {
        self.arrival_rates[i]
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival_rates
    }

    pub fn state_claim(&self, i: usize) -> &ClaimLaw {
        &self.state_claims[i]
    }

    /// Claim on the switch `i → j` (the point mass at zero when absent).
    pub fn transition_claim(&self, i: usize, j: usize) -> &ClaimLaw {
        &self.transition_claims[i][j]
    }

    pub fn max_premium(&self) -> f64 {
        self.premiums.iter().cloned().fold(0.0, f64::max)
    }

    /// Every claim law that can actually occur, with its source.
    pub fn active_laws(&self) -> Vec<&ClaimLaw> {
        let n = self.n_states();
        let mut out = Vec::new();
        for i in 0..n {
            if self.arrival_rates[i] > 0.0 {
                out.push(&self.state_claims[i]);
            }
            for j in 0..n {
                if i != j && self.q[(i, j)] > 0.0 && !self.transition_claims[i][j].is_degenerate() {
                    out.push(&self.transition_claims[i][j]);
                }
            }
        }
        out
    }

    pub fn is_light_tailed(&self) -> bool {
        self.active_laws().iter().all(|l| l.has_mgf())
    }

    /// Minimum moment-generating abscissa over the active claim laws.
    pub fn mgf_abscissa(&self) -> f64 {
        self.active_laws()
            .iter()
            .map(|l| l.mgf_abscissa())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn largest_mean_claim(&self) -> f64 {
        self.active_laws()
            .iter()
            .filter_map(|l| l.mean().ok())
            .fold(0.0, f64::max)
    }

    /// Total event rate `λ_i − q_ii` in phase `i`.
    pub fn event_rate(&self, i: usize) -> f64 {
        self.arrival_rates[i] - self.q[(i, i)]
    }

    /// Rebuilds a model from raw parts without the configuration layer.
    pub(crate) fn from_parts(
        q: DMatrix<f64>,
        premiums: Vec<f64>,
        arrival_rates: Vec<f64>,
        state_claims: Vec<ClaimLaw>,
        transition_claims: Vec<Vec<ClaimLaw>>,
    ) -> Result<Self> {
        let n = premiums.len();
        Self::new(ModelSpec {
            q_matrix: (0..n).map(|i| (0..n).map(|j| q[(i, j)]).collect()).collect(),
            premiums,
            arrival_rates,
            state_claims: state_claims.into_iter().map(Some).collect(),
            transition_claims: transition_claims
                .into_iter()
                .enumerate()
                .map(|(i, row)| {
                    row.into_iter()
                        .enumerate()
                        .map(|(j, l)| if i == j { None } else { Some(l) })
                        .collect()
                })
                .collect(),
        })
    }
}

/// Communicating classes of the chain with generator `q`.
pub fn communicating_classes(q: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = q.nrows();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
        for j in 0..n {
            if i != j && q[(i, j)] > 0.0 {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            assigned[j] = true;
        }
        classes.push(class);
    }
    classes
}

/// Stationary law `π` of an irreducible generator: `πQ = 0`, `π𝟙 = 1`.
pub fn stationary_distribution(q: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = q.nrows();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let classes = communicating_classes(q);
    if classes.len() > 1 {
        return Err(RiskError::Reducible(
            classes.into_iter().map(|c| c.into_iter().map(|i| i + 1).collect()).collect(),
        ));
    }
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .full_piv_lu()
        .solve(&b)
        .ok_or_else(|| RiskError::Numerical("stationary system singular".into()))?;
    Ok(pi)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    /// `E_i X_1` for each starting phase.
    pub one_step_means: Vec<f64>,
    /// Instantaneous drift `p_i − λ_i E C^(i) − Σ_j q_ij E C^(ij)` per phase.
    pub instantaneous: Vec<f64>,
    /// `k'(0) = Σ_i π_i · instantaneous_i`.
    pub stationary_drift: f64,
    pub stationary: Vec<f64>,
    /// `E_i X_1 > 0` for every phase.
    pub per_state_net_profit: bool,
    pub per_state_flags: Vec<bool>,
    /// `k'(0) > 0`.
    pub stationary_net_profit: bool,
}

pub fn drift_report(model: &RegimeModel) -> Result<DriftReport> {
    let n = model.n_states();
    let pi = stationary_distribution(model.q())?;
    let mut inst = vec![0.0; n];
    for i in 0..n {
        let mut d = model.premium(i);
        if model.arrival_rate(i) > 0.0 {
            d -= model.arrival_rate(i) * model.state_claim(i).mean()?;
        }
        for j in 0..n {
            if i != j && model.q()[(i, j)] > 0.0 {
                d -= model.q()[(i, j)] * model.transition_claim(i, j).mean()?;
            }
        }
        inst[i] = d;
    }
    // ∫_0^1 e^{Qs} ds from the exponential of the block matrix [[Q, I], [0, 0]].
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(model.q());
    block.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    let integral = block.exp().view((0, n), (n, n)).into_owned();
    let one_step = &integral * DVector::from_column_slice(&inst);
    let stationary_drift = pi.iter().zip(&inst).map(|(p, d)| p * d).sum::<f64>();
    let flags: Vec<bool> = one_step.iter().map(|&m| m > 0.0).collect();
    Ok(DriftReport {
        one_step_means: one_step.iter().cloned().collect(),
        instantaneous: inst,
        stationary_drift,
        stationary: pi.iter().cloned().collect(),
        per_state_net_profit: flags.iter().all(|&f| f),
        per_state_flags: flags,
        stationary_net_profit: stationary_drift > 0.0,
    })
}

/// Fails unless the stationary drift is positive.
pub fn require_net_profit(model: &RegimeModel) -> Result<DriftReport> {
    let report = drift_report(model)?;
    if !report.stationary_net_profit {
        return Err(RiskError::NetProfit(format!(
            "stationary drift {} is not positive; ruin certain; survival identically 0",
            report.stationary_drift
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{model_a, model_b};

    #[test]
    fn single_state_model_is_valid() {
        let m = RegimeModel::single_state(1.0, 1.0, ClaimLaw::exponential(2.0)).unwrap();
        assert_eq!(m.n_states(), 1);
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let spec = ModelSpec {
            q_matrix: vec![vec![-1.0, 1.0], vec![1.0, -0.9]],
            premiums: vec![1.0, 1.0],
            arrival_rates: vec![1.0, 1.0],
            state_claims: vec![Some(ClaimLaw::exponential(1.0)), Some(ClaimLaw::exponential(1.0))],
            transition_claims: vec![],
        };
        let errs = validate_model(spec).unwrap_err();
        assert!(errs.iter().any(|e| e == "row 2 sums to 0.1"), "{errs:?}");
    }

    #[test]
    fn every_violation_is_listed() {
        let spec = ModelSpec {
            q_matrix: vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
            premiums: vec![0.0, 1.0],
            arrival_rates: vec![-1.0, 2.0],
            state_claims: vec![Some(ClaimLaw::exponential(1.0)), None],
            transition_claims: vec![],
        };
        let errs = validate_model(spec).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("negative off-diagonal")));
        assert!(errs.iter().any(|e| e.contains("premium of state 1")));
        assert!(errs.iter().any(|e| e.contains("arrival rate of state 1")));
        assert!(errs.iter().any(|e| e.contains("state 2 has arrival rate 2 but no claim law")));
    }

    #[test]
    fn null_claims_warn() {
        let spec = ModelSpec {
            q_matrix: vec![vec![0.0]],
            premiums: vec![1.0],
            arrival_rates: vec![1.0],
            state_claims: vec![Some(ClaimLaw::Degenerate)],
            transition_claims: vec![],
        };
        let v = validate_model(spec).unwrap();
        assert_eq!(v.warnings, vec!["state 1 claims are null".to_string()]);
    }

    #[test]
    fn diagonal_transition_claim_rejected() {
        let spec = ModelSpec {
            q_matrix: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
            premiums: vec![1.0, 1.0],
            arrival_rates: vec![0.0, 0.0],
            state_claims: vec![None, None],
            transition_claims: vec![
                vec![Some(ClaimLaw::exponential(1.0)), None],
                vec![None, None],
            ],
        };
        assert!(validate_model(spec).is_err());
    }

    #[test]
    fn stationary_examples() {
        let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let pi = stationary_distribution(&q).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let q = DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 1.0, -1.0]);
        let pi = stationary_distribution(&q).unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-14 && (pi[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi.transpose() * &q).amax() < 1e-10);
        let pi = stationary_distribution(&DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(pi[0], 1.0);
    }

    #[test]
    fn reducible_generator_names_classes() {
        let q = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        match stationary_distribution(&q) {
            Err(RiskError::Reducible(classes)) => assert_eq!(classes, vec![vec![1, 2], vec![3]]),
            other => panic!("expected reducible error, got {other:?}"),
        }
    }

    #[test]
    fn drift_examples() {
        let a = drift_report(&model_a()).unwrap();
        assert!((a.stationary_drift - 0.5).abs() < 1e-15);
        let b = drift_report(&model_b()).unwrap();
        assert!((b.stationary_drift - 0.5).abs() < 1e-15);
        assert_eq!(b.instantaneous, vec![1.0, 0.0]);
        assert!(b.stationary_net_profit);
        // E_2 X_1 > 0 because the chain leaves state 2 into the profitable state.
        assert!(b.one_step_means[1] > 0.0);
        let pure = RegimeModel::new(ModelSpec {
            q_matrix: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
            premiums: vec![3.0, 1.5],
            arrival_rates: vec![0.0, 0.0],
            state_claims: vec![None, None],
            transition_claims: vec![],
        })
        .unwrap();
        let r = drift_report(&pure).unwrap();
        assert!((r.stationary_drift - (2.0 / 3.0 * 3.0 + 1.0 / 3.0 * 1.5)).abs() < 1e-14);
    }

    #[test]
    fn one_step_mean_of_single_state_is_drift() {
        let r = drift_report(&model_a()).unwrap();
        assert!((r.one_step_means[0] - 0.5).abs() < 1e-14);
    }
}
