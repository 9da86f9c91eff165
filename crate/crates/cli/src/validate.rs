//! Invariant suite run by `mmrisk validate`.

use mmrisk::parisian::parisian_ruin;
use mmrisk::ruin::{discounted_ruin, gerber_shiu, ode_residual, pollaczek_khintchine, ruin_probability, survival, PenaltyFunction};
use mmrisk::scale::{default_method, laplace_round_trip, ScaleMethod, ScaleModes};
use mmrisk::simulate::{mc_ruin, McMode};
use mmrisk::spectral::{adjustment_coefficient, matrix_exponent_derivative, perron_eigenvalue};
use mmrisk::{drift_report, stationary_distribution, RegimeModel, RiskError};
use nalgebra::DVector;
use num_complex::Complex64;

use crate::output::{Cell, Table};
use crate::Budget;

enum Status {
    Pass,
    Warn,
    Fail,
    Skip,
}

impl Status {
    fn name(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Warn => "warn",
            Status::Fail => "fail",
            Status::Skip => "skip",
        }
    }
}

type Check = Result<(Status, String), RiskError>;

fn verdict(ok: bool, detail: String) -> Check {
    Ok((if ok { Status::Pass } else { Status::Fail }, detail))
}

fn skip(why: &str) -> Check {
    Ok((Status::Skip, why.to_string()))
}

/// Runs every check; the second value names the first failure.
pub fn run(model: &RegimeModel, budget: Budget) -> (Table, Option<String>) {
    let mut table = Table::new(["check", "status", "detail"]);
    let mut failure: Option<String> = None;
    let mut record = |name: &str, check: Check| -> bool {
        let (status, detail) = check.unwrap_or_else(|e| (Status::Fail, e.to_string()));
        if matches!(status, Status::Fail) && failure.is_none() {
            failure = Some(if name == "net-profit" { detail.clone() } else { format!("{name}: {detail}") });
        }
        let passed = !matches!(status, Status::Fail);
        table.push(vec![name.into(), status.name().into(), Cell::Text(detail)]);
        passed
    };
    let n = model.n_states();
    let families: Vec<&str> = model.active_laws().iter().map(|l| l.family()).collect();
    record("model", Ok((Status::Pass, format!("{n} state(s); claim families: {}", families.join(", ")))));

    record(
        "stationary-distribution",
        stationary_distribution(model.q()).and_then(|pi| {
            let residual = (pi.transpose() * model.q()).amax();
            verdict(residual < 1e-10 && (pi.sum() - 1.0).abs() < 1e-12, format!("|πQ| = {residual:e}"))
        }),
    );

    let drift = drift_report(model);
    record(
        "per-state-drift",
        drift.clone().map(|d| {
            let detail = format!("E_i X_1 = {:?}", d.one_step_means);
            // The stationary condition decides; a negative phase is legitimate.
            (if d.per_state_net_profit { Status::Pass } else { Status::Warn }, detail)
        }),
    );
    let profitable = record(
        "net-profit",
        drift.clone().and_then(|d| {
            let ok = d.stationary_net_profit;
            let detail = if ok {
                format!("stationary drift {}", d.stationary_drift)
            } else {
                format!("net profit violated: stationary drift {} is not positive", d.stationary_drift)
            };
            verdict(ok, detail)
        }),
    );

    record(
        "drift-consistency",
        drift.and_then(|d| {
            let pi = DVector::from_vec(d.stationary.clone());
            let fp = matrix_exponent_derivative(model, Complex64::new(0.0, 0.0))?;
            let via_exponent: f64 = (0..n).map(|i| (0..n).map(|j| pi[i] * fp[(i, j)].re).sum::<f64>()).sum();
            let gap = (via_exponent - d.stationary_drift).abs();
            verdict(gap < 1e-10, format!("|πF'(0)1 − k'(0)| = {gap:e}"))
        }),
    );

    if !profitable {
        for name in ["adjustment-coefficient", "laplace-round-trip", "survival", "pk-bracket", "ode-residual", "gerber-shiu-dual-route", "parisian-bound", "mc-ruin"] {
            record(name, skip("requires net profit"));
        }
        return (table, failure);
    }

    let spectral = default_method(model) == ScaleMethod::Spectral;
    let gamma = if model.is_light_tailed() { adjustment_coefficient(model).ok() } else { None };
    record(
        "adjustment-coefficient",
        match gamma {
            Some(g) => perron_eigenvalue(model, -g).and_then(|k| verdict(g > 0.0 && k.abs() < 1e-10, format!("γ = {g}, |k(−γ)| = {:e}", k.abs()))),
            None if model.is_light_tailed() => Ok((Status::Warn, "light tails but no Cramér root".into())),
            None => skip("heavy-tailed claims"),
        },
    );

    record(
        "laplace-round-trip",
        if spectral {
            ScaleModes::new(model, 0.5).and_then(|modes| {
                // Away from every root, where the transform converges.
                let alpha = modes.roots().iter().map(|r| r.lambda.re).fold(0.0, f64::max) + 1.0;
                let e = laplace_round_trip(model, alpha, 0.5)?;
                verdict(e < 1e-4, format!("max relative error {e:e} at (α, q) = ({alpha}, 0.5)"))
            })
        } else {
            skip("needs rational claim transforms")
        },
    );

    let scale = model.largest_mean_claim().max(0.1);
    let grid: Vec<f64> = (0..=50).map(|k| k as f64 * scale / 5.0).collect();
    let survival_check = || -> Check {
        let mut prev = vec![0.0; n];
        for &x in &grid {
            let s = survival(model, x)?;
            for i in 0..n {
                if !(-1e-12..=1.0 + 1e-12).contains(&s[i]) || s[i] < prev[i] - 1e-9 {
                    return verdict(false, format!("survival_{}({x}) = {} breaks [0,1] or monotonicity", i + 1, s[i]));
                }
                prev[i] = s[i];
            }
        }
        verdict(true, format!("in [0,1] and nondecreasing on [0, {}]", grid[grid.len() - 1]))
    };
    record("survival", if model.is_light_tailed() { survival_check() } else { skip("heavy-tailed claims") });

    record(
        "pk-bracket",
        if n == 1 && model.is_light_tailed() {
            let x_max = grid[grid.len() - 1];
            pollaczek_khintchine(model, x_max, x_max / 4000.0).and_then(|pk| {
                for &x in &grid {
                    let s = survival(model, x)?[0];
                    let (lo, hi) = pk.bracket(x);
                    if s < lo - 1e-9 || s > hi + 1e-9 {
                        return verdict(false, format!("survival({x}) = {s} outside [{lo}, {hi}]"));
                    }
                }
                verdict(true, format!("brackets contain the scale-matrix survival at {} points", grid.len()))
            })
        } else {
            skip("needs a single light-tailed state")
        },
    );

    record(
        "ode-residual",
        if spectral {
            let xs: Vec<f64> = (0..=100).map(|k| k as f64 * scale / 20.0).collect();
            ode_residual(model, 0.0, &PenaltyFunction::one(), &xs).and_then(|r| {
                verdict(r.max_residual < 1e-2 * r.phi_norm, format!("max residual {:e} vs ‖φ‖ = {}", r.max_residual, r.phi_norm))
            })
        } else {
            skip("needs rational claim transforms")
        },
    );

    record(
        "gerber-shiu-dual-route",
        if spectral {
            (|| {
                let mut worst: f64 = 0.0;
                for x in [0.0, scale, 2.0 * scale] {
                    let a = gerber_shiu(model, 0.5, x, &PenaltyFunction::one())?;
                    let b = discounted_ruin(model, 0.5, x)?;
                    for i in 0..n {
                        worst = worst.max((a[i] - b.row(i).sum()).abs());
                    }
                }
                verdict(worst < 1e-5, format!("max gap {worst:e} at q = 0.5"))
            })()
        } else {
            skip("needs rational claim transforms")
        },
    );

    record(
        "parisian-bound",
        if spectral {
            (|| {
                let r = parisian_ruin(model, scale, scale)?;
                let phi = ruin_probability(model, scale)?;
                let ok = (0..n).all(|i| r[i] <= phi[i] + 1e-9);
                verdict(ok, format!("Parisian ruin {:?} ≤ classical {:?} at x = ζ = {scale}", r.as_slice(), phi.as_slice()))
            })()
        } else {
            skip("needs rational claim transforms")
        },
    );

    record(
        "mc-ruin",
        match gamma {
            Some(_) => (|| {
                let est = mc_ruin(model, scale, None, budget.n, budget.seed, McMode::Tilted)?;
                let phi = ruin_probability(model, scale)?;
                let worst = (0..n).map(|i| est[i].z_score(phi[i]).abs()).fold(0.0, f64::max);
                verdict(worst < 4.0, format!("tilted estimate within {worst:.2} SE of the analytic value at x = {scale}"))
            })(),
            None => skip("needs a Cramér root"),
        },
    );
    (table, failure)
}
