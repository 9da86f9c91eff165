//! Simulated functionals against their analytic counterparts.

use mmrisk::numerics::quad::adaptive_to_infinity;
use mmrisk::ruin::{gerber_shiu, PenaltyFunction};
use mmrisk::scale::ScaleModes;
use mmrisk::simulate::{mc_functionals, mc_likelihood_ratio_mean, mc_mean_surplus, simulate_path, EventKind, Functional, StopRule};
use mmrisk::{ClaimLaw, ModelSpec, RegimeModel};

const N: usize = 20_000;

fn model_a() -> RegimeModel {
    RegimeModel::single_state(1.0, 1.0, ClaimLaw::exponential(2.0)).unwrap()
}

fn model_b() -> RegimeModel {
    RegimeModel::new(ModelSpec {
        q_matrix: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
        premiums: vec![2.0, 1.0],
        arrival_rates: vec![1.0, 1.0],
        state_claims: vec![Some(ClaimLaw::exponential(1.0)), Some(ClaimLaw::exponential(1.0))],
        transition_claims: vec![],
    })
    .unwrap()
}

fn within(label: &str, est: &mmrisk::simulate::Estimate, exact: f64, k: f64) {
    let z = est.z_score(exact);
    println!("{label}: mc {} ± {}, exact {exact}, z = {z:.2}", est.value, est.se);
    assert!(z.abs() < k, "{label}: {} ± {} vs {exact}", est.value, est.se);
}

#[test]
fn first_passage_rows_match_exp_g() {
    let b = model_b();
    let (q, z) = (0.3, 1.5);
    let exact = ScaleModes::new(&b, q).unwrap().exp_g(z).unwrap();
    for i in 0..2 {
        let r = mc_functionals(&b, 0.5, i, N, 21, &Functional::FirstPassage { z, q }).unwrap();
        for j in 0..2 {
            within(&format!("G row {i} col {j}"), &r.estimates[j], exact[(i, j)], 3.5);
        }
    }
}

#[test]
fn occupation_matches_integrated_potential_density() {
    for (name, m) in [("A", model_a()), ("B", model_b())] {
        let q = 0.5;
        let modes = ScaleModes::new(&m, q).unwrap();
        let x = 1.0;
        let n = m.n_states();
        let exact: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| adaptive_to_infinity(|z| modes.potential_density(x, z).unwrap()[(i, j)], 0.0, 1e-10, 1e-9).unwrap())
                    .collect()
            })
            .collect();
        for i in 0..n {
            let r = mc_functionals(&m, x, i, N, 22, &Functional::Occupation { q }).unwrap();
            for j in 0..n {
                within(&format!("{name} occupation {i}->{j}"), &r.estimates[j], exact[i][j], 3.5);
            }
        }
    }
}

#[test]
fn occupation_of_model_a_has_closed_form() {
    // With q = 0.5 the killed resolvent integrates to (1 − E e^{−qτ}) / q.
    let a = model_a();
    let q = 0.5;
    let modes = ScaleModes::new(&a, q).unwrap();
    let x = 2.0;
    let total = adaptive_to_infinity(|z| modes.potential_density(x, z).unwrap()[(0, 0)], 0.0, 1e-12, 1e-10).unwrap();
    let lt = mmrisk::ruin::discounted_ruin(&a, q, x).unwrap()[(0, 0)];
    assert!((total - (1.0 - lt) / q).abs() < 1e-7, "{total} vs {}", (1.0 - lt) / q);
}

#[test]
fn exit_downward_with_exponential_deficit_weight() {
    let b = model_b();
    let (q, a, alpha, x) = (0.2, 3.0, 0.5, 1.0);
    let exact = ScaleModes::new(&b, q).unwrap().exit_downward(x, a, alpha).unwrap();
    for i in 0..2 {
        let r = mc_functionals(&b, x, i, N, 23, &Functional::ExitDownward { a, q, alpha }).unwrap();
        for j in 0..2 {
            within(&format!("exit-down {i}->{j}"), &r.estimates[j], exact[(i, j)], 3.5);
        }
    }
}

#[test]
fn gerber_shiu_with_deficit_penalty() {
    let b = model_b();
    let w = PenaltyFunction::ExpDeficit { alpha: 1.0 };
    let (q, x) = (0.1, 1.0);
    let exact = gerber_shiu(&b, q, x, &w).unwrap();
    for i in 0..2 {
        let r = mc_functionals(&b, x, i, N, 24, &Functional::GerberShiu { w: w.clone(), q }).unwrap();
        within(&format!("gerber-shiu state {i}"), &r.estimates[0], exact[i], 3.5);
    }
}

#[test]
fn likelihood_ratio_has_unit_mean() {
    for (name, m, theta) in [("A", model_a(), 1.0), ("B", model_b(), 0.4)] {
        for i in 0..m.n_states() {
            let e = mc_likelihood_ratio_mean(&m, theta, 0.0, i, 3.0, N, 25).unwrap();
            within(&format!("{name} LR mean state {i}"), &e, 1.0, 4.0);
        }
    }
}

#[test]
fn mean_surplus_follows_the_generator() {
    // Q has eigenvalues 0 and −2, so E_1 X_t = x + t/2 + (1 − e^{−2t})/4.
    let b = model_b();
    let (x, t) = (1.0, 3.0);
    let e1 = mc_mean_surplus(&b, x, 0, t, N, 26).unwrap();
    let e2 = mc_mean_surplus(&b, x, 1, t, N, 26).unwrap();
    let shift = 0.25 * (1.0 - (-2.0 * t).exp());
    within("E_1 X_t", &e1, x + 0.5 * t + shift, 3.5);
    within("E_2 X_t", &e2, x + 0.5 * t - shift, 3.5);
    let a = mc_mean_surplus(&model_a(), x, 0, t, N, 26).unwrap();
    within("model A E X_t", &a, x + 0.5 * t, 3.5);
}

#[test]
fn event_frequencies_match_rates() {
    let b = model_b();
    let horizon = 4000.0;
    let events = simulate_path(&b, 0.0, 0, StopRule { horizon, stop_at_ruin: false, upper: None }, 27).unwrap();
    let count = |k: EventKind| events.iter().filter(|e| e.kind == k).count() as f64;
    // Unit claim rate in both phases; unit switching rate both ways.
    let claims = count(EventKind::Claim);
    let switches = count(EventKind::RegimeSwitch);
    assert!((claims - horizon).abs() < 4.0 * horizon.sqrt(), "{claims}");
    assert!((switches - horizon).abs() < 4.0 * horizon.sqrt(), "{switches}");
    // Time share in phase 1 is 1/2.
    let mut phase_time = [0.0; 2];
    let mut last = 0.0;
    for e in &events {
        phase_time[e.pre_phase] += e.time - last;
        last = e.time;
    }
    let share = phase_time[0] / last;
    assert!((share - 0.5).abs() < 0.05, "{share}");
}

/// Finite-horizon ruin for unit premium, Poisson(λ) arrivals and Exp(β)
/// claims, from the classical single-integral representation.
fn exponential_finite_ruin(lambda: f64, beta: f64, u: f64, t: f64) -> f64 {
    let r = lambda / beta;
    let s = r.sqrt();
    let f = |th: f64| {
        let arg = u * beta * s * th.sin();
        r * (2.0 * t * (lambda * beta).sqrt() * th.cos() - (lambda + beta) * t + u * beta * (s * th.cos() - 1.0)).exp()
            * (arg.cos() - (arg + 2.0 * th).cos())
            / (1.0 + r - 2.0 * s * th.cos())
    };
    let integral = mmrisk::numerics::quad::adaptive(f, 0.0, std::f64::consts::PI, 0.0, 1e-11).unwrap();
    r * (-(beta - lambda) * u).exp() - integral / std::f64::consts::PI
}

#[test]
fn tilted_finite_horizon_ruin_matches_exact_formula() {
    use mmrisk::simulate::{mc_ruin, McMode};
    let a = model_a();
    for (x, t) in [(1.0, 1.0), (5.0, 3.0), (30.0, 19.0), (30.0, 41.0)] {
        let exact = exponential_finite_ruin(1.0, 2.0, x, t);
        let est = mc_ruin(&a, x, Some(t), N, 29, McMode::Tilted).unwrap();
        within(&format!("finite ruin x = {x}, t = {t}"), &est[0], exact, 3.5);
    }
    // Long horizons recover the infinite-horizon value.
    assert!((exponential_finite_ruin(1.0, 2.0, 1.0, 1e4) - 0.5 * (-1.0f64).exp()).abs() < 1e-10);
}
