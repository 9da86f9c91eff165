//! One function per subcommand, each returning a table.

use std::io::Write;
use std::path::Path;

use mmrisk::asymptotics::{
    cramer_constant, finite_time_ruin, infinite_horizon_ruin, rate_function, subexp_data, FiniteMethod,
    SegerdahlData,
};
use mmrisk::parisian::{parisian_solve, ParisianSolution};
use mmrisk::ruin::{deficit_kernel, gerber_shiu, pollaczek_khintchine, ruin_probability, PenaltyFunction};
use mmrisk::scale::{GridOptions, ScaleSet};
use mmrisk::simulate::{mc_functionals, mc_parisian, mc_ruin, simulate_path, Functional, McMode, StopRule};
use mmrisk::spectral::adjustment_coefficient;
use mmrisk::{drift_report, RegimeModel, RiskError};

use crate::output::{estimate_cells, Cell, Table, ESTIMATE_COLUMNS};
use crate::{input, Budget, CliError, Command, ParisianMethod, RuinMethod, SimFunctional};

type Outcome = Result<(Table, Option<CliError>), CliError>;

pub fn dispatch(command: &Command, model: &RegimeModel, stderr: &mut dyn Write) -> Outcome {
    let done = |t: Table| Ok((t, None));
    match command {
        Command::Ruin { x, method, step, .. } => done(ruin(model, &x.0, *method, *step)?),
        Command::FiniteRuin { x, t, method, budget, .. } => done(finite_ruin(model, &x.0, &t.0, method, *budget)?),
        Command::GerberShiu { x, q, penalty, .. } => done(gerber_shiu_table(model, &x.0, *q, penalty)?),
        Command::Deficit { x, state, step, extent, .. } => done(deficit(model, *x, *state, *step, *extent)?),
        Command::Parisian { x, zeta, method, budget, .. } => done(parisian(model, &x.0, *zeta, *method, *budget, stderr)?),
        Command::Asymptotics { v, x, budget, .. } => {
            done(asymptotics(model, v.as_ref().map(|g| &g.0[..]), x.as_ref().map(|g| &g.0[..]), *budget, stderr)?)
        }
        Command::Scale { q, step, extent, .. } => done(scale(model, *q, *step, *extent)?),
        Command::Simulate { .. } => done(simulate(command, model)?),
        Command::Validate { budget, .. } => {
            let (table, failure) = crate::validate::run(model, *budget);
            Ok((table, failure.map(CliError::Compute)))
        }
    }
}

fn levels(xs: &[f64], name: &str) -> Result<(), CliError> {
    match xs.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        Some(bad) => Err(input(format!("--{name} values must be finite and nonnegative, got {bad}"))),
        None => Ok(()),
    }
}

fn state_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn ruin(model: &RegimeModel, xs: &[f64], method: RuinMethod, step: Option<f64>) -> Result<Table, CliError> {
    levels(xs, "x")?;
    let n = model.n_states();
    if method == RuinMethod::Pk {
        if n != 1 {
            return Err(input("--method pk needs a single-state model"));
        }
        let x_max = xs.iter().cloned().fold(0.0, f64::max);
        let step = step.unwrap_or_else(|| (x_max / 4000.0).clamp(1e-3, 0.05));
        if !(step > 0.0) {
            return Err(input("--step must be positive"));
        }
        let curve = pollaczek_khintchine(model, x_max, step)?;
        let mut t = Table::new(["x", "ruin_lower", "ruin_upper"]);
        for &x in xs {
            let (lo, hi) = curve.bracket(x);
            t.push(vec![x.into(), (1.0 - hi).into(), (1.0 - lo).into()]);
        }
        return Ok(t);
    }
    let mut t = Table::new(std::iter::once("x".to_string()).chain(state_columns("phi", n)));
    for &x in xs {
        let values: Vec<f64> = match method {
            RuinMethod::Scale => ruin_probability(model, x)?.iter().cloned().collect(),
            _ => infinite_horizon_ruin(model, x)?.0,
        };
        t.push(std::iter::once(x.into()).chain(values.into_iter().map(Cell::from)).collect());
    }
    Ok(t)
}

fn finite_ruin(model: &RegimeModel, xs: &[f64], ts: &[f64], method: &str, budget: Budget) -> Result<Table, CliError> {
    levels(xs, "x")?;
    if ts.iter().any(|t| !(*t >= 0.0)) {
        return Err(input("--t values must be nonnegative"));
    }
    let method = FiniteMethod::parse(method)
        .ok_or_else(|| input(format!("unknown method `{method}`; expected auto, segerdahl, hoglund or mc")))?;
    let n = model.n_states();
    let mut t = Table::new(
        ["x", "t", "method"].map(String::from).into_iter().chain(state_columns("value", n)).chain(state_columns("se", n)),
    );
    for &x in xs {
        for &time in ts {
            let v = finite_time_ruin(model, x, time, method, budget.into())?;
            let mut row: Vec<Cell> = vec![x.into(), time.into(), v.method.clone().into()];
            row.extend(v.values.iter().map(|&y| Cell::from(y)));
            match &v.se {
                Some(se) => row.extend(se.iter().map(|&s| Cell::from(s))),
                None => row.extend((0..n).map(|_| Cell::Empty)),
            }
            t.push(row);
        }
    }
    Ok(t)
}

/// `1`, `const:c`, `indicator:lo:hi`, `exp:alpha` or `table:file.csv`.
pub fn parse_penalty(spec: &str) -> Result<PenaltyFunction, CliError> {
    let bad = || input(format!("cannot read penalty `{spec}`; use 1, const:c, indicator:lo:hi, exp:alpha or table:file.csv"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.splitn(2, ':').collect();
    let w = match parts[..] {
        [c] => PenaltyFunction::Constant(num(c)?),
        ["const", c] => PenaltyFunction::Constant(num(c)?),
        ["exp", a] => PenaltyFunction::ExpDeficit { alpha: num(a)? },
        ["indicator", range] => {
            let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
            PenaltyFunction::DeficitIndicator { lo: num(lo)?, hi: num(hi)? }
        }
        ["table", path] => read_penalty_table(Path::new(path))?,
        _ => return Err(bad()),
    };
    w.validate()?;
    Ok(w)
}

/// Header row `surplus,d_1,d_2,…` of deficit values, then one row per
/// surplus value.
fn read_penalty_table(path: &Path) -> Result<PenaltyFunction, CliError> {
    let fail = |msg: String| input(format!("penalty table {}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let deficit = headers
        .iter()
        .skip(1)
        .map(|h| h.trim().parse::<f64>().map_err(|_| fail(format!("header `{h}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    let (mut surplus, mut values) = (vec![], vec![]);
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let row = record
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|_| fail(format!("row {} has non-numeric entry `{v}`", k + 2))))
            .collect::<Result<Vec<_>, _>>()?;
        surplus.push(row[0]);
        values.push(row[1..].to_vec());
    }
    Ok(PenaltyFunction::Tabulated { surplus, deficit, values })
}

fn gerber_shiu_table(model: &RegimeModel, xs: &[f64], q: f64, penalty: &str) -> Result<Table, CliError> {
    levels(xs, "x")?;
    if !(q >= 0.0 && q.is_finite()) {
        return Err(input(format!("--q must be finite and nonnegative, got {q}")));
    }
    let w = parse_penalty(penalty)?;
    let n = model.n_states();
    let mut t = Table::new(std::iter::once("x".to_string()).chain(state_columns("phi", n)));
    for &x in xs {
        let v = gerber_shiu(model, q, x, &w)?;
        t.push(std::iter::once(x.into()).chain(v.iter().map(|&y| Cell::from(y))).collect());
    }
    Ok(t)
}

fn state_index(model: &RegimeModel, state: usize) -> Result<usize, CliError> {
    if state == 0 || state > model.n_states() {
        return Err(input(format!("--state must be between 1 and {}, got {state}", model.n_states())));
    }
    Ok(state - 1)
}

fn deficit(model: &RegimeModel, x: f64, state: usize, step: f64, extent: Option<f64>) -> Result<Table, CliError> {
    levels(&[x], "x")?;
    let i = state_index(model, state)?;
    let extent = extent.unwrap_or_else(|| 10.0 * model.largest_mean_claim().max(0.1));
    if !(step > 0.0) || !(extent > 0.0) {
        return Err(input("--step and --extent must be positive"));
    }
    let k = deficit_kernel(model, x, i, step, extent)?;
    let n = model.n_states();
    let mut t = Table::new(std::iter::once("z".to_string()).chain((1..=n).map(|j| format!("density_{state}{j}"))));
    for (m, &z) in k.grid.iter().enumerate() {
        t.push(std::iter::once(z.into()).chain(k.densities.iter().map(|d| Cell::from(d[m]))).collect());
    }
    Ok(t)
}

fn parisian(
    model: &RegimeModel,
    xs: &[f64],
    zeta: f64,
    method: ParisianMethod,
    budget: Budget,
    stderr: &mut dyn Write,
) -> Result<Table, CliError> {
    levels(xs, "x")?;
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(input(format!("--zeta must be finite and nonnegative, got {zeta}")));
    }
    if zeta == 0.0 {
        let _ = writeln!(stderr, "note: ζ = 0 is evaluated as classical ruin");
    }
    let n = model.n_states();
    let mut t = Table::new(
        ["zeta", "x"]
            .map(String::from)
            .into_iter()
            .chain(state_columns("ruin", n))
            .chain(state_columns("se", n))
            .chain(["method", "spectral_radius", "quadrature_error"].map(String::from)),
    );
    let solution: Option<ParisianSolution> = match method {
        ParisianMethod::Mc => None,
        ParisianMethod::Analytic => Some(parisian_solve(model, zeta)?),
        ParisianMethod::Auto => match parisian_solve(model, zeta) {
            Ok(s) => Some(s),
            Err(e @ (RiskError::NetProfit(_) | RiskError::InvalidArgument(_))) => return Err(e.into()),
            Err(e) => {
                let _ = writeln!(stderr, "note: fixed-point system unavailable ({e}); simulating");
                None
            }
        },
    };
    for &x in xs {
        let mut row: Vec<Cell> = vec![zeta.into(), x.into()];
        match &solution {
            Some(s) => {
                let r = if zeta == 0.0 { ruin_probability(model, x)? } else { s.ruin(x)? };
                row.extend(r.iter().map(|&v| Cell::from(v)));
                row.extend((0..n).map(|_| Cell::Empty));
                row.extend([s.method.clone().into(), s.spectral_radius.into(), s.quadrature_error.into()]);
            }
            None => {
                let est = mc_parisian(model, x, zeta, budget.n, budget.seed)?;
                row.extend(est.iter().map(|e| Cell::from(e.value)));
                row.extend(est.iter().map(|e| Cell::from(e.se)));
                row.extend([est[0].method.clone().into(), Cell::Empty, Cell::Empty]);
            }
        }
        t.push(row);
    }
    Ok(t)
}

fn asymptotics(
    model: &RegimeModel,
    vs: Option<&[f64]>,
    xs: Option<&[f64]>,
    budget: Budget,
    stderr: &mut dyn Write,
) -> Result<Table, CliError> {
    if let Some(xs) = xs {
        levels(xs, "x")?;
    }
    let mut t = Table::new(["quantity", "state", "arg", "value", "se", "method"]);
    let mut row = |q: &str, state: Option<usize>, arg: Option<f64>, value: f64, se: Option<f64>, method: &str| {
        t.push(vec![q.into(), state.map_or(Cell::Empty, Cell::from), arg.into(), value.into(), se.into(), method.into()]);
    };
    let drift = drift_report(model)?;
    row("stationary_drift", None, None, drift.stationary_drift, None, "exact");
    if model.is_light_tailed() {
        match adjustment_coefficient(model) {
            Ok(gamma) => {
                row("gamma", None, None, gamma, None, "spectral");
                let cramer = cramer_constant(model, budget.into())?;
                for (i, c) in cramer.constants.iter().enumerate() {
                    row("cramer_constant", Some(i + 1), None, *c, None, &cramer.method);
                }
                for (i, e) in cramer.tilted.iter().enumerate() {
                    row("cramer_constant_mc", Some(i + 1), Some(cramer.mc_level), e.value, Some(e.se), &e.method);
                }
                let seg = SegerdahlData::new(model)?;
                row("m", None, None, seg.m, None, "spectral");
                row("c2", None, None, seg.c2, None, "spectral");
                let default_vs = [0.5, 1.0, 1.5, 2.0].map(|f| f * seg.m);
                for &v in vs.unwrap_or(&default_vs) {
                    match rate_function(model, v) {
                        Ok(p) => {
                            row("rate_function", None, Some(v), p.rate, None, "bisection");
                            row("big_gamma", None, Some(v), p.big_gamma, None, "bisection");
                        }
                        Err(e) if vs.is_none() => {
                            let _ = writeln!(stderr, "note: rate function skipped at v = {v}: {e}");
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            Err(e) => {
                let _ = writeln!(stderr, "note: no Cramér constants: {e}");
            }
        }
    }
    if !model.is_light_tailed() {
        let data = subexp_data(model)?;
        for (i, c) in data.c.iter().enumerate() {
            row("subexp_c", Some(i + 1), None, *c, None, "ratio-ladder");
        }
        row("subexp_C_S", None, None, data.c_s, None, "stationary");
        row("a_bar", None, None, data.a_bar, None, "embedded-walk");
        for &x in xs.unwrap_or(&[]) {
            row("subexp_asymptote", None, Some(x), data.asymptote(x)?, None, data.reference.family());
        }
    }
    Ok(t)
}

fn scale(model: &RegimeModel, q: f64, step: f64, extent: Option<f64>) -> Result<Table, CliError> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(input(format!("--q must be finite and nonnegative, got {q}")));
    }
    if !(step > 0.0) || extent.is_some_and(|e| !(e > 0.0)) {
        return Err(input("--step and --extent must be positive"));
    }
    let set = ScaleSet::build(model, q, GridOptions { step, extent, method: None })?;
    let n = model.n_states();
    let mut columns = vec!["x".to_string()];
    for name in ["W", "Z"] {
        for i in 1..=n {
            for j in 1..=n {
                columns.push(format!("{name}_{i}{j}"));
            }
        }
    }
    let mut t = Table::new(columns);
    for (k, &x) in set.grid.iter().enumerate() {
        let mut row = vec![Cell::from(x)];
        for m in [&set.w[k], &set.z[k]] {
            for i in 0..n {
                for j in 0..n {
                    row.push(m[(i, j)].into());
                }
            }
        }
        t.push(row);
    }
    Ok(t)
}

fn simulate(command: &Command, model: &RegimeModel) -> Result<Table, CliError> {
    let Command::Simulate {
        functional, x, t: horizon, q, zeta, z, a, alpha, state, method, penalty, bins, column, histogram, budget, ..
    } = command
    else {
        unreachable!("simulate called with another command")
    };
    levels(&[*x], "x")?;
    if let Some(h) = horizon {
        if !(*h >= 0.0) {
            return Err(input("--t must be nonnegative"));
        }
    }
    let states: Vec<usize> = match state {
        Some(s) => vec![state_index(model, *s)?],
        None => (0..model.n_states()).collect(),
    };
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| input(format!("--functional {} needs --{flag}", functional_name(*functional))));
    let mut table = Table::new(["state", "target"].into_iter().chain(ESTIMATE_COLUMNS));
    let mut push_all = |state: usize, targets: Vec<String>, estimates: &[mmrisk::simulate::Estimate]| {
        for (label, e) in targets.into_iter().zip(estimates) {
            let mut row = vec![Cell::from(state + 1), label.into()];
            row.extend(estimate_cells(e));
            table.push(row);
        }
    };
    let all = |est: &[mmrisk::simulate::Estimate]| -> Vec<mmrisk::simulate::Estimate> {
        states.iter().map(|&i| est[i].clone()).collect()
    };
    match functional {
        SimFunctional::Ruin => {
            let mode = match method.as_str() {
                "crude" => McMode::Crude,
                "tilted" => McMode::Tilted,
                other => return Err(input(format!("unknown method `{other}`; expected crude or tilted"))),
            };
            let est = all(&mc_ruin(model, *x, *horizon, budget.n, budget.seed, mode)?);
            for (k, &i) in states.iter().enumerate() {
                push_all(i, vec![String::new()], &est[k..=k]);
            }
            return Ok(table);
        }
        SimFunctional::Parisian => {
            let zeta = need(*zeta, "zeta")?;
            let est = all(&mc_parisian(model, *x, zeta, budget.n, budget.seed)?);
            for (k, &i) in states.iter().enumerate() {
                push_all(i, vec![String::new()], &est[k..=k]);
            }
            return Ok(table);
        }
        SimFunctional::Path => {
            if horizon.is_none() && a.is_none() {
                return Err(input("--functional path needs --t or --a to end the path"));
            }
            let i0 = states[0];
            let rule = StopRule { horizon: horizon.unwrap_or(f64::INFINITY), stop_at_ruin: true, upper: *a };
            let events = simulate_path(model, *x, i0, rule, budget.seed)?;
            let mut t = Table::new(["time", "kind", "pre_surplus", "post_surplus", "pre_phase", "post_phase"]);
            for e in events {
                let kind = serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                t.push(vec![
                    e.time.into(),
                    kind.into(),
                    e.pre_surplus.into(),
                    e.post_surplus.into(),
                    (e.pre_phase + 1).into(),
                    (e.post_phase + 1).into(),
                ]);
            }
            return Ok(t);
        }
        _ => {}
    }
    let mean = model.largest_mean_claim().max(0.1);
    let f = match functional {
        SimFunctional::DeficitLaw => Functional::DeficitLaw {
            edges: bins.as_ref().map(|b| b.0.clone()).unwrap_or_else(|| (0..=40).map(|k| k as f64 * mean / 8.0).collect()),
        },
        SimFunctional::Discounted => Functional::Discounted { q: *q },
        SimFunctional::GerberShiu => Functional::GerberShiu { w: parse_penalty(penalty)?, q: *q },
        SimFunctional::UpcrossTime => {
            let horizon = need(*horizon, "t")?;
            Functional::UpcrossTime {
                z: need(*z, "z")?,
                horizon,
                edges: bins.as_ref().map(|b| b.0.clone()).unwrap_or_else(|| (0..=20).map(|k| k as f64 * horizon / 20.0).collect()),
            }
        }
        SimFunctional::FirstPassage => Functional::FirstPassage { z: need(*z, "z")?, q: *q },
        SimFunctional::Occupation => Functional::Occupation { q: *q },
        SimFunctional::ExitUpward => Functional::ExitUpward { a: need(*a, "a")?, q: *q },
        SimFunctional::ExitDownward => Functional::ExitDownward { a: need(*a, "a")?, q: *q, alpha: *alpha },
        SimFunctional::ScaleMartingale => Functional::ScaleMartingale {
            q: *q,
            a: need(*a, "a")?,
            column: state_index(model, *column)?,
            times: bins.as_ref().map(|b| b.0.clone()).ok_or_else(|| input("--functional scale-martingale needs --bins with the times"))?,
        },
        _ => unreachable!("handled above"),
    };
    let mut hist = Table::new(["state", "bin_lo", "bin_hi", "mass", "se"]);
    for &i in &states {
        let r = mc_functionals(model, *x, i, budget.n, budget.seed, &f)?;
        let labels: Vec<String> = match &f {
            Functional::ScaleMartingale { times, .. } => times.iter().map(|t| format!("t={t}")).collect(),
            Functional::DeficitLaw { .. } if r.estimates.len() == 1 => vec!["ruin".into()],
            _ => (1..=r.estimates.len()).map(|j| j.to_string()).collect(),
        };
        push_all(i, labels, &r.estimates);
        if let Some(h) = &r.histogram {
            for k in 0..h.mass.len() {
                hist.push(vec![(i + 1).into(), h.edges[k].into(), h.edges[k + 1].into(), h.mass[k].into(), h.se[k].into()]);
            }
        }
    }
    if let Some(path) = histogram {
        let mut buf = vec![];
        hist.write(crate::output::Format::Csv, &mut buf)
            .map_err(|e| CliError::Compute(format!("cannot format histogram: {e}")))?;
        std::fs::write(path, buf).map_err(|e| input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(table)
}

fn functional_name(f: SimFunctional) -> String {
    use clap::ValueEnum;
    f.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}
