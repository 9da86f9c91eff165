//! Model files.
//!
//! ```toml
//! states = 2
//! q_matrix = [[-1.0, 1.0], [1.0, -1.0]]
//! premiums = [2.0, 1.0]
//! arrival_rates = [1.0, 1.0]
//!
//! [[state_claims]]
//! family = "exponential"
//! params = { rate = 1.0 }
//!
//! [[state_claims]]
//! family = "exponential"
//! params = { rate = 1.0 }
//!
//! [[transition_claims]]   # optional, states are 1-based
//! from = 1
//! to = 2
//! family = "exponential"
//! params = { rate = 3.0 }
//! ```
//!
//! `state_claims` may also be written inline as an array of tables.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use mmrisk::claims::FAMILIES;
use mmrisk::model::Validated;
use mmrisk::{validate_model, ClaimLaw, ModelSpec};
use toml_edit::{ImDocument, Item, TableLike, Value};

const TOP_KEYS: &[&str] = &["states", "q_matrix", "premiums", "arrival_rates", "state_claims", "transition_claims"];

/// Every problem found in a model file, each with its line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFileError {
    pub origin: String,
    pub problems: Vec<(Option<usize>, String)>,
}

impl fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} has {} problem(s):", self.origin, self.problems.len())?;
        for (line, msg) in &self.problems {
            match line {
                Some(l) => write!(f, "\n  line {l}: {msg}")?,
                None => write!(f, "\n  {msg}")?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ModelFileError {}

pub fn parse_model_file(path: &Path) -> Result<Validated, ModelFileError> {
    let origin = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ModelFileError {
        origin: origin.clone(),
        problems: vec![(None, format!("cannot read file: {e}"))],
    })?;
    parse_model_str(&src, &origin)
}

/// Where each piece of the spec came from, for attaching lines to
/// validation messages.
#[derive(Default)]
struct Lines {
    top: Option<usize>,
    q_rows: Vec<Option<usize>>,
    premiums: Vec<Option<usize>>,
    arrival_rates: Vec<Option<usize>>,
    state_claims: Vec<Option<usize>>,
    transitions: Vec<((usize, usize), Option<usize>)>,
}

struct Reader<'a> {
    src: &'a str,
    problems: Vec<(Option<usize>, String)>,
}

impl<'a> Reader<'a> {
    fn line(&self, span: Option<Range<usize>>) -> Option<usize> {
        span.map(|s| self.src[..s.start.min(self.src.len())].matches('\n').count() + 1)
    }

    fn fail(&mut self, line: Option<usize>, msg: impl Into<String>) {
        self.problems.push((line, msg.into()));
    }

    fn number(&mut self, v: &Value, what: &str) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f.value()),
            Value::Integer(i) => Some(*i.value() as f64),
            _ => {
                let line = self.line(v.span());
                self.fail(line, format!("{what} must be a number"));
                None
            }
        }
    }

    fn numbers(&mut self, v: &Value, what: &str) -> Option<(Vec<f64>, Vec<Option<usize>>)> {
        let Some(arr) = v.as_array() else {
            let line = self.line(v.span());
            self.fail(line, format!("{what} must be an array of numbers"));
            return None;
        };
        let mut out = Vec::with_capacity(arr.len());
        let mut lines = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (k, e) in arr.iter().enumerate() {
            lines.push(self.line(e.span()));
            match self.number(e, &format!("{what}[{}]", k + 1)) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some((out, lines))
    }

    fn matrix(&mut self, v: &Value, what: &str) -> Option<(Vec<Vec<f64>>, Vec<Option<usize>>)> {
        let Some(arr) = v.as_array() else {
            let line = self.line(v.span());
            self.fail(line, format!("{what} must be an array of arrays"));
            return None;
        };
        let mut rows = vec![];
        let mut lines = vec![];
        let mut ok = true;
        for (k, row) in arr.iter().enumerate() {
            lines.push(self.line(row.span()));
            match self.numbers(row, &format!("{what} row {}", k + 1)) {
                Some((r, _)) => rows.push(r),
                None => ok = false,
            }
        }
        ok.then_some((rows, lines))
    }

    fn value<'d>(&mut self, item: &'d Item, what: &str, line: Option<usize>) -> Option<&'d Value> {
        match item.as_value() {
            Some(v) => Some(v),
            None => {
                self.fail(line, format!("{what} must be a value, not a table"));
                None
            }
        }
    }

    /// Elements of an array of tables, written either as `[[key]]` blocks or
    /// inline.
    fn tables<'d>(&mut self, item: &'d Item, what: &str, line: Option<usize>) -> Vec<(&'d dyn TableLike, Option<usize>)> {
        if let Some(aot) = item.as_array_of_tables() {
            return aot.iter().map(|t| (t as &dyn TableLike, self.line(t.span()))).collect();
        }
        if let Some(arr) = item.as_array() {
            let mut out = vec![];
            for (k, v) in arr.iter().enumerate() {
                match v.as_inline_table() {
                    Some(t) => out.push((t as &dyn TableLike, self.line(v.span()))),
                    None => {
                        let l = self.line(v.span());
                        self.fail(l, format!("{what}[{}] must be a table with `family` and `params`", k + 1));
                    }
                }
            }
            return out;
        }
        self.fail(line, format!("{what} must be an array of tables"));
        vec![]
    }

    fn claim_law(&mut self, table: &dyn TableLike, what: &str, line: Option<usize>, extra: &[&str]) -> Option<ClaimLaw> {
        for (key, item) in table.iter() {
            if key != "family" && key != "params" && !extra.contains(&key) {
                let l = self.line(item.span()).or(line);
                self.fail(l, format!("{what}: unknown key `{key}`"));
            }
        }
        let Some(family_item) = table.get("family") else {
            self.fail(line, format!("{what}: missing `family`"));
            return None;
        };
        let fline = self.line(family_item.span()).or(line);
        let Some(family) = family_item.as_str() else {
            self.fail(fline, format!("{what}: `family` must be a string"));
            return None;
        };
        let (expected, ints): (&[&str], &[&str]) = match family {
            "degenerate" => (&[], &[]),
            "exponential" => (&["rate"], &[]),
            "erlang" => (&["shape", "rate"], &["shape"]),
            "hyperexponential" => (&["probs", "rates"], &[]),
            "phase-type" => (&["alpha", "generator"], &[]),
            "pareto" | "weibull" => (&["shape", "scale"], &[]),
            "lognormal" => (&["mu", "sigma"], &[]),
            other => {
                self.fail(fline, format!("{what}: unknown claim family \"{other}\"; supported families: {}", FAMILIES.join(", ")));
                return None;
            }
        };
        let params = match table.get("params") {
            None if expected.is_empty() => None,
            None => {
                self.fail(line, format!("{what}: family {family} needs params {{{}}}", expected.join(", ")));
                return None;
            }
            Some(p) => match p.as_table_like() {
                Some(t) => Some((t, self.line(p.span()).or(line))),
                None => {
                    let l = self.line(p.span()).or(line);
                    self.fail(l, format!("{what}: `params` must be a table"));
                    return None;
                }
            },
        };
        let mut ok = true;
        let mut scalars = std::collections::HashMap::new();
        let mut vectors = std::collections::HashMap::new();
        let mut matrices = std::collections::HashMap::new();
        if let Some((params, pline)) = params {
            for (key, item) in params.iter() {
                if !expected.contains(&key) {
                    let l = self.line(item.span()).or(pline);
                    self.fail(l, format!("{what}: unknown parameter `{key}` for family {family} (expected: {})", expected.join(", ")));
                    ok = false;
                }
            }
            for &key in expected {
                let Some(item) = params.get(key) else {
                    self.fail(pline, format!("{what}: family {family} is missing parameter `{key}`"));
                    ok = false;
                    continue;
                };
                let l = self.line(item.span()).or(pline);
                let Some(v) = self.value(item, &format!("{what}.{key}"), l) else {
                    ok = false;
                    continue;
                };
                let label = format!("{what}.{key}");
                let got = match key {
                    "probs" | "rates" | "alpha" => self.numbers(v, &label).map(|(x, _)| vectors.insert(key, x)).is_some(),
                    "generator" => self.matrix(v, &label).map(|(m, _)| matrices.insert(key, m)).is_some(),
                    _ if ints.contains(&key) => match v.as_integer() {
                        Some(i) if i >= 0 && i <= u32::MAX as i64 => scalars.insert(key, i as f64).is_none(),
                        _ => {
                            self.fail(l, format!("{label} must be a nonnegative integer"));
                            false
                        }
                    },
                    _ => self.number(v, &label).map(|x| scalars.insert(key, x)).is_some(),
                };
                ok &= got;
            }
        }
        if !ok {
            return None;
        }
        let s = |k: &str| scalars[k];
        let mut vec_of = |k: &str| vectors.remove(k).unwrap_or_default();
        Some(match family {
            "degenerate" => ClaimLaw::Degenerate,
            "exponential" => ClaimLaw::Exponential { rate: s("rate") },
            "erlang" => ClaimLaw::Erlang { shape: s("shape") as u32, rate: s("rate") },
            "hyperexponential" => ClaimLaw::HyperExponential { probs: vec_of("probs"), rates: vec_of("rates") },
            "phase-type" => ClaimLaw::PhaseType {
                alpha: vec_of("alpha"),
                generator: matrices.remove("generator").unwrap_or_default(),
            },
            "pareto" => ClaimLaw::Pareto { shape: s("shape"), scale: s("scale") },
            "weibull" => ClaimLaw::Weibull { shape: s("shape"), scale: s("scale") },
            _ => ClaimLaw::LogNormal { mu: s("mu"), sigma: s("sigma") },
        })
    }
}

/// Parse and validate a model description; `origin` names it in messages.
pub fn parse_model_str(src: &str, origin: &str) -> Result<Validated, ModelFileError> {
    let fail = |problems| ModelFileError { origin: origin.to_string(), problems };
    let doc = match ImDocument::parse(src.to_string()) {
        Ok(d) => d,
        Err(e) => {
            let r = Reader { src, problems: vec![] };
            let line = r.line(e.span());
            return Err(fail(vec![(line, format!("syntax error: {}", e.message()))]));
        }
    };
    let root = doc.as_table();
    let mut r = Reader { src, problems: vec![] };
    let mut lines = Lines::default();
    for (key, item) in root.iter() {
        if !TOP_KEYS.contains(&key) {
            let l = r.line(item.span());
            r.fail(l, format!("unknown key `{key}` (expected one of: {})", TOP_KEYS.join(", ")));
        }
    }
    let get = |r: &mut Reader, key: &str, required: bool| -> Option<(Item, Option<usize>)> {
        match root.get(key) {
            Some(item) => {
                let l = r.line(item.span()).or_else(|| r.line(root.key(key).and_then(|k| k.span())));
                Some((item.clone(), l))
            }
            None => {
                if required {
                    r.fail(None, format!("missing required key `{key}`"));
                }
                None
            }
        }
    };

    let states = get(&mut r, "states", true).and_then(|(item, l)| {
        lines.top = l;
        match item.as_integer() {
            Some(n) if n >= 1 => Some(n as usize),
            _ => {
                r.fail(l, "states must be a positive integer");
                None
            }
        }
    });
    let q_matrix = get(&mut r, "q_matrix", true).and_then(|(item, l)| {
        let v = r.value(&item, "q_matrix", l)?.clone();
        let (m, rows) = r.matrix(&v, "q_matrix")?;
        lines.q_rows = rows;
        Some(m)
    });
    let vector = |r: &mut Reader, key: &str, slot: &mut Vec<Option<usize>>| {
        get(r, key, true).and_then(|(item, l)| {
            let v = r.value(&item, key, l)?.clone();
            let (x, ls) = r.numbers(&v, key)?;
            *slot = ls;
            Some(x)
        })
    };
    let premiums = vector(&mut r, "premiums", &mut lines.premiums);
    let arrival_rates = vector(&mut r, "arrival_rates", &mut lines.arrival_rates);

    let mut state_claims = None;
    if let Some(item) = root.get("state_claims") {
        let l = r.line(item.span());
        let tables = r.tables(item, "state_claims", l);
        let mut laws = vec![];
        let mut ok = true;
        for (k, (t, tl)) in tables.into_iter().enumerate() {
            lines.state_claims.push(tl);
            match r.claim_law(t, &format!("state_claims[{}]", k + 1), tl, &[]) {
                Some(law) => laws.push(Some(law)),
                None => ok = false,
            }
        }
        if ok {
            state_claims = Some(laws);
        }
    } else {
        r.fail(None, "missing required key `state_claims`");
    }

    let mut transitions = vec![];
    if let Some(item) = root.get("transition_claims") {
        let l = r.line(item.span());
        for (k, (t, tl)) in r.tables(item, "transition_claims", l).into_iter().enumerate() {
            let what = format!("transition_claims[{}]", k + 1);
            let index = |r: &mut Reader, key: &str| match t.get(key).and_then(|i| i.as_integer()) {
                Some(v) if v >= 1 => Some(v as usize),
                _ => {
                    r.fail(tl, format!("{what}: `{key}` must be a 1-based state index"));
                    None
                }
            };
            let (from, to) = (index(&mut r, "from"), index(&mut r, "to"));
            let law = r.claim_law(t, &what, tl, &["from", "to"]);
            if let (Some(from), Some(to), Some(law)) = (from, to, law) {
                lines.transitions.push(((from, to), tl));
                transitions.push((from, to, law, tl));
            }
        }
    }

    if !r.problems.is_empty() {
        return Err(fail(r.problems));
    }
    let (Some(n), Some(q_matrix), Some(premiums), Some(arrival_rates), Some(state_claims)) =
        (states, q_matrix, premiums, arrival_rates, state_claims)
    else {
        return Err(fail(r.problems));
    };
    if q_matrix.len() != n {
        r.fail(lines.q_rows.first().cloned().flatten(), format!("states = {n} but q_matrix has {} rows", q_matrix.len()));
    }
    let mut table = vec![];
    if !transitions.is_empty() {
        table = vec![vec![None; n]; n];
        for (from, to, law, tl) in transitions {
            if from > n || to > n {
                r.fail(tl, format!("transition ({from},{to}) refers to a state beyond {n}"));
            } else if table[from - 1][to - 1].is_some() {
                r.fail(tl, format!("transition ({from},{to}) is given twice"));
            } else {
                table[from - 1][to - 1] = Some(law);
            }
        }
    }
    if !r.problems.is_empty() {
        return Err(fail(r.problems));
    }
    let spec = ModelSpec { q_matrix, premiums, arrival_rates, state_claims, transition_claims: table };
    validate_model(spec).map_err(|messages| {
        let problems = messages.into_iter().map(|m| (locate(&m, &lines), m)).collect();
        fail(problems)
    })
}

/// First integer after `prefix` in `msg`, e.g. `row 2` → 2.
fn index_after(msg: &str, prefix: &str) -> Option<usize> {
    let rest = &msg[msg.find(prefix)? + prefix.len()..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn pick(lines: &[Option<usize>], k: Option<usize>) -> Option<usize> {
    k.and_then(|k| lines.get(k.checked_sub(1)?).cloned().flatten())
}

fn locate(msg: &str, lines: &Lines) -> Option<usize> {
    if msg.starts_with("row ") {
        return pick(&lines.q_rows, index_after(msg, "row "));
    }
    if msg.starts_with("q[") {
        return pick(&lines.q_rows, index_after(msg, "q["));
    }
    if msg.starts_with("premium of state ") {
        return pick(&lines.premiums, index_after(msg, "state "));
    }
    if msg.starts_with("arrival rate of state ") {
        return pick(&lines.arrival_rates, index_after(msg, "state "));
    }
    if msg.starts_with("state ") {
        return pick(&lines.state_claims, index_after(msg, "state "));
    }
    if msg.starts_with("transition") {
        let from = index_after(msg, "(")?;
        let to = index_after(msg, ",")?;
        return lines.transitions.iter().find(|(k, _)| *k == (from, to)).and_then(|(_, l)| *l);
    }
    lines.top
}
