//! Batch front end: reads a model file, runs one command and writes a table.

pub mod commands;
pub mod config;
pub mod output;
mod validate;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmrisk::RiskError;

use crate::output::Format;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MMRISK_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "mmrisk", version, about = "Ruin quantities for Markov-modulated risk processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Io {
    /// Model file (TOML).
    #[arg(long)]
    pub model: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Budget {
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl From<Budget> for mmrisk::asymptotics::McBudget {
    fn from(b: Budget) -> Self {
        mmrisk::asymptotics::McBudget { n: b.n, seed: b.seed }
    }
}

/// A list of reals: `0,1,2.5` or `start:end:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |t: &str| -> Result<f64, String> {
        let t = t.trim();
        match t {
            "inf" | "infinity" => Ok(f64::INFINITY),
            _ => t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")),
        }
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, h] = parts[..] else {
            return Err(format!("range `{s}` must be start:end:step"));
        };
        let (a, b, h) = (num(a)?, num(b)?, num(h)?);
        if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
            return Err(format!("range `{s}` needs finite start ≤ end and a positive step"));
        }
        let count = ((b - a) / h + 1e-9).floor() as usize;
        if count > 1_000_000 {
            return Err(format!("range `{s}` has more than a million points"));
        }
        return Ok(Grid((0..=count).map(|k| a + k as f64 * h).collect()));
    }
    let values = s.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(Grid(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuinMethod {
    /// Scale matrices, or Pollaczek-Khintchine for a heavy single state.
    Auto,
    Scale,
    /// Lower and upper Pollaczek-Khintchine brackets (single state).
    Pk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParisianMethod {
    /// Fixed-point system, with simulation when it is unavailable.
    Auto,
    Analytic,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimFunctional {
    /// Ruin probability; `--method crude|tilted`.
    Ruin,
    Parisian,
    DeficitLaw,
    Discounted,
    GerberShiu,
    UpcrossTime,
    FirstPassage,
    Occupation,
    ExitUpward,
    ExitDownward,
    ScaleMartingale,
    /// One event list.
    Path,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Infinite-horizon ruin probabilities on an x grid.
    Ruin {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_grid)]
        x: Grid,
        #[arg(long, value_enum, default_value_t = RuinMethod::Auto)]
        method: RuinMethod,
        /// Lattice step of the Pollaczek-Khintchine discretization.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Finite-horizon ruin probabilities on an x × t table.
    FiniteRuin {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_grid)]
        x: Grid,
        #[arg(long, value_parser = parse_grid)]
        t: Grid,
        /// auto, segerdahl, hoglund or mc.
        #[arg(long, default_value = "auto")]
        method: String,
        #[command(flatten)]
        budget: Budget,
    },
    /// Expected discounted penalty at ruin.
    GerberShiu {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_grid)]
        x: Grid,
        #[arg(long, default_value_t = 0.0)]
        q: f64,
        /// `1`, `const:c`, `indicator:lo:hi`, `exp:alpha` or `table:file.csv`.
        #[arg(long, default_value = "1")]
        penalty: String,
    },
    /// Density of the deficit at ruin from one state.
    Deficit {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        /// Initial state, 1-based.
        #[arg(long, default_value_t = 1)]
        state: usize,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long)]
        extent: Option<f64>,
    },
    /// Parisian ruin probabilities with delay ζ.
    Parisian {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_grid)]
        x: Grid,
        #[arg(long)]
        zeta: f64,
        #[arg(long, value_enum, default_value_t = ParisianMethod::Auto)]
        method: ParisianMethod,
        #[command(flatten)]
        budget: Budget,
    },
    /// Cramér, Segerdahl, Höglund and subexponential constants.
    Asymptotics {
        #[command(flatten)]
        io: Io,
        /// Velocities for the rate function; default m·{0.5, 1, 1.5, 2}.
        #[arg(long, value_parser = parse_grid)]
        v: Option<Grid>,
        /// Capital levels for the subexponential asymptote.
        #[arg(long, value_parser = parse_grid)]
        x: Option<Grid>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Tabulated scale matrices W and Z.
    Scale {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 0.0)]
        q: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long)]
        extent: Option<f64>,
    },
    /// Monte Carlo oracles.
    Simulate {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum)]
        functional: SimFunctional,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        /// Horizon; infinite when absent.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        q: f64,
        #[arg(long)]
        zeta: Option<f64>,
        /// Level above `x` for up-crossing functionals.
        #[arg(long)]
        z: Option<f64>,
        /// Upper barrier for two-sided exit functionals.
        #[arg(long)]
        a: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Initial state, 1-based; every state when absent.
        #[arg(long)]
        state: Option<usize>,
        /// crude or tilted, for ruin.
        #[arg(long, default_value = "tilted")]
        method: String,
        #[arg(long, default_value = "1")]
        penalty: String,
        /// Histogram bin edges, or times for the scale martingale.
        #[arg(long, value_parser = parse_grid)]
        bins: Option<Grid>,
        /// Column of W used by the scale martingale, 1-based.
        #[arg(long, default_value_t = 1)]
        column: usize,
        /// Where to write the histogram, if the functional has one.
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Run the invariant suite on a model.
    Validate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        budget: Budget,
    },
}

impl Command {
    pub fn io(&self) -> &Io {
        match self {
            Command::Ruin { io, .. }
            | Command::FiniteRuin { io, .. }
            | Command::GerberShiu { io, .. }
            | Command::Deficit { io, .. }
            | Command::Parisian { io, .. }
            | Command::Asymptotics { io, .. }
            | Command::Scale { io, .. }
            | Command::Simulate { io, .. }
            | Command::Validate { io, .. } => io,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::InvalidModel(_) | RiskError::InvalidArgument(_) | RiskError::Domain(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

pub fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn workers_from_env(value: Option<OsString>) -> Result<Option<usize>, CliError> {
    let Some(v) = value else { return Ok(None) };
    let text = v.to_string_lossy();
    match text.trim().parse::<usize>() {
        Ok(0) => Ok(None),
        Ok(k) => Ok(Some(k)),
        Err(_) => Err(input(format!("{WORKERS_ENV} must be a nonnegative integer, got `{text}`"))),
    }
}

/// Run one command; the table goes to `--out` or `stdout`, diagnostics to
/// `stderr`. Returns the process exit code.
pub fn run<I, T>(args: I, workers: Option<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = workers_from_env(workers).and_then(|w| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(w.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Compute(format!("cannot start worker pool: {e}")))?;
        log::info!("{} worker thread(s)", pool.current_num_threads());
        let mut notes = Vec::new();
        let computed = pool.install(|| compute(&cli.command, &mut notes));
        let _ = stderr.write_all(&notes);
        let (table, failure) = computed?;
        emit(cli.command.io(), &table, stdout)?;
        failure.map_or(Ok(()), Err)
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn compute(command: &Command, notes: &mut Vec<u8>) -> Result<(output::Table, Option<CliError>), CliError> {
    let validated = config::parse_model_file(&command.io().model).map_err(|e| input(e.to_string()))?;
    for w in &validated.warnings {
        let _ = writeln!(notes, "warning: {w}");
    }
    commands::dispatch(command, &validated.model, notes)
}

/// Formats the whole table before writing so that a failure leaves no
/// partial file behind.
fn emit(io: &Io, table: &output::Table, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut buf = Vec::new();
    table.write(io.format, &mut buf).map_err(|e| CliError::Compute(format!("cannot format output: {e}")))?;
    match &io.out {
        Some(path) => std::fs::write(path, &buf).map_err(|e| input(format!("cannot write {}: {e}", path.display()))),
        None => stdout.write_all(&buf).map_err(|e| CliError::Compute(format!("cannot write output: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0,1,2.5").unwrap(), Grid(vec![0.0, 1.0, 2.5]));
        assert_eq!(parse_grid("0:1:0.25").unwrap().0.len(), 5);
        assert_eq!(parse_grid("0:0.3:0.1").unwrap().0.len(), 4);
        assert_eq!(parse_grid("1,inf").unwrap().0[1], f64::INFINITY);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:-1").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn worker_env() {
        assert_eq!(workers_from_env(None).unwrap(), None);
        assert_eq!(workers_from_env(Some("3".into())).unwrap(), Some(3));
        assert!(workers_from_env(Some("many".into())).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut out, mut err) = (vec![], vec![]);
        assert_eq!(run(["mmrisk", "ruin"], None, &mut out, &mut err), 2);
        assert_eq!(run(["mmrisk", "--help"], None, &mut out, &mut err), 0);
    }
}
