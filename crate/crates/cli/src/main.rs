use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bandcorr_core::oracle::{self, OracleParams, OracleRun};
use bandcorr_core::sweep::{self, SweepConfig};
use bandcorr_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use toml::{Table, Value};

const EXIT_CONFIG: u8 = 2;
const EXIT_HORIZON: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

/// Correlations between environmental bands of a driven Brownian machine.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep ω_i and write one CSV row per grid point.
    Sweep(Common),
    /// Run the invariant suite (and the discrete oracle if `oracle = true`).
    Validate(Common),
    /// Compare the discrete reservoir simulation with the band formulas.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Flat TOML configuration; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (CSV for `sweep`, trajectory dump for `oracle`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    relation: Option<RelationArg>,
    #[arg(long)]
    harmonic: Option<i32>,
    /// Perturbative order of the Green coefficients.
    #[arg(long)]
    order: Option<usize>,
    /// Seed for the identity fuzz.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum RelationArg {
    Nonresonant,
    Resonant,
}

enum Failure {
    Config(String),
    Horizon(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Invariant(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<SweepConfig, Failure> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut overrides = Table::new();
    if let Some(rel) = common.relation {
        let name = match rel {
            RelationArg::Nonresonant => "nonresonant",
            RelationArg::Resonant => "resonant",
        };
        overrides.insert("relation".into(), Value::String(name.into()));
    }
    if let Some(k) = common.harmonic {
        overrides.insert("harmonic".into(), Value::Integer(k.into()));
    }
    if let Some(order) = common.order {
        overrides.insert("order".into(), Value::Integer(order as i64));
    }
    let mut config = sweep::parse_config_with(&text, overrides)?;
    if let Some(out) = &common.out {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Invariant(e.to_string())),
    }
}

fn run_sweep(common: &Common) -> Result<(), Failure> {
    let config = load(common)?;
    let outcome = sweep::run_sweep(&config)?;
    write_output(&config.output, &outcome.to_csv())?;
    // Keep stdout pure CSV when no file was given.
    if config.output.is_some() {
        println!("{}", outcome.summary);
    } else {
        eprintln!("{}", outcome.summary);
    }
    if outcome.majority_failed() {
        return Err(Failure::Horizon(format!(
            "{} of {} points past the validity horizon",
            outcome.summary.failed, outcome.summary.points
        )));
    }
    Ok(())
}

fn run_validate(common: &Common) -> Result<(), Failure> {
    let config = load(common)?;
    let report = sweep::run_validation(&config, common.seed)?;
    print!("{report}");
    match report.first_failure() {
        Some(c) => Err(Failure::Invariant(format!("invariant failed: {}", c.name))),
        None => Ok(()),
    }
}

fn run_oracle(common: &Common) -> Result<(), Failure> {
    let config = load(common)?;
    let params = OracleParams::reduced_scale();
    let cmp = oracle::compare_with_analytic(&params, &OracleRun::reduced_scale(&params))?;
    println!("quantity,fitted,analytic,relative_error");
    for r in &cmp.rows {
        println!("{},{:.11e},{:.11e},{:.11e}", r.quantity, r.fitted, r.analytic, r.relative_error());
    }
    println!("symplectic_drift = {:.3e}", cmp.symplectic_drift);
    println!("counterterm_mismatch = {:.3e}", cmp.counterterm_mismatch);
    println!("continuum_sum_deviation = {:.3e}", cmp.continuum_sum_deviation);
    if let Some(path) = &config.output {
        let mut buf = Vec::new();
        cmp.trajectory
            .write_csv(&mut buf)
            .map_err(|e| Failure::Invariant(e.to_string()))?;
        fs::write(path, buf).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    let worst = cmp.worst_relative_error();
    if worst > 0.15 || cmp.symplectic_drift > oracle::SYMPLECTIC_TOL {
        return Err(Failure::Invariant(format!("oracle disagreement {worst:.3e}")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(c) => run_sweep(c),
        Command::Validate(c) => run_validate(c),
        Command::Oracle(c) => run_oracle(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Horizon(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_HORIZON)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}
