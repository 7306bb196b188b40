//! Command-line front end for the `regnoise` experiments.
//!
//! Every subcommand reads an [`ExperimentConfig`] (file plus flag overrides),
//! runs on a worker pool of the requested size and writes one CSV table:
//! `#` metadata lines, a header row, then data rows.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or validation failure,
//! 3 refusal on a size budget.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use clap::{Arg, ArgMatches, Command};
use thiserror::Error;

use regnoise::exec::with_workers;

pub use commands::Table;
pub use config::{build, parse_config, ConfigError, ConfigErrors, ExperimentConfig, KEYS};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Core(#[from] regnoise::Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(regnoise::Error::BudgetExceeded { .. } | regnoise::Error::ChainTooLong { .. }) => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

const OPERATOR: &[&str] = &["alpha", "eigenvalues", "D"];
const DRIFT: &[&str] =
    &["gamma", "drift", "amplitude", "scales", "kappa", "threshold", "rate", "cell", "time_cells", "drift_seed"];
const SCAN: &[&str] = &["n", "replicas", "beta_a", "subnodes", "mesh_offset", "coincident"];
const SOLVE: &[&str] = &["grid", "tolerance", "max_iter", "damping", "x0"];

/// Subcommand names, descriptions and the config keys each one reads.
pub const SUBCOMMANDS: &[(&str, &str, &[&[&str]])] = &[
    ("simulate-ou", "Exact OU marginal statistics per mode at time t", &[OPERATOR, &["t", "replicas"]]),
    ("lattice-stats", "Effective dimension and point counts of the lattice", &[&["gamma", "r", "m", "scale", "budget"]]),
    ("validate-drift", "Check a drift against the decay assumption", &[OPERATOR, DRIFT, &["samples"]]),
    ("phi-estimate", "Individual phi evaluations with both bounds", &[OPERATOR, DRIFT, SCAN]),
    ("sigma-scan", "Quantiles of phi(x, 0) against its bound per level", &[OPERATOR, DRIFT, SCAN]),
    ("rho-scan", "Quantiles of phi(x, y) against its bound per level", &[OPERATOR, DRIFT, SCAN]),
    ("euler-chain", "Implied constants of Euler-chain sums", &[OPERATOR, DRIFT, &["n", "chain_length", "paths"]]),
    ("bdg-check", "Martingale moment ratios against p", &[&["p", "walk", "increments", "c", "replicas"]]),
    ("exp-moment", "Exponential moment of bounded-increment martingales", &[&["walk", "increments", "c", "replicas"]]),
    ("gronwall", "Iterates of the log-type Gronwall recursion", &[&["K", "m", "beta0", "steps"]]),
    ("solve", "Picard solution of the mild equation on one path", &[OPERATOR, DRIFT, SOLVE]),
    ("uniqueness", "Solutions from several initializations per path", &[OPERATOR, DRIFT, SOLVE, &["paths", "inits"]]),
];

const GLOBAL: &[&str] = &["seed", "workers", "out"];

fn keys_of(name: &str) -> Vec<&'static str> {
    SUBCOMMANDS
        .iter()
        .find(|s| s.0 == name)
        .map(|s| s.2.iter().flat_map(|g| g.iter().copied()).collect())
        .unwrap_or_default()
}

fn key_arg(name: &'static str) -> Arg {
    let spec = config::key_spec(name).expect("known key");
    let help = if spec.default.is_empty() {
        spec.help.to_string()
    } else {
        format!("{} [default: {}]", spec.help, spec.default)
    };
    Arg::new(name).long(name).value_name("VALUE").help(help).allow_negative_numbers(true)
}

pub fn command() -> Command {
    let mut cmd = Command::new("regnoise")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Numerical experiments for SDEs with bounded measurable drift and OU noise")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("config").long("config").value_name("FILE").global(true).help("key=value configuration file"));
    for key in GLOBAL {
        cmd = cmd.arg(key_arg(key).global(true));
    }
    for (name, about, _) in SUBCOMMANDS {
        let sub = Command::new(*name).about(*about).args(keys_of(name).into_iter().map(key_arg));
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn config_from(name: &str, m: &ArgMatches) -> Result<ExperimentConfig, CliError> {
    let text = match m.get_one::<String>("config") {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            ConfigErrors(vec![ConfigError { line: None, key: "config".into(), message: format!("{path}: {e}") }])
        })?,
        None => String::new(),
    };
    let overrides: Vec<(String, String)> = GLOBAL
        .iter()
        .copied()
        .chain(keys_of(name))
        .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    Ok(build(&text, &overrides)?)
}

/// Writes the metadata block, the header and the rows.
pub fn write_table<W: Write>(mut w: W, name: &str, cfg: &ExperimentConfig, table: &Table) -> Result<(), CliError> {
    writeln!(w, "# regnoise {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# command={name}")?;
    writeln!(w, "# seed={}", cfg.seed)?;
    for (k, v) in cfg.echo.iter().filter(|(k, _)| k != "seed") {
        writeln!(w, "# {k}={v}")?;
    }
    for (k, v) in &table.meta {
        writeln!(w, "# {k}={v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&table.header)?;
    for row in &table.rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Runs subcommand `name` with `cfg` and writes the result to the configured
/// output.
pub fn execute(name: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let table = with_workers(cfg.workers, || commands::run(name, cfg))?;
    match &cfg.out {
        Some(path) => write_table(BufWriter::new(File::create(path)?), name, cfg, &table),
        None => write_table(io::stdout().lock(), name, cfg, &table),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = config_from(name, sub).and_then(|cfg| execute(name, &cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
