//! `qac`: command-line front end for the quantum anharmonic crystal toolkit.
//!
//! Every subcommand reads a TOML model configuration, writes its report as
//! JSON (and CSV tables where relevant) into the output directory together
//! with `manifest.json`, and echoes the report on stdout.
//!
//! Exit status: 0 success, 1 invalid input, 2 numerical failure,
//! 3 an inequality check failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qac_core::Error;
use serde_json::json;

use crate::commands::{Outcome, Table};
use crate::output::{Manifest, OutputDir};

#[derive(Parser)]
#[command(name = "qac", version, about = "Euclidean Gibbs kernels of quantum anharmonic crystals")]
struct Cli {
    /// Print the JSON schemas of the configuration and of every report.
    #[arg(long)]
    schema: bool,

    /// Worker threads; results do not depend on it.
    #[arg(long, env = "QAC_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    /// Model configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,

    /// Directory receiving the report, tables and manifest.
    #[arg(long, short, default_value = "qac-out")]
    output: PathBuf,

    /// Master seed for Monte Carlo and randomized suites.
    #[arg(long)]
    seed: Option<u64>,

    /// Override a configuration value, e.g. `--set model.beta=2.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Phase-transition, stabilization and uniqueness criteria.
    Criteria {
        #[command(flatten)]
        common: Common,
        /// Sweep this parameter (beta, mass, rigidity, field, j, b1, b2, ...) into a CSV table.
        #[arg(long)]
        table: Option<String>,
        #[arg(long, requires = "table")]
        from: Option<f64>,
        #[arg(long, requires = "table")]
        to: Option<f64>,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// One-site spectrum, gap and correlator bounds.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Path-integral Monte Carlo estimates.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the per-sweep trace of chain 0.
        #[arg(long)]
        trace: bool,
    },
    /// Correlation-inequality suites against the exact oracle.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Lee-Yang condition, partition-function zeros and pressure curve.
    Leeyang {
        #[command(flatten)]
        common: Common,
    },
    /// Pressure as a function of the field, optionally with block interpolation.
    Pressure {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Criteria { .. } => "criteria",
            Command::Spectrum { .. } => "spectrum",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
            Command::Leeyang { .. } => "leeyang",
            Command::Pressure { .. } => "pressure",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Criteria { common, .. }
            | Command::Spectrum { common }
            | Command::Simulate { common, .. }
            | Command::Verify { common }
            | Command::Leeyang { common }
            | Command::Pressure { common } => common,
        }
    }
}

fn schemas() -> serde_json::Value {
    macro_rules! schema {
        ($t:ty) => {
            serde_json::to_value(schemars::schema_for!($t)).expect("schema serializes")
        };
    }
    json!({
        "config": schema!(config::Config),
        "manifest": schema!(Manifest),
        "criteria": schema!(qac_core::criteria::CriterionReport),
        "criteria_table": schema!(Vec<qac_core::criteria::CriterionReport>),
        "spectrum": schema!(commands::SpectrumReport),
        "simulate": schema!(commands::SimulateReport),
        "verify": schema!(commands::VerifyReport),
        "leeyang": schema!(commands::LeeYangReport),
        "pressure": schema!(commands::PressureReport),
    })
}

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        1
    } else {
        2
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let detail = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{detail}");
    ExitCode::from(code)
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::Config(_) => "config",
        Error::Precondition(_) => "precondition",
        Error::MissingObservable(_) => "missing_observable",
        Error::Numeric(_) => "numeric",
        Error::TooLarge { .. } => "too_large",
        Error::Truncation { .. } => "truncation",
        Error::Divergent(_) => "divergent",
        Error::Diagnostic(_) => "diagnostic",
        Error::Io(_) => "io",
    }
}

fn run(command: &Command) -> Result<Outcome, Error> {
    let common = command.common();
    let loaded = config::load(&common.config, &common.overrides)?;
    let mut cfg = loaded.config;
    if let Some(seed) = common.seed {
        cfg.mc.master_seed = seed;
        cfg.verify.seed = seed;
    }
    let seed = if matches!(command, Command::Verify { .. }) { cfg.verify.seed } else { cfg.mc.master_seed };
    let mut out = OutputDir::create(&common.output)?;
    let outcome = match command {
        Command::Criteria { table: Some(parameter), from, to, steps, .. } => {
            let table = Table {
                parameter: parameter.clone(),
                from: from.ok_or_else(|| Error::Config("--table needs --from".into()))?,
                to: to.ok_or_else(|| Error::Config("--table needs --to".into()))?,
                steps: *steps,
            };
            commands::criteria_table(&cfg, &table, &mut out)?
        }
        Command::Criteria { .. } => commands::criteria(&cfg, &mut out)?,
        Command::Spectrum { .. } => commands::spectrum(&cfg, &mut out)?,
        Command::Simulate { trace, .. } => commands::simulate(&cfg, *trace, &mut out)?,
        Command::Verify { .. } => commands::verify(&cfg, &mut out)?,
        Command::Leeyang { .. } => commands::leeyang(&cfg, &mut out)?,
        Command::Pressure { .. } => commands::pressure(&cfg, &mut out)?,
    };
    let manifest = Manifest {
        tool: "qac".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: command.name().into(),
        config_sha256: loaded.hash,
        seed,
        outputs: out.files.clone(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string(), 1),
    };
    if cli.schema {
        println!("{}", serde_json::to_string_pretty(&schemas()).expect("schemas serialize"));
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        return fail("usage", "a subcommand is required (see --help)".into(), 1);
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail("usage", "--threads must be positive".into(), 1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("usage", e.to_string(), 1);
        }
    }
    match run(&command) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            if outcome.failed {
                eprintln!("{}", json!({ "error": { "kind": "inequality_failure", "message": "at least one inequality check failed", "exit_code": 3 } }));
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            let code = match &e {
                Error::Io(_) => 1,
                other => exit_code(other),
            };
            fail(kind(&e), e.to_string(), code)
        }
    }
}
