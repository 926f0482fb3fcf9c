//! `skellam-lab`: batch front-end for skellam-core experiments.
//!
//! Exit codes: 0 success, 1 I/O or numerical failure, 2 invalid config or
//! arguments, 3 statistical suite failure.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use artifact::{Format, Metadata};
use commands::Ctx;
use config::{RawConfig, Suite};

const DEFAULT_SEED: u64 = 20_240_601;
const DEFAULT_PATHS: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] skellam_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Core(skellam_core::Error::Numerical(_)) => 1,
            Self::Core(_) => 2,
            Self::Io(_) | Self::Csv(_) | Self::Json(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            _ => "runtime",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "skellam-lab", version, about = "Simulate and analyze generalized Skellam processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths; overrides the config.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Artifact directory; overrides the config's output-path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Artifact format; overrides the config.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for Monte Carlo.
    #[arg(long, global = true, env = "SKELLAM_LAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Sample paths and write their events.
    Simulate,
    /// Closed-form moments, pmf and covariance.
    Analyze,
    /// Split a process into components; analytic and Monte Carlo moments.
    Decompose,
    /// First-passage survival and moments.
    Fpt,
    /// Moments of the Riemann-Liouville integral of the path.
    Fracint,
    /// Sample paths of the Bernstein-fractional process.
    FracSim,
    /// Pgf, moments and intensity row sums of the Bernstein-fractional process.
    FracAnalyze,
    /// Run a limit-theorem suite.
    LimitCheck {
        #[arg(long, value_enum)]
        suite: Option<Suite>,
    },
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Analyze => "analyze",
            Self::Decompose => "decompose",
            Self::Fpt => "fpt",
            Self::Fracint => "fracint",
            Self::FracSim => "frac-sim",
            Self::FracAnalyze => "frac-analyze",
            Self::LimitCheck { .. } => "limit-check",
        }
    }
}

fn run(cli: &Cli) -> Result<Option<bool>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut raw = match &cli.config {
        Some(path) => RawConfig::parse(&std::fs::read_to_string(path)?)?,
        None if matches!(cli.command, Command::LimitCheck { .. }) => RawConfig::default(),
        None => return Err(CliError::Validation(format!("{} needs --config", cli.command.name()))),
    };
    let mut name = cli.command.name().to_string();
    let mut default_paths = DEFAULT_PATHS;
    let limit = match cli.command {
        Command::LimitCheck { suite } => {
            let cfg: config::LimitConfig = raw.command()?;
            let suite = match (suite, cfg.suite) {
                (Some(a), Some(b)) if a != b => {
                    return Err(CliError::Validation("--suite disagrees with the config's suite".into()))
                }
                (a, b) => a.or(b).ok_or_else(|| CliError::Validation("limit-check needs --suite".into()))?,
            };
            raw.rest.insert("suite".into(), json!(suite));
            default_paths = commands::default_paths(suite);
            name = format!("limit-check-{}", serde_json::to_value(suite)?.as_str().unwrap_or_default());
            Some((suite, cfg))
        }
        _ => None,
    };
    let common = &mut raw.common;
    common.seed = cli.seed.or(common.seed).or(Some(DEFAULT_SEED));
    common.paths = cli.paths.or(common.paths).or(Some(default_paths));
    common.format = cli.format.or(common.format).or(Some(Format::Csv));
    if let Some(h) = common.horizon {
        if !(h.is_finite() && h >= 0.0) {
            return Err(CliError::Validation(format!("horizon must be finite and nonnegative, got {h}")));
        }
    }
    let ctx = Ctx { seed: common.seed.unwrap(), paths: common.paths.unwrap(), horizon: common.horizon };
    let out = match (cli.command, limit) {
        (Command::Simulate, _) => commands::simulate(ctx, raw.command()?)?,
        (Command::Analyze, _) => commands::analyze(raw.command()?)?,
        (Command::Decompose, _) => commands::decompose(ctx, raw.command()?)?,
        (Command::Fpt, _) => commands::fpt(ctx, raw.command()?)?,
        (Command::Fracint, _) => commands::fracint(ctx, raw.command()?)?,
        (Command::FracSim, _) => commands::frac_sim(ctx, raw.command()?)?,
        (Command::FracAnalyze, _) => commands::frac_analyze(raw.command()?)?,
        (Command::LimitCheck { .. }, Some((suite, cfg))) => commands::limit_check(ctx, suite, cfg)?,
        (Command::LimitCheck { .. }, None) => unreachable!("suite resolved above"),
    };
    let meta = Metadata {
        tool: "skellam-lab",
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: skellam_core::VERSION,
        command: name,
        seed: ctx.seed,
        config_sha256: config::config_hash(cli.command.name(), &raw.common, &raw.rest),
    };
    let dir = cli.out.clone().or_else(|| raw.common.output_path.clone()).unwrap_or_else(|| PathBuf::from("."));
    let written = artifact::write(&dir, raw.common.format.unwrap(), &meta, &out)?;
    for path in &written {
        println!("{}", path.display());
    }
    if let Some(pass) = out.pass {
        println!("{}: {}", meta.command, if pass { "pass" } else { "FAIL" });
    }
    Ok(out.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(false)) => ExitCode::from(3),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({ "error": e.kind(), "command": cli.command.name(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code())
        }
    }
}
