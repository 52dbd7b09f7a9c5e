mod config;
mod experiments;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use config::{ExperimentConfig, Overrides};
use experiments::Runner;
use report::{input_hash, Report};

pub const WORKERS_ENV: &str = "HYPERLAB_WORKERS";

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;

/// A configuration problem, located by its field path.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Spectrum,
    Exponents,
    Conjugacy,
    Gibbs,
    Entropy,
    Skew,
    Katok,
    FullRigidity,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Exponents => "exponents",
            Command::Conjugacy => "conjugacy",
            Command::Gibbs => "gibbs",
            Command::Entropy => "entropy",
            Command::Skew => "skew",
            Command::Katok => "katok",
            Command::FullRigidity => "full-rigidity",
        }
    }

    fn needs_map(self) -> bool {
        !matches!(self, Command::Katok)
    }
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Linear map from a matrix literal such as "2,1;1,1".
    #[arg(long)]
    matrix: Option<String>,
    /// Map document as inline JSON.
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and CSV sidecars.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bundle index for gibbs and entropy.
    #[arg(long)]
    sigma: Option<usize>,
    /// Orbit length for exponents.
    #[arg(long)]
    n: Option<usize>,
    /// Directory for the on-disk bundle cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Exact spectral data of the linear part.
    Spectrum(CommonArgs),
    /// Lyapunov exponents by QR along orbits.
    Exponents(CommonArgs),
    /// Conjugacy to the linear model and periodic multiplier data.
    Conjugacy(CommonArgs),
    /// Gibbs density along an expanding leaf.
    Gibbs(CommonArgs),
    /// Conditional entropy and the Pesin verdict.
    Entropy(CommonArgs),
    /// Partial entropy of a skew product.
    Skew(CommonArgs),
    /// Katok family: holonomy, absolute continuity and unique intersection.
    Katok(CommonArgs),
    /// Conjugacy plus the full battery of rigidity diagnostics.
    FullRigidity(CommonArgs),
}

#[derive(Debug, Parser)]
#[command(name = "hyperlab", version, about = "Lyapunov-exponent rigidity laboratory for toral maps")]
struct Cli {
    #[command(subcommand)]
    sub: Sub,
}

impl Sub {
    fn split(self) -> (Command, CommonArgs) {
        match self {
            Sub::Spectrum(a) => (Command::Spectrum, a),
            Sub::Exponents(a) => (Command::Exponents, a),
            Sub::Conjugacy(a) => (Command::Conjugacy, a),
            Sub::Gibbs(a) => (Command::Gibbs, a),
            Sub::Entropy(a) => (Command::Entropy, a),
            Sub::Skew(a) => (Command::Skew, a),
            Sub::Katok(a) => (Command::Katok, a),
            Sub::FullRigidity(a) => (Command::FullRigidity, a),
        }
    }
}

fn workers() -> Result<usize, ConfigError> {
    let requested = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|e| ConfigError {
            field: WORKERS_ENV.into(),
            message: e.to_string(),
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(requested)
        .build_global()
        .map_err(|e| ConfigError {
            field: WORKERS_ENV.into(),
            message: e.to_string(),
        })?;
    Ok(rayon::current_num_threads())
}

fn main() -> ExitCode {
    let (command, args) = Cli::parse().sub.split();
    let overrides = Overrides {
        matrix: args.matrix,
        map: args.map,
        seed: args.seed,
        output: args.out,
        cache_dir: args.cache_dir,
        sigma: args.sigma,
        n: args.n,
    };
    let loaded = workers().and_then(|w| {
        let cfg = ExperimentConfig::load(args.config.as_deref(), &overrides)?;
        if command.needs_map() {
            cfg.map_document()?;
        }
        Ok((w, cfg))
    });
    let (workers, cfg) = match loaded {
        Ok(v) => v,
        Err(e) => {
            eprintln!("hyperlab: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let start = Instant::now();
    let mut runner = Runner::new(&cfg);
    runner.run(command);
    let Runner {
        blocks,
        verdicts,
        sidecars,
        input_error,
        ..
    } = runner;
    let report = Report {
        tool: "hyperlab",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name().into(),
        input_hash: input_hash(command.name(), &cfg),
        config: cfg.clone(),
        workers,
        blocks,
        verdicts,
        sidecars,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    match report.write(&cfg.output) {
        Ok(path) => println!("{}", path.display()),
        Err(e) => {
            eprintln!("hyperlab: cannot write report: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    for (name, verdict) in &report.verdicts {
        println!("{name}: {verdict}");
    }
    for b in report.blocks.iter().filter(|b| b.error.is_some()) {
        if let Some(err) = &b.error {
            eprintln!("hyperlab: block `{}` {}: {}", b.name, err.kind, err.message);
        }
    }
    if input_error {
        ExitCode::from(EXIT_CONFIG)
    } else if report.failed() {
        ExitCode::from(EXIT_NUMERIC)
    } else {
        ExitCode::SUCCESS
    }
}
