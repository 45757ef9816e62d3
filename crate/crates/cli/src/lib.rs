//! Command-line driver: `tensor`, `wave`, `validate`, `modes` and `solve`.
//!
//! Exit codes: 0 success, 1 failed check or failed computation, 2 bad
//! arguments or configuration.

pub mod commands;
pub mod config;
pub mod render;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "transmedia", version, about = "Transformation-media tensors, waves, mode checks and FDFD solves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Export the material tensors of the configured map on the grid
    Tensor(CommonArgs),
    /// Render the source wave in primed and in physical space
    Wave(CommonArgs),
    /// Run the tensor, mode and residual checks
    Validate(CommonArgs),
    /// Gram matrices, coefficient round trip and energies of box modes
    Modes(CommonArgs),
    /// Frequency-domain scattering solve through the configured medium
    Solve(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config and TRANSMEDIA_OUT_DIR)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Samples per grid axis; for `solve`, cells per wavelength
    #[arg(long)]
    pub grid: Option<usize>,
    /// Solver tolerance for `solve`, Gram tolerance for `modes` and `validate`
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Config(String),
    /// A check failed or a computation did not succeed (exit 1).
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<transmedia::Error> for CliError {
    fn from(e: transmedia::Error) -> Self {
        use transmedia::Error as E;
        match e {
            E::InvalidParameter(_) | E::GridMismatch | E::NotZInvariant(_) => CliError::Config(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

/// Loads a config file and applies the command-line overrides.
pub fn load_config(args: &CommonArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(n) = args.grid {
        if n < 2 {
            return Err(CliError::Config("--grid must be at least 2".into()));
        }
        cfg.grid.resample(n);
        cfg.solve.cells_per_wavelength = n as f64;
    }
    if let Some(tol) = args.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Config(format!("--tol must be > 0, got {tol}")));
        }
        cfg.tolerances.solver = tol;
        cfg.tolerances.gram_tol = tol;
    }
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os(config::OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.clone());
    Ok((cfg, out))
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = (|| {
        let (args, which) = match &cli.command {
            Command::Tensor(a) => (a, commands::Which::Tensor),
            Command::Wave(a) => (a, commands::Which::Wave),
            Command::Validate(a) => (a, commands::Which::Validate),
            Command::Modes(a) => (a, commands::Which::Modes),
            Command::Solve(a) => (a, commands::Which::Solve),
        };
        let (cfg, out) = load_config(args)?;
        prepare(&out)?;
        commands::dispatch(which, &cfg, &out)
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
