use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;
mod scenario;

use scenario::Grid;

/// Log skew normal approximation of sums of correlated lognormals.
///
/// Exit status: 0 on success, 1 for invalid input, 2 when a numerical step
/// (root finding, moment evaluation) fails.
#[derive(Debug, Parser)]
#[command(name = "lsnsum", version)]
struct Cli {
    /// Worker threads for Monte Carlo (default: all cores). Results do not
    /// depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Use ε = ln m − ω²/2 − ln Φ(λ/√S) instead of the mean-exact form with
    /// ln 2Φ(λ/√S).
    #[arg(long = "literal-eq29", global = true)]
    literal_eq29: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the LSN and print its parameters and diagnostics.
    Fit {
        scenario: PathBuf,
    },
    /// Run Monte Carlo, fit LSN and Fenton–Wilkinson, write CDF/CCDF/probit
    /// curves as CSV and print KS / dB-deviation metrics.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, value_parser = Grid::parse)]
        grid: Option<Grid>,
        /// Comma-separated CDF levels for the dB deviation table.
        #[arg(long, value_parser = scenario::parse_levels)]
        levels: Option<scenario::Levels>,
        /// CSV destination (default: stdout, metrics then go to stderr).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw Monte Carlo sums and print summary quantiles. With --out, the
    /// sums are also written in generation order as raw little-endian f64
    /// values, 8 bytes each, no header.
    Sample {
        scenario: PathBuf,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, value_parser = scenario::parse_levels)]
        levels: Option<scenario::Levels>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tail slopes on lognormal probability paper: theoretical values for the
    /// sum and for the fitted LSN, and probe slopes of the fitted CDF.
    Slopes {
        scenario: PathBuf,
        /// |x0| of the probes, natural-log units.
        #[arg(long, default_value_t = lsnsum::probscale::DEFAULT_UPPER_PROBE)]
        probe: f64,
        #[arg(long, default_value_t = lsnsum::probscale::DEFAULT_PROBE_STEP)]
        step: f64,
    },
    /// Evaluate the fitted CDF, CCDF and PDF at dB values.
    Eval {
        scenario: PathBuf,
        /// Comma-separated dB values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Vec<f64>,
        #[arg(long, value_parser = Grid::parse)]
        grid: Option<Grid>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
struct McArgs {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl From<lsnsum::Error> for CliError {
    fn from(e: lsnsum::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    let literal = cli.literal_eq29;
    match cli.command {
        Command::Fit { scenario } => commands::fit(&scenario::load(&scenario)?, literal),
        Command::Compare {
            scenario,
            mc,
            grid,
            levels,
            out,
        } => {
            let mut s = scenario::load(&scenario)?;
            apply_overrides(&mut s, mc, levels)?;
            if grid.is_some() {
                s.grid = grid;
            }
            commands::compare(&s, literal, out.as_deref())
        }
        Command::Sample {
            scenario,
            mc,
            levels,
            out,
        } => {
            let mut s = scenario::load(&scenario)?;
            apply_overrides(&mut s, mc, levels)?;
            commands::sample(&s, out.as_deref())
        }
        Command::Slopes {
            scenario,
            probe,
            step,
        } => commands::slopes(&scenario::load(&scenario)?, literal, probe, step),
        Command::Eval {
            scenario,
            at,
            grid,
            out,
        } => {
            let s = scenario::load(&scenario)?;
            let points = match (at.is_empty(), grid.or(s.grid)) {
                (false, _) => at,
                (true, Some(g)) => g.points(),
                (true, None) => {
                    return Err(CliError::Input(
                        "eval needs --at, --grid or a [grid] section".into(),
                    ))
                }
            };
            commands::eval(&s, literal, &points, out.as_deref())
        }
    }
}

fn apply_overrides(
    s: &mut scenario::Scenario,
    mc: McArgs,
    levels: Option<scenario::Levels>,
) -> Result<(), CliError> {
    if let Some(n) = mc.samples {
        if n == 0 {
            return Err(CliError::Input("--samples must be at least 1".into()));
        }
        s.samples = n;
    }
    if let Some(seed) = mc.seed {
        s.seed = seed;
    }
    if let Some(levels) = levels {
        s.levels = levels.0;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
