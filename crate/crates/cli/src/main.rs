//! `rtrunc`: optimal randomized truncation from the command line.
#![allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN along with out-of-range values

mod commands;
mod io;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::io::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "rtrunc",
    version,
    about = "Optimal randomized truncation of pure states"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Marginal-fit tolerance for ensembles and `maxent-fit`. Defaults to
    /// 1e-10, or 1e-13 for robustness ensembles.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Format of the summary written to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Cross-check results against brute-force oracles.
    #[arg(long, global = true)]
    pub oracle: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveArg {
    Td,
    Robust,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    /// Number of sampled states to draw.
    #[arg(long, requires = "samples_out")]
    pub samples: Option<usize>,
    /// CSV file for the sampled states.
    #[arg(long, requires = "samples")]
    pub samples_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Top-k and k-support norms, best fidelity and optimal robustness.
    Norms {
        #[arg(long)]
        k: usize,
        input: PathBuf,
    },
    /// Optimal trace distance to k-sparse mixtures.
    Tdist {
        #[arg(long)]
        k: usize,
        input: PathBuf,
        /// Include the ensemble description in the summary.
        #[arg(long)]
        ensemble: bool,
        /// Write the optimal mixed state as CSV.
        #[arg(long)]
        sigma: Option<PathBuf>,
        /// Include optimality residuals in the summary.
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        samples: SampleArgs,
    },
    /// Optimal robustness with respect to k-sparse mixtures.
    Robust {
        #[arg(long)]
        k: usize,
        input: PathBuf,
        /// Write the optimal mixed state as CSV.
        #[arg(long)]
        tau: Option<PathBuf>,
        /// Include the diagonal-dominance certificate in the summary.
        #[arg(long)]
        cert: bool,
        #[command(flatten)]
        samples: SampleArgs,
    },
    /// Schmidt-rank-k truncation of a bipartite state.
    Entangled {
        #[arg(long)]
        k: usize,
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Td)]
        objective: ObjectiveArg,
        /// Write the optimal mixed state (full space) as CSV.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long)]
        cert: bool,
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        samples: SampleArgs,
    },
    /// Max-entropy subset weights for target inclusion marginals.
    MaxentFit {
        input: PathBuf,
        /// Write the pair inclusion matrix as CSV.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
    },
    /// Trace distance and robustness across power-law states.
    Powerlaw {
        /// Sweep configuration JSON. Flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic versus randomized bond truncation on random chains.
    Mps {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let g = &cli.global;
    let out = match cli.command {
        Command::Norms { k, input } => commands::norms(g, &input, k)?,
        Command::Tdist {
            k,
            input,
            ensemble,
            sigma,
            verify,
            samples,
        } => commands::tdist(g, &input, k, ensemble, sigma.as_deref(), verify, &samples)?,
        Command::Robust {
            k,
            input,
            tau,
            cert,
            samples,
        } => commands::robust(g, &input, k, tau.as_deref(), cert, &samples)?,
        Command::Entangled {
            k,
            input,
            objective,
            density,
            cert,
            verify,
            samples,
        } => commands::entangled(
            g,
            &input,
            k,
            objective,
            density.as_deref(),
            cert,
            verify,
            &samples,
        )?,
        Command::MaxentFit {
            input,
            pairs,
            max_iter,
        } => commands::maxent_fit(g, &input, pairs.as_deref(), max_iter)?,
        Command::Powerlaw {
            config,
            gamma,
            d,
            k,
            out,
        } => commands::powerlaw(g, config.as_deref(), gamma, d, k, out)?,
        Command::Mps { config, out } => commands::mps(g, &config, out.as_deref())?,
    };
    Ok(match g.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&out.json).expect("serializable");
            s.push('\n');
            s
        }
        Format::Csv => out.table.render(),
    })
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let err = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            return fail("usage", e.to_string().trim_end(), 2);
        }
    };
    match run(cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(text.as_bytes()).is_err() {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = if matches!(e, CliError::Usage(_)) {
                2
            } else {
                1
            };
            fail(e.kind(), &e.to_string(), code)
        }
    }
}
