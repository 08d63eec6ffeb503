//! `ntqs`: build number-theoretic states, evaluate their QFT peaks and
//! entanglement, and emit the analytic model quantities.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{OutputFormat, RunConfig};

#[derive(Parser)]
#[command(name = "ntqs", version, about = "Number-theoretic quantum states", long_about = None)]
struct Cli {
    /// Significand bits for extended-precision arithmetic (53 runs in native doubles)
    #[arg(long, global = true, default_value_t = 113)]
    prec: u32,

    /// Directory for cached prime sieves
    #[arg(long, global = true, env = "NTQS_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for scans
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Output format (each command has its own default)
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    /// Directory for output files
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Prime,
    Arith,
    Composite,
    Squarefree,
    Mobius,
    Starry,
    Uniform,
    /// Dense random state (entropy only)
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Complex,
    Positive,
}

#[derive(Args, Clone, Debug)]
pub struct StateArgs {
    #[arg(value_enum)]
    family: Family,
    /// Number of digits
    #[arg(long)]
    n: u32,
    /// Digit base
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[arg(long, default_value_t = 4)]
    alpha: u64,
    #[arg(long, default_value_t = 1)]
    beta: u64,
    /// Random-state coefficients
    #[arg(long, value_enum, default_value_t = Kind::Complex)]
    kind: Kind,
}

#[derive(Subcommand)]
enum Command {
    /// Build a state, write its export and print the support size
    State {
        #[command(flatten)]
        state: StateArgs,
        /// Export path (defaults to a name derived from the state under --out-dir)
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the binary export instead of text
        #[arg(long)]
        binary: bool,
    },
    /// QFT peak probabilities, closed forms and bias extraction
    Peaks {
        #[command(flatten)]
        state: StateArgs,
        /// Also write the full spectrum (k, P(k)) as .dat with a gnuplot script
        #[arg(long)]
        full: bool,
        /// Evaluate the N/3, N/4 and N/6 peaks with t ancilla bits
        #[arg(long, value_name = "T")]
        ancilla: Option<u32>,
        /// Simulate M measurements of the full spectrum
        #[arg(long, value_name = "M")]
        shots: Option<u64>,
    },
    /// Entanglement entropy across digit cuts, appended to a CSV
    Entropy {
        #[command(flatten)]
        state: StateArgs,
        /// Number of low digits in the cut
        #[arg(long, conflicts_with = "scan", required_unless_present = "scan")]
        m: Option<u32>,
        /// Every cut 1 <= m < n
        #[arg(long)]
        scan: bool,
        /// CSV file (defaults to entropy.csv under --out-dir)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Analytic eigenvalue model of the prime state
    Model {
        /// Qubits
        #[arg(long, default_value_t = 24, conflicts_with = "fit")]
        n: u32,
        /// Cut (defaults to n/2)
        #[arg(long)]
        m: Option<u32>,
        /// Fit model entropies linearly in n/2 for even n in [LO, HI]
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        fit: Option<Vec<u32>>,
        #[arg(long, value_enum, default_value_t = RuleArg::Asymptotic)]
        rule: RuleArg,
    },
    /// Euler-product constants of the model and the conjectured scaling constants
    Constants {
        #[arg(long, default_value_t = ntqs_core::numtheory::DEFAULT_CUTOFF)]
        cutoff: u64,
        /// Add the analytic estimate of the primes above the cutoff
        #[arg(long)]
        tail: bool,
    },
    /// Fourier coefficients of the normalized entropy surface from a CSV
    Fit {
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "prime")]
        family: String,
        #[arg(long, default_value_t = 2)]
        q: u32,
        #[arg(long, default_value_t = 8)]
        terms: usize,
    },
    /// Eigenvalue-location table of the Ramanujan matrices for D = 15
    Table15,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Asymptotic,
    Dimension,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> ntqs_core::Result<()> {
        let cfg = RunConfig::new(cli.prec, cli.cache_dir, cli.seed, cli.threads, cli.format, cli.out_dir)?;
        match cli.command {
            Command::State { state, output, binary } => commands::state(&cfg, &state, output, binary),
            Command::Peaks { state, full, ancilla, shots } => commands::peaks(&cfg, &state, full, ancilla, shots),
            Command::Entropy { state, m, scan, csv } => commands::entropy(&cfg, &state, m, scan, csv),
            Command::Model { n, m, fit, rule } => commands::model(&cfg, n, m, fit, rule),
            Command::Constants { cutoff, tail } => commands::constants(&cfg, cutoff, tail),
            Command::Fit { csv, family, q, terms } => commands::fit(&cfg, csv, &family, q, terms),
            Command::Table15 => commands::table15(&cfg),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
