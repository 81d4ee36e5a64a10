//! `nnol`: build packings and networks, run simulations, prune, and audit mistake bounds.
//!
//! Exit codes: 0 success, 1 audit or verification failure, 2 usage error, 3 resource cap.

mod commands;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "nnol", version, about = "Online learning of sign networks with auditable mistake bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a totally-separable packing and verify it.
    Packing {
        #[command(subcommand)]
        kind: PackingKind,
    },
    /// Play a meta-learner against an adversary and audit the mistake bounds.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output prefix; `.transcript.csv`, `.transcript.json` and `.audit.json` are appended.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Select first-layer neurons whose majority tree reproduces a single-output network.
    Prune {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        g: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        retries: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the parameter-adaptive wrapper over scripted stub learners.
    Adap {
        #[arg(long, value_enum)]
        mode: AdapMode,
        #[arg(long, default_value_t = 0.5)]
        gamma_star: f64,
        #[arg(long, default_value_t = 2.0)]
        b_star: f64,
        /// Second stub for `combine`.
        #[arg(long, default_value_t = 0.1)]
        gamma_star2: f64,
        #[arg(long, default_value_t = 2.0)]
        b_star2: f64,
        #[arg(long, value_enum, default_value_t = Policy::StrictBudget)]
        policy: Policy,
        /// Use a stub that never errs.
        #[arg(long)]
        perfect: bool,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        /// Output prefix; `.schedule.csv` and `.summary.json` are appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build or evaluate sign networks.
    Net {
        #[command(subcommand)]
        action: NetAction,
    },
}

#[derive(Subcommand)]
enum PackingKind {
    Grid {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also require every witness to bisect its pair.
        #[arg(long)]
        strict: bool,
    },
    Simplex {
        #[arg(long)]
        dim: usize,
        /// Accepted for symmetry with `grid`; the simplex always has eps = 1/2.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Subcommand)]
enum NetAction {
    /// Network realizing a +-1 labeling of a packing with first-layer margin >= eps.
    Lowerbound {
        #[arg(long)]
        packing: PathBuf,
        /// Comma-separated labels, each `+1` or `-1`.
        #[arg(long, allow_hyphen_values = true)]
        labels: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the label and margins of a network on a point list.
    Eval {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        points: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AdapMode {
    Single,
    Combine,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Honest,
    StrictBudget,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Audit(String),
    Cap(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Audit(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Cap(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Audit(m) | CliError::Cap(m) => f.write_str(m),
        }
    }
}

impl From<nnol::Error> for CliError {
    fn from(e: nnol::Error) -> Self {
        use nnol::Error as E;
        let msg = e.to_string();
        match e {
            E::ClassTooLarge { .. } | E::DimTooLargeForEnumeration { .. } => CliError::Cap(msg),
            E::PruneFailed { .. } | E::AuditFailed(_) | E::HorizonExceeded { .. } => CliError::Audit(msg),
            _ => CliError::Usage(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Packing { kind } => match kind {
            PackingKind::Grid { dim, eps, out, strict } => commands::packing(commands::Shape::Grid { dim, eps }, &out, strict),
            PackingKind::Simplex { dim, eps, out, strict } => {
                if let Some(e) = eps {
                    if (e - 0.5).abs() > 1e-12 {
                        return Err(CliError::Usage(format!("the simplex packing has eps = 0.5, not {e}")));
                    }
                }
                commands::packing(commands::Shape::Simplex { dim }, &out, strict)
            }
        },
        Command::Simulate { config, out, seed } => simulate::run(&config, &out, seed),
        Command::Prune { net, points, g, depth, seed, retries, out } => {
            commands::prune(&net, &points, g, depth, seed, retries, &out)
        }
        Command::Adap { mode, gamma_star, b_star, gamma_star2, b_star2, policy, perfect, rounds, out } => {
            let policy = match policy {
                Policy::Honest => nnol::adaptive::StubPolicy::Honest,
                Policy::StrictBudget => nnol::adaptive::StubPolicy::StrictBudget,
            };
            let stubs = match mode {
                AdapMode::Single => vec![(gamma_star, b_star)],
                AdapMode::Combine => vec![(gamma_star, b_star), (gamma_star2, b_star2)],
            };
            commands::adap(&stubs, policy, perfect, rounds, &out)
        }
        Command::Net { action } => match action {
            NetAction::Lowerbound { packing, labels, out } => commands::lowerbound(&packing, &labels, &out),
            NetAction::Eval { net, points } => commands::eval(&net, &points),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
