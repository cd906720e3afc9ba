mod commands;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netgraph::diffusion::Scheme;
use netgraph::Error;

/// Transport and diffusion on metric graphs.
#[derive(Debug, Parser)]
#[command(name = "netgraph", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a scenario and report the well-posedness checks.
    Check(Common),
    /// Run the transport solver.
    Transport(Common),
    /// Run the diffusion solver.
    Diffuse(Common),
    /// Long-term behaviour: edge classes, periods, imprimitivity.
    Analyze(Common),
    /// ε-study against the aggregated ODE.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<AggregateMode>,
    },
    /// Tool version and scenario digest, or the normalized scenario.
    Report {
        #[command(flatten)]
        common: Common,
        /// Print the scenario with all overrides applied.
        #[arg(long)]
        echo_config: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateMode {
    Flow,
    Diffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Be,
    Tr,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    #[arg(long)]
    t_final: Option<f64>,
    /// Transport shift (target cell width in travel time).
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Cells per edge.
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Comma-separated ε values, decreasing.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Start of the error window for profile comparisons.
    #[arg(long)]
    t_min: Option<f64>,
    /// Output directory, or a `.json` path for the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Treat model warnings as errors and require exact grids.
    #[arg(long)]
    strict: bool,
    /// Intermediate profile snapshots to write.
    #[arg(long)]
    snapshots: Option<usize>,
}

impl Common {
    fn apply(&self, s: &mut netgraph::scenario::SolverSpec) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { s.$f = Some(v); })*};
        }
        set!(t_final, h, dt, cells, eps, t_min, seed, snapshots);
        if let Some(sc) = self.scheme {
            s.scheme = Some(match sc {
                SchemeArg::Be => Scheme::BackwardEuler,
                SchemeArg::Tr => Scheme::Trapezoidal,
            });
        }
        if self.strict {
            s.strict = Some(true);
        }
    }
}

/// Failure of a command with its exit code.
#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "{e}"),
        }
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("NETGRAPH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // fails only if a pool exists already, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match &cli.command {
        Command::Check(c) => commands::check(c),
        Command::Transport(c) => commands::transport(c),
        Command::Diffuse(c) => commands::diffuse(c),
        Command::Analyze(c) => commands::analyze(c),
        Command::Aggregate { common, mode } => commands::aggregate(common, *mode),
        Command::Report { common, echo_config } => commands::report(common, *echo_config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
