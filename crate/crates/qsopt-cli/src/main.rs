use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsopt_cli::commands::{self, CommandOutput};
use qsopt_cli::config::load_config;
use qsopt_cli::output::Format;
use qsopt_cli::{exit, CliError};

/// Grover search with an a-priori prior: simulation, oracle-count optimization,
/// figure sweeps and verification.
///
/// Exit status: 0 ok, 1 verification failure, 2 config error, 3 degenerate
/// geometry, 4 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "qsopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file, `-` for stdin.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "QSOPT_THREADS")]
    threads: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Success probabilities for a state, axis and iteration count.
    Simulate,
    /// Minimal oracle count for a failure budget `delta_p`.
    Optimize,
    /// Curvature factor S against p for several K (CSV "p,k,n,s").
    SweepFig3 {
        /// Run the whole verification suite first and refuse to sweep if it fails.
        #[arg(long)]
        verify_first: bool,
    },
    /// Exact dP̄/dλ² along the optimal path (CSV "k,dlambda,dpbar,ratio").
    RatioFig4 {
        #[arg(long)]
        verify_first: bool,
    },
    /// Run the oracle checks; exit 1 if any fails.
    Verify,
}

fn run(cli: &Cli) -> Result<CommandOutput, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, cli.format),
        Command::Optimize => commands::optimize(&cfg, cli.format),
        Command::SweepFig3 { verify_first } => commands::sweep_fig3(&cfg, cli.format, verify_first),
        Command::RatioFig4 { verify_first } => commands::ratio_fig4(&cfg, cli.format, verify_first),
        Command::Verify => commands::verify(&cfg, cli.format),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io { path: path.clone(), source }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(&cli).and_then(|out| emit(&cli, &out.text).map(|_| out.failed)) {
        Ok(false) => exit::OK,
        Ok(true) => {
            eprintln!("qsopt: verification failed");
            exit::VERIFICATION_FAILED
        }
        Err(e) => {
            eprintln!("qsopt: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
