use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use cbc::config::{parse_config_with, BackendKind, Overrides};
use cbc::error::CliError;
use cbc::external::solve_dump;
use cbc::run::{CommandOutput, Session};
use clap::{Args, Parser, Subcommand};

/// Data-driven control barrier certificates for polynomial systems.
#[derive(Parser)]
#[command(name = "cbc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled and oracle checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Primal/dual feasibility tolerance of the conic solver.
    #[arg(long)]
    feas_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Margin epsilon in Z - epsilon*I >= 0.
    #[arg(long)]
    epsilon_pd: Option<f64>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the trajectory.
    Ingest(Common),
    /// Rank test of the lifted data matrix.
    CheckRank(Common),
    /// Solve for the certificate and the controller.
    Synthesize(Common),
    /// Re-check a stored solution.
    Verify(Common),
    /// Closed-loop rollouts under the identified test model.
    Simulate(Common),
    /// Trajectory and level-set data for plotting.
    ExportPlot(Common),
    /// Synthesize, verify, simulate and export in one run.
    All(Common),
    /// Solve a dumped conic program with the built-in solver.
    #[command(hide = true)]
    SolveDump { input: PathBuf, output: PathBuf },
}

fn session(c: &Common) -> Result<Session, CliError> {
    let ov = Overrides {
        out: c.out.clone(),
        seed: c.seed,
        feas_tol: c.feas_tol,
        max_iter: c.max_iter,
        epsilon_pd: c.epsilon_pd,
        backend: c.backend,
    };
    Session::open(parse_config_with(&c.config, &ov)?)
}

fn run(cmd: Command) -> Result<CommandOutput, CliError> {
    match cmd {
        Command::Ingest(c) => Ok(session(&c)?.ingest()),
        Command::CheckRank(c) => {
            let (r, mut out) = session(&c)?.check_rank()?;
            if !r.pass {
                out.failure = Some(CliError::Rejected(format!("lifted data matrix has rank {} < {}", r.rank, r.rows)));
            }
            Ok(out)
        }
        Command::Synthesize(c) => session(&c)?.synthesize(),
        Command::Verify(c) => session(&c)?.verify(),
        Command::Simulate(c) => session(&c)?.simulate(),
        Command::ExportPlot(c) => session(&c)?.export_plot(),
        Command::All(c) => session(&c)?.all(),
        Command::SolveDump { input, output } => {
            let status = solve_dump(&input, &output)?;
            Ok(CommandOutput {
                stdout: format!("{}\n", status.as_str()),
                report: None,
                failure: None,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CBC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(out) => {
            let _ = std::io::stdout().write_all(out.stdout.as_bytes());
            if let Some(p) = &out.report {
                eprintln!("report: {}", p.display());
            }
            match out.failure {
                Some(e) => {
                    eprintln!("cbc: {e}");
                    ExitCode::from(e.exit_code())
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("cbc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
