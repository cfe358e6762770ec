//! Adapter for an external conic solver. The problem is written in the
//! sparse text dump format, the command is run as `command... <problem>
//! <solution>`, and the solution is read back in the matching text format.
//! Solver options travel as `# key value` comment lines at the top of the
//! problem file.

use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use cbc_core::sdp::{solve, Backend, SdpProblem, SdpSolution, SolverOptions, Status};

use crate::error::CliError;

pub struct ExternalSolver {
    command: Vec<String>,
}

static CALLS: AtomicUsize = AtomicUsize::new(0);

impl ExternalSolver {
    pub fn new(command: Vec<String>) -> Self {
        assert!(!command.is_empty(), "empty solver command");
        ExternalSolver { command }
    }

    fn run(&self, prob: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, String> {
        let dir = std::env::temp_dir().join(format!(
            "cbc-{}-{}",
            std::process::id(),
            CALLS.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let result = self.run_in(&dir, prob, opts);
        let _ = std::fs::remove_dir_all(&dir);
        result
    }

    fn run_in(&self, dir: &Path, prob: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, String> {
        let input = dir.join("problem.sdp");
        let output = dir.join("solution.txt");
        std::fs::write(&input, dump_with_options(prob, opts)).map_err(|e| format!("{}: {e}", input.display()))?;
        let status = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&input)
            .arg(&output)
            .status()
            .map_err(|e| format!("cannot run `{}`: {e}", self.command[0]))?;
        if !status.success() {
            return Err(format!("`{}` exited with {status}", self.command.join(" ")));
        }
        let text = std::fs::read_to_string(&output).map_err(|e| format!("{}: {e}", output.display()))?;
        SdpSolution::from_text(prob, &text).map_err(|e| format!("{}: {e}", output.display()))
    }
}

impl Backend for ExternalSolver {
    fn name(&self) -> &str {
        "external"
    }

    fn solve(&self, prob: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
        match self.run(prob, opts) {
            Ok(sol) => sol,
            Err(e) => {
                log::error!("external solver: {e}");
                SdpSolution::failed(prob, Status::NumericalFailure, 0)
            }
        }
    }
}

pub fn dump_with_options(prob: &SdpProblem, opts: &SolverOptions) -> String {
    format!(
        "# feas_tol {:e}\n# gap_tol {:e}\n# max_iter {}\n{}",
        opts.feas_tol,
        opts.gap_tol,
        opts.max_iter,
        prob.to_text()
    )
}

/// Options embedded by [`dump_with_options`]; defaults for anything absent.
pub fn embedded_options(text: &str) -> SolverOptions {
    let mut opts = SolverOptions::default();
    for line in text.lines().map(str::trim).take_while(|l| l.starts_with('#')) {
        let mut it = line[1..].split_whitespace();
        match (it.next(), it.next()) {
            (Some("feas_tol"), Some(v)) => opts.feas_tol = v.parse().unwrap_or(opts.feas_tol),
            (Some("gap_tol"), Some(v)) => opts.gap_tol = v.parse().unwrap_or(opts.gap_tol),
            (Some("max_iter"), Some(v)) => opts.max_iter = v.parse().unwrap_or(opts.max_iter),
            _ => {}
        }
    }
    opts
}

/// Solves a dumped problem with the built-in solver and writes the solution
/// file; the reference implementation of the external protocol.
pub fn solve_dump(input: &Path, output: &Path) -> Result<Status, CliError> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let prob = SdpProblem::from_text(&text).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let sol = solve(&prob, &embedded_options(&text));
    std::fs::write(output, sol.to_text()).map_err(|e| CliError::io(output, e))?;
    Ok(sol.status)
}
