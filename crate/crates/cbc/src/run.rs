//! Subcommand implementations. Every command reads the same configuration;
//! results go to the output directory and a short summary to stdout.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cbc_core::data::{build_lifted_matrix, check_persistency, RankReport, TrajectoryData};
use cbc_core::sdp::{Backend, BuiltinSolver};
use cbc_core::synthesis::{prepare, synthesize, synthesize_with_p, CbcSolution, Prepared};
use cbc_core::verify::{
    identify_model, rollout_starts, simulate, verify, Outcome, Rollout, VerificationReport, VerifyContext,
};

use crate::config::{BackendSpec, RunConfig};
use crate::error::CliError;
use crate::external::ExternalSolver;
use crate::plot::{export_plot_data, PlotFiles};
use crate::report::{report_json, summary_text, ReportInput};
use crate::solution;
use crate::trajectory::load_csv;

pub const SOLUTION_FILE: &str = "solution.json";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const PLOT_DIR: &str = "plots";

pub struct Session {
    pub cfg: RunConfig,
    pub traj: TrajectoryData,
}

/// The configured reference certificate, re-checked with the same verifier.
pub struct ReferenceOutcome {
    pub given_levels: Option<(f64, f64)>,
    pub result: Result<(CbcSolution, VerificationReport), String>,
}

/// What a command produced. `failure` is set when the command ran to the
/// end but its verdict is negative; the output is still meaningful.
pub struct CommandOutput {
    pub stdout: String,
    pub report: Option<PathBuf>,
    pub failure: Option<CliError>,
}

impl CommandOutput {
    fn ok(stdout: String, report: Option<PathBuf>) -> Self {
        CommandOutput {
            stdout,
            report,
            failure: None,
        }
    }
}

impl Session {
    pub fn open(cfg: RunConfig) -> Result<Session, CliError> {
        let t = load_csv(&cfg.data)?;
        if (t.n, t.m) != (cfg.n, cfg.m) {
            return Err(CliError::Input(format!(
                "{}: data have n={}, m={} but the configuration declares n={}, m={}",
                cfg.data.display(),
                t.n,
                t.m,
                cfg.n,
                cfg.m
            )));
        }
        Ok(Session { cfg, traj: t.data })
    }

    pub fn backend(&self) -> Box<dyn Backend> {
        match &self.cfg.backend {
            BackendSpec::Builtin => Box::new(BuiltinSolver),
            BackendSpec::External { command } => Box::new(ExternalSolver::new(command.clone())),
        }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self.cfg.out.as_path();
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(dir)
    }

    fn prepare(&self) -> Result<Prepared, CliError> {
        Ok(prepare(&self.traj, &self.cfg.problem)?)
    }

    fn context<'a>(&'a self, prep: &'a Prepared) -> VerifyContext<'a> {
        let pb = &self.cfg.problem;
        VerifyContext {
            traj: &self.traj,
            lift: &prep.lift,
            theta: &prep.theta,
            basis: &pb.basis,
            x_set: &pb.x_set,
            x0: &pb.x0,
            xu: &pb.xu,
        }
    }

    fn load_solution(&self) -> Result<CbcSolution, CliError> {
        let path = self.cfg.out.join(SOLUTION_FILE);
        if !path.is_file() {
            return Err(CliError::Usage(format!("{} not found; run `synthesize` first", path.display())));
        }
        solution::read(&path, &self.traj)
    }

    fn write_report(&self, input: &ReportInput<'_>) -> Result<(String, PathBuf), CliError> {
        let dir = self.out_dir()?;
        let path = dir.join(REPORT_FILE);
        let text = serde_json::to_string_pretty(&report_json(input)).expect("report serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        let summary = summary_text(input);
        let spath = dir.join(SUMMARY_FILE);
        std::fs::write(&spath, &summary).map_err(|e| CliError::io(&spath, e))?;
        Ok((summary, path))
    }

    fn input<'a>(&'a self, prep: &'a Prepared) -> ReportInput<'a> {
        ReportInput {
            cfg: &self.cfg,
            traj: &self.traj,
            prep,
            solution: None,
            verification: None,
            reference: None,
            plots: None,
        }
    }

    pub fn ingest(&self) -> CommandOutput {
        let t = &self.traj;
        let file = self.cfg.data.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        CommandOutput::ok(
            format!(
                "{file}: n={} m={} T={} shift-consistent={}\n",
                t.n(),
                t.m(),
                t.samples(),
                if t.is_shift_consistent() { "yes" } else { "no" }
            ),
            None,
        )
    }

    pub fn check_rank(&self) -> Result<(RankReport, CommandOutput), CliError> {
        let lift = build_lifted_matrix(&self.traj, &self.cfg.problem.basis).map_err(|e| CliError::Input(e.to_string()))?;
        let r = check_persistency(&lift);
        let stdout = format!(
            "M={} T={} rank={} {}\n",
            r.rows,
            r.samples,
            r.rank,
            if r.pass { "PASS" } else { "FAIL" }
        );
        Ok((r, CommandOutput::ok(stdout, None)))
    }

    fn synthesize_only(&self) -> Result<(Prepared, CbcSolution), CliError> {
        let start = Instant::now();
        let backend = self.backend();
        let (prep, sol) = synthesize(&self.traj, &self.cfg.problem, backend.as_ref())?;
        log::info!("synthesis finished in {:.2?}", start.elapsed());
        solution::write(&self.out_dir()?.join(SOLUTION_FILE), &sol, &self.traj)?;
        Ok((prep, sol))
    }

    pub fn synthesize(&self) -> Result<CommandOutput, CliError> {
        let (prep, sol) = self.synthesize_only()?;
        let mut input = self.input(&prep);
        input.solution = Some(&sol);
        let (stdout, path) = self.write_report(&input)?;
        Ok(CommandOutput::ok(stdout, Some(path)))
    }

    fn reference(&self, prep: &Prepared) -> Option<ReferenceOutcome> {
        let r = self.cfg.reference.as_ref()?;
        let start = Instant::now();
        let backend = self.backend();
        let result = synthesize_with_p(&self.traj, &self.cfg.problem, &r.p, None, backend.as_ref())
            .map(|(_, sol)| {
                let report = verify(&sol, &self.context(prep), &self.cfg.verify);
                (sol, report)
            })
            .map_err(|e| e.to_string());
        log::info!("reference certificate checked in {:.2?}", start.elapsed());
        Some(ReferenceOutcome {
            given_levels: r.alpha,
            result,
        })
    }

    fn verify_loaded(&self, prep: &Prepared, sol: &CbcSolution) -> VerificationReport {
        let start = Instant::now();
        let report = verify(sol, &self.context(prep), &self.cfg.verify);
        log::info!("verification finished in {:.2?}", start.elapsed());
        report
    }

    pub fn verify(&self) -> Result<CommandOutput, CliError> {
        let prep = self.prepare()?;
        let sol = self.load_solution()?;
        let report = self.verify_loaded(&prep, &sol);
        let reference = self.reference(&prep);
        let mut input = self.input(&prep);
        input.solution = Some(&sol);
        input.verification = Some(&report);
        input.reference = reference.as_ref();
        let (stdout, path) = self.write_report(&input)?;
        Ok(verdict(&report, stdout, path))
    }

    fn rollouts(&self, prep: &Prepared, sol: &CbcSolution) -> Result<Vec<Rollout>, CliError> {
        let model = identify_model(&prep.lift, &self.traj).map_err(|e| CliError::Rejected(e.to_string()))?;
        let pb = &self.cfg.problem;
        let v = &self.cfg.verify;
        let starts = rollout_starts(&pb.x0, v.rollouts, v.seed);
        Ok(simulate(sol, &model, &pb.basis, &starts, v.horizon, &pb.xu))
    }

    pub fn simulate(&self) -> Result<CommandOutput, CliError> {
        let prep = self.prepare()?;
        let sol = self.load_solution()?;
        let rollouts = self.rollouts(&prep, &sol)?;
        let dir = self.out_dir()?.join(PLOT_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join("trajectories.csv");
        std::fs::write(&path, crate::plot::trajectories_csv(sol.p.nrows(), &rollouts))
            .map_err(|e| CliError::io(&path, e))?;
        let entries = rollouts.iter().filter(|r| r.unsafe_entry.is_some()).count();
        let diverged = rollouts.iter().filter(|r| r.diverged).count();
        let stdout = format!(
            "test oracle rollouts: {} from the initial set, horizon {}; unsafe entries {entries}, diverged {diverged}\n",
            rollouts.len(),
            self.cfg.verify.horizon
        );
        let mut out = CommandOutput::ok(stdout, None);
        if entries > 0 || diverged > 0 {
            out.failure = Some(CliError::VerificationFailed(format!(
                "{entries} rollouts entered the unsafe set, {diverged} diverged"
            )));
        }
        Ok(out)
    }

    pub fn export_plot(&self) -> Result<CommandOutput, CliError> {
        let prep = self.prepare()?;
        let sol = self.load_solution()?;
        let files = self.plots(&prep, &sol)?;
        Ok(CommandOutput::ok(
            format!("plot data written to {} ({})\n", self.cfg.out.join(PLOT_DIR).display(), files.note),
            None,
        ))
    }

    fn plots(&self, prep: &Prepared, sol: &CbcSolution) -> Result<PlotFiles, CliError> {
        let rollouts = match self.rollouts(prep, sol) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("no trajectories to plot: {e}");
                Vec::new()
            }
        };
        let pb = &self.cfg.problem;
        export_plot_data(&self.out_dir()?.join(PLOT_DIR), sol, &rollouts, &pb.x0, &pb.xu)
    }

    /// Synthesis, verification, the reference check and plot export, with
    /// one report at the end.
    pub fn all(&self) -> Result<CommandOutput, CliError> {
        let (prep, sol) = self.synthesize_only()?;
        let report = self.verify_loaded(&prep, &sol);
        let reference = self.reference(&prep);
        let plots = self.plots(&prep, &sol)?;
        let mut input = self.input(&prep);
        input.solution = Some(&sol);
        input.verification = Some(&report);
        input.reference = reference.as_ref();
        input.plots = Some(&plots);
        let (stdout, path) = self.write_report(&input)?;
        Ok(verdict(&report, stdout, path))
    }
}

fn verdict(report: &VerificationReport, stdout: String, path: PathBuf) -> CommandOutput {
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| c.outcome == Outcome::Fail)
        .map(|c| c.name)
        .collect();
    let mut out = CommandOutput::ok(stdout, Some(path));
    if !report.pass {
        out.failure = Some(CliError::VerificationFailed(failed.join(", ")));
    }
    out
}
