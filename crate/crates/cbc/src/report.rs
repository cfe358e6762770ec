//! Structured report (JSON) and the human-readable summary. Both are pure
//! functions of the run's results: no timings, no absolute paths, fixed
//! ordering, so repeated runs with the same configuration and seed are
//! byte-identical.

use std::fmt::Write as _;

use cbc_core::data::TrajectoryData;
use cbc_core::synthesis::{CbcSolution, Prepared};
use cbc_core::verify::{Check, Outcome, Tier, VerificationReport};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::plot::PlotFiles;
use crate::run::ReferenceOutcome;
use crate::solution::{matrix_rows, SolveRecord};

pub const FORMAT: &str = "cbc-report/1";
/// Relative agreement asked of certified levels against given ones.
pub const LEVEL_MATCH_RTOL: f64 = 1e-3;

pub struct ReportInput<'a> {
    pub cfg: &'a RunConfig,
    pub traj: &'a TrajectoryData,
    pub prep: &'a Prepared,
    pub solution: Option<&'a CbcSolution>,
    pub verification: Option<&'a VerificationReport>,
    pub reference: Option<&'a ReferenceOutcome>,
    pub plots: Option<&'a PlotFiles>,
}

const TIER_LABELS: [(Tier, &str); 3] = [
    (Tier::Certificate, "algebraic facts about the solved program"),
    (Tier::Sampled, "grid and random-point evaluation; evidence, not proof"),
    (
        Tier::Oracle,
        "test oracle: least-squares model identified from the same trajectory, never used in synthesis",
    ),
];

fn check_json(c: &Check) -> Value {
    json!({
        "name": c.name,
        "outcome": c.outcome.as_str(),
        "value": c.value,
        "bound": c.bound,
        "detail": c.detail,
        "worst": c.worst,
    })
}

fn verification_json(r: &VerificationReport) -> Value {
    let mut tiers = serde_json::Map::new();
    for (tier, label) in TIER_LABELS {
        let checks: Vec<Value> = r.checks.iter().filter(|c| c.tier == tier).map(check_json).collect();
        let mut t = json!({
            "label": label,
            "pass": r.tier_pass(tier),
            "checks": checks,
        });
        if tier == Tier::Oracle {
            let entries = r.rollouts.iter().filter(|x| x.unsafe_entry.is_some()).count();
            let diverged = r.rollouts.iter().filter(|x| x.diverged).count();
            let worst = r.rollouts.iter().map(|x| x.max_increase).fold(f64::NEG_INFINITY, f64::max);
            t["tolerance"] = json!(r.oracle_tolerance);
            t["fit"] = match &r.oracle {
                Some(m) => json!({
                    "residual": m.residual,
                    "relative_residual": m.relative_residual,
                    "exact": m.is_exact_fit(),
                }),
                None => Value::Null,
            };
            t["rollouts"] = json!({
                "count": r.rollouts.len(),
                "unsafe_entries": entries,
                "diverged": diverged,
                "max_relative_increase": if r.rollouts.is_empty() { Value::Null } else { json!(worst) },
            });
        }
        tiers.insert(tier.as_str().to_owned(), t);
    }
    let g = &r.grid;
    json!({
        "pass": r.pass,
        "tiers": tiers,
        "grid": {
            "x0_max": g.x0_max,
            "x0_argmax": g.x0_argmax,
            "xu_min": g.xu_min,
            "xu_argmin": g.xu_argmin,
            "lmi_min_eig": g.lmi_min_eig,
            "lmi_argmin": g.lmi_argmin,
        },
    })
}

fn solution_json(sol: &CbcSolution) -> Value {
    json!({
        "P": matrix_rows(&sol.p),
        "Z": matrix_rows(&sol.z),
        "alpha1": sol.alpha1,
        "alpha2": sol.alpha2,
        "delta": sol.delta,
        "barrier": sol.barrier.to_string(),
        "controller": sol.controller.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "solves": sol.stats.iter().map(|(s, st)| solve_json(&SolveRecord::new(s, st))).collect::<Vec<_>>(),
    })
}

fn solve_json(r: &SolveRecord) -> Value {
    json!({
        "stage": r.stage,
        "status": r.status,
        "iterations": r.iterations,
        "primal_residual": r.primal_residual,
        "gap": r.gap,
        "rows": r.rows,
        "blocks": r.blocks,
        "free": r.free,
    })
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Passes when the spectral and level checks hold and certified levels
/// agree with the given ones.
pub fn reference_pass(r: &ReferenceOutcome) -> bool {
    match &r.result {
        Ok((sol, rep)) => {
            let levels = r.given_levels.is_none_or(|(a1, a2)| {
                rel_diff(sol.alpha1, a1) <= LEVEL_MATCH_RTOL && rel_diff(sol.alpha2, a2) <= LEVEL_MATCH_RTOL
            });
            levels && rep.tier_pass(Tier::Certificate) && rep.tier_pass(Tier::Sampled)
        }
        Err(_) => false,
    }
}

fn reference_json(r: &ReferenceOutcome) -> Value {
    let mut v = json!({
        "pass": reference_pass(r),
        "given_levels": r.given_levels.map(|(a, b)| [a, b]),
        "note": "P fixed, H and multipliers searched, levels certified for this P; pass requires the certificate and sampled tiers",
    });
    match &r.result {
        Ok((sol, rep)) => {
            v["certificate"] = solution_json(sol);
            v["verification"] = verification_json(rep);
            if let Some((a1, a2)) = r.given_levels {
                v["level_relative_difference"] = json!([rel_diff(sol.alpha1, a1), rel_diff(sol.alpha2, a2)]);
            }
        }
        Err(e) => v["error"] = json!(e),
    }
    v
}

pub fn report_json(input: &ReportInput<'_>) -> Value {
    let cfg = input.cfg;
    let pb = &cfg.problem;
    let prep = input.prep;
    let names: Vec<String> = (1..=cfg.n).map(|i| format!("x{i}")).collect();
    let theta: Vec<Vec<String>> = (0..prep.theta.theta.rows())
        .map(|i| (0..cfg.n).map(|j| prep.theta.theta.get(i, j).to_string()).collect())
        .collect();
    let mut v = json!({
        "format": FORMAT,
        "config": {
            "name": cfg.name,
            "seed": cfg.seed,
            "backend": cfg.backend.name(),
            "solver": {
                "feas_tol": pb.solver.feas_tol,
                "gap_tol": pb.solver.gap_tol,
                "max_iter": pb.solver.max_iter,
            },
            "deg_h": pb.deg_h,
            "deg_h_source": if cfg.deg_h_defaulted { "default: max basis degree - 1" } else { "configured" },
            "multiplier_degrees": {
                "state": pb.multipliers.state,
                "initial": pb.multipliers.initial,
                "unsafe": pb.multipliers.unsafe_set,
            },
            "epsilon": pb.epsilon,
            "delta_rel": pb.delta_rel,
            "verify": {
                "grid_density": cfg.verify.density_for(cfg.n),
                "random_points": cfg.verify.random_points,
                "theta_points": cfg.verify.theta_points,
                "rollouts": cfg.verify.rollouts,
                "horizon": cfg.verify.horizon,
            },
        },
        "data": {
            "file": cfg.data.file_name().map(|f| f.to_string_lossy().into_owned()),
            "n": input.traj.n(),
            "m": input.traj.m(),
            "samples": input.traj.samples(),
        },
        "rank": {
            "rows": prep.rank.rows,
            "samples": prep.rank.samples,
            "rank": prep.rank.rank,
            "pass": prep.rank.pass,
            "singular_values": prep.lift.singular_values,
        },
        "transform": {
            "basis": pb.basis.entries().iter().map(ToString::to_string).collect::<Vec<_>>(),
            "divisor": prep.theta.assignment.iter().map(|&j| names[j].clone()).collect::<Vec<_>>(),
            "theta": theta,
        },
    });
    if let Some(sol) = input.solution {
        v["certificate"] = solution_json(sol);
    }
    if let Some(r) = input.verification {
        v["verification"] = verification_json(r);
    }
    if let Some(r) = input.reference {
        v["reference"] = reference_json(r);
    }
    if let Some(p) = input.plots {
        let file = |p: &std::path::Path| p.file_name().map(|f| f.to_string_lossy().into_owned());
        v["plots"] = json!({
            "trajectories": file(&p.trajectories),
            "level_sets": p.level_sets.iter().map(|x| file(x)).collect::<Vec<_>>(),
            "svg": p.svg.as_deref().map(file),
            "note": p.note,
        });
    }
    v["outcome"] = json!(match input.verification {
        Some(r) if r.pass => "pass",
        Some(_) => "verification-failed",
        None => "synthesized",
    });
    v
}

fn fmt_check(s: &mut String, c: &Check) {
    let mark = match c.outcome {
        Outcome::Pass => "pass",
        Outcome::Fail => "FAIL",
        Outcome::Skipped => "skip",
    };
    let _ = writeln!(s, "    [{mark}] {:<20} {:>13.6e} vs {:>13.6e}  {}", c.name, c.value, c.bound, c.detail);
}

fn fmt_verification(s: &mut String, r: &VerificationReport, indent: &str) {
    for (tier, label) in TIER_LABELS {
        let _ = writeln!(
            s,
            "{indent}{} tier: {} ({label})",
            tier.as_str(),
            if r.tier_pass(tier) { "pass" } else { "FAIL" }
        );
        for c in r.checks.iter().filter(|c| c.tier == tier) {
            fmt_check(s, c);
        }
    }
}

pub fn summary_text(input: &ReportInput<'_>) -> String {
    let cfg = input.cfg;
    let r = &input.prep.rank;
    let mut s = String::new();
    let _ = writeln!(s, "configuration: {}", cfg.name);
    let _ = writeln!(
        s,
        "data: n={} m={} T={}; rank {} of M={} ({})",
        input.traj.n(),
        input.traj.m(),
        input.traj.samples(),
        r.rank,
        r.rows,
        if r.pass { "pass" } else { "FAIL" }
    );
    if let Some(sol) = input.solution {
        let _ = writeln!(s, "barrier: B(x) = {}", sol.barrier);
        let _ = writeln!(s, "levels: alpha1 = {:e}, alpha2 = {:e}, delta = {:e}", sol.alpha1, sol.alpha2, sol.delta);
        for (i, u) in sol.controller.iter().enumerate() {
            let _ = writeln!(s, "controller u{}: {}", i + 1, u);
        }
        let _ = writeln!(
            s,
            "deg H = {} ({})",
            sol.deg_h,
            if cfg.deg_h_defaulted { "default" } else { "configured" }
        );
    }
    if let Some(v) = input.verification {
        let _ = writeln!(s, "verification: {}", if v.pass { "PASS" } else { "FAIL" });
        fmt_verification(&mut s, v, "  ");
        if !v.rollouts.is_empty() {
            let entries = v.rollouts.iter().filter(|x| x.unsafe_entry.is_some()).count();
            let diverged = v.rollouts.iter().filter(|x| x.diverged).count();
            let _ = writeln!(
                s,
                "  test oracle rollouts: {} (tolerance {:e}); unsafe entries {entries}, diverged {diverged}",
                v.rollouts.len(),
                v.oracle_tolerance
            );
        }
    }
    if let Some(rf) = input.reference {
        let _ = writeln!(s, "reference certificate: {}", if reference_pass(rf) { "PASS" } else { "FAIL" });
        match &rf.result {
            Ok((sol, rep)) => {
                let _ = writeln!(s, "  certified levels: alpha1 = {:e}, alpha2 = {:e}", sol.alpha1, sol.alpha2);
                if let Some((a1, a2)) = rf.given_levels {
                    let _ = writeln!(
                        s,
                        "  given levels:     alpha1 = {a1:e}, alpha2 = {a2:e} (relative differences {:.2e}, {:.2e})",
                        rel_diff(sol.alpha1, a1),
                        rel_diff(sol.alpha2, a2)
                    );
                }
                fmt_verification(&mut s, rep, "  ");
            }
            Err(e) => {
                let _ = writeln!(s, "  error: {e}");
            }
        }
    }
    if let Some(p) = input.plots {
        let _ = writeln!(s, "plots: {}", p.note);
    }
    s
}
