mod common;

use std::collections::BTreeSet;

use cbc_core::data::TrajectoryData;
use cbc_core::sdp::BuiltinSolver;
use cbc_core::synthesis::{
    box_to_inequalities, certified_bound, invert_z, synthesize, synthesize_with_p, CbcSolution, PipelineError,
    SynthesisProblem,
};
use cbc_core::verify::{verify, Outcome, Tier, VerificationReport, VerifyContext, VerifyOptions};
use nalgebra::DMatrix;

fn run(traj: &TrajectoryData, pb: &SynthesisProblem, sol: &CbcSolution, prep: &cbc_core::synthesis::Prepared) -> VerificationReport {
    let ctx = VerifyContext {
        traj,
        lift: &prep.lift,
        theta: &prep.theta,
        basis: &pb.basis,
        x_set: &pb.x_set,
        x0: &pb.x0,
        xu: &pb.xu,
    };
    verify(sol, &ctx, &VerifyOptions::default())
}

fn assert_certificate_and_sampled(report: &VerificationReport) {
    for c in &report.checks {
        if c.tier != Tier::Oracle {
            assert_eq!(c.outcome, Outcome::Pass, "{}: {:e} vs {:e} ({})", c.name, c.value, c.bound, c.detail);
        }
    }
}

fn assert_cubic_controller(sol: &CbcSolution, n: usize) {
    assert_eq!(sol.controller.len(), 1);
    let u = &sol.controller[0];
    assert!(u.degree().unwrap_or(0) <= 3);
    assert!(u.terms().all(|(m, _)| m.nvars() == n && m.degree() >= 1));
    assert!(sol.alpha2 >= sol.alpha1 + sol.delta);
    assert!((&sol.p * &sol.z - DMatrix::identity(n, n)).amax() <= 1e-8);
}

#[test]
fn jet_end_to_end() {
    let traj = common::trajectory(&common::JET);
    let pb = common::jet_problem();
    let (prep, sol) = synthesize(&traj, &pb, &BuiltinSolver).unwrap();
    assert_cubic_controller(&sol, 2);
    assert_certificate_and_sampled(&run(&traj, &pb, &sol, &prep));
}

#[test]
fn lorenz_end_to_end() {
    let traj = common::trajectory(&common::LORENZ);
    let pb = common::lorenz_problem();
    let (prep, sol) = synthesize(&traj, &pb, &BuiltinSolver).unwrap();
    assert_cubic_controller(&sol, 3);
    let degrees: BTreeSet<u32> = sol.controller[0].terms().map(|(m, _)| m.degree()).collect();
    assert!(degrees.iter().all(|d| (1..=3).contains(d)), "{degrees:?}");
    assert_certificate_and_sampled(&run(&traj, &pb, &sol, &prep));
}

#[test]
fn jet_reference_barrier_is_certified() {
    let traj = common::trajectory(&common::JET);
    let pb = common::jet_problem();
    let (prep, sol) = synthesize_with_p(&traj, &pb, &common::jet_p(), None, &BuiltinSolver).unwrap();
    assert!(common::rel_close(sol.alpha1, common::JET_ALPHA.0, 1e-3), "{}", sol.alpha1);
    assert!(common::rel_close(sol.alpha2, common::JET_ALPHA.1, 1e-3), "{}", sol.alpha2);
    assert_certificate_and_sampled(&run(&traj, &pb, &sol, &prep));
}

#[test]
fn lorenz_reference_barrier_is_certified() {
    let traj = common::trajectory(&common::LORENZ);
    let pb = common::lorenz_problem();
    let (prep, sol) = synthesize_with_p(&traj, &pb, &common::lorenz_p(), None, &BuiltinSolver).unwrap();
    assert!(common::rel_close(sol.alpha1, common::LORENZ_ALPHA.0, 1e-3), "{}", sol.alpha1);
    assert!(common::rel_close(sol.alpha2, common::LORENZ_ALPHA.1, 1e-3), "{}", sol.alpha2);
    assert_certificate_and_sampled(&run(&traj, &pb, &sol, &prep));
}

#[test]
fn lorenz_lower_degree_is_feasible() {
    let traj = common::trajectory(&common::LORENZ);
    let mut pb = common::lorenz_problem();
    pb.deg_h = 1;
    let (_, sol) = synthesize(&traj, &pb, &BuiltinSolver).unwrap();
    assert!(sol.controller[0].degree().unwrap_or(0) <= 2);
}

#[test]
fn short_data_aborts_at_rank_stage() {
    let full = common::trajectory(&common::JET);
    let traj = TrajectoryData::from_matrices(
        full.u_minus.columns(0, 5).into_owned(),
        full.x_minus.columns(0, 5).into_owned(),
        full.x_plus.columns(0, 5).into_owned(),
    )
    .unwrap();
    match synthesize(&traj, &common::jet_problem(), &BuiltinSolver) {
        Err(e @ PipelineError::Rank(_)) => assert_eq!(e.stage(), "rank"),
        other => panic!("expected a rank failure, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn reference_p_round_trips_through_inversion() {
    for p in [common::jet_p(), common::lorenz_p()] {
        let back = invert_z(&invert_z(&p).unwrap()).unwrap();
        assert!((&back - &p).amax() <= 1e-6 * p.amax());
    }
}

#[test]
fn box_inequalities_for_case_study_sets() {
    let pb = common::jet_problem();
    let g0 = box_to_inequalities(&pb.x0).unwrap();
    assert_eq!(g0.len(), 1);
    // x1 (2 - x1) and (x2 + 2)(2 - x2)
    assert_eq!(g0[0][0].eval(&[1.0, 0.0]).unwrap(), 1.0);
    assert_eq!(g0[0][1].eval(&[0.0, 0.0]).unwrap(), 4.0);
    let gu = box_to_inequalities(&pb.xu).unwrap();
    assert_eq!(gu.len(), 2);
    assert!(gu.iter().all(|g| g.len() == 2));
}

#[test]
fn level_on_unit_box_is_corner_value() {
    let pb = common::jet_problem();
    let set = cbc_core::synthesis::SemiAlgebraicSet::single(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let (a, lambdas, _) = certified_bound(&DMatrix::identity(2, 2), &set, true, 2, &pb.solver, &BuiltinSolver).unwrap();
    // Brute-force maximum over a grid of the box.
    let mut best: f64 = 0.0;
    for i in 0..=100 {
        for j in 0..=100 {
            let (x, y) = (-1.0 + i as f64 * 0.02, -1.0 + j as f64 * 0.02);
            best = best.max(x * x + y * y);
        }
    }
    assert!((a - best).abs() <= 1e-6 * best, "{a} vs {best}");
    assert_eq!(lambdas.len(), 1);
}

#[test]
fn scaled_solution_keeps_equality_and_scales_barrier() {
    let traj = common::trajectory(&common::JET);
    let pb = common::jet_problem();
    let (prep, sol) = synthesize(&traj, &pb, &BuiltinSolver).unwrap();
    for c in [0.5, 2.0] {
        let s = sol.rescaled(c);
        assert!((&s.p * c - &sol.p).amax() <= 1e-12 * sol.p.amax());
        assert!(cbc_core::verify::equality_residual(&s, &prep.lift, &prep.theta) <= 1e-6);
    }
}
