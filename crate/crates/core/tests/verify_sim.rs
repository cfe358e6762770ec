mod common;

use cbc_core::data::{build_lifted_matrix, build_transform, MonomialBasis, TrajectoryData};
use cbc_core::model::PolySystem;
use cbc_core::sdp::BuiltinSolver;
use cbc_core::synthesis::{
    extract_controller, quadratic_form, MultiplierDegrees, synthesize, synthesize_with_p, BoxSet, CbcSolution, SemiAlgebraicSet,
    SynthesisProblem,
};
use cbc_core::verify::{
    closed_loop_step, eval_controller, identify_model, level_extreme, level_set_points, simulate, verify, Outcome,
    Tier, VerifyContext, VerifyError, VerifyOptions,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(rng: &mut ChaCha8Rng, n: usize, deg: u32) -> PolySystem {
    let basis = MonomialBasis::up_to_degree(n, deg);
    let a = DMatrix::from_fn(n, basis.len(), |i, j| {
        if j < n {
            if i == j {
                0.5
            } else {
                rng.random_range(-0.1..0.1)
            }
        } else {
            rng.random_range(-0.05..0.05)
        }
    });
    let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.5..1.0));
    PolySystem::new(basis, a, b).unwrap()
}

fn excite(sys: &PolySystem, rng: &mut ChaCha8Rng, samples: usize) -> TrajectoryData {
    let x0: Vec<f64> = (0..sys.n()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let inputs: Vec<Vec<f64>> = (0..samples).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    sys.rollout(&x0, &inputs).unwrap()
}

/// A solution with `H = M-^+ theta Z` for `Z = I`: `M- H = theta Z` holds exactly,
/// which is all the closed-loop identity needs.
fn pseudo_inverse_solution(traj: &TrajectoryData, sys: &PolySystem) -> CbcSolution {
    let n = sys.n();
    let lift = build_lifted_matrix(traj, &sys.basis).unwrap();
    let theta = build_transform(&sys.basis, &Default::default()).unwrap();
    let pinv = lift.m_minus.clone().pseudo_inverse(1e-14).unwrap();
    let h = theta.theta.left_mul_constant(&pinv).unwrap();
    let p = DMatrix::identity(n, n);
    let (controller, gain) = extract_controller(&traj.u_minus, &h, &p);
    CbcSolution {
        barrier: quadratic_form(&p),
        z: p.clone(),
        p,
        h,
        alpha1: 1.0,
        alpha2: 2.0,
        delta: 1e-3,
        controller,
        gain,
        lambda: Vec::new(),
        lambda0: Vec::new(),
        lambda_u: Vec::new(),
        deg_h: 1,
        multipliers: MultiplierDegrees::default(),
        epsilon: 1e-6,
        stats: Vec::new(),
    }
}

#[test]
fn identification_and_closed_loop_equivalence_on_synthetic_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (n, deg) in [(2, 2), (2, 3), (3, 2)] {
        let sys = random_system(&mut rng, n, deg);
        let samples = sys.basis.len() + 1 + 6;
        let traj = excite(&sys, &mut rng, samples);
        let lift = build_lifted_matrix(&traj, &sys.basis).unwrap();
        let model = identify_model(&lift, &traj).unwrap();
        assert!((&model.a_hat - &sys.a).amax() <= 1e-8, "n={n} deg={deg}");
        assert!((&model.b_hat - &sys.b).amax() <= 1e-8, "n={n} deg={deg}");
        assert!(model.is_exact_fit());

        let sol = pseudo_inverse_solution(&traj, &sys);
        for _ in 0..500 {
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u = eval_controller(&sol, &z);
            let oracle = model.step(&sys.basis, &z, &u);
            let data = closed_loop_step(&z, &sol, &traj);
            let truth = sys.step(&z, &u);
            assert!((&oracle - &data).amax() <= 1e-6 * (1.0 + data.amax()), "n={n} deg={deg} z={z:?}");
            assert!((&truth - &data).amax() <= 1e-6 * (1.0 + data.amax()));
        }
    }
}

#[test]
fn too_few_samples_leave_the_oracle_unavailable() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sys = random_system(&mut rng, 2, 2);
    let traj = excite(&sys, &mut rng, sys.basis.len());
    let lift = build_lifted_matrix(&traj, &sys.basis).unwrap();
    assert!(matches!(identify_model(&lift, &traj), Err(VerifyError::OracleUnavailable { .. })));
}

#[test]
fn bundled_data_oracle_is_available_but_not_exact() {
    let traj = common::trajectory(&common::JET);
    let lift = build_lifted_matrix(&traj, &common::jet_problem().basis).unwrap();
    let model = identify_model(&lift, &traj).unwrap();
    assert_eq!((model.a_hat.shape(), model.b_hat.shape()), ((2, 9), (2, 1)));
    assert!(!model.is_exact_fit());
    assert!(model.relative_residual < 1e-3);
}

#[test]
fn origin_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sys = random_system(&mut rng, 2, 2);
    let traj = excite(&sys, &mut rng, 12);
    let sol = pseudo_inverse_solution(&traj, &sys);
    assert_eq!(closed_loop_step(&[0.0, 0.0], &sol, &traj).amax(), 0.0);
}

#[test]
fn reference_jet_barrier_grid_extremes() {
    let pb = common::jet_problem();
    let p = common::jet_p();
    let (max0, at0) = level_extreme(&p, &pb.x0, 201, true);
    let (minu, atu) = level_extreme(&p, &pb.xu, 201, false);
    assert!(common::rel_close(max0, common::JET_ALPHA.0, 1e-3), "{max0}");
    assert!(common::rel_close(minu, common::JET_ALPHA.1, 1e-3), "{minu}");
    assert!((max0 - 1.93923e5).abs() < 1.0 && at0 == vec![2.0, 2.0]);
    assert!((minu - 3.03005e5).abs() < 1.0 && atu.iter().all(|v| v.abs() == 2.5));
}

#[test]
fn level_set_samples_lie_on_the_level_set() {
    for (p, alpha, count) in [(common::jet_p(), 1.9392e5, 720), (common::lorenz_p(), 3.5776e5, 40 * 40)] {
        let pts = level_set_points(&p, alpha, if p.nrows() == 2 { 720 } else { 40 });
        assert_eq!(pts.len(), count);
        for x in pts {
            let v = DVector::from_vec(x);
            assert!((v.dot(&(&p * &v)) - alpha).abs() <= 1e-9 * alpha);
        }
    }
}

#[test]
fn start_inside_unsafe_set_is_flagged_immediately() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sys = random_system(&mut rng, 2, 2);
    let traj = excite(&sys, &mut rng, 12);
    let lift = build_lifted_matrix(&traj, &sys.basis).unwrap();
    let model = identify_model(&lift, &traj).unwrap();
    let sol = pseudo_inverse_solution(&traj, &sys);
    let xu = SemiAlgebraicSet::new(vec![BoxSet::new(vec![2.5, 2.5], vec![5.0, 5.0])]).unwrap();
    let r = simulate(&sol, &model, &sys.basis, &[vec![3.0, 3.0]], 5, &xu);
    assert_eq!(r[0].unsafe_entry, Some(0));
}

fn jet_reference() -> (TrajectoryData, SynthesisProblem, cbc_core::synthesis::Prepared, CbcSolution) {
    let traj = common::trajectory(&common::JET);
    let pb = common::jet_problem();
    let (prep, sol) = synthesize_with_p(&traj, &pb, &common::jet_p(), None, &BuiltinSolver).unwrap();
    (traj, pb, prep, sol)
}

fn quick() -> VerifyOptions {
    VerifyOptions {
        grid_density: 41,
        rollouts: 5,
        horizon: 10,
        ..VerifyOptions::default()
    }
}

#[test]
fn negated_certificate_fails_positivity_and_initial_level() {
    let (traj, pb, prep, sol) = jet_reference();
    let bad = sol.rescaled(-1.0);
    let ctx = VerifyContext {
        traj: &traj,
        lift: &prep.lift,
        theta: &prep.theta,
        basis: &pb.basis,
        x_set: &pb.x_set,
        x0: &pb.x0,
        xu: &pb.xu,
    };
    let r = verify(&bad, &ctx, &quick());
    assert!(!r.pass);
    assert_eq!(r.check("p_positive").unwrap().outcome, Outcome::Fail);
    assert_eq!(r.check("x0_grid").unwrap().outcome, Outcome::Fail);
}

#[test]
fn lowered_unsafe_level_trips_only_the_gap_check() {
    let (traj, pb, prep, mut sol) = jet_reference();
    sol.alpha2 = sol.alpha1 + 0.5 * sol.delta;
    let ctx = VerifyContext {
        traj: &traj,
        lift: &prep.lift,
        theta: &prep.theta,
        basis: &pb.basis,
        x_set: &pb.x_set,
        x0: &pb.x0,
        xu: &pb.xu,
    };
    let r = verify(&sol, &ctx, &quick());
    assert_eq!(r.check("xu_grid").unwrap().outcome, Outcome::Pass);
    assert_eq!(r.check("level_gap").unwrap().outcome, Outcome::Fail);
}

/// Exact data from a known contracting system: every tier, including the
/// simulated rollouts, must pass.
#[test]
fn exact_synthetic_data_pass_every_tier() {
    let basis = common::jet_problem().basis;
    let mut a = DMatrix::zeros(2, basis.len());
    a[(0, 0)] = 0.5;
    a[(0, 1)] = 0.1;
    a[(1, 1)] = 0.6;
    a[(1, 2)] = 0.02;
    a[(1, 8)] = -0.001;
    let sys = PolySystem::new(basis.clone(), a, DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let traj = excite(&sys, &mut rng, 15);
    let mut pb = common::jet_problem();
    pb.overrides = Default::default();
    let (prep, sol) = synthesize(&traj, &pb, &BuiltinSolver).unwrap();
    let ctx = VerifyContext {
        traj: &traj,
        lift: &prep.lift,
        theta: &prep.theta,
        basis: &pb.basis,
        x_set: &pb.x_set,
        x0: &pb.x0,
        xu: &pb.xu,
    };
    let r = verify(&sol, &ctx, &VerifyOptions::default());
    for c in &r.checks {
        assert_ne!(c.outcome, Outcome::Fail, "{}: {:e} vs {:e} ({})", c.name, c.value, c.bound, c.detail);
    }
    assert!(r.oracle.as_ref().unwrap().is_exact_fit());
    assert!(r.tier_pass(Tier::Oracle) && r.rollouts.len() == 100);
}
