mod common;

use cbc_core::data::{build_lifted_matrix, build_transform, check_persistency, TrajectoryData};
use cbc_core::poly::{Monomial, PolyMatrix, Polynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn entry(n: usize, text: &str) -> Polynomial {
    match text {
        "0" => Polynomial::zero(n),
        "1" => Polynomial::constant(n, 1.0),
        t => Polynomial::term(Monomial::parse(t, n).unwrap(), 1.0),
    }
}

fn table(n: usize, rows: &[&[&str]]) -> PolyMatrix {
    PolyMatrix::from_fn(rows.len(), n, n, |i, j| entry(n, rows[i][j]))
}

#[test]
fn jet_theta_matches_reference_table() {
    let pb = common::jet_problem();
    let t = build_transform(&pb.basis, &pb.overrides).unwrap();
    let want = table(
        2,
        &[
            &["1", "0"],
            &["0", "1"],
            &["x1", "0"],
            &["0", "x1"],
            &["0", "x2"],
            &["x1^2", "0"],
            &["x1*x2", "0"],
            &["0", "x1*x2"],
            &["0", "x2^2"],
        ],
    );
    assert_eq!(t.theta, want);
    assert!(t.satisfies_identity(&pb.basis));
}

#[test]
fn lorenz_theta_matches_reference_table() {
    let pb = common::lorenz_problem();
    let t = build_transform(&pb.basis, &pb.overrides).unwrap();
    let want = table(
        3,
        &[&["1", "0", "0"], &["0", "1", "0"], &["0", "0", "1"], &["x2", "0", "0"], &["0", "x3", "0"], &["0", "0", "x1"]],
    );
    assert_eq!(t.theta, want);
    assert!(t.satisfies_identity(&pb.basis));
}

#[test]
fn theta_identity_holds_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for pb in [common::jet_problem(), common::lorenz_problem()] {
        let t = build_transform(&pb.basis, &pb.overrides).unwrap();
        let n = pb.basis.nvars();
        for _ in 0..200 {
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-12.0..12.0)).collect();
            let lhs = t.theta.eval(&z).unwrap() * nalgebra::DVector::from_row_slice(&z);
            let rhs = pb.basis.eval(&z);
            for i in 0..lhs.len() {
                assert!((lhs[i] - rhs[i]).abs() <= 1e-12 * (1.0 + rhs[i].abs()), "{z:?}");
            }
        }
    }
}

#[test]
fn bundled_data_ranks() {
    for (traj, pb, m) in [
        (common::trajectory(&common::JET), common::jet_problem(), 9),
        (common::trajectory(&common::LORENZ), common::lorenz_problem(), 6),
    ] {
        let lift = build_lifted_matrix(&traj, &pb.basis).unwrap();
        let r = check_persistency(&lift);
        assert_eq!((r.rows, r.samples, r.rank, r.pass), (m, 15, m, true));
    }
}

#[test]
fn lifted_matrix_matches_printed_lorenz_columns() {
    let traj = common::trajectory(&common::LORENZ);
    let lift = build_lifted_matrix(&traj, &common::lorenz_problem().basis).unwrap();
    // First and last columns as printed (three to four significant digits).
    let first = [1.5, 1.5, 1.5, 2.25, 2.25, 2.25];
    let last = [1.557, 2.35, 1.476, 3.659, 3.468, 2.299];
    for i in 0..6 {
        assert!((lift.m_minus[(i, 0)] - first[i]).abs() < 5e-3);
        assert!((lift.m_minus[(i, 14)] - last[i]).abs() < 5e-3);
    }
}

#[test]
fn short_trajectory_fails_rank() {
    let traj = common::trajectory(&common::JET);
    let short = TrajectoryData::from_matrices(
        traj.u_minus.columns(0, 5).into_owned(),
        traj.x_minus.columns(0, 5).into_owned(),
        traj.x_plus.columns(0, 5).into_owned(),
    )
    .unwrap();
    let lift = build_lifted_matrix(&short, &common::jet_problem().basis).unwrap();
    let r = check_persistency(&lift);
    assert_eq!((r.rows, r.samples), (9, 5));
    assert!(!r.pass);
}
