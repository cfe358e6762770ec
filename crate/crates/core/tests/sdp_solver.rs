use cbc_core::sdp::{min_eigenvalue, solve, SdpProblem, SdpSolution, SolverOptions, SparseRow, Status};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn upper_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * d - i * (i + 1) / 2 + j
}

/// min trace(X) with X = I + S, S PSD; X held in free scalars.
fn min_trace(n: usize) -> SdpProblem {
    let nx = n * (n + 1) / 2;
    let mut rows = Vec::new();
    for i in 0..n {
        for j in i..n {
            let k = upper_index(n, i, j);
            rows.push(SparseRow {
                coeffs: vec![(k, 1.0), (nx + k, -1.0)],
                rhs: if i == j { 1.0 } else { 0.0 },
            });
        }
    }
    SdpProblem {
        blocks: vec![n],
        num_free: nx,
        rows,
        objective: (0..n).map(|i| (upper_index(n, i, i), 1.0)).collect(),
    }
}

#[test]
fn min_trace_over_shifted_cone() {
    for n in [2, 3, 5] {
        let sol = solve(&min_trace(n), &SolverOptions::default());
        assert_eq!(sol.status, Status::Optimal, "n = {n}");
        assert!((sol.objective - n as f64).abs() <= 1e-7, "n = {n}: {}", sol.objective);
        for i in 0..n {
            for j in i..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((sol.free[upper_index(n, i, j)] - want).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn negative_diagonal_is_infeasible() {
    let prob = SdpProblem {
        blocks: vec![2],
        num_free: 0,
        rows: vec![SparseRow { coeffs: vec![(0, 1.0)], rhs: -1.0 }],
        objective: vec![],
    };
    let sol = solve(&prob, &SolverOptions::default());
    assert_eq!(sol.status, Status::Infeasible);
    let y = sol.certificate.expect("certificate");
    assert!(y[0] * -1.0 > 0.0);
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

#[test]
fn random_interior_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let blocks = vec![rng.random_range(1..5), rng.random_range(2..6)];
        let nfree = rng.random_range(0..4);
        let mut x = vec![0.0; nfree];
        for v in x.iter_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        for &d in &blocks {
            let m = random_psd(&mut rng, d);
            for i in 0..d {
                for j in i..d {
                    x.push(m[(i, j)]);
                }
            }
        }
        let nv = x.len();
        let nrows = rng.random_range(1..nv);
        let rows: Vec<SparseRow> = (0..nrows)
            .map(|_| {
                let mut coeffs = Vec::new();
                for j in 0..nv {
                    if rng.random_bool(0.5) {
                        coeffs.push((j, rng.random_range(-1.0..1.0)));
                    }
                }
                let rhs = coeffs.iter().map(|&(j, c)| c * x[j]).sum();
                SparseRow { coeffs, rhs }
            })
            .collect();
        let prob = SdpProblem { blocks, num_free: nfree, rows, objective: vec![] };
        let sol = solve(&prob, &SolverOptions::default());
        assert_eq!(sol.status, Status::Feasible);
        assert!(sol.primal_residual <= 1e-8);
        for b in &sol.blocks {
            assert!(min_eigenvalue(b).unwrap() >= -1e-8);
        }
    }
}

/// Farkas construction: rows with `sum y_i a_i = -svec(S)`, `S` positive
/// definite, and `b^T y = 1`, so no PSD point satisfies the rows.
fn planted_infeasible(rng: &mut ChaCha8Rng) -> (SdpProblem, Vec<f64>) {
    let blocks = vec![rng.random_range(1..4), rng.random_range(2..5)];
    let mut target = Vec::new();
    for &d in &blocks {
        let s = random_psd(rng, d);
        for i in 0..d {
            for j in i..d {
                // Off-diagonal scalars appear twice in the inner product.
                target.push(if i == j { -s[(i, i)] } else { -2.0 * s[(i, j)] });
            }
        }
    }
    let nv = target.len();
    let m = rng.random_range(2..6);
    let y: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut dense: Vec<Vec<f64>> = (0..m - 1).map(|_| (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let last: Vec<f64> = (0..nv)
        .map(|j| (target[j] - (0..m - 1).map(|i| y[i] * dense[i][j]).sum::<f64>()) / y[m - 1])
        .collect();
    dense.push(last);
    let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let by: f64 = (0..m - 1).map(|i| b[i] * y[i]).sum();
    b[m - 1] = (1.0 - by) / y[m - 1];
    let rows = dense
        .into_iter()
        .zip(&b)
        .map(|(r, &rhs)| SparseRow {
            coeffs: r.into_iter().enumerate().collect(),
            rhs,
        })
        .collect();
    (SdpProblem { blocks, num_free: 0, rows, objective: vec![] }, y)
}

#[test]
fn planted_infeasible_instances_are_certified() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..10 {
        let (prob, _) = planted_infeasible(&mut rng);
        let sol = solve(&prob, &SolverOptions::default());
        assert_eq!(sol.status, Status::Infeasible, "instance {k}");
        let cert = sol.certificate.expect("certificate");
        let by: f64 = prob.rows.iter().zip(&cert).map(|(r, c)| r.rhs * c).sum();
        assert!(by > 0.0, "instance {k}: b^T y = {by}");
    }
}

#[test]
fn solves_are_bit_reproducible() {
    let a = solve(&min_trace(3), &SolverOptions::default());
    let b = solve(&min_trace(3), &SolverOptions::default());
    assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn optimal_gap_is_small() {
    let sol = solve(&min_trace(5), &SolverOptions::default());
    assert!(sol.gap <= 1e-7 * (1.0 + sol.objective.abs()));
}

#[test]
fn solution_text_round_trip() {
    let prob = min_trace(3);
    let sol = solve(&prob, &SolverOptions::default());
    let back = SdpSolution::from_text(&prob, &sol.to_text()).unwrap();
    assert_eq!(back.status, sol.status);
    assert_eq!(back.iterations, sol.iterations);
    assert_eq!(back.x, sol.x);
    assert_eq!(back.y, sol.y);
    assert_eq!(back.free, sol.free);
    assert_eq!(back.objective, sol.objective);

    let infeasible = SdpProblem {
        blocks: vec![2],
        num_free: 0,
        rows: vec![SparseRow { coeffs: vec![(0, 1.0)], rhs: -1.0 }],
        objective: vec![],
    };
    let sol = solve(&infeasible, &SolverOptions::default());
    let back = SdpSolution::from_text(&infeasible, &sol.to_text()).unwrap();
    assert_eq!(back.status, Status::Infeasible);
    assert_eq!(back.certificate, sol.certificate);

    assert!(SdpSolution::from_text(&prob, "solution\nstatus maybe\n").is_err());
    let truncated: String = sol.to_text().lines().take(6).map(|l| format!("{l}\n")).collect();
    assert!(SdpSolution::from_text(&infeasible, &truncated).is_err());
}
