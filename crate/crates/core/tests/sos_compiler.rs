use cbc_core::poly::{Monomial, Polynomial};
use cbc_core::sdp::{solve, SolverOptions, Status};
use cbc_core::sos::{new_program, ExprMatrix, PolyExpr};

fn p(nvars: usize, terms: &[(&[u32], f64)]) -> Polynomial {
    Polynomial::from_terms(nvars, terms.iter().map(|(e, c)| (Monomial::new(e.to_vec()), *c))).unwrap()
}

fn status_of_sos(poly: &Polynomial) -> Status {
    let mut prog = new_program(poly.nvars());
    prog.add_sos(&PolyExpr::from_poly(poly)).unwrap();
    solve(&prog.compile().unwrap(), &SolverOptions::default()).status
}

#[test]
fn square_is_sos() {
    let sq = p(1, &[(&[2], 1.0)]);
    let mut prog = new_program(1);
    prog.add_sos(&PolyExpr::from_poly(&sq)).unwrap();
    let sol = solve(&prog.compile().unwrap(), &SolverOptions::default());
    assert_eq!(sol.status, Status::Feasible);
    let vals = prog.recover(&sol);
    let g = prog.gram_matrix(&prog.sos_records()[0], &vals);
    assert!((g[(1, 1)] - 1.0).abs() < 1e-7);
    assert!(g[(0, 0)].abs() < 1e-7);
}

#[test]
fn negative_definite_is_not_sos() {
    assert_eq!(status_of_sos(&p(1, &[(&[2], -1.0), (&[0], -1.0)])), Status::Infeasible);
}

#[test]
fn shifted_squares_are_sos() {
    // (x1 - 1)^2 + (x2 + 3)^2
    let q = p(2, &[(&[2, 0], 1.0), (&[1, 0], -2.0), (&[0, 2], 1.0), (&[0, 1], 6.0), (&[0, 0], 10.0)]);
    assert_eq!(status_of_sos(&q), Status::Feasible);
}

fn matrix_status(m: &[[Polynomial; 2]; 2]) -> Status {
    let mut prog = new_program(1);
    let s = ExprMatrix::from_fn(2, 2, 1, |i, j| PolyExpr::from_poly(&m[i][j]));
    prog.add_matrix_sos(&s).unwrap();
    solve(&prog.compile().unwrap(), &SolverOptions::default()).status
}

#[test]
fn matrix_sos_cases() {
    let one = Polynomial::constant(1, 1.0);
    let zero = Polynomial::zero(1);
    let x = Polynomial::var(1, 0);
    assert_eq!(matrix_status(&[[one.clone(), zero.clone()], [zero.clone(), one.clone()]]), Status::Feasible);
    let xx = &x * &x;
    assert_eq!(matrix_status(&[[one.clone(), x.clone()], [x.clone(), xx]]), Status::Feasible);
    assert_eq!(matrix_status(&[[zero.clone(), one.clone()], [one.clone(), zero.clone()]]), Status::Infeasible);
}

mod random {
    use super::*;
    use cbc_core::poly::monomials_up_to;
    use cbc_core::sdp::min_eigenvalue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poly(rng: &mut ChaCha8Rng, nvars: usize, deg: u32) -> Polynomial {
        Polynomial::from_terms(
            nvars,
            monomials_up_to(nvars, 0, deg).into_iter().map(|m| (m, rng.random_range(-1.0..1.0))),
        )
        .unwrap()
    }

    /// Sum of as many random squares as the half-degree basis has entries.
    fn random_sos(rng: &mut ChaCha8Rng) -> Polynomial {
        let nvars = rng.random_range(1..4);
        let half = rng.random_range(1..3);
        let count = monomials_up_to(nvars, 0, half).len();
        let mut acc = Polynomial::zero(nvars);
        for _ in 0..count {
            let q = random_poly(rng, nvars, half);
            acc = &acc + &(&q * &q);
        }
        acc
    }

    fn point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn fifty_random_sums_of_squares_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..50 {
            let p = random_sos(&mut rng);
            assert_eq!(status_of_sos(&p), Status::Feasible, "instance {k}: {p}");
        }
    }

    #[test]
    fn twenty_polynomials_negative_somewhere_are_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 0..20 {
            let p = random_sos(&mut rng);
            let x = point(&mut rng, p.nvars());
            let shift = p.eval(&x).unwrap() + 1.0;
            let q = &p - &Polynomial::constant(p.nvars(), shift);
            assert!(q.eval(&x).unwrap() < 0.0);
            assert_eq!(status_of_sos(&q), Status::Infeasible, "instance {k}: {q}");
        }
    }

    /// `L(x)^T L(x) + I - t I` with `t` maximized; the certified matrix must
    /// be PSD wherever it is evaluated.
    #[test]
    fn matrix_sos_is_pointwise_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..10 {
            let n = rng.random_range(1..3);
            let l: Vec<Polynomial> = (0..4).map(|_| random_poly(&mut rng, n, 1)).collect();
            let m = [[&(&l[0] * &l[0]) + &(&l[2] * &l[2]), &(&l[0] * &l[1]) + &(&l[2] * &l[3])], [
                &(&l[0] * &l[1]) + &(&l[2] * &l[3]),
                &(&l[1] * &l[1]) + &(&l[3] * &l[3]),
            ]];
            let mut prog = new_program(n);
            let (_, t) = prog.add_scalar();
            let one = Polynomial::constant(n, 1.0);
            let s = ExprMatrix::from_fn(2, 2, n, |i, j| {
                let base = PolyExpr::from_poly(&if i == j { &m[i][j] + &one } else { m[i][j].clone() });
                if i == j {
                    base.sub(&PolyExpr::from_affine(n, t.clone()))
                } else {
                    base
                }
            });
            prog.add_matrix_sos(&s).unwrap();
            prog.set_objective(t.scaled(-1.0));
            let sol = solve(&prog.compile().unwrap(), &SolverOptions::default());
            assert_eq!(sol.status, Status::Optimal, "instance {k}");
            let vals = prog.recover(&sol);
            let tv = t.eval(&vals);
            assert!(tv >= 1.0 - 1e-6, "instance {k}: t = {tv}");
            let certified = s.eval(&vals);
            for _ in 0..100 {
                let x = point(&mut rng, n);
                let e = min_eigenvalue(&certified.eval(&x).unwrap()).unwrap();
                assert!(e >= -1e-6, "instance {k}: min eig {e} at {x:?}");
            }
            for rec in prog.sos_records() {
                assert!(min_eigenvalue(&prog.gram_matrix(rec, &vals)).unwrap() >= -1e-8);
            }
        }
    }

    #[test]
    fn empty_program_is_trivially_feasible() {
        let prog = new_program(2);
        let sdp = prog.compile().unwrap();
        assert!(sdp.rows.is_empty() && sdp.blocks.is_empty() && sdp.num_free == 0);
        assert_eq!(solve(&sdp, &SolverOptions::default()).status, Status::Feasible);
    }
}
