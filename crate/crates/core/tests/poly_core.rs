use cbc_core::poly::{Monomial, Polynomial, COEFF_TOL};
use proptest::prelude::*;

const NVARS: usize = 3;

fn poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0u32..3, NVARS), -4i32..5), 0..6).prop_map(|terms| {
        // Small integer coefficients keep the ring identities exact.
        Polynomial::from_terms(NVARS, terms.into_iter().map(|(e, c)| (Monomial::new(e), c as f64))).unwrap()
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, NVARS)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn addition_is_commutative_and_associative(p in poly(), q in poly(), r in poly()) {
        prop_assert_eq!(&p + &q, &q + &p);
        prop_assert_eq!(&(&p + &q) + &r, &p + &(&q + &r));
    }

    #[test]
    fn multiplication_is_commutative_associative_distributive(p in poly(), q in poly(), r in poly()) {
        prop_assert_eq!(&p * &q, &q * &p);
        prop_assert_eq!(&(&p * &q) * &r, &p * &(&q * &r));
        prop_assert_eq!(&p * &(&q + &r), &(&p * &q) + &(&p * &r));
    }

    #[test]
    fn identities_and_inverses(p in poly()) {
        let zero = Polynomial::zero(NVARS);
        let one = Polynomial::constant(NVARS, 1.0);
        prop_assert_eq!(&p + &zero, p.clone());
        prop_assert_eq!(&p * &one, p.clone());
        prop_assert!((&p - &p).is_zero());
        prop_assert!((&p + &(-&p)).is_zero());
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism(p in poly(), q in poly(), x in point()) {
        let (pv, qv) = (p.eval(&x).unwrap(), q.eval(&x).unwrap());
        prop_assert!(close((&p + &q).eval(&x).unwrap(), pv + qv));
        prop_assert!(close((&p * &q).eval(&x).unwrap(), pv * qv));
    }

    #[test]
    fn normalization_is_idempotent(p in poly(), s in -1e-10f64..1e-10) {
        let noisy = &p + &Polynomial::term(Monomial::new(vec![2, 2, 2]), s);
        let once = noisy.clone().normalized();
        prop_assert_eq!(once.clone().normalized(), once.clone());
        prop_assert!(once.terms().all(|(_, c)| c.abs() >= COEFF_TOL));
    }

    #[test]
    fn degree_of_product_adds(p in poly(), q in poly()) {
        if let (Some(a), Some(b)) = (p.degree(), q.degree()) {
            prop_assert_eq!((&p * &q).degree(), Some(a + b));
        }
    }
}

#[test]
fn mismatched_variable_counts_are_rejected() {
    let a = Polynomial::var(2, 0);
    let b = Polynomial::var(3, 0);
    assert!(a.checked_add(&b).is_err());
    assert!(a.eval(&[1.0]).is_err());
}
