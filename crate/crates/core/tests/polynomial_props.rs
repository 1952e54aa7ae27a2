use oulab_core::model::{MultiIndex, MAX_DIM};
use oulab_core::Polynomial;
use proptest::prelude::*;

/// Polynomials in `dim` variables with total degree at most `max_deg`.
fn poly(dim: usize, max_deg: usize) -> impl Strategy<Value = Polynomial> {
    let monomial = (prop::collection::vec(0..dim, 0..=max_deg), -1e3f64..1e3);
    prop::collection::vec(monomial, 0..6).prop_map(move |terms| {
        let terms: Vec<(MultiIndex, f64)> = terms
            .into_iter()
            .map(|(vars, c)| {
                let mut e = [0u8; MAX_DIM];
                for v in vars {
                    e[v] += 1;
                }
                (e, c)
            })
            .collect();
        Polynomial::from_terms(dim, &terms).unwrap()
    })
}

fn poly_any(max_deg: usize) -> impl Strategy<Value = Polynomial> {
    (1..=MAX_DIM).prop_flat_map(move |d| poly(d, max_deg))
}

fn triple(max_deg: usize) -> impl Strategy<Value = (Polynomial, Polynomial, Polynomial)> {
    (1..=MAX_DIM).prop_flat_map(move |d| (poly(d, max_deg), poly(d, max_deg), poly(d, max_deg)))
}

fn close(a: &Polynomial, b: &Polynomial, scale: f64) -> bool {
    a.sub(b).max_abs_coeff() <= 1e-12 * scale.max(1.0)
}

proptest! {
    #[test]
    fn display_parse_round_trip_is_exact(p in poly_any(8)) {
        let q = Polynomial::parse(&p.to_string(), p.dim()).unwrap();
        prop_assert_eq!(q, p);
    }

    #[test]
    fn full_precision_coefficients_survive(c in any::<f64>().prop_filter("finite", |c| c.is_finite()), dim in 1..=MAX_DIM) {
        let p = Polynomial::coordinate(dim, dim - 1).scale(c);
        let q = Polynomial::parse(&p.to_string(), dim).unwrap();
        prop_assert_eq!(q.max_abs_coeff().to_bits(), p.max_abs_coeff().to_bits());
    }

    #[test]
    fn addition_commutes_and_associates((a, b, c) in triple(8)) {
        prop_assert_eq!(a.add(&b), b.add(&a));
        let scale = a.max_abs_coeff() + b.max_abs_coeff() + c.max_abs_coeff();
        prop_assert!(close(&a.add(&b).add(&c), &a.add(&b.add(&c)), scale));
    }

    #[test]
    fn multiplication_commutes_associates_and_distributes((a, b, c) in triple(2)) {
        let ab = a.mul(&b).unwrap();
        let (ma, mb, mc) = (a.max_abs_coeff(), b.max_abs_coeff(), c.max_abs_coeff());
        let scale = 200.0 * ma * mb * mc.max(1.0);
        prop_assert!(close(&ab, &b.mul(&a).unwrap(), scale));
        prop_assert!(close(&ab.mul(&c).unwrap(), &a.mul(&b.mul(&c).unwrap()).unwrap(), scale));
        let lhs = a.mul(&b.add(&c)).unwrap();
        let rhs = ab.add(&a.mul(&c).unwrap());
        prop_assert!(close(&lhs, &rhs, 200.0 * ma * (mb + mc)));
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism((a, b, _c) in triple(3), x in prop::array::uniform3(-2.0f64..2.0)) {
        let x = &x[..a.dim()];
        let prod = a.mul(&b).unwrap().eval(x);
        let scale = 1e-9 * (1.0 + a.abs_coeffs().eval(&[2.0; 3][..a.dim()]) * b.abs_coeffs().eval(&[2.0; 3][..a.dim()]));
        prop_assert!((prod - a.eval(x) * b.eval(x)).abs() <= scale);
        prop_assert!((a.add(&b).eval(x) - a.eval(x) - b.eval(x)).abs() <= scale);
    }
}
