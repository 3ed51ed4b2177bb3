//! Invariants over randomized inputs on small grids.

use landau_spectral::functionals::m_diff_norm;
use landau_spectral::grid::{rel_l2, resample};
use landau_spectral::io::{decode_snapshot, encode_snapshot, parse_config};
use landau_spectral::ops::{bessel, bessel_m, inv_bessel, weight, weighted_min_eigenvalue, A_of, WeightOrder};
use landau_spectral::solver::gaussian;
use landau_spectral::{Field, GridSpec, SpectralPlan};
use proptest::prelude::*;

const N: usize = 8;

fn grid() -> GridSpec {
    GridSpec::new(N, 4.0).unwrap()
}

fn plan() -> SpectralPlan {
    SpectralPlan::new(grid()).unwrap()
}

fn field() -> impl Strategy<Value = Field> {
    prop::collection::vec(-1.0f64..1.0, N * N * N).prop_map(|v| Field::from_values(grid(), v).unwrap())
}

fn temps() -> impl Strategy<Value = [f64; 3]> {
    [0.6f64..1.6, 0.6f64..1.6, 0.6f64..1.6]
}

fn max_rel_mat(a: &landau_spectral::SymMatField, b: &landau_spectral::SymMatField) -> f64 {
    (0..6).map(|c| rel_l2(&a.comps[c], &b.comps[c])).fold(0.0, f64::max)
}

fn swap_axes(f: &Field) -> Field {
    let g = *f.grid();
    let mut out = f.clone();
    for i in 0..N {
        for j in 0..N {
            for k in 0..N {
                out.values_mut()[g.index(j, i, k)] = f.values()[g.index(i, j, k)];
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bessel_m_contracts_and_inverts(h in field()) {
        let p = plan();
        let mh = bessel_m(&p, &h).unwrap();
        prop_assert!(mh.norm_l2() <= h.norm_l2() * (1.0 + 1e-14));
        prop_assert!(rel_l2(&inv_bessel(&p, &mh).unwrap(), &h) <= 1e-13);
    }

    #[test]
    fn bessel_orders_compose(h in field(), b1 in 0.0f64..2.0, b2 in 0.0f64..2.0, eps in 0.1f64..2.0) {
        let p = plan();
        let two = bessel(&p, &bessel(&p, &h, b1, eps).unwrap(), b2, eps).unwrap();
        let one = bessel(&p, &h, b1 + b2, eps).unwrap();
        prop_assert!(rel_l2(&two, &one) <= 1e-12);
    }

    #[test]
    fn a_is_linear(f in field(), g in field(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let p = plan();
        let lhs = A_of(&p, &f.scale(a).axpy(b, &g)).unwrap();
        let (af, ag) = (A_of(&p, &f).unwrap(), A_of(&p, &g).unwrap());
        let rhs = landau_spectral::SymMatField {
            comps: std::array::from_fn(|c| af.comps[c].scale(a).axpy(b, &ag.comps[c])),
        };
        prop_assert!(max_rel_mat(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn weighted_min_eigenvalue_is_homogeneous(t in temps(), s in 0.1f64..10.0) {
        let p = plan();
        let f = gaussian(grid(), [0.0; 3], t);
        let (c, _) = weighted_min_eigenvalue(&A_of(&p, &f).unwrap());
        let (cs, _) = weighted_min_eigenvalue(&A_of(&p, &f.scale(s)).unwrap());
        prop_assert!((cs - s * c).abs() <= 1e-12 * (s * c).abs());
    }

    #[test]
    fn weighted_min_eigenvalue_ignores_axis_order(t in temps()) {
        let p = plan();
        let f = gaussian(grid(), [0.0; 3], t);
        let (c, _) = weighted_min_eigenvalue(&A_of(&p, &f).unwrap());
        let (cs, _) = weighted_min_eigenvalue(&A_of(&p, &swap_axes(&f)).unwrap());
        prop_assert!((cs - c).abs() <= 1e-12 * c.abs());
    }

    #[test]
    fn m_diff_is_bounded_by_weighted_difference(f in field(), g in field()) {
        let p = plan();
        let bound = weight(&f.sub(&g), WeightOrder::new(2.0).unwrap()).norm_l2();
        prop_assert!(m_diff_norm(&p, &f, &g).unwrap() <= bound * (1.0 + 1e-14));
    }

    #[test]
    fn weight_round_trips(h in field(), k in -4.0f64..6.0) {
        let back = weight(&weight(&h, WeightOrder::new(k).unwrap()), WeightOrder::new(-k).unwrap());
        prop_assert!(rel_l2(&back, &h) <= 1e-14);
    }

    #[test]
    fn resampling_up_and_down_round_trips(h in field()) {
        let fine = resample(&h, GridSpec::new(2 * N, 4.0).unwrap()).unwrap();
        prop_assert!(rel_l2(&resample(&fine, grid()).unwrap(), &h) <= 1e-13);
    }

    #[test]
    fn snapshot_round_trips(h in field(), t in -1e3f64..1e3) {
        let s = decode_snapshot(&encode_snapshot(&h, t)).unwrap();
        prop_assert_eq!(s.time.to_bits(), t.to_bits());
        prop_assert!(s.field.values().iter().zip(h.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn config_accepts_exactly_even_n(n in 8usize..200) {
        let parsed = parse_config(&format!("[grid]\nn = {n}\n"));
        prop_assert_eq!(parsed.is_ok(), n % 2 == 0);
    }
}
