use cilab::corpus::{corpus_rng, BandLimited, Spectrum};
use cilab::field::{FieldKind, GridField, GridSpec};
use cilab::mollify::{mollify, verify_mollification_rates};
use proptest::prelude::*;

#[test]
fn commutator_order_on_fifty_pairs() {
    let grid = GridSpec::centered(2, 257, 1.0).unwrap();
    let ells = [0.3, 0.2, 0.13, 0.09];
    let spec = Spectrum { k_min: 0.5, k_max: 1.0, modes: 4, decay: 0.0 };
    let mut rng = corpus_rng(11);
    for _ in 0..50 {
        let f = BandLimited::random(2, 1, &spec, &mut rng).sample(grid);
        let g = BandLimited::random(2, 1, &spec, &mut rng).sample(grid);
        let rep = verify_mollification_rates(&f, &g, &ells, 0, 1.0).unwrap();
        let k = rep.get("iii").fitted.unwrap();
        assert!(k >= 1.7, "commutator order {k}");
    }
}

#[test]
fn affine_fields_are_reproduced() {
    let grid = GridSpec::centered(2, 129, 1.0).unwrap();
    let f = GridField::sample(grid, FieldKind::Map, 2, |x, o| {
        o[0] = 1.0 + 2.0 * x[0] - x[1];
        o[1] = -0.5 * x[1];
    });
    let m = mollify(&f, 0.2).unwrap();
    assert!(m.valid_count() > 0);
    assert!(m.sub(&f.restrict_mask(m.mask())).sup_norm() < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mollification_is_a_contraction_in_sup_norm(seed in 0u64..1000, ell in 0.05f64..0.3) {
        let grid = GridSpec::centered(2, 97, 1.0).unwrap();
        let spec = Spectrum { k_min: 1.0, k_max: 20.0, modes: 6, decay: 0.5 };
        let f = BandLimited::random(2, 1, &spec, &mut corpus_rng(seed)).sample(grid);
        let m = mollify(&f, ell).unwrap();
        prop_assert!(m.sup_norm() <= f.sup_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn mollification_commutes_with_constants(seed in 0u64..1000, c in -3.0f64..3.0) {
        let grid = GridSpec::centered(2, 97, 1.0).unwrap();
        let spec = Spectrum { k_min: 1.0, k_max: 20.0, modes: 6, decay: 0.5 };
        let f = BandLimited::random(2, 1, &spec, &mut corpus_rng(seed)).sample(grid);
        let shifted = f.map(FieldKind::Map, 1, |v, o| o[0] = v[0] + c);
        let a = mollify(&shifted, 0.15).unwrap();
        let b = mollify(&f, 0.15).unwrap();
        prop_assert!(a.sub(&b).map(FieldKind::Map, 1, |v, o| o[0] = v[0] - c).sup_norm() < 1e-12);
    }
}
