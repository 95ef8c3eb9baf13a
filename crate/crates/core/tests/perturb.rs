use cilab::decomp::{CoefficientField, DecompSettings};
use cilab::field::{pullback, FieldKind, GridField, GridSpec};
use cilab::frame::{make_directions, normal_frame, tangent_frame, DirectionSet, FrameField};
use cilab::kallen::{BilinearForm, CoefficientMap, DecompositionMap};
use cilab::perturb::{
    b_from_ledger, build_perturbation, ledger, tau_tensors, ErrorForm, OscGeometry, Variant,
};

struct Fixture {
    geom: OscGeometry,
    a: CoefficientField,
}

fn fixture(variant: Variant, coef: f64, points: usize, lambda: f64, delta: f64, wobble: f64) -> Fixture {
    let n = 2;
    let grid = GridSpec::centered(n, points, 0.5).unwrap();
    let m = variant.target_dim(n);
    let f = GridField::sample(grid, FieldKind::Map, m, |x, o| {
        o.fill(0.0);
        o[0] = x[0];
        o[1] = x[1];
        o[2] = coef * x[0] * x[1];
    });
    let g = pullback(&f).unwrap();
    let dirs = make_directions(n).unwrap();
    let frames = match variant {
        Variant::Spiral => FrameField::spiral(&normal_frame(&f, 2 * dirs.len(), None).unwrap(), m),
        Variant::Strain => FrameField::strain(
            tangent_frame(&f, &g, &dirs).unwrap(),
            normal_frame(&f, dirs.len(), None).unwrap(),
            m,
        ),
    };
    let a = coefficients(&grid, &dirs, wobble);
    let geom = OscGeometry::new(variant, f, g, frames, dirs, lambda, delta, 0.05).unwrap();
    Fixture { geom, a }
}

fn coefficients(grid: &GridSpec, dirs: &DirectionSet, wobble: f64) -> CoefficientField {
    let ids = dirs.id_coeffs.clone();
    let a = GridField::sample(*grid, FieldKind::Map, dirs.len(), move |x, o| {
        for k in 0..o.len() {
            o[k] = ids[k] * (1.0 + wobble * (3.0 * x[0] + 2.0 * x[1] + k as f64).sin());
        }
    });
    CoefficientField { a, floor: 0.05 }
}

fn ledger_for(fx: &Fixture) -> cilab::perturb::ErrorLedger {
    let g = &fx.geom;
    let p = build_perturbation(g.variant, &fx.a, &g.frames, &g.dirs, g.lambda, g.delta).unwrap();
    ledger(g, &fx.a, &p.w).unwrap()
}

#[test]
fn spiral_identities_hold() {
    let fx = fixture(Variant::Spiral, 0.6, 161, 8.0, 0.01, 0.2);
    let s = ledger_for(&fx).summary().unwrap();
    for r in &s.identities {
        println!("{} {:.3e} {:.3e}", r.name, r.residual, r.tolerance);
    }
    s.verify().unwrap();
}

#[test]
fn strain_identities_hold() {
    let fx = fixture(Variant::Strain, 0.6, 241, 6.0, 0.01, 0.2);
    let s = ledger_for(&fx).summary().unwrap();
    for r in &s.identities {
        println!("{} {:.3e} {:.3e}", r.name, r.residual, r.tolerance);
    }
    s.verify().unwrap();
}

#[test]
fn flat_spiral_has_no_tau() {
    let fx = fixture(Variant::Spiral, 0.0, 81, 4.0, 0.01, 0.0);
    let (tk, tkk) = tau_tensors(&fx.geom).sup_norms();
    assert!(tk < 1e-12 && tkk < 1e-12, "{tk} {tkk}");
}

#[test]
fn zero_amplitude_gives_zero_perturbation() {
    let fx = fixture(Variant::Strain, 0.5, 161, 4.0, 0.01, 0.0);
    let zero = CoefficientField { a: fx.a.a.scale(0.0), floor: 0.05 };
    let g = &fx.geom;
    let p = build_perturbation(g.variant, &zero, &g.frames, &g.dirs, g.lambda, g.delta).unwrap();
    assert_eq!(p.w.sup_norm(), 0.0);
    let l = ledger(g, &zero, &p.w).unwrap();
    assert_eq!(l.sum.sup_norm(), 0.0);
}

#[test]
fn decomposition_form_matches_ledger_form() {
    for (variant, points) in [(Variant::Spiral, 121), (Variant::Strain, 161)] {
        let fx = fixture(variant, 0.7, points, 5.0, 0.01, 0.3);
        let tau = tau_tensors(&fx.geom);
        let map = DecompositionMap {
            tau_k: &tau.tau_k,
            tau_kk: &tau.tau_kk,
            dirs: &fx.geom.dirs,
            settings: DecompSettings::default(),
        };
        let b1 = map.apply(&fx.a).unwrap();
        let b2 = b_from_ledger(&fx.geom, &fx.a).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..b1.len() {
            if b1.is_valid(p) && b2.is_valid(p) {
                for (x, y) in b1.at(p).iter().zip(b2.at(p)) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{variant:?}: {worst:e}");
    }
}

#[test]
fn perturbation_constants_are_moderate() {
    let fx = fixture(Variant::Spiral, 0.3, 161, 8.0, 0.01, 0.0);
    let g = &fx.geom;
    let p = build_perturbation(g.variant, &fx.a, &g.frames, &g.dirs, g.lambda, g.delta).unwrap();
    let nm = p.norms().unwrap();
    assert!(nm.c0 <= 3.0 && nm.c1 <= 6.0 && nm.c2 <= 12.0, "{nm:?}");
}

#[test]
fn coarse_grid_is_rejected() {
    let fx = fixture(Variant::Spiral, 0.3, 41, 8.0, 0.01, 0.0);
    let g = &fx.geom;
    assert!(build_perturbation(g.variant, &fx.a, &g.frames, &g.dirs, g.lambda, g.delta).is_err());
}

#[test]
fn error_form_on_diagonal_matches_ledger() {
    let fx = fixture(Variant::Spiral, 0.4, 121, 5.0, 0.01, 0.3);
    let form = ErrorForm { geom: &fx.geom, stencil: 1 };
    let r = form.apply(&fx.a, &fx.a).unwrap();
    let l = ledger_for(&fx);
    let (r2, r3, r4) = (l.term("R2b").unwrap(), l.term("R3b").unwrap(), l.term("R4b").unwrap());
    let mut worst: f64 = 0.0;
    for p in 0..r.len() {
        if r.is_valid(p) && r2.is_valid(p) {
            let (a, b, c) = (r2.at(p), r3.at(p), r4.at(p));
            let want = [a[0] + b[0] + 2.0 * c[0], a[1] + b[1] + c[1] + c[2], a[3] + b[3] + 2.0 * c[3]];
            for (x, y) in r.at(p).iter().zip(want) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst < 1e-14, "{worst:e}");
}
