mod common;

use cilab::bench::{identity_tensor, random_problem};
use cilab::decomp::{baseline_solve, newton_decompose, DecompProblem, DecompSettings};
use cilab::frame::make_directions;
use cilab::linalg::sym_dim;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn newton_matches_brute_force_oracle() {
    let dirs = make_directions(2).unwrap();
    let settings = DecompSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let p = random_problem(&dirs, 0.02, settings.sigma1, &mut rng);
        let seed = baseline_solve(&p.tau[..3], &dirs, &settings).unwrap();
        let got = newton_decompose(&p, &seed, &settings).unwrap();
        let want = common::oracle_decompose(&p, &dirs, 0.5, 1.2, 1e-2);
        for (x, y) in got.a.iter().zip(&want) {
            assert!((x - y).abs() <= 1e-8, "{:?} vs {:?}", got.a, want);
        }
    }
}

#[test]
fn oracle_defect_agrees_with_solver_residual() {
    let dirs = make_directions(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = random_problem(&dirs, 0.05, 0.2, &mut rng);
    let a = [0.7, 0.9, 0.8];
    let mine = common::defect(&p, &dirs, &a);
    let theirs = p.residual(&a);
    for s in 0..3 {
        assert!((mine[s] - theirs[s]).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn baseline_reconstructs_positive_tensors(d0 in 0.5f64..2.0, d1 in 0.5f64..2.0, off in -0.1f64..0.1) {
        let dirs = make_directions(2).unwrap();
        let tau = [d0, off, d1];
        if let Ok(a) = baseline_solve(&tau, &dirs, &DecompSettings::default()) {
            let p = DecompProblem::new(&tau, &dirs);
            let r = common::defect(&p, &dirs, &a);
            prop_assert!(r.iter().all(|v| v.abs() <= 1e-12 * d0.max(d1)));
            prop_assert!(a.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn newton_solutions_are_scale_covariant(c in 0.25f64..4.0, seed in 0u64..1000) {
        let dirs = make_directions(2).unwrap();
        let settings = DecompSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&dirs, 0.02, settings.sigma1, &mut rng);
        let mut q = p.clone();
        for s in 0..sym_dim(2) {
            q.tau[s] *= c;
            for k in 0..3 {
                q.tau_k[k][s] *= c.sqrt();
            }
        }
        let a = newton_decompose(&p, &baseline_solve(&p.tau[..3], &dirs, &settings).unwrap(), &settings).unwrap();
        let b = newton_decompose(&q, &baseline_solve(&q.tau[..3], &dirs, &settings).unwrap(), &settings).unwrap();
        for (x, y) in a.a.iter().zip(&b.a) {
            prop_assert!((y - c.sqrt() * x).abs() <= 1e-10 * c.sqrt());
        }
    }

    #[test]
    fn identity_baseline_scales_with_trace(c in 0.1f64..10.0) {
        let dirs = make_directions(2).unwrap();
        let tau: Vec<f64> = identity_tensor(2).iter().map(|v| v * c).collect();
        let a = baseline_solve(&tau, &dirs, &DecompSettings::default()).unwrap();
        for v in a {
            prop_assert!((v - (2.0 * c / 3.0).sqrt()).abs() <= 1e-12 * c.sqrt().max(1.0));
        }
    }
}
