use cilab::field::{read_container, write_container, FieldKind, GridField, GridSpec};
use cilab::kallen::ScalarToy;
use cilab::stage::{Ansatz, StageParams};
use proptest::prelude::*;

fn ansatz() -> impl Strategy<Value = Ansatz> {
    (2.0f64..1000.0, 1.01f64..2.0, 0.05f64..0.9, 0.05f64..0.5, 0.001f64..0.2)
        .prop_map(|(a, b, alpha, beta, epsilon)| Ansatz { a, b, alpha, beta, epsilon })
}

proptest! {
    #[test]
    fn ell_solves_its_defining_power_law(an in ansatz(), q in 0usize..4) {
        let p = StageParams::compute(q, &an, 0.1, 5);
        let lhs = p.ell.ln() * (2.0 - an.beta);
        let rhs = (an.beta - 2.0 - an.epsilon) * p.lambda_q.ln() + (p.delta_q1 / p.delta_q).ln();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn amplitudes_decrease_and_frequencies_increase(an in ansatz(), q in 0usize..4) {
        let p = StageParams::compute(q, &an, 0.1, 5);
        prop_assert!(p.delta_q > p.delta_q1 && p.delta_q1 > p.delta_q2);
        prop_assert!(p.lambda_q < p.lambda_q1);
        prop_assert_eq!(p.lambda_q1, an.lambda(q as i64 + 1));
    }

    #[test]
    fn feasibility_is_the_conjunction_of_its_parts(an in ansatz(), q in 0usize..3, s in 1usize..12) {
        let p = StageParams::compute(q, &an, 0.1, s);
        let c = p.check();
        prop_assert_eq!(c.feasible(), an.violations().is_empty() && c.bound2 && c.bound3 && c.bound4);
    }

    #[test]
    fn toy_residual_telescopes(eps in 0.0f64..0.3, steps in 2usize..8) {
        let toy = ScalarToy { eps };
        let (a, trace) = toy.run(steps).unwrap();
        for r in &trace.records[1..] {
            prop_assert!(r.telescoping.unwrap() <= 1e-14);
        }
        let e = (1.0 - a * a - eps * a * a).abs();
        prop_assert!(e <= eps.powi(steps as i32) * 2.0 + 1e-15);
    }

    #[test]
    fn container_round_trips(n in 1usize..3, points in 5usize..12, comps in 1usize..4, seed in 0u64..1000) {
        let g = GridSpec::centered(n, points, 0.7).unwrap();
        let f = GridField::build(g, FieldKind::Map, comps, |p, o| {
            for (c, v) in o.iter_mut().enumerate() {
                *v = ((p as u64 * 31 + c as u64 * 7 + seed) % 97) as f64 / 13.0 - 3.0;
            }
            (p as u64 + seed) % 5 != 0
        });
        let mut buf = Vec::new();
        write_container(&mut buf, &f).unwrap();
        let back = read_container(buf.as_slice()).unwrap();
        prop_assert_eq!(back.valid_count(), f.valid_count());
        for p in 0..f.len() {
            prop_assert_eq!(back.is_valid(p), f.is_valid(p));
            if f.is_valid(p) {
                prop_assert_eq!(back.at(p), f.at(p));
            }
        }
    }
}
