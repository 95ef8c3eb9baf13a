//! Acceptance criteria: one PASS/FAIL line per criterion at its stated tolerance.

mod common;

use cilab::bench::{decompose_bench, frame_bench, random_problem, DecompBenchConfig, FrameBenchConfig};
use cilab::config::RunConfig;
use cilab::decomp::{baseline_solve, newton_decompose, DecompSettings};
use cilab::frame::make_directions;
use cilab::kallen::ScalarToy;
use cilab::mollify::{mollification_bench, BenchConfig};
use cilab::perturb::Variant;
use cilab::stage::{run_with, Ansatz, RunOutcome, StageParams, StageReport};
use cilab::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Tally {
    pass: usize,
    fail: usize,
}

impl Tally {
    fn line(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        if ok {
            self.pass += 1;
        } else {
            self.fail += 1;
        }
        println!("{} [{id}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn single_stage(variant: Variant) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.variant = variant;
    cfg.stages = 1;
    cfg.kallen_steps = 5;
    cfg.ansatz = Ansatz { a: 100.0, b: 1.05, alpha: 0.5, beta: 0.1, epsilon: 0.01 };
    cfg.grid.points_per_axis = 2048;
    cfg.grid.radius = 0.05;
    cfg.tolerances.enforce_bound4 = false;
    cfg
}

fn three_stage() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.variant = Variant::Strain;
    cfg.stages = 3;
    cfg.kallen_steps = 4;
    cfg.ansatz = Ansatz { a: 20.0, b: 1.2, alpha: 0.2, beta: 0.1, epsilon: 0.01 };
    cfg.grid.points_per_axis = 2048;
    cfg.grid.radius = 0.143;
    cfg
}

fn timed_run(cfg: &RunConfig) -> (Result<RunOutcome, Error>, Vec<StageReport>, f64) {
    let clock = Instant::now();
    let mut done = Vec::new();
    let r = run_with(cfg, |rep| {
        done.push(rep.clone());
        Ok(())
    });
    (r, done, clock.elapsed().as_secs_f64())
}

fn norm0(rep: &StageReport, term: &str) -> f64 {
    rep.ledger.norm(term).map(|t| t.norm0).unwrap_or(f64::NAN)
}

fn identity(rep: &StageReport, name: &str) -> (f64, f64, f64) {
    rep.ledger.identity(name).map(|r| (r.residual, r.estimate, r.reference)).unwrap_or((f64::NAN, f64::NAN, f64::NAN))
}

/// Contraction ratios of steps 2..=5 against 4/(λℓ).
fn kallen_line(rep: &StageReport) -> (bool, String) {
    let limit = 4.0 / rep.params.lambda_ell();
    let rhos: Vec<(usize, Option<f64>)> =
        rep.kallen.records.iter().filter(|r| (2..=5).contains(&r.step)).map(|r| (r.step, r.rho)).collect();
    let ok = rhos.len() == 4 && rhos.iter().all(|(_, r)| r.map_or(true, |v| v <= limit));
    let shown: Vec<String> =
        rhos.iter().map(|(s, r)| format!("ρ{s}={}", r.map_or("floor".into(), |v| format!("{v:.3}")))).collect();
    (ok, format!("{} ≤ {limit:.3}", shown.join(" ")))
}

fn stage_criteria(t: &mut Tally) {
    let mut master = Vec::new();
    let mut kallen = Vec::new();
    for variant in [Variant::Spiral, Variant::Strain] {
        let cfg = single_stage(variant);
        let (r, _, secs) = timed_run(&cfg);
        let rep = match r {
            Ok(out) => out.reports[0].clone(),
            Err(e) => {
                let id = if variant == Variant::Spiral { "1" } else { "2" };
                t.line(id, &format!("{variant:?} stage"), false, format!("run failed: {e}"));
                master.push((false, format!("{variant:?}: no run")));
                kallen.push((false, format!("{variant:?}: no run")));
                continue;
            }
        };
        match variant {
            Variant::Spiral => {
                let (r6, _, _) = identity(&rep, "R6-vanishes");
                let scale = rep.ledger.scale;
                let ok = r6 <= 1e-9 * scale && secs <= 300.0;
                t.line("1", "spiral R6 cancellation", ok, format!("max|R6| = {r6:.3e} ≤ 1e-9 × {scale:.3e}, {secs:.0} s ≤ 300 s"));
            }
            Variant::Strain => {
                let p = rep.params;
                let le = p.lambda_ell();
                let sym = norm0(&rep, "R6+2R7");
                let (r6, r7x2) = (norm0(&rep, "R6"), 2.0 * norm0(&rep, "R7"));
                let bound = 4.0 * p.delta_q1 / le;
                let (res, est, _) = identity(&rep, "R7-identity");
                let ok = sym <= bound && r6.min(r7x2) >= le / 4.0 * sym && res <= 10.0 * est && secs <= 300.0;
                t.line(
                    "2",
                    "strain R6+2R7 cancellation",
                    ok,
                    format!(
                        "‖sym(R6+2R7)‖ = {sym:.3e} ≤ {bound:.3e}; min(‖R6‖, ‖2R7‖) = {:.3e} ≥ {:.3e}; R7 identity {res:.3e} ≤ 10 × {est:.3e}; {secs:.0} s",
                        r6.min(r7x2),
                        le / 4.0 * sym
                    ),
                );
            }
        }
        let (res, _, reference) = identity(&rep, "master");
        master.push((res <= 1e-6 * reference, format!("{variant:?} {res:.3e} ≤ 1e-6 × {reference:.3e}")));
        let (ok, text) = kallen_line(&rep);
        kallen.push((ok, format!("{variant:?} {text}")));
    }
    t.line(
        "3",
        "master reconstruction identity",
        master.iter().all(|m| m.0),
        master.iter().map(|m| m.1.clone()).collect::<Vec<_>>().join("; "),
    );
    let toy = ScalarToy { eps: 0.01 };
    let (a, _) = toy.run(5).expect("toy iteration");
    let toy_ok = (a - toy.fixed_point()).abs() <= 1e-10 && (a - 0.99504).abs() < 5e-6;
    t.line(
        "4",
        "Källén decay",
        kallen.iter().all(|k| k.0) && toy_ok,
        format!(
            "{}; toy fixed point {a:.12} vs closed form {:.12}",
            kallen.iter().map(|k| k.1.clone()).collect::<Vec<_>>().join("; "),
            toy.fixed_point()
        ),
    );
}

fn multi_stage_criteria(t: &mut Tally) {
    let cfg = three_stage();
    let (r, done, secs) = timed_run(&cfg);
    let per_stage: Vec<String> = done
        .iter()
        .map(|r| {
            format!(
                "q={} defect/δ={:.3e} (budget {:.3}) C_w=({:.2},{:.2},{:.2}) minEig={:.2e}",
                r.q, r.defect_ratio0, r.budget0, r.w.c0, r.w.c1, r.w.c2, r.shortness_min_eig
            )
        })
        .collect();
    match r {
        Ok(out) => {
            let s = &out.summary;
            let stages_ok = out.reports.iter().all(|r| {
                r.checks.defect_relaxed && r.shortness_min_eig > 0.0 && r.w.c0 <= 10.0 && r.w.c1 <= 10.0 && r.w.c2 <= 10.0
            });
            let ok = stages_ok && s.c_w_spread <= 3.0 && secs <= 1800.0;
            t.line("5", "stage conclusion, 3 stages", ok, format!("{}; C spread {:.2}; {secs:.0} s", per_stage.join("; "), s.c_w_spread));
            let ok = s.holder_distance <= 1.2 * s.partial_sum;
            t.line(
                "10",
                "Hölder trend",
                ok,
                format!("‖f_Q − f_0‖_(1,{:.3}) = {:.4e} ≤ 1.2 × {:.4e}", s.alpha_prime, s.holder_distance, s.partial_sum),
            );
        }
        Err(e) => {
            let mut detail = per_stage.join("; ");
            if !detail.is_empty() {
                detail.push_str("; ");
            }
            let msg: String = e.to_string().chars().take(160).collect();
            t.line("5", "stage conclusion, 3 stages", false, format!("{detail}{msg}"));
            t.line("10", "Hölder trend", false, format!("needs a completed 3-stage run; {} of 3 stages finished", done.len()));
        }
    }
}

fn mollify_criterion(t: &mut Tally) {
    match mollification_bench(&BenchConfig::default()) {
        Ok(r) => {
            let parts: Vec<String> = r
                .estimates
                .iter()
                .map(|e| format!("({}) nominal {:+.1} worst deviation {:.3}", e.name, e.nominal, e.worst_deviation))
                .collect();
            t.line(
                "6",
                "mollification rates",
                r.pass,
                format!("{}; commutator order {:.3} ≥ 1.7", parts.join("; "), r.commutator_min_order),
            );
        }
        Err(e) => t.line("6", "mollification rates", false, e.to_string()),
    }
}

fn decomposition_criterion(t: &mut Tally) {
    let dirs = make_directions(2).expect("directions");
    let settings = DecompSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for _ in 0..10 {
        let p = random_problem(&dirs, 0.02, settings.sigma1, &mut rng);
        let seed = match baseline_solve(&p.tau[..3], &dirs, &settings) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if let Ok(o) = newton_decompose(&p, &seed, &settings) {
            let want = common::oracle_decompose(&p, &dirs, 0.5, 1.2, 1e-2);
            worst = o.a.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
            solved += 1;
        }
    }
    let base = decompose_bench(&DecompBenchConfig { samples: 0, ..Default::default() }).expect("baseline");
    let exact = (2.0f64 / 3.0).sqrt();
    let base_err = base.baseline.iter().map(|a| (a - exact).abs()).fold(0.0, f64::max);
    t.line(
        "7",
        "decomposition oracle",
        solved == 10 && worst <= 1e-8 && base_err <= 1e-12,
        format!("{solved}/10 solved, max |A − oracle| = {worst:.3e} ≤ 1e-8; baseline error {base_err:.3e} ≤ 1e-12"),
    );
}

fn frame_criterion(t: &mut Tally) {
    match frame_bench(&FrameBenchConfig::default()) {
        Ok(r) => t.line(
            "8",
            "frame identities",
            r.pass,
            format!(
                "spiral dots {:.3e}/{:.3e} ≤ 1e-10; strain identity {:.3e} ≤ 10 × {:.3e}; order {:.3} ≥ 3.5",
                r.spiral.tangent, r.spiral.gram, r.identity.max_residual, r.identity.truncation_estimate, r.convergence_order
            ),
        ),
        Err(e) => t.line("8", "frame identities", false, e.to_string()),
    }
}

/// (a, b, α, β, ε, q, s) and the expected (2α<2−β, bound2, bound3, bound4), evaluated at 50 digits.
const TRUTH: [((f64, f64, f64, f64, f64, usize, usize), [bool; 4]); 20] = [
    ((100.0, 1.05, 0.5, 0.1, 0.01, 0, 5), [true, true, true, false]),
    ((20.0, 1.2, 0.2, 0.1, 0.01, 0, 4), [true, true, true, true]),
    ((20.0, 1.2, 0.2, 0.1, 0.01, 1, 4), [true, true, true, true]),
    ((20.0, 1.2, 0.2, 0.1, 0.01, 2, 4), [true, true, true, true]),
    ((10.0, 1.5, 0.3, 0.2, 0.05, 0, 6), [true, true, false, true]),
    ((1000.0, 1.1, 0.4, 0.1, 0.01, 0, 8), [true, true, true, false]),
    ((50.0, 2.0, 0.1, 0.1, 0.01, 1, 3), [true, true, false, true]),
    ((100.0, 1.05, 0.96, 0.1, 0.01, 0, 5), [false, false, true, false]),
    ((100.0, 1.05, 0.9, 0.3, 0.01, 0, 5), [false, false, true, false]),
    ((5.0, 1.3, 0.2, 0.1, 0.01, 3, 10), [true, true, false, true]),
    ((200.0, 1.02, 0.5, 0.05, 0.02, 0, 50), [true, false, true, false]),
    ((2.0, 3.0, 0.5, 0.5, 0.1, 0, 2), [true, true, false, false]),
    ((30.0, 1.1, 0.7, 0.1, 0.01, 0, 4), [true, true, true, false]),
    ((100.0, 1.05, 0.5, 0.1, 0.2, 0, 5), [true, false, true, false]),
    ((100.0, 1.2, 0.3, 0.05, 0.1, 1, 10), [true, true, true, true]),
    ((1000.0, 1.3, 0.3, 0.2, 0.01, 2, 10), [true, true, true, true]),
    ((50.0, 1.2, 0.4, 0.3, 0.01, 0, 10), [true, true, true, true]),
    ((10.0, 1.5, 0.4, 0.1, 0.01, 1, 6), [true, true, true, true]),
    ((5.0, 1.5, 0.4, 0.05, 0.01, 3, 4), [true, true, true, true]),
    ((8.0, 1.8, 0.4, 0.15, 0.03, 2, 5), [true, true, false, true]),
];

fn schedule_criterion(t: &mut Tally) {
    let mut wrong = Vec::new();
    for (i, ((a, b, alpha, beta, epsilon, q, s), want)) in TRUTH.iter().enumerate() {
        let ansatz = Ansatz { a: *a, b: *b, alpha: *alpha, beta: *beta, epsilon: *epsilon };
        let check = StageParams::compute(*q, &ansatz, 0.1, *s).check();
        let alpha_ok = !ansatz.violations().iter().any(|v| v.starts_with("2α<2−β"));
        let got = [alpha_ok, check.bound2, check.bound3, check.bound4];
        if got != *want || check.feasible() != want.iter().all(|v| *v) {
            wrong.push(i + 1);
        }
    }
    let accepted = TRUTH.iter().filter(|(_, w)| w.iter().all(|v| *v)).count();
    t.line(
        "9",
        "schedule validator",
        wrong.is_empty(),
        format!("{}/20 sets classified correctly ({accepted} feasible){}", 20 - wrong.len(), if wrong.is_empty() { String::new() } else { format!(", wrong: {wrong:?}") }),
    );
}

fn main() {
    let mut t = Tally { pass: 0, fail: 0 };
    schedule_criterion(&mut t);
    decomposition_criterion(&mut t);
    frame_criterion(&mut t);
    mollify_criterion(&mut t);
    stage_criteria(&mut t);
    multi_stage_criteria(&mut t);
    println!("acceptance: {} passed, {} failed", t.pass, t.fail);
}
