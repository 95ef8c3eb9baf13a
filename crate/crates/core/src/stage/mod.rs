//! The inductive step end to end, the parameter schedule, the initial data,
//! and the multi-stage driver.

mod initial;
mod schedule;
pub mod tiles;

pub use initial::{initial_data, BaseEmbedding, InitialData, InitialSpec, PerturbationSpec};
pub use schedule::{schedule, Ansatz, ScheduleCheck, StageParams};

use crate::config::RunConfig;
use crate::decomp::DecompSettings;
use crate::error::{Error, Result};
use crate::field::{holder_norm_with, pullback, FieldKind, GridField, GridSpec, HolderOptions, MetricField};
use crate::frame::{make_directions, normal_frame, tangent_frame, FrameField};
use crate::kallen::{kallen_iterate, DecompositionMap, IterationTrace, KallenConfig};
use crate::linalg::{sym_dim, sym_idx, sym_min_eig};
use crate::mollify::mollify;
use crate::perturb::{
    build_perturbation, iteration_stencil, ledger, metric_error_h, tau_tensors, ErrorForm, LedgerSummary, OscGeometry,
    PerturbationNorms, Variant,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Controls of a single stage that are not part of the ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOptions {
    pub decomp: DecompSettings,
    pub frame_tol: f64,
    pub tile_points: usize,
    pub holder: HolderOptions,
    pub continue_on_theta: bool,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            decomp: DecompSettings::default(),
            frame_tol: crate::perturb::FRAME_TOLERANCE,
            tile_points: 1 << 18,
            holder: HolderOptions::default(),
            continue_on_theta: true,
        }
    }
}

impl StageOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            decomp: cfg.decomp_settings(),
            frame_tol: cfg.tolerances.frame_tol,
            tile_points: cfg.tile_points,
            holder: HolderOptions { seed: cfg.seed, ..HolderOptions::default() },
            continue_on_theta: cfg.tolerances.continue_on_theta,
        }
    }
}

/// Largest constant C_r allowed for ‖w‖_r ≤ C δ^{1/2} λ^{r−1}.
pub const W_CONSTANT_LIMIT: f64 = 10.0;

/// Pass/fail of every per-stage conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageChecks {
    /// Every ledger identity within tolerance.
    pub ledger: bool,
    /// min eig(g − g^{q+1}) > 0.
    pub shortness: bool,
    /// ‖g − g^{q+1} − δ_{q+2}Id‖₀ ≤ δ_{q+2}.
    pub defect_relaxed: bool,
    /// The same with the budget δ_{q+2}λ_{q+1}^{−ε}.
    pub defect_budget: bool,
    /// ‖·‖_β ≤ δ_{q+2}λ_{q+1}^{β−ε}.
    pub defect_beta_budget: bool,
    /// ‖g − g^{q+1}‖₀ ≤ 2δ_{q+2}.
    pub contraction: bool,
    /// C_r ≤ [`W_CONSTANT_LIMIT`] for r = 0, 1, 2.
    pub w_constants: bool,
    pub theta: bool,
}

impl StageChecks {
    /// The gate for an accepted stage: ledger, shortness, relaxed defect, contraction, w constants.
    pub fn passed(&self) -> bool {
        self.ledger && self.shortness && self.defect_relaxed && self.contraction && self.w_constants
    }
}

/// Everything measured in one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub q: usize,
    pub variant: Variant,
    pub params: StageParams,
    pub schedule: ScheduleCheck,
    pub points_per_axis: usize,
    pub spacing: f64,
    pub radius_in: f64,
    pub radius_out: f64,
    pub valid_points: usize,
    pub tiles: usize,
    /// ‖g − g^{q+1} − δ_{q+2}Id‖₀.
    pub defect0: f64,
    /// ‖g − g^{q+1} − δ_{q+2}Id‖_β.
    pub defect_beta: f64,
    /// defect0/δ_{q+2}.
    pub defect_ratio0: f64,
    /// defect_beta/δ_{q+2}.
    pub defect_ratio_beta: f64,
    /// λ_{q+1}^{−ε}.
    pub budget0: f64,
    /// λ_{q+1}^{β−ε}.
    pub budget_beta: f64,
    /// ‖g − g^{q+1}‖₀.
    pub contraction0: f64,
    /// min eig(g − g^{q+1}).
    pub shortness_min_eig: f64,
    pub w: PerturbationNorms,
    /// ‖f_q‖_r, r = 0, 1, 2.
    pub kappa: Vec<f64>,
    /// ‖f_{q+1}‖_r, r = 0, 1, 2.
    pub kappa_next: Vec<f64>,
    pub h_min_eig: f64,
    pub h_deviation0: f64,
    pub h_deviation_holder: f64,
    pub tau_k_norm: f64,
    pub tau_kk_norm: f64,
    pub coeff_min: f64,
    pub coeff_max: f64,
    pub kallen: IterationTrace,
    pub ledger: LedgerSummary,
    pub checks: StageChecks,
    pub warnings: Vec<String>,
    pub wall_clock_s: f64,
}

impl StageReport {
    pub fn passed(&self) -> bool {
        self.checks.passed()
    }
}

/// Halo rows needed by a stage with `steps` coefficient iterations at the given stencil step.
pub fn stage_halo(steps: usize, stencil: usize) -> usize {
    2 * (steps * stencil + 6) + 4
}

fn resolution_check(variant: Variant, spacing: f64, lambda: f64) -> Result<()> {
    let limit = 1.0 / (variant.resolution_factor() * lambda);
    if spacing > limit {
        return Err(Error::Resolution(format!(
            "spacing {spacing:.4e} exceeds 1/({}·λ) = {limit:.4e}",
            variant.resolution_factor()
        )));
    }
    Ok(())
}

struct TileOutcome {
    h_min_eig: f64,
    h_dev0: f64,
    h_dev_holder: f64,
    tau: (f64, f64),
    coeff: (f64, f64),
    trace: IterationTrace,
    summary: LedgerSummary,
    w: PerturbationNorms,
}

#[allow(clippy::too_many_arguments)]
fn run_tile(
    fb: &GridField,
    gb: &MetricField,
    p: &StageParams,
    variant: Variant,
    opts: &StageOptions,
    core: (usize, usize),
    next: &mut GridField,
    step: &mut &'static str,
) -> Result<TileOutcome> {
    let n = fb.grid().n;
    let m = fb.components();
    let dirs = make_directions(n)?;
    *step = "pullback";
    let g_ell = pullback(fb)?;
    *step = "metric error";
    let me = metric_error_h(gb, &g_ell, p.delta_q1, p.delta_q2, p.theta, p.epsilon)?;
    if !me.theta_ok && !opts.continue_on_theta {
        return Err(Error::Hypothesis {
            detail: format!("‖h − Id‖ = {:.4} exceeds θ = {}", me.deviation_holder, p.theta),
            location: vec![],
        });
    }
    *step = "frames";
    let frames = match variant {
        Variant::Spiral => FrameField::spiral(&normal_frame(fb, 2 * dirs.len(), None)?, m),
        Variant::Strain => {
            FrameField::strain(tangent_frame(fb, &g_ell, &dirs)?, normal_frame(fb, dirs.len(), None)?, m)
        }
    };
    *step = "geometry";
    let geom = OscGeometry::new(variant, fb.clone(), g_ell, frames, dirs, p.lambda_q1, p.delta_q1, p.ell)?;
    *step = "tau tensors";
    let tau = tau_tensors(&geom);
    let tau_norms = tau.sup_norms();
    *step = "coefficient iteration";
    let map = DecompositionMap { tau_k: &tau.tau_k, tau_kk: &tau.tau_kk, dirs: &geom.dirs, settings: opts.decomp };
    let form = ErrorForm { geom: &geom, stencil: iteration_stencil(p.lambda_q1, fb.grid().spacing) };
    let kcfg = KallenConfig::new(p.kallen_steps, p.lambda_q1, p.ell);
    let (a, trace) = kallen_iterate(&me.h, &map, &form, &kcfg)?;
    let (cmin, cmax) = (0..a.a.len())
        .into_par_iter()
        .filter(|&i| a.a.is_valid(i))
        .flat_map_iter(|i| a.a.at(i).to_vec())
        .fold(|| (f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |x, y| (x.0.min(y.0), x.1.max(y.1)));
    *step = "perturbation";
    let pert = build_perturbation(variant, &a, &geom.frames, &geom.dirs, p.lambda_q1, p.delta_q1)?;
    *step = "ledger";
    let led = ledger(&geom, &a, &pert.w)?;
    let summary = led.summarize_with(core.0, core.1, opts.frame_tol)?;
    drop(led);
    *step = "norms";
    let w = pert.norms_rows(core.0, core.1)?;
    let f_next = fb.zip(&pert.w, FieldKind::Map, m, |f, wv, o| {
        for x in 0..m {
            o[x] = f[x] + wv[x];
        }
    });
    next.write_band_rows(&f_next, core.0, core.1);
    Ok(TileOutcome {
        h_min_eig: me.min_eig,
        h_dev0: me.deviation0,
        h_dev_holder: me.deviation_holder,
        tau: tau_norms,
        coeff: (cmin, cmax),
        trace,
        summary,
        w,
    })
}

fn max_norms(a: PerturbationNorms, b: PerturbationNorms) -> PerturbationNorms {
    PerturbationNorms {
        w0: a.w0.max(b.w0),
        w1: a.w1.max(b.w1),
        w2: a.w2.max(b.w2),
        c0: a.c0.max(b.c0),
        c1: a.c1.max(b.c1),
        c2: a.c2.max(b.c2),
    }
}

/// g − pullback(f) − shift·Id.
fn defect_field(g: &MetricField, f: &GridField, shift: f64) -> Result<GridField> {
    let n = g.grid().n;
    let gf = pullback(f)?;
    Ok(g.zip(&gf, FieldKind::SymTensor, sym_dim(n), |a, b, o| {
        for i in 0..n {
            for j in i..n {
                let s = sym_idx(n, i, j);
                o[s] = a[s] - b[s] - if i == j { shift } else { 0.0 };
            }
        }
    }))
}

fn min_eig_field(t: &GridField, shift: f64) -> f64 {
    let n = t.grid().n;
    (0..t.len())
        .into_par_iter()
        .filter(|&p| t.is_valid(p))
        .map(|p| {
            let mut v = [0.0; 6];
            v[..t.components()].copy_from_slice(t.at(p));
            for i in 0..n {
                v[sym_idx(n, i, i)] += shift;
            }
            sym_min_eig(n, &v[..t.components()])
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Carry out stage q: mollify, decompose, perturb, and measure.
pub fn run_stage(
    f_q: &GridField,
    g: &MetricField,
    params: &StageParams,
    variant: Variant,
    opts: &StageOptions,
) -> Result<(GridField, StageReport)> {
    let clock = Instant::now();
    let mut step: &'static str = "setup";
    let abort = |e: Error, step: &str| Error::StageAbort {
        q: params.q,
        source: Box::new(e),
        partial: Some(Box::new(serde_json::json!({ "q": params.q, "step": step, "params": params }))),
    };
    let grid = *f_q.grid();
    let m = f_q.components();
    if m != variant.target_dim(grid.n) {
        return Err(abort(Error::Config(format!("map has {m} components, {variant:?} needs {}", variant.target_dim(grid.n))), step));
    }
    resolution_check(variant, grid.spacing, params.lambda_q1).map_err(|e| abort(e, step))?;
    let mut warnings = Vec::new();
    let schedule = params.check();
    for v in &schedule.violations {
        warnings.push(format!("schedule: {v}"));
    }
    if params.lambda_ell() <= 10.0 {
        warnings.push(format!("λ_(q+1)ℓ = {:.3} is not large; decay rates are nominal only", params.lambda_ell()));
    }
    step = "map norms";
    let kappa = tiles::cr_norms(f_q, 2, opts.tile_points).map_err(|e| abort(e, step))?;
    step = "mollify";
    let f_ell = mollify(f_q, params.ell).map_err(|e| abort(e, step))?;
    let out_grid = *f_ell.grid();
    let halo = stage_halo(params.kallen_steps, iteration_stencil(params.lambda_q1, grid.spacing));
    let plan = tiles::plan(&f_ell, opts.tile_points, halo);
    if plan.is_empty() {
        return Err(abort(Error::DomainExhausted("no valid points after mollification".into()), step));
    }
    let mut next = GridField::empty(out_grid, FieldKind::Map, m);
    let mut acc: Option<TileOutcome> = None;
    for t in &plan {
        let fb = f_ell.band(t.start, t.rows);
        let gb = g.band(t.start, t.rows);
        let out = run_tile(&fb, &gb, params, variant, opts, t.local_core(), &mut next, &mut step)
            .map_err(|e| abort(e, step))?;
        acc = Some(match acc {
            None => out,
            Some(mut a) => {
                a.h_min_eig = a.h_min_eig.min(out.h_min_eig);
                a.h_dev0 = a.h_dev0.max(out.h_dev0);
                a.h_dev_holder = a.h_dev_holder.max(out.h_dev_holder);
                a.tau = (a.tau.0.max(out.tau.0), a.tau.1.max(out.tau.1));
                a.coeff = (a.coeff.0.min(out.coeff.0), a.coeff.1.max(out.coeff.1));
                a.trace.merge(&out.trace);
                a.summary.merge(&out.summary);
                a.w = max_norms(a.w, out.w);
                a
            }
        });
    }
    let acc = acc.expect("at least one tile");
    drop(f_ell);
    step = "defect";
    let d = defect_field(g, &next, params.delta_q2).map_err(|e| abort(e, step))?;
    let defect0 = d.sup_norm();
    let defect_beta = holder_norm_with(&d, 0, params.beta, &opts.holder).map_err(|e| abort(e, step))?.value;
    let shortness_min_eig = min_eig_field(&d, params.delta_q2);
    let contraction0 = d
        .map(FieldKind::SymTensor, d.components(), |v, o| {
            o.copy_from_slice(v);
            for i in 0..grid.n {
                o[sym_idx(grid.n, i, i)] += params.delta_q2;
            }
        })
        .sup_norm();
    drop(d);
    step = "map norms";
    let kappa_next = tiles::cr_norms(&next, 2, opts.tile_points).map_err(|e| abort(e, step))?;
    let budget0 = params.lambda_q1.powf(-params.epsilon);
    let budget_beta = params.lambda_q1.powf(params.beta - params.epsilon);
    let d2 = params.delta_q2;
    let theta_ok = acc.h_dev_holder <= params.theta;
    if !theta_ok {
        warnings.push(format!("‖h − Id‖ = {:.4} exceeds θ = {}", acc.h_dev_holder, params.theta));
    }
    let checks = StageChecks {
        ledger: acc.summary.verify().is_ok(),
        shortness: shortness_min_eig > 0.0,
        defect_relaxed: defect0 <= d2,
        defect_budget: defect0 <= d2 * budget0,
        defect_beta_budget: defect_beta <= d2 * budget_beta,
        contraction: contraction0 <= 2.0 * d2,
        w_constants: acc.w.max_constant() <= W_CONSTANT_LIMIT,
        theta: theta_ok,
    };
    let report = StageReport {
        q: params.q,
        variant,
        params: *params,
        schedule,
        points_per_axis: grid.points_per_axis,
        spacing: grid.spacing,
        radius_in: grid.radius,
        radius_out: out_grid.radius,
        valid_points: next.valid_count(),
        tiles: plan.len(),
        defect0,
        defect_beta,
        defect_ratio0: defect0 / d2,
        defect_ratio_beta: defect_beta / d2,
        budget0,
        budget_beta,
        contraction0,
        shortness_min_eig,
        w: acc.w,
        kappa,
        kappa_next,
        h_min_eig: acc.h_min_eig,
        h_deviation0: acc.h_dev0,
        h_deviation_holder: acc.h_dev_holder,
        tau_k_norm: acc.tau.0,
        tau_kk_norm: acc.tau.1,
        coeff_min: acc.coeff.0,
        coeff_max: acc.coeff.1,
        kallen: acc.trace,
        ledger: acc.summary,
        checks,
        warnings,
        wall_clock_s: clock.elapsed().as_secs_f64(),
    };
    Ok((next, report))
}

/// Convergence diagnostics of a multi-stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: usize,
    pub alpha_prime: f64,
    /// Largest w constant over all stages and r.
    pub c_w: f64,
    /// max/min over stages of the per-stage largest w constant.
    pub c_w_spread: f64,
    /// Σ_{q=1}^{Q} C δ_q^{1/2} λ_q^{α'}.
    pub partial_sum: f64,
    /// ‖f_Q − f_0‖_{1,α'}.
    pub holder_distance: f64,
    /// Σ ℓ_q.
    pub total_shrink: f64,
    pub margin: f64,
    pub shrink_ok: bool,
    pub all_passed: bool,
}

/// Reports, summary, and the final map of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<StageReport>,
    pub summary: RunSummary,
    pub initial: InitialData,
    pub final_map: GridField,
}

/// Parameters for stages 0..Q−1, rejecting infeasible schedules and unresolvable grids up front.
pub fn plan_schedule(cfg: &RunConfig) -> Result<Vec<StageParams>> {
    if cfg.stages == 0 {
        return Err(Error::Config("at least one stage is required".into()));
    }
    let structural = cfg.ansatz.violations();
    if !structural.is_empty() {
        return Err(Error::Infeasible(structural));
    }
    let mut params = Vec::new();
    let mut violations = Vec::new();
    for q in 0..cfg.stages {
        let p = StageParams::compute(q, &cfg.ansatz, cfg.tolerances.theta, cfg.kallen_steps);
        let c = p.check();
        violations.extend(c.violations.into_iter().filter(|v| cfg.tolerances.enforce_bound4 || !v.starts_with("bound4")));
        params.push(p);
    }
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }
    let grid = GridSpec::centered(cfg.n, cfg.grid.points_per_axis, cfg.grid.radius)?;
    let last = params.last().expect("nonempty");
    resolution_check(cfg.variant, grid.spacing, last.lambda_q1)?;
    let shrink: f64 = params.iter().map(|p| p.ell).sum();
    if shrink >= cfg.grid.radius {
        return Err(Error::DomainExhausted(format!("total shrink {shrink:.4} ≥ radius {}", cfg.grid.radius)));
    }
    Ok(params)
}

/// Run Q stages from the configured initial data.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    run_with(cfg, |_| Ok(()))
}

/// As [`run`], calling `on_stage` after each accepted stage.
pub fn run_with<F>(cfg: &RunConfig, mut on_stage: F) -> Result<RunOutcome>
where
    F: FnMut(&StageReport) -> Result<()>,
{
    let params = plan_schedule(cfg)?;
    let opts = StageOptions::from_config(cfg);
    let grid = GridSpec::centered(cfg.n, cfg.grid.points_per_axis, cfg.grid.radius)?;
    let p0 = params[0];
    let initial = initial_data(
        grid,
        cfg.variant,
        &cfg.initial,
        p0.delta_q1,
        p0.lambda_q,
        p0.beta,
        p0.epsilon,
        &opts.holder,
    )?;
    let mut f = initial.f0.clone();
    let mut reports = Vec::new();
    for p in &params {
        let (next, rep) = run_stage(&f, &initial.g, p, cfg.variant, &opts)?;
        on_stage(&rep)?;
        reports.push(rep);
        f = next;
    }
    let summary = summarize_run(cfg, &params, &reports, &f, &opts.holder)?;
    Ok(RunOutcome { reports, summary, initial, final_map: f })
}

fn summarize_run(
    cfg: &RunConfig,
    params: &[StageParams],
    reports: &[StageReport],
    f: &GridField,
    holder: &HolderOptions,
) -> Result<RunSummary> {
    let ap = cfg.alpha_prime();
    let per_stage: Vec<f64> = reports.iter().map(|r| r.w.max_constant()).collect();
    let c_w = per_stage.iter().cloned().fold(0.0, f64::max);
    let c_min = per_stage.iter().cloned().fold(f64::INFINITY, f64::min);
    let partial_sum: f64 = params.iter().map(|p| c_w * p.delta_q1.sqrt() * p.lambda_q1.powf(ap)).sum();
    let base = cfg.initial.base;
    let n = cfg.n;
    let diff = GridField::build(*f.grid(), FieldKind::Map, f.components(), |p, o| {
        if !f.is_valid(p) {
            return false;
        }
        let x = f.grid().position(p);
        base.eval(&x[..n], o);
        for (v, fv) in o.iter_mut().zip(f.at(p)) {
            *v = fv - *v;
        }
        true
    });
    let holder_distance = holder_norm_with(&diff, 1, ap, holder)?.value;
    let total_shrink: f64 = params.iter().map(|p| p.ell).sum();
    Ok(RunSummary {
        stages: reports.len(),
        alpha_prime: ap,
        c_w,
        c_w_spread: if c_min > 0.0 { c_w / c_min } else { f64::INFINITY },
        partial_sum,
        holder_distance,
        total_shrink,
        margin: cfg.grid.margin,
        shrink_ok: total_shrink < cfg.grid.margin,
        all_passed: reports.iter().all(|r| r.passed()),
    })
}

/// Series CSV header.
pub const SERIES_HEADER: [&str; 12] =
    ["q", "delta", "lambda", "ell", "defect0", "defect_beta", "w0", "w1", "w2", "minEig", "C_w", "rho_kallen"];

/// One row per stage.
pub fn series_csv(reports: &[StageReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SERIES_HEADER)?;
    for r in reports {
        let rho = r.kallen.max_rho().map(|v| format!("{v:e}")).unwrap_or_default();
        w.write_record([
            r.q.to_string(),
            format!("{:e}", r.params.delta_q1),
            format!("{:e}", r.params.lambda_q1),
            format!("{:e}", r.params.ell),
            format!("{:e}", r.defect0),
            format!("{:e}", r.defect_beta),
            format!("{:e}", r.w.w0),
            format!("{:e}", r.w.w1),
            format!("{:e}", r.w.w2),
            format!("{:e}", r.shortness_min_eig),
            format!("{:e}", r.w.max_constant()),
            rho,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
