//! The almost-fixed-point coefficient iteration a⁽ˢ⁺¹⁾ = F(T − R(a⁽ˢ⁾)).
//!
//! F inverts the quadratic map b(a, a); R is a bilinear error form. With this
//! update the residual E_s = T − b(a⁽ˢ⁾) − R(a⁽ˢ⁾) telescopes to
//! R(a⁽ˢ⁻¹⁾) − R(a⁽ˢ⁾) up to solver tolerance.

use crate::decomp::{decompose_field, CoefficientField, DecompSettings};
use crate::frame::DirectionSet;
use crate::linalg::sym_dim;
use crate::error::{Error, Result};
use crate::field::{cr_norm, FieldKind, GridField, GridSpec};
use serde::{Deserialize, Serialize};

/// The decomposition map b and its inverse F.
pub trait CoefficientMap: Sync {
    /// b(a, a).
    fn apply(&self, a: &CoefficientField) -> Result<GridField>;
    /// Solve b(a, a) = target, optionally warm-started.
    fn invert(&self, target: &GridField, warm: Option<&CoefficientField>) -> Result<CoefficientField>;
}

/// A bilinear tensor-valued form R(a, b).
pub trait BilinearForm: Sync {
    fn apply(&self, a: &CoefficientField, b: &CoefficientField) -> Result<GridField>;
}

/// The zero form.
pub struct NoError;

impl BilinearForm for NoError {
    fn apply(&self, a: &CoefficientField, _b: &CoefficientField) -> Result<GridField> {
        let n = a.a.grid().n;
        Ok(GridField::zeros_like(&a.a, FieldKind::SymTensor, n * (n + 1) / 2))
    }
}

/// b(a) = Σ a_k² n_k⊗n_k + Σ a_k τ_k + Σ a_k a_k' τ_kk' with F given by [`decompose_field`].
pub struct DecompositionMap<'a> {
    pub tau_k: &'a GridField,
    pub tau_kk: &'a GridField,
    pub dirs: &'a DirectionSet,
    pub settings: DecompSettings,
}

impl CoefficientMap for DecompositionMap<'_> {
    fn apply(&self, a: &CoefficientField) -> Result<GridField> {
        let n = self.dirs.n;
        let dim = sym_dim(n);
        let count = self.dirs.len();
        let basis = self.dirs.basis_matrix();
        Ok(GridField::build(*a.a.grid(), FieldKind::SymTensor, dim, |p, o| {
            if !(a.a.is_valid(p) && self.tau_k.is_valid(p) && self.tau_kk.is_valid(p)) {
                return false;
            }
            let (av, tk, tkk) = (a.a.at(p), self.tau_k.at(p), self.tau_kk.at(p));
            for s in 0..dim {
                let mut v = 0.0;
                for k in 0..count {
                    v += av[k] * av[k] * basis[s][k] + av[k] * tk[k * dim + s];
                    for l in 0..count {
                        v += av[k] * av[l] * tkk[(k * count + l) * dim + s];
                    }
                }
                o[s] = v;
            }
            true
        }))
    }

    fn invert(&self, target: &GridField, warm: Option<&CoefficientField>) -> Result<CoefficientField> {
        decompose_field(target, self.tau_k, self.tau_kk, self.dirs, warm, &self.settings)
    }
}

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KallenConfig {
    pub steps: usize,
    /// Highest derivative order tracked for E_s.
    pub r1: usize,
    pub lambda: f64,
    pub ell: f64,
    pub c_star: f64,
}

impl KallenConfig {
    pub fn new(steps: usize, lambda: f64, ell: f64) -> Self {
        Self { steps, r1: 2, lambda, ell, c_star: 1.0 }
    }

    /// Hard requirements (steps ≥ 1).
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("Källén iteration needs at least one step".into()));
        }
        Ok(())
    }

    /// Whether λℓ > 10; desk-scale schedules usually violate this and it is only reported.
    pub fn lambda_ell_large(&self) -> bool {
        self.lambda * self.ell > 10.0
    }
}

/// One iteration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
    /// ‖a⁽ˢ⁾ − a⁽ˢ⁻¹⁾‖₀ with a⁽⁰⁾ = 0.
    pub da0: f64,
    /// ‖E_s‖₀/‖E_{s−1}‖₀, absent for s = 1 or when ‖E_{s−1}‖₀ is below the noise floor.
    pub rho: Option<f64>,
    /// ‖R(a⁽ˢ⁾, a⁽ˢ⁾−a⁽ˢ⁻¹⁾)‖₀ + ‖R(a⁽ˢ⁻¹⁾−a⁽ˢ⁾, a⁽ˢ⁻¹⁾)‖₀ for s ≥ 2.
    pub r_diff: Option<f64>,
    /// max pointwise |E_s − (R(a⁽ˢ⁻¹⁾) − R(a⁽ˢ⁾))| for s ≥ 2.
    pub telescoping: Option<f64>,
}

/// Per-step trace of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<StepRecord>,
    pub lambda_ell: f64,
    pub lambda_ell_large: bool,
    /// ‖E‖₀ below which contraction ratios are not formed.
    pub noise_floor: f64,
}

impl IterationTrace {
    /// Largest contraction ratio among steps with a ratio.
    pub fn max_rho(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.rho).reduce(f64::max)
    }

    /// Combine traces of disjoint tiles (sup-norms combine by max).
    pub fn merge(&mut self, other: &IterationTrace) {
        for (a, b) in self.records.iter_mut().zip(&other.records) {
            a.e0 = a.e0.max(b.e0);
            a.e1 = a.e1.max(b.e1);
            a.e2 = a.e2.max(b.e2);
            a.da0 = a.da0.max(b.da0);
            a.r_diff = max_opt(a.r_diff, b.r_diff);
            a.telescoping = max_opt(a.telescoping, b.telescoping);
        }
        self.noise_floor = self.noise_floor.max(other.noise_floor);
        self.recompute_rho();
    }

    /// Form ρ_s from the E₀ column.
    pub fn recompute_rho(&mut self) {
        for s in 0..self.records.len() {
            self.records[s].rho = if s == 0 || self.records[s - 1].e0 <= self.noise_floor {
                None
            } else {
                Some(self.records[s].e0 / self.records[s - 1].e0)
            };
        }
    }

    /// One JSON object per step.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// E = T − b(a) − R(a, a).
pub fn residual(t: &GridField, a: &CoefficientField, bform: &dyn CoefficientMap, rform: &dyn BilinearForm) -> Result<GridField> {
    let b = bform.apply(a)?;
    let r = rform.apply(a, a)?;
    Ok(t.sub(&b).sub(&r))
}

/// Coefficient difference a − b as a coefficient field.
fn coeff_diff(a: &CoefficientField, b: &CoefficientField) -> CoefficientField {
    CoefficientField { a: a.a.sub(&b.a), floor: f64::NEG_INFINITY }
}

/// Run the iteration for `cfg.steps` steps.
pub fn kallen_iterate(
    t: &GridField,
    bform: &dyn CoefficientMap,
    rform: &dyn BilinearForm,
    cfg: &KallenConfig,
) -> Result<(CoefficientField, IterationTrace)> {
    cfg.validate()?;
    let noise_floor = 1e-9 * t.sup_norm().max(1.0);
    let norms = |e: &GridField| -> Result<(f64, f64, f64)> {
        let e0 = e.sup_norm();
        let e1 = if cfg.r1 >= 1 { cr_norm(e, 1)? } else { 0.0 };
        let e2 = if cfg.r1 >= 2 { cr_norm(e, 2)? } else { 0.0 };
        Ok((e0, e1, e2))
    };
    let mut a = bform.invert(t, None)?;
    let mut r_a = rform.apply(&a, &a)?;
    let e = t.sub(&bform.apply(&a)?).sub(&r_a);
    let (e0, e1, e2) = norms(&e)?;
    let mut records = vec![StepRecord {
        step: 1,
        e0,
        e1,
        e2,
        da0: a.a.sup_norm(),
        rho: None,
        r_diff: None,
        telescoping: None,
    }];
    for step in 2..=cfg.steps {
        let target = t.sub(&r_a);
        let next = bform.invert(&target, Some(&a))?;
        let r_next = rform.apply(&next, &next)?;
        let e = t.sub(&bform.apply(&next)?).sub(&r_next);
        let (e0, e1, e2) = norms(&e)?;
        let diff = coeff_diff(&next, &a);
        let da0 = diff.a.sup_norm();
        let neg = coeff_diff(&a, &next);
        let r_diff = rform.apply(&next, &diff)?.sup_norm() + rform.apply(&neg, &a)?.sup_norm();
        let telescoping = e.sub(&r_a.sub(&r_next)).sup_norm();
        records.push(StepRecord {
            step,
            e0,
            e1,
            e2,
            da0,
            rho: None,
            r_diff: Some(r_diff),
            telescoping: Some(telescoping),
        });
        let k = records.len();
        let scale = 1e-10 * a.a.sup_norm().max(1e-300);
        if k >= 3 && records[k - 1].da0 > records[k - 2].da0 && records[k - 2].da0 > records[k - 3].da0 && da0 > scale {
            return Err(Error::Divergence { step });
        }
        a = next;
        r_a = r_next;
    }
    let mut trace = IterationTrace {
        records,
        lambda_ell: cfg.lambda * cfg.ell,
        lambda_ell_large: cfg.lambda_ell_large(),
        noise_floor,
    };
    trace.recompute_rho();
    Ok((a, trace))
}

/// Scalar instance: b(a) = a², R(a, b) = εab, T = 1 on a one-dimensional grid.
pub struct ScalarToy {
    pub eps: f64,
}

impl ScalarToy {
    /// Closed-form fixed point of a² + εa² = 1.
    pub fn fixed_point(&self) -> f64 {
        1.0 / (1.0 + self.eps).sqrt()
    }

    /// Constant target T = 1 on a five-point grid.
    pub fn target() -> GridField {
        let g = GridSpec::centered(1, 5, 1.0).expect("fixed toy grid");
        GridField::build(g, FieldKind::SymTensor, 1, |_, o| {
            o[0] = 1.0;
            true
        })
    }

    /// Run the toy iteration.
    pub fn run(&self, steps: usize) -> Result<(f64, IterationTrace)> {
        let t = Self::target();
        let cfg = KallenConfig { steps, r1: 0, lambda: 1.0, ell: 1.0, c_star: 1.0 };
        let (a, trace) = kallen_iterate(&t, self, self, &cfg)?;
        Ok((a.a.at(2)[0], trace))
    }
}

impl CoefficientMap for ScalarToy {
    fn apply(&self, a: &CoefficientField) -> Result<GridField> {
        Ok(a.a.map(FieldKind::SymTensor, 1, |v, o| o[0] = v[0] * v[0]))
    }

    fn invert(&self, target: &GridField, _warm: Option<&CoefficientField>) -> Result<CoefficientField> {
        let a = target.map(FieldKind::Map, 1, |v, o| o[0] = v[0].max(0.0).sqrt());
        Ok(CoefficientField { a, floor: 0.0 })
    }
}

impl BilinearForm for ScalarToy {
    fn apply(&self, a: &CoefficientField, b: &CoefficientField) -> Result<GridField> {
        Ok(a.a.zip(&b.a, FieldKind::SymTensor, 1, |x, y, o| o[0] = self.eps * x[0] * y[0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_reaches_fixed_point() {
        let toy = ScalarToy { eps: 0.01 };
        let (a, trace) = toy.run(5).unwrap();
        assert!((a - toy.fixed_point()).abs() < 1e-10);
        assert_eq!(trace.records.len(), 5);
    }

    #[test]
    fn zero_error_form_stops_after_one_step() {
        let toy = ScalarToy { eps: 0.0 };
        let t = ScalarToy::target();
        let cfg = KallenConfig { steps: 3, r1: 0, lambda: 1.0, ell: 1.0, c_star: 1.0 };
        let (a, trace) = kallen_iterate(&t, &toy, &NoError, &cfg).unwrap();
        assert_eq!(a.a.at(2)[0], 1.0);
        assert!(trace.records.iter().all(|r| r.e0 == 0.0));
        assert_eq!(trace.records[1].da0, 0.0);
    }
}
