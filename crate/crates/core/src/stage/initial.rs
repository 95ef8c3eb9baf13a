//! Analytic initial data (f₀, g) satisfying the stage-0 hypotheses by construction.

use crate::error::{Error, Result};
use crate::field::{holder_norm_with, pullback, FieldKind, GridField, GridSpec, HolderOptions, MetricField};
use crate::linalg::{sym_dim, sym_idx};
use crate::perturb::Variant;
use serde::{Deserialize, Serialize};

/// Base short embedding f₀ into R^{n+codim}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseEmbedding {
    /// x ↦ (x, 0).
    Inclusion,
    /// x ↦ (c·x, 0).
    Scaled { c: f64 },
    /// Graph of coef·x₀x₁.
    Saddle { coef: f64 },
    /// Graph of height·exp(−|x|²/width²).
    Bump { height: f64, width: f64 },
}

impl Default for BaseEmbedding {
    fn default() -> Self {
        BaseEmbedding::Saddle { coef: 0.5 }
    }
}

impl BaseEmbedding {
    /// f₀(x) written into `out` (length m ≥ n + 1).
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out.fill(0.0);
        match *self {
            BaseEmbedding::Inclusion => out[..n].copy_from_slice(x),
            BaseEmbedding::Scaled { c } => {
                for i in 0..n {
                    out[i] = c * x[i];
                }
            }
            BaseEmbedding::Saddle { coef } => {
                out[..n].copy_from_slice(x);
                out[n] = coef * x[0] * x.get(1).copied().unwrap_or(x[0]);
            }
            BaseEmbedding::Bump { height, width } => {
                out[..n].copy_from_slice(x);
                let r2: f64 = x.iter().map(|v| v * v).sum();
                out[n] = height * (-r2 / (width * width)).exp();
            }
        }
    }
}

impl BaseEmbedding {
    /// ∂_i f₀ written as `out[i·m + c]` for a target of dimension m.
    pub fn jacobian(&self, x: &[f64], m: usize, out: &mut [f64]) {
        let n = x.len();
        out.fill(0.0);
        let scale = match *self {
            BaseEmbedding::Scaled { c } => c,
            _ => 1.0,
        };
        for i in 0..n {
            out[i * m + i] = scale;
        }
        match *self {
            BaseEmbedding::Inclusion | BaseEmbedding::Scaled { .. } => {}
            BaseEmbedding::Saddle { coef } => {
                if n == 1 {
                    out[n] = 2.0 * coef * x[0];
                } else {
                    out[n] = coef * x[1];
                    out[m + n] = coef * x[0];
                }
            }
            BaseEmbedding::Bump { height, width } => {
                let w2 = width * width;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let e = height * (-r2 / w2).exp();
                for i in 0..n {
                    out[i * m + n] = -2.0 * x[i] / w2 * e;
                }
            }
        }
    }
}

/// P = shift·Id + amplitude·λ₀^{−ε}·diag(cos ωx₀, …, cos ωx_{n−1}).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub shift: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self { shift: 0.0, amplitude: 0.5, frequency: 3.0 }
    }
}

/// Initial block of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct InitialSpec {
    #[serde(flatten)]
    pub base: BaseEmbedding,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
}

/// (f₀, g) and the measured hypothesis norms of P.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub f0: GridField,
    pub g: MetricField,
    pub p_norm0: f64,
    pub p_norm_beta: f64,
    /// λ₀^{−ε}.
    pub budget0: f64,
    /// λ₀^{β−ε}.
    pub budget_beta: f64,
}

/// Sample f₀ and build g = pullback(f₀) + δ₁(Id + P); reject P outside the hypothesis bounds.
#[allow(clippy::too_many_arguments)]
pub fn initial_data(
    grid: GridSpec,
    variant: Variant,
    spec: &InitialSpec,
    delta1: f64,
    lambda0: f64,
    beta: f64,
    epsilon: f64,
    holder: &HolderOptions,
) -> Result<InitialData> {
    let n = grid.n;
    let m = variant.target_dim(n);
    let base = spec.base;
    let f0 = GridField::sample(grid, FieldKind::Map, m, |x, o| base.eval(&x[..n], o));
    let ps = spec.perturbation;
    let budget0 = lambda0.powf(-epsilon);
    let budget_beta = lambda0.powf(beta - epsilon);
    let amp = ps.amplitude * budget0;
    let p = GridField::sample(grid, FieldKind::SymTensor, sym_dim(n), |x, o| {
        o.fill(0.0);
        for i in 0..n {
            o[sym_idx(n, i, i)] = ps.shift + amp * (ps.frequency * x[i]).cos();
        }
    });
    let p_norm0 = p.sup_norm();
    let p_norm_beta = holder_norm_with(&p, 0, beta, holder)?.value;
    if p_norm0 > budget0 || p_norm_beta > budget_beta {
        return Err(Error::Hypothesis {
            detail: format!(
                "‖P‖₀ = {p_norm0:.4} (bound {budget0:.4}), ‖P‖_β = {p_norm_beta:.4} (bound {budget_beta:.4})"
            ),
            location: vec![],
        });
    }
    let g0 = pullback(&f0)?;
    let g = g0.zip(&p, FieldKind::SymTensor, sym_dim(n), |a, pv, o| {
        for i in 0..n {
            for j in i..n {
                let s = sym_idx(n, i, j);
                o[s] = a[s] + delta1 * (pv[s] + if i == j { 1.0 } else { 0.0 });
            }
        }
    });
    Ok(InitialData { f0, g, p_norm0, p_norm_beta, budget0, budget_beta })
}
