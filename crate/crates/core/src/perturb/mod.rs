//! Stage perturbations (spiral and strain), their τ-tensors, the bilinear
//! error form used by the coefficient iteration, and the error ledger.

mod geometry;
mod ledger;

pub use geometry::OscGeometry;
pub use ledger::{ledger, ErrorLedger, IdentityRecord, LedgerSummary, TermNorm, FRAME_TOLERANCE, TERM_NAMES};

use crate::decomp::CoefficientField;
use crate::error::{Error, Result};
use crate::field::{cr_norm_rows, holder_norm_with, partial, partial_step, FieldKind, GridField, HolderOptions, MetricField};
use crate::frame::{DirectionSet, FrameField};
use crate::kallen::BilinearForm;
use crate::linalg::{sym_dim, sym_idx, sym_min_eig};
use geometry::{dot, Vector, ZERO};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which perturbation family a stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Spiral,
    Strain,
}

impl Variant {
    /// Number of normals per direction the variant needs.
    pub fn normals_per_direction(self) -> usize {
        match self {
            Variant::Spiral => 2,
            Variant::Strain => 1,
        }
    }

    /// Target dimension n + codimension.
    pub fn target_dim(self, n: usize) -> usize {
        n + self.normals_per_direction() * sym_dim(n)
    }

    /// Points per oscillation wavelength required by the resolution rule, as 1/(spacing·λ).
    pub fn resolution_factor(self) -> f64 {
        match self {
            Variant::Spiral => 20.0,
            Variant::Strain => 40.0,
        }
    }
}

/// The rescaled metric error h and its guard measurements.
#[derive(Debug, Clone)]
pub struct MetricError {
    pub h: GridField,
    pub min_eig: f64,
    /// ‖h − Id‖₀.
    pub deviation0: f64,
    /// ‖h − Id‖ at Hölder exponent `exponent`.
    pub deviation_holder: f64,
    pub exponent: f64,
    pub theta: f64,
    pub theta_ok: bool,
}

/// h = (g − g_ℓ − δ₂ Id)/δ₁ with positivity and θ checks; θ is tested at exponent max(ε², 0.01).
pub fn metric_error_h(
    g: &MetricField,
    g_ell: &MetricField,
    d1: f64,
    d2: f64,
    theta: f64,
    epsilon: f64,
) -> Result<MetricError> {
    if !(d1 > d2 && d2 > 0.0) {
        return Err(Error::Domain(format!("need δ₁ > δ₂ > 0, got {d1} and {d2}")));
    }
    let n = g.grid().n;
    let dim = sym_dim(n);
    let h = g.zip(g_ell, FieldKind::SymTensor, dim, |a, b, o| {
        for i in 0..n {
            for j in i..n {
                let s = sym_idx(n, i, j);
                o[s] = (a[s] - b[s] - if i == j { d2 } else { 0.0 }) / d1;
            }
        }
    });
    let worst = (0..h.len())
        .into_par_iter()
        .filter(|&p| h.is_valid(p))
        .map(|p| (p, sym_min_eig(n, h.at(p))))
        .reduce_with(|a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let (p, min_eig) = worst.ok_or_else(|| Error::Domain("metric error has no valid points".into()))?;
    if !(min_eig > 0.0) {
        return Err(Error::Hypothesis {
            detail: format!("metric error h not positive definite (eigenvalue {min_eig:.3e})"),
            location: h.grid().position(p)[..n].to_vec(),
        });
    }
    let dev = h.map(FieldKind::SymTensor, dim, |v, o| {
        o.copy_from_slice(v);
        for i in 0..n {
            o[sym_idx(n, i, i)] -= 1.0;
        }
    });
    let exponent = (epsilon * epsilon).max(0.01);
    let deviation0 = dev.sup_norm();
    let deviation_holder = holder_norm_with(&dev, 0, exponent, &HolderOptions::default())?.value;
    Ok(MetricError { h, min_eig, deviation0, deviation_holder, exponent, theta, theta_ok: deviation_holder <= theta })
}

/// τ_k (N·dim components) and τ_kk' (N²·dim components, row-major in (k, k')).
#[derive(Debug, Clone)]
pub struct TauTensors {
    pub tau_k: GridField,
    pub tau_kk: GridField,
}

impl TauTensors {
    /// Largest ‖τ_k‖₀ and ‖τ_kk'‖₀ (max-abs entry over all k).
    pub fn sup_norms(&self) -> (f64, f64) {
        let norm = |f: &GridField| {
            (0..f.len())
                .into_par_iter()
                .filter(|&p| f.is_valid(p))
                .map(|p| f.at(p).iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .reduce(|| 0.0, f64::max)
        };
        (norm(&self.tau_k), norm(&self.tau_kk))
    }
}

/// τ-tensors for the geometry's variant.
pub fn tau_tensors(geom: &OscGeometry) -> TauTensors {
    let (n, count) = (geom.n(), geom.count());
    let (m, lam) = (geom.m(), geom.lambda);
    let dim = sym_dim(n);
    let isd = 1.0 / geom.delta.sqrt();
    let grid = *geom.f_ell.grid();
    let packed = GridField::build(grid, FieldKind::Map, count * dim + count * count * dim, |p, out| {
        let pt = match geom.point(p) {
            Some(pt) => pt,
            None => return false,
        };
        let sym2 = |mat: &dyn Fn(usize, usize) -> f64, o: &mut [f64]| {
            for i in 0..n {
                for j in i..n {
                    o[sym_idx(n, i, j)] = mat(i, j) + mat(j, i);
                }
            }
        };
        let (tk, tkk) = out.split_at_mut(count * dim);
        for k in 0..count {
            sym2(&|i, j| isd / lam * dot(&pt.df[i], &pt.dhat[k][j], m), &mut tk[k * dim..(k + 1) * dim]);
            for l in 0..count {
                let o = &mut tkk[(k * count + l) * dim..(k * count + l + 1) * dim];
                sym2(&|i, j| dot(&pt.dhat[k][i], &pt.chat[l], m) * pt.nk[l][j] / lam, o);
                if k == l && geom.variant == Variant::Strain {
                    let mut extra = [0.0; 6];
                    let s2 = pt.s2[k];
                    sym2(&|i, j| s2 / (4.0 * lam) * dot(&pt.df[i], &pt.dnu1[k][j], m), &mut extra[..dim]);
                    for x in 0..dim {
                        o[x] += extra[x];
                    }
                }
            }
        }
        true
    });
    let tau_k = packed.map(FieldKind::Map, count * dim, |v, o| o.copy_from_slice(&v[..count * dim]));
    let tau_kk = packed.map(FieldKind::Map, count * count * dim, |v, o| o.copy_from_slice(&v[count * dim..]));
    TauTensors { tau_k, tau_kk }
}

/// τ-tensors of a spiral stage.
pub fn tau_tensors_spiral(geom: &OscGeometry) -> Result<TauTensors> {
    if geom.variant != Variant::Spiral {
        return Err(Error::Config("spiral τ-tensors need spiral frames".into()));
    }
    Ok(tau_tensors(geom))
}

/// τ-tensors of a strain stage.
pub fn tau_tensors_strain(geom: &OscGeometry) -> Result<TauTensors> {
    if geom.variant != Variant::Strain {
        return Err(Error::Config("strain τ-tensors need strain frames".into()));
    }
    Ok(tau_tensors(geom))
}

/// Smallest λ·(stencil spacing) at which the coefficient iteration stays stable.
pub const STABLE_LAMBDA_SPACING: f64 = 0.02;

/// Stencil step (in cells) for derivatives of the coefficients inside the iteration.
///
/// The error form carries ∂a/λ, so grid-scale round-off in a grows by about
/// 1/(λ·spacing) per step; widening the stencil caps that factor.
pub fn iteration_stencil(lambda: f64, spacing: f64) -> usize {
    ((STABLE_LAMBDA_SPACING / (lambda * spacing)).ceil() as usize).max(1)
}

/// The bilinear error R(a, b) = R₂ + R₃ + 2 sym R₄ restricted to bilinear parts.
pub struct ErrorForm<'g> {
    pub geom: &'g OscGeometry,
    /// Stencil step of the coefficient derivatives; 1 is the standard stencil.
    pub stencil: usize,
}

impl BilinearForm for ErrorForm<'_> {
    fn apply(&self, a: &CoefficientField, b: &CoefficientField) -> Result<GridField> {
        let geom = self.geom;
        let (n, m, count) = (geom.n(), geom.m(), geom.count());
        let lam2 = geom.lambda * geom.lambda;
        let dim = sym_dim(n);
        let da: Vec<GridField> = (0..n).map(|i| partial_step(&a.a, i, self.stencil)).collect::<Result<_>>()?;
        let db: Vec<GridField> = (0..n).map(|i| partial_step(&b.a, i, self.stencil)).collect::<Result<_>>()?;
        let grid = *geom.f_ell.grid();
        Ok(GridField::build(grid, FieldKind::SymTensor, dim, |p, o| {
            if !(a.a.is_valid(p) && b.a.is_valid(p) && da.iter().chain(db.iter()).all(|d| d.is_valid(p))) {
                return false;
            }
            let pt = match geom.point(p) {
                Some(pt) => pt,
                None => return false,
            };
            let grads = |d: &[GridField]| {
                let mut g = [[0.0; 3]; 6];
                for k in 0..count {
                    for i in 0..n {
                        g[k][i] = d[i].at(p)[k];
                    }
                }
                g
            };
            let ba = pt.bars2(a.a.at(p), &grads(&da));
            let bb = pt.bars2(b.a.at(p), &grads(&db));
            for i in 0..n {
                for j in i..n {
                    let r2 = dot(&ba.d[i], &bb.d[j], m);
                    let r3 = dot(&ba.x[i], &bb.x[j], m);
                    let r4 = dot(&ba.d[i], &bb.x[j], m) + dot(&ba.d[j], &bb.x[i], m);
                    o[sym_idx(n, i, j)] = (r2 + r3 + r4) / lam2;
                }
            }
            true
        }))
    }
}

/// b(a) = M + 2 sym L + 2 sym bil(R₅) evaluated from the ledger definitions.
pub fn b_from_ledger(geom: &OscGeometry, a: &CoefficientField) -> Result<GridField> {
    let (n, count) = (geom.n(), geom.count());
    let dim = sym_dim(n);
    let da: Vec<GridField> = (0..n).map(|i| partial(&a.a, i)).collect::<Result<_>>()?;
    let grid = *geom.f_ell.grid();
    let idx = |name: &str| TERM_NAMES.iter().position(|t| *t == name).unwrap();
    let (kl, klin, kq, k5) = (idx("L"), idx("M_lin"), idx("M_quad"), idx("R5b"));
    Ok(GridField::build(grid, FieldKind::SymTensor, dim, |p, o| {
        if !(a.a.is_valid(p) && da.iter().all(|d| d.is_valid(p))) {
            return false;
        }
        let pt = match geom.point(p) {
            Some(pt) => pt,
            None => return false,
        };
        let mut g = [[0.0; 3]; 6];
        for k in 0..count {
            for i in 0..n {
                g[k][i] = da[i].at(p)[k];
            }
        }
        let t = ledger::point_terms(&pt, a.a.at(p), &g);
        for i in 0..n {
            for j in i..n {
                let (ij, ji) = (i * n + j, j * n + i);
                o[sym_idx(n, i, j)] = t[kq][ij]
                    + 0.5 * (t[klin][ij] + t[klin][ji])
                    + (t[kl][ij] + t[kl][ji])
                    + (t[k5][ij] + t[k5][ji]);
            }
        }
        true
    }))
}

/// The increment w_{q+1} with the data it was built from.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub variant: Variant,
    pub w: GridField,
    pub a: CoefficientField,
    pub lambda: f64,
    pub delta: f64,
}

/// ‖w‖_r and the constants C_r = ‖w‖_r / (δ^{1/2} λ^{r−1}).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationNorms {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl PerturbationNorms {
    pub fn from_norms(w: [f64; 3], lambda: f64, delta: f64) -> Self {
        let sd = delta.sqrt();
        Self {
            w0: w[0],
            w1: w[1],
            w2: w[2],
            c0: w[0] * lambda / sd,
            c1: w[1] / sd,
            c2: w[2] / (sd * lambda),
        }
    }

    pub fn max_constant(&self) -> f64 {
        self.c0.max(self.c1).max(self.c2)
    }
}

impl Perturbation {
    /// Norms over local axis-0 rows `[from, to)`.
    pub fn norms_rows(&self, from: usize, to: usize) -> Result<PerturbationNorms> {
        let w = [
            cr_norm_rows(&self.w, 0, from, to)?,
            cr_norm_rows(&self.w, 1, from, to)?,
            cr_norm_rows(&self.w, 2, from, to)?,
        ];
        Ok(PerturbationNorms::from_norms(w, self.lambda, self.delta))
    }

    pub fn norms(&self) -> Result<PerturbationNorms> {
        self.norms_rows(0, self.w.grid().extent(0))
    }
}

fn check_resolution(variant: Variant, spacing: f64, lambda: f64) -> Result<()> {
    let limit = 1.0 / (variant.resolution_factor() * lambda);
    if spacing > limit {
        return Err(Error::Resolution(format!(
            "spacing {spacing:.4e} exceeds 1/({}·λ) = {limit:.4e}",
            variant.resolution_factor()
        )));
    }
    Ok(())
}

fn build(
    variant: Variant,
    a: &CoefficientField,
    frames: &FrameField,
    dirs: &DirectionSet,
    lambda: f64,
    delta: f64,
) -> Result<Perturbation> {
    let grid = *a.a.grid();
    check_resolution(variant, grid.spacing, lambda)?;
    if frames.variant != variant || frames.count != dirs.len() || a.a.components() != dirs.len() {
        return Err(Error::Config("frames, directions and coefficients disagree".into()));
    }
    let (n, m) = (grid.n, frames.m);
    let sd = delta.sqrt();
    let r2 = std::f64::consts::SQRT_2;
    let w = GridField::build(grid, FieldKind::Map, m, |p, o| {
        if !(a.a.is_valid(p) && frames.nu1.is_valid(p) && frames.nu2.is_valid(p)) {
            return false;
        }
        let x = grid.offset(p);
        let (nu1, nu2, av) = (frames.nu1.at(p), frames.nu2.at(p), a.a.at(p));
        let mut acc: Vector = ZERO;
        for (k, nk) in dirs.dirs.iter().enumerate() {
            let th = lambda * (0..n).map(|i| x[i] * nk[i]).sum::<f64>();
            let (s, c) = (th.sin(), th.cos());
            let amp = sd * av[k] / lambda;
            for c_ in 0..m {
                let (v1, v2) = (nu1[k * m + c_], nu2[k * m + c_]);
                acc[c_] += match variant {
                    Variant::Spiral => amp * (s * v1 + c * v2),
                    Variant::Strain => {
                        delta * av[k] * av[k] / (4.0 * lambda) * (2.0 * th).sin() * v1 + amp * r2 * c * v2
                    }
                };
            }
        }
        o.copy_from_slice(&acc[..m]);
        true
    });
    Ok(Perturbation { variant, w, a: a.clone(), lambda, delta })
}

/// w = Σ_k δ^{1/2}(A_k/λ)(sin(λx·n_k)ν¹_k + cos(λx·n_k)ν²_k).
pub fn build_spiral(
    a: &CoefficientField,
    frames: &FrameField,
    dirs: &DirectionSet,
    lambda: f64,
    delta: f64,
) -> Result<Perturbation> {
    build(Variant::Spiral, a, frames, dirs, lambda, delta)
}

/// w = Σ_k (δA_k²/4λ) sin(2λx·n_k)ν¹_k + δ^{1/2}√2(A_k/λ)cos(λx·n_k)ν²_k.
pub fn build_strain(
    a: &CoefficientField,
    frames: &FrameField,
    dirs: &DirectionSet,
    lambda: f64,
    delta: f64,
) -> Result<Perturbation> {
    build(Variant::Strain, a, frames, dirs, lambda, delta)
}

/// Build for either variant.
pub fn build_perturbation(
    variant: Variant,
    a: &CoefficientField,
    frames: &FrameField,
    dirs: &DirectionSet,
    lambda: f64,
    delta: f64,
) -> Result<Perturbation> {
    build(variant, a, frames, dirs, lambda, delta)
}
