//! The error ledger: every term of the new pullback metric evaluated from its
//! closed form, the cancellation identities, and the norm table.

use super::geometry::{dot, Bars, OscGeometry, Point, ZERO};
use super::Variant;
use crate::decomp::CoefficientField;
use crate::error::{Error, Result};
use crate::field::{cr_norm_rows, partial, partial_coarse, pullback, FieldKind, GridField};
use crate::linalg::{sym_dim, sym_idx};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stored terms, each an unsymmetrized n×n matrix per point. Names ending in `b`
/// are bilinear parts; `Q` is the directly differentiated quadratic term.
pub const TERM_NAMES: [&str; 18] =
    ["L", "F1", "M_lin", "M_quad", "R0", "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R2b", "R3b", "R4b", "R5b", "R6b", "Q"];

const PRINCIPAL: [&str; 12] = ["L", "F1", "M_lin", "M_quad", "R0", "R1", "R2", "R3", "R4", "R5", "R6", "R7"];

fn term_index(name: &str) -> Option<usize> {
    TERM_NAMES.iter().position(|t| *t == name)
}

/// Pointwise values of every stored term, row-major i·n + j.
pub(crate) fn point_terms(pt: &Point, a: &[f64], da: &[[f64; 3]; 6]) -> [[f64; 9]; 18] {
    let (n, m, lam) = (pt.n, pt.m, pt.lambda);
    let isd = 1.0 / pt.delta.sqrt();
    let b2 = pt.bars2(a, da);
    let b1 = pt.bars1(a, da);
    let bt = b1.plus(&b2);
    let dw = pt.dw_direct(a, da);
    let mut t = [[0.0; 9]; 18];
    let pair = |u: &[[f64; 16]; 3], v: &[[f64; 16]; 3], s: f64, out: &mut [f64; 9]| {
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = s * dot(&u[i], &v[j], m);
            }
        }
    };
    pair(&pt.df, &bt.d, isd / lam, &mut t[0]);
    let mut first = [ZERO; 3];
    for j in 0..n {
        for x in 0..m {
            first[j][x] = b2.x[j][x] / lam + b2.c[j][x];
        }
    }
    pair(&pt.df, &first, isd, &mut t[1]);
    pair(&pt.df, &b1.c, 2.0 * isd, &mut t[2]);
    pair(&b2.c, &b2.c, 1.0, &mut t[3]);
    let mut r0a = [0.0; 9];
    pair(&b1.c, &b2.c, 1.0, &mut r0a);
    let mut r0b = [0.0; 9];
    pair(&b2.c, &b1.c, 1.0, &mut r0b);
    for e in 0..n * n {
        t[4][e] = r0a[e] + r0b[e];
    }
    pair(&b1.c, &b1.c, 1.0, &mut t[5]);
    let quad = |b: &Bars, t: &mut [[f64; 9]; 18], base: usize| {
        pair(&b.d, &b.d, 1.0 / (lam * lam), &mut t[base]);
        pair(&b.x, &b.x, 1.0 / (lam * lam), &mut t[base + 1]);
        pair(&b.d, &b.x, 1.0 / (lam * lam), &mut t[base + 2]);
        pair(&b.d, &b.c, 1.0 / lam, &mut t[base + 3]);
        pair(&b.x, &b.c, 1.0 / lam, &mut t[base + 4]);
    };
    quad(&bt, &mut t, 6);
    pair(&pt.df, &b1.x, isd / lam, &mut t[11]);
    quad(&b2, &mut t, 12);
    pair(&dw, &dw, 1.0, &mut t[17]);
    t
}

/// All ledger fields of one stage (or one tile of it).
#[derive(Debug, Clone)]
pub struct ErrorLedger {
    pub variant: Variant,
    pub lambda: f64,
    pub delta: f64,
    pub ell: f64,
    terms: GridField,
    /// (1/λ)Σ_k |A_k| |∂A_k| |sin 2λx·n_k| e_k with e_k the fundamental-identity truncation estimate.
    r7_estimate: GridField,
    /// Symmetrized ledger sum; δ times it is g^{q+1} − g_ℓ.
    pub sum: GridField,
    /// pullback(f_ℓ + w) − g_ℓ − δ·sum.
    pub master_residual: GridField,
    /// Richardson estimate of the finite-difference error in pullback(f_ℓ + w).
    pub master_estimate: GridField,
}

fn sym_of(n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in i..n {
            out[sym_idx(n, i, j)] = 0.5 * (v[i * n + j] + v[j * n + i]);
        }
    }
}

/// Symmetrized sum 2L + 2F1 + 2R₇ + M + R₀ + R₁ + R₂ + R₃ + 2R₄ + 2R₅ + 2R₆ with M = sym M_lin + M_quad.
fn ledger_sum(n: usize, t: &[f64], out: &mut [f64]) {
    let e = n * n;
    let weight = |name: &str| -> f64 {
        match name {
            "L" | "F1" | "R7" | "R4" | "R5" | "R6" => 2.0,
            "M_lin" | "M_quad" | "R0" | "R1" | "R2" | "R3" => 1.0,
            _ => 0.0,
        }
    };
    let mut full = [0.0; 9];
    for (k, name) in TERM_NAMES.iter().enumerate() {
        let w = weight(name);
        if w != 0.0 {
            for x in 0..e {
                full[x] += w * t[k * e + x];
            }
        }
    }
    sym_of(n, &full[..e], out);
}

/// Evaluate the ledger for coefficients `a` and the perturbation `w` built from them.
pub fn ledger(geom: &OscGeometry, a: &CoefficientField, w: &GridField) -> Result<ErrorLedger> {
    let grid = *geom.f_ell.grid();
    let (n, count) = (geom.n(), geom.count());
    if a.a.components() != count {
        return Err(Error::Config("coefficient count does not match directions".into()));
    }
    let da: Vec<GridField> = (0..n).map(|i| partial(&a.a, i)).collect::<Result<_>>()?;
    let e = n * n;
    let ncomp = TERM_NAMES.len() * e + 1;
    let packed = GridField::build(grid, FieldKind::Map, ncomp, |p, out| {
        if !a.a.is_valid(p) || !da.iter().all(|d| d.is_valid(p)) {
            return false;
        }
        let pt = match geom.point(p) {
            Some(pt) => pt,
            None => return false,
        };
        let av = a.a.at(p);
        let mut grad = [[0.0; 3]; 6];
        for k in 0..count {
            for i in 0..n {
                grad[k][i] = da[i].at(p)[k];
            }
        }
        let t = point_terms(&pt, av, &grad);
        for (k, row) in t.iter().enumerate() {
            out[k * e..(k + 1) * e].copy_from_slice(&row[..e]);
        }
        let mut est: f64 = 0.0;
        for k in 0..count {
            let g = (0..n).map(|i| grad[k][i].abs()).fold(0.0, f64::max);
            est += (av[k] * g * pt.s2[k]).abs() * pt.ident_est[k];
        }
        out[ncomp - 1] = est / geom.lambda;
        true
    });
    let terms = packed.map(FieldKind::Map, ncomp - 1, |v, o| o.copy_from_slice(&v[..ncomp - 1]));
    let r7_estimate = packed.map(FieldKind::Scalar, 1, |v, o| o[0] = v[ncomp - 1]);
    let dim = sym_dim(n);
    let sum = terms.map(FieldKind::SymTensor, dim, |v, o| ledger_sum(n, v, o));
    let big = geom.f_ell.zip(w, FieldKind::Map, geom.m(), |f, wv, o| {
        for x in 0..o.len() {
            o[x] = f[x] + wv[x];
        }
    });
    let g_new = pullback(&big)?;
    let delta = geom.delta;
    let g_ell = &geom.g_ell;
    let master_residual = GridField::build(grid, FieldKind::SymTensor, dim, |p, o| {
        if !(g_new.is_valid(p) && g_ell.is_valid(p) && sum.is_valid(p)) {
            return false;
        }
        for x in 0..dim {
            o[x] = g_new.at(p)[x] - g_ell.at(p)[x] - delta * sum.at(p)[x];
        }
        true
    });
    let fine: Vec<GridField> = (0..n).map(|i| partial(&big, i)).collect::<Result<_>>()?;
    let coarse: Vec<GridField> = (0..n).map(|i| partial_coarse(&big, i)).collect::<Result<_>>()?;
    let master_estimate = GridField::build(grid, FieldKind::Scalar, 1, |p, o| {
        if !fine.iter().chain(coarse.iter()).all(|d| d.is_valid(p)) {
            return false;
        }
        let mut t = [0.0; 3];
        let mut g = [0.0; 3];
        for i in 0..n {
            let (f, c) = (fine[i].at(p), coarse[i].at(p));
            g[i] = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            t[i] = f.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / 15.0;
        }
        let mut est: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                est = est.max(t[i] * g[j] + g[i] * t[j]);
            }
        }
        o[0] = est;
        true
    });
    Ok(ErrorLedger {
        variant: geom.variant,
        lambda: geom.lambda,
        delta: geom.delta,
        ell: geom.ell,
        terms,
        r7_estimate,
        sum,
        master_residual,
        master_estimate,
    })
}

/// One row of the norm table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermNorm {
    pub term: String,
    pub norm0: f64,
    pub norm1: f64,
    /// Nominal size of the term at this stage.
    pub bound: f64,
    pub ratio: f64,
}

/// A checked identity with its measured residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    /// Finite-difference truncation estimate, where one applies.
    pub estimate: f64,
    /// Size of the quantity the residual is measured against.
    pub reference: f64,
    pub pass: bool,
    pub worst: Option<Vec<f64>>,
}

/// Norms and identity checks of a ledger, mergeable across tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub variant: Variant,
    /// Largest pointwise magnitude over the principal terms.
    pub scale: f64,
    pub norms: Vec<TermNorm>,
    pub identities: Vec<IdentityRecord>,
}

/// Frame-tolerance factor for identities that hold by orthogonality.
pub const FRAME_TOLERANCE: f64 = 1e-10;

impl ErrorLedger {
    /// A stored, symmetrized-combination, or trilinear term as a matrix field.
    ///
    /// Besides [`TERM_NAMES`]: `M` (= sym M_lin + M_quad), `R1~`..`R6~`
    /// (trilinear and quadrilinear parts), `R0~`, `R6+2R7` (= sym(R₆ + 2R₇)), `expansion`
    /// (M_quad + R₀ + R₁ + R₂ + R₃ + 2 sym(R₄ + R₅ + R₆)).
    pub fn term(&self, name: &str) -> Result<GridField> {
        let n = self.terms.grid().n;
        let e = n * n;
        let pick = |k: usize| self.terms.map(FieldKind::Matrix, e, |v, o| o.copy_from_slice(&v[k * e..(k + 1) * e]));
        if let Some(k) = term_index(name) {
            return Ok(pick(k));
        }
        let combine = |parts: &[(&str, f64, bool)]| -> GridField {
            let idx: Vec<(usize, f64, bool)> =
                parts.iter().map(|(nm, w, s)| (term_index(nm).expect("known term"), *w, *s)).collect();
            self.terms.map(FieldKind::Matrix, e, |v, o| {
                o.fill(0.0);
                for &(k, w, symmetrize) in &idx {
                    for i in 0..n {
                        for j in 0..n {
                            let val = if symmetrize {
                                0.5 * (v[k * e + i * n + j] + v[k * e + j * n + i])
                            } else {
                                v[k * e + i * n + j]
                            };
                            o[i * n + j] += w * val;
                        }
                    }
                }
            })
        };
        Ok(match name {
            "M" => combine(&[("M_lin", 1.0, true), ("M_quad", 1.0, false)]),
            "R0~" => pick(4),
            "R1~" => pick(5),
            "R2~" => combine(&[("R2", 1.0, false), ("R2b", -1.0, false)]),
            "R3~" => combine(&[("R3", 1.0, false), ("R3b", -1.0, false)]),
            "R4~" => combine(&[("R4", 1.0, false), ("R4b", -1.0, false)]),
            "R5~" => combine(&[("R5", 1.0, false), ("R5b", -1.0, false)]),
            "R6~" => combine(&[("R6", 1.0, false), ("R6b", -1.0, false)]),
            "R6+2R7" => combine(&[("R6", 1.0, true), ("R7", 2.0, true)]),
            "expansion" => combine(&[
                ("M_quad", 1.0, false),
                ("R0", 1.0, false),
                ("R1", 1.0, false),
                ("R2", 1.0, false),
                ("R3", 1.0, false),
                ("R4", 2.0, true),
                ("R5", 2.0, true),
                ("R6", 2.0, true),
            ]),
            _ => return Err(Error::Config(format!("unknown ledger term {name}"))),
        })
    }

    /// 2(R₇)_{ij} + bil(R₆)_{ji}, which equals (2R₇ − (R̃₆ − R₆)ᵀ)_{ij}.
    pub fn r7_identity_residual(&self) -> GridField {
        let n = self.terms.grid().n;
        let e = n * n;
        let (k7, k6) = (term_index("R7").unwrap(), term_index("R6b").unwrap());
        self.terms.map(FieldKind::Matrix, e, |v, o| {
            for i in 0..n {
                for j in 0..n {
                    o[i * n + j] = 2.0 * v[k7 * e + i * n + j] + v[k6 * e + j * n + i];
                }
            }
        })
    }

    /// Nominal size of a term, used for the `bound` column.
    fn bound(&self, name: &str, scale: f64, tol: f64) -> f64 {
        let le = self.lambda * self.ell;
        match name {
            "M" | "M_quad" | "M_lin" | "Q" | "expansion" => 1.0,
            "F1" | "R0" => tol * scale,
            "R6" if self.variant == Variant::Spiral => tol * scale,
            "L" | "R5" | "R5b" | "R6" | "R6b" | "R7" => 1.0 / le,
            "R2" | "R3" | "R4" | "R2b" | "R3b" | "R4b" => 1.0 / (le * le),
            "R6+2R7" => self.delta / le,
            _ => self.delta.sqrt(),
        }
    }

    /// Norm table and identity checks over local axis-0 rows `[from, to)`.
    pub fn summarize(&self, from: usize, to: usize) -> Result<LedgerSummary> {
        self.summarize_with(from, to, FRAME_TOLERANCE)
    }

    /// As [`summarize`](Self::summarize) with an explicit frame-tolerance factor.
    pub fn summarize_with(&self, from: usize, to: usize, tol: f64) -> Result<LedgerSummary> {
        let grid = *self.terms.grid();
        let n = grid.n;
        let rows_sup = |f: &GridField| f.sup_norm_rows(from, to);
        let mut scale: f64 = 0.0;
        for name in PRINCIPAL {
            scale = scale.max(rows_sup(&self.term(name)?));
        }
        let mut names: Vec<&str> = TERM_NAMES.to_vec();
        names.extend(["M", "R0~", "R1~", "R2~", "R3~", "R4~", "R5~", "R6~", "R6+2R7"]);
        let mut norms = Vec::new();
        for name in names {
            let f = self.term(name)?;
            let norm0 = rows_sup(&f);
            let norm1 = cr_norm_rows(&f, 1, from, to)?;
            let bound = self.bound(name, scale, tol);
            norms.push(TermNorm { term: name.into(), norm0, norm1, bound, ratio: ratio(norm0, bound) });
        }
        let worst = |f: &GridField| -> (f64, Option<Vec<f64>>) {
            let per_row = grid.stride(0);
            let best = (from * per_row..to * per_row)
                .into_par_iter()
                .filter(|&p| f.is_valid(p))
                .map(|p| (p, f.point_norm(f.at(p))))
                .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
            match best {
                Some((p, v)) => (v, Some(grid.position(p)[..n].to_vec())),
                None => (0.0, None),
            }
        };
        let mut identities = Vec::new();
        let mut record = |name: &str, field: &GridField, tolerance: f64, estimate: f64, reference: f64| {
            let (residual, at) = worst(field);
            identities.push(IdentityRecord {
                name: name.into(),
                residual,
                tolerance,
                estimate,
                reference,
                pass: residual <= tolerance,
                worst: at,
            });
        };
        let q = self.term("Q")?;
        let expansion_gap = q.sub(&self.term("expansion")?);
        record("quadratic-expansion", &expansion_gap, tol * scale, 0.0, rows_sup(&q));
        record("first-sum", &self.term("F1")?, tol * scale, 0.0, scale);
        match self.variant {
            Variant::Spiral => record("R6-vanishes", &self.term("R6")?, tol * scale, 0.0, scale),
            Variant::Strain => {
                record("R0-vanishes", &self.term("R0")?, tol * scale, 0.0, scale);
                let est = rows_sup(&self.r7_estimate);
                let r7 = self.r7_identity_residual();
                let reference = 2.0 * rows_sup(&self.term("R7")?);
                record("R7-identity", &r7, 10.0 * est + 1e-13 * reference.max(f64::MIN_POSITIVE), est, reference);
            }
        }
        let est = rows_sup(&self.master_estimate);
        let reference = self.delta * rows_sup(&self.sum);
        record("master", &self.master_residual, 10.0 * est + 1e-12 * reference, est, reference);
        Ok(LedgerSummary { variant: self.variant, scale, norms, identities })
    }

    /// Summary over the whole field.
    pub fn summary(&self) -> Result<LedgerSummary> {
        self.summarize(0, self.terms.grid().extent(0))
    }
}

fn ratio(v: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        v / bound
    } else if v == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl LedgerSummary {
    /// Combine summaries of disjoint tiles (sup-norms combine by max).
    pub fn merge(&mut self, other: &LedgerSummary) {
        self.scale = self.scale.max(other.scale);
        for (a, b) in self.norms.iter_mut().zip(&other.norms) {
            a.norm0 = a.norm0.max(b.norm0);
            a.norm1 = a.norm1.max(b.norm1);
            a.bound = a.bound.max(b.bound);
            a.ratio = ratio(a.norm0, a.bound);
        }
        for (a, b) in self.identities.iter_mut().zip(&other.identities) {
            if b.residual > a.residual {
                a.residual = b.residual;
                a.worst = b.worst.clone();
            }
            a.tolerance = a.tolerance.max(b.tolerance);
            a.estimate = a.estimate.max(b.estimate);
            a.reference = a.reference.max(b.reference);
            a.pass = a.pass && b.pass;
        }
    }

    pub fn norm(&self, term: &str) -> Option<&TermNorm> {
        self.norms.iter().find(|t| t.term == term)
    }

    pub fn identity(&self, name: &str) -> Option<&IdentityRecord> {
        self.identities.iter().find(|t| t.name == name)
    }

    /// First failed identity as an error.
    pub fn verify(&self) -> Result<()> {
        match self.identities.iter().find(|r| !r.pass) {
            Some(r) => Err(Error::LedgerMismatch {
                identity: r.name.clone(),
                residual: r.residual,
                tolerance: r.tolerance,
                location: r.worst.clone().unwrap_or_default(),
            }),
            None => Ok(()),
        }
    }

    /// Norm table as CSV with columns term, norm0, norm1, bound, ratio.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for t in &self.norms {
            w.serialize(t)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}
