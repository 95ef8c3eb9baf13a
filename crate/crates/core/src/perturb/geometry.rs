//! Pointwise oscillation data shared by the τ-tensors, the perturbation, the
//! ledger and the bilinear error form.

use super::Variant;
use crate::error::{Error, Result};
use crate::field::{partial, partial_coarse, GridField, MetricField};
use crate::frame::{DirectionSet, FrameField, MAX_TARGET};
use crate::linalg::{sym_idx, sym_inverse};

pub(crate) const MT: usize = MAX_TARGET;
pub(crate) type Vector = [f64; MT];
pub(crate) const ZERO: Vector = [0.0; MT];

/// Mollified map, frames and their first derivatives for one stage.
#[derive(Debug, Clone)]
pub struct OscGeometry {
    pub variant: Variant,
    pub dirs: DirectionSet,
    pub lambda: f64,
    pub delta: f64,
    pub ell: f64,
    pub f_ell: GridField,
    pub g_ell: MetricField,
    pub frames: FrameField,
    df: Vec<GridField>,
    dfc: Vec<GridField>,
    dnu1: Vec<GridField>,
    dnu2: Vec<GridField>,
}

impl OscGeometry {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: Variant,
        f_ell: GridField,
        g_ell: MetricField,
        frames: FrameField,
        dirs: DirectionSet,
        lambda: f64,
        delta: f64,
        ell: f64,
    ) -> Result<Self> {
        if frames.variant != variant {
            return Err(Error::Config(format!("{variant:?} stage given {:?} frames", frames.variant)));
        }
        if frames.count != dirs.len() || frames.m != f_ell.components() {
            return Err(Error::Config("frame shape does not match directions and target".into()));
        }
        if !(lambda > 0.0 && delta > 0.0) {
            return Err(Error::Domain("λ and δ must be positive".into()));
        }
        let n = f_ell.grid().n;
        let mut df = Vec::new();
        let mut dfc = Vec::new();
        let mut dnu1 = Vec::new();
        let mut dnu2 = Vec::new();
        for a in 0..n {
            df.push(partial(&f_ell, a)?);
            dfc.push(partial_coarse(&f_ell, a)?);
            dnu1.push(partial(&frames.nu1, a)?);
            dnu2.push(partial(&frames.nu2, a)?);
        }
        Ok(Self { variant, dirs, lambda, delta, ell, f_ell, g_ell, frames, df, dfc, dnu1, dnu2 })
    }

    pub fn n(&self) -> usize {
        self.f_ell.grid().n
    }

    pub fn m(&self) -> usize {
        self.f_ell.components()
    }

    pub fn count(&self) -> usize {
        self.dirs.len()
    }

    /// Whether every derivative needed at `p` exists.
    pub fn is_valid(&self, p: usize) -> bool {
        self.frames.nu1.is_valid(p)
            && self.frames.nu2.is_valid(p)
            && self.df.iter().all(|d| d.is_valid(p))
            && self.dnu1.iter().all(|d| d.is_valid(p))
            && self.dnu2.iter().all(|d| d.is_valid(p))
    }

    /// Phases λ x·n_k with x measured from the domain centre.
    pub fn phases(&self, p: usize) -> [f64; 6] {
        let x = self.f_ell.grid().offset(p);
        let mut th = [0.0; 6];
        for (k, nk) in self.dirs.dirs.iter().enumerate() {
            th[k] = self.lambda * (0..self.n()).map(|i| x[i] * nk[i]).sum::<f64>();
        }
        th
    }

    pub(crate) fn point(&self, p: usize) -> Option<Point> {
        if !self.is_valid(p) {
            return None;
        }
        let (n, m, count) = (self.n(), self.m(), self.count());
        let mut pt = Point {
            n,
            m,
            count,
            variant: self.variant,
            lambda: self.lambda,
            delta: self.delta,
            nk: [[0.0; 3]; 6],
            s: [0.0; 6],
            c: [0.0; 6],
            s2: [0.0; 6],
            c2: [0.0; 6],
            nu1: [ZERO; 6],
            nu2: [ZERO; 6],
            dnu1: [[ZERO; 3]; 6],
            dnu2: [[ZERO; 3]; 6],
            df: [ZERO; 3],
            shat: [ZERO; 6],
            chat: [ZERO; 6],
            dhat: [[ZERO; 3]; 6],
            ident_est: [0.0; 6],
        };
        let th = self.phases(p);
        for k in 0..count {
            pt.nk[k] = self.dirs.dirs[k];
            pt.s[k] = th[k].sin();
            pt.c[k] = th[k].cos();
            pt.s2[k] = (2.0 * th[k]).sin();
            pt.c2[k] = (2.0 * th[k]).cos();
            pt.nu1[k][..m].copy_from_slice(&self.frames.nu1.at(p)[k * m..(k + 1) * m]);
            pt.nu2[k][..m].copy_from_slice(&self.frames.nu2.at(p)[k * m..(k + 1) * m]);
            for i in 0..n {
                pt.dnu1[k][i][..m].copy_from_slice(&self.dnu1[i].at(p)[k * m..(k + 1) * m]);
                pt.dnu2[k][i][..m].copy_from_slice(&self.dnu2[i].at(p)[k * m..(k + 1) * m]);
            }
        }
        for i in 0..n {
            pt.df[i][..m].copy_from_slice(self.df[i].at(p));
        }
        let r2 = std::f64::consts::SQRT_2;
        for k in 0..count {
            let (s, c) = (pt.s[k], pt.c[k]);
            for x in 0..m {
                match self.variant {
                    Variant::Spiral => {
                        pt.shat[k][x] = s * pt.nu1[k][x] + c * pt.nu2[k][x];
                        pt.chat[k][x] = c * pt.nu1[k][x] - s * pt.nu2[k][x];
                        for i in 0..n {
                            pt.dhat[k][i][x] = s * pt.dnu1[k][i][x] + c * pt.dnu2[k][i][x];
                        }
                    }
                    Variant::Strain => {
                        pt.shat[k][x] = r2 * c * pt.nu2[k][x];
                        pt.chat[k][x] = -r2 * s * pt.nu2[k][x];
                        for i in 0..n {
                            pt.dhat[k][i][x] = r2 * c * pt.dnu2[k][i][x];
                        }
                    }
                }
            }
        }
        if self.variant == Variant::Strain {
            pt.ident_est = self.identity_estimate(p);
        }
        Some(pt)
    }

    /// Per-direction Richardson estimate of |∂_i f·ν¹_k − (n_k)_i| (max over i).
    fn identity_estimate(&self, p: usize) -> [f64; 6] {
        let n = self.n();
        let mut est = [0.0; 6];
        if !self.g_ell.is_valid(p) || !self.dfc.iter().all(|d| d.is_valid(p)) {
            return est;
        }
        let inv = match sym_inverse(n, self.g_ell.at(p)) {
            Some(v) => v,
            None => return est,
        };
        let mut t = [0.0; 3];
        let mut gn = [0.0; 3];
        for a in 0..n {
            let (fine, coarse) = (self.df[a].at(p), self.dfc[a].at(p));
            gn[a] = fine.iter().map(|v| v * v).sum::<f64>().sqrt();
            t[a] = fine.iter().zip(coarse).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / 15.0;
        }
        for (k, nk) in self.dirs.dirs.iter().enumerate() {
            let v: Vec<f64> = (0..n).map(|r| (0..n).map(|i| inv[sym_idx(n, r, i)] * nk[i]).sum()).collect();
            for i in 0..n {
                let e: f64 = (0..n).map(|r| v[r].abs() * (t[i] * gn[r] + gn[i] * t[r])).sum();
                est[k] = est[k].max(e);
            }
        }
        est
    }
}

/// Everything the closed-form terms need at one grid point.
pub(crate) struct Point {
    pub n: usize,
    pub m: usize,
    pub count: usize,
    pub variant: Variant,
    pub lambda: f64,
    pub delta: f64,
    pub nk: [[f64; 3]; 6],
    pub s: [f64; 6],
    pub c: [f64; 6],
    pub s2: [f64; 6],
    pub c2: [f64; 6],
    pub nu1: [Vector; 6],
    pub nu2: [Vector; 6],
    pub dnu1: [[Vector; 3]; 6],
    pub dnu2: [[Vector; 3]; 6],
    pub df: [Vector; 3],
    /// Bilinear-channel vectors: X_{k,i} = ∂_iA_k ŝ_k, C_k = A_k ĉ_k, D_{k,i} = A_k d̂_{k,i}.
    pub shat: [Vector; 6],
    pub chat: [Vector; 6],
    pub dhat: [[Vector; 3]; 6],
    pub ident_est: [f64; 6],
}

/// Direction sums X̄_i = Σ_k X_{k,i}, D̄_i = Σ_k D_{k,i}, Ĉ_i = Σ_k C_k (n_k)_i.
#[derive(Clone, Copy)]
pub(crate) struct Bars {
    pub x: [Vector; 3],
    pub d: [Vector; 3],
    pub c: [Vector; 3],
}

impl Bars {
    pub fn zero() -> Self {
        Self { x: [ZERO; 3], d: [ZERO; 3], c: [ZERO; 3] }
    }

    pub fn plus(&self, o: &Bars) -> Bars {
        let mut r = *self;
        for i in 0..3 {
            for x in 0..MT {
                r.x[i][x] += o.x[i][x];
                r.d[i][x] += o.d[i][x];
                r.c[i][x] += o.c[i][x];
            }
        }
        r
    }
}

pub(crate) fn dot(a: &Vector, b: &Vector, m: usize) -> f64 {
    (0..m).map(|x| a[x] * b[x]).sum()
}

impl Point {
    /// Bilinear channel with amplitudes `a` and gradients `da[k][i]`.
    pub fn bars2(&self, a: &[f64], da: &[[f64; 3]; 6]) -> Bars {
        let mut b = Bars::zero();
        for k in 0..self.count {
            for i in 0..self.n {
                for x in 0..self.m {
                    b.x[i][x] += da[k][i] * self.shat[k][x];
                    b.d[i][x] += a[k] * self.dhat[k][i][x];
                    b.c[i][x] += a[k] * self.chat[k][x] * self.nk[k][i];
                }
            }
        }
        b
    }

    /// Tangential channel of the strain (zero for spirals).
    pub fn bars1(&self, a: &[f64], da: &[[f64; 3]; 6]) -> Bars {
        let mut b = Bars::zero();
        if self.variant == Variant::Spiral {
            return b;
        }
        let sd = self.delta.sqrt();
        for k in 0..self.count {
            let (s2, c2) = (self.s2[k], self.c2[k]);
            for i in 0..self.n {
                let xk = da[k][i] * sd * 0.5 * a[k] * s2;
                let dk = sd * 0.25 * a[k] * a[k] * s2;
                let ck = sd * 0.5 * a[k] * a[k] * c2 * self.nk[k][i];
                for x in 0..self.m {
                    b.x[i][x] += xk * self.nu1[k][x];
                    b.d[i][x] += dk * self.dnu1[k][i][x];
                    b.c[i][x] += ck * self.nu1[k][x];
                }
            }
        }
        b
    }

    /// Σ_k ∂_i w^{(k)} / δ^{1/2} by direct differentiation of the perturbation formula.
    pub fn dw_direct(&self, a: &[f64], da: &[[f64; 3]; 6]) -> [Vector; 3] {
        let mut out = [ZERO; 3];
        let (lam, sd) = (self.lambda, self.delta.sqrt());
        let r2 = std::f64::consts::SQRT_2;
        for k in 0..self.count {
            let (s, c, s2, c2, ak) = (self.s[k], self.c[k], self.s2[k], self.c2[k], a[k]);
            for i in 0..self.n {
                let ni = self.nk[k][i];
                let dai = da[k][i];
                for x in 0..self.m {
                    let (v1, v2) = (self.nu1[k][x], self.nu2[k][x]);
                    let (d1, d2) = (self.dnu1[k][i][x], self.dnu2[k][i][x]);
                    out[i][x] += match self.variant {
                        Variant::Spiral => {
                            dai / lam * (s * v1 + c * v2) + ak * ni * (c * v1 - s * v2) + ak / lam * (s * d1 + c * d2)
                        }
                        Variant::Strain => {
                            sd / (4.0 * lam) * (2.0 * ak * dai * s2 * v1 + ak * ak * 2.0 * lam * ni * c2 * v1 + ak * ak * s2 * d1)
                                + r2 / lam * (dai * c * v2 - ak * lam * ni * s * v2 + ak * c * d2)
                        }
                    };
                }
            }
        }
        out
    }
}
