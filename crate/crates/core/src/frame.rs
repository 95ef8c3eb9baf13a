//! Direction sets and per-point frames: orthonormal normals and, for strains,
//! tangent fields ν¹_k with ∂_i f · ν¹_k = (n_k)_i.

use crate::error::{Error, Result};
use crate::field::{gradient_at, partial, partial_coarse, FieldKind, GridField, MetricField};
use crate::linalg::{solve_with_condition, sym_dim, sym_idx, sym_inverse, sym_min_eig, Dense, MAX_DIM};
use crate::perturb::Variant;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest supported target dimension m.
pub const MAX_TARGET: usize = 16;

/// Tight-frame direction set with Id = Σ c_k² n_k⊗n_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub n: usize,
    pub dirs: Vec<[f64; 3]>,
    /// The c_k (positive square roots).
    pub id_coeffs: Vec<f64>,
    /// 1-norm condition number of the Gram matrix of {n_k⊗n_k}.
    pub gram_condition: f64,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// Matrix whose column k is n_k⊗n_k in upper-triangle coordinates.
    pub fn basis_matrix(&self) -> Dense {
        let mut b: Dense = [[0.0; MAX_DIM]; MAX_DIM];
        for (k, d) in self.dirs.iter().enumerate() {
            for i in 0..self.n {
                for j in i..self.n {
                    b[sym_idx(self.n, i, j)][k] = d[i] * d[j];
                }
            }
        }
        b
    }
}

/// Equiangular directions for n = 2, icosahedral axes for n = 3.
pub fn make_directions(n: usize) -> Result<DirectionSet> {
    let dirs: Vec<[f64; 3]> = match n {
        2 => (0..3)
            .map(|k| {
                let t = k as f64 * std::f64::consts::PI / 3.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
        3 => {
            let phi = 0.5 * (1.0 + 5f64.sqrt());
            let s = (1.0 + phi * phi).sqrt();
            [[0.0, 1.0, phi], [0.0, 1.0, -phi], [1.0, phi, 0.0], [-1.0, phi, 0.0], [phi, 0.0, 1.0], [phi, 0.0, -1.0]]
                .iter()
                .map(|v| [v[0] / s, v[1] / s, v[2] / s])
                .collect()
        }
        _ => return Err(Error::Config(format!("direction sets exist for n ∈ {{2, 3}}, got {n}"))),
    };
    let dim = sym_dim(n);
    let mut set = DirectionSet { n, dirs, id_coeffs: vec![], gram_condition: 0.0 };
    let b = set.basis_matrix();
    let mut id = [0.0; MAX_DIM];
    for i in 0..n {
        id[sym_idx(n, i, i)] = 1.0;
    }
    let (c2, _) = solve_with_condition(&b, dim, &id).ok_or_else(|| Error::Config("singular direction set".into()))?;
    let mut gram: Dense = [[0.0; MAX_DIM]; MAX_DIM];
    for k in 0..dim {
        for l in 0..dim {
            let d: f64 = (0..n).map(|i| set.dirs[k][i] * set.dirs[l][i]).sum();
            gram[k][l] = d * d;
        }
    }
    let (_, cond) = solve_with_condition(&gram, dim, &[1.0; MAX_DIM][..dim]).ok_or_else(|| Error::Config("singular Gram matrix".into()))?;
    if c2[..dim].iter().any(|c| *c < 0.1) {
        return Err(Error::Config("identity not interior to the cone of the direction set".into()));
    }
    set.id_coeffs = c2[..dim].iter().map(|c| c.sqrt()).collect();
    set.gram_condition = cond;
    Ok(set)
}

/// Per-point frames: `nu1` and `nu2` each hold N_dir vectors of length m per point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    pub variant: Variant,
    pub m: usize,
    pub count: usize,
    pub nu1: GridField,
    pub nu2: GridField,
}

impl FrameField {
    /// Spiral frames from 2·N_dir normals ordered (ν¹_0, ν²_0, ν¹_1, ν²_1, …).
    pub fn spiral(normals: &GridField, m: usize) -> Self {
        let count = normals.components() / (2 * m);
        let pick = |which: usize| {
            normals.map(FieldKind::Map, count * m, |v, out| {
                for k in 0..count {
                    out[k * m..(k + 1) * m].copy_from_slice(&v[(2 * k + which) * m..(2 * k + which + 1) * m]);
                }
            })
        };
        Self { variant: Variant::Spiral, m, count, nu1: pick(0), nu2: pick(1) }
    }

    /// Strain frames from tangent fields ν¹ and N_dir normals ν².
    pub fn strain(nu1: GridField, nu2: GridField, m: usize) -> Self {
        let count = nu2.components() / m;
        Self { variant: Variant::Strain, m, count, nu1, nu2 }
    }

    /// Normals in the layout accepted as `reference` by [`normal_frame`].
    pub fn normals(&self) -> GridField {
        match self.variant {
            Variant::Strain => self.nu2.clone(),
            Variant::Spiral => {
                let (m, count) = (self.m, self.count);
                self.nu1.zip(&self.nu2, FieldKind::Map, 2 * count * m, |a, b, out| {
                    for k in 0..count {
                        out[2 * k * m..(2 * k + 1) * m].copy_from_slice(&a[k * m..(k + 1) * m]);
                        out[(2 * k + 1) * m..(2 * k + 2) * m].copy_from_slice(&b[k * m..(k + 1) * m]);
                    }
                })
            }
        }
    }
}

/// Smallest tangent singular value below which the immersion counts as degenerate.
pub const RANK_FLOOR: f64 = 1e-6;
/// Projected seed norm below which the seed counts as collapsed.
pub const SEED_FLOOR: f64 = 1e-3;

/// `d` orthonormal normals per point, seeded by `reference` (same layout) or by e_{n+1}, …, e_{n+d}.
pub fn normal_frame(f: &GridField, d: usize, reference: Option<&GridField>) -> Result<GridField> {
    let grid = *f.grid();
    let (n, m) = (grid.n, f.components());
    if m > MAX_TARGET {
        return Err(Error::Config(format!("target dimension {m} exceeds {MAX_TARGET}")));
    }
    if m < n + d {
        return Err(Error::Config(format!("codimension {} too small for {d} normals", m - n.min(m))));
    }
    if let Some(r) = reference {
        if r.components() != d * m || r.len() != f.len() {
            return Err(Error::Config("reference frame shape mismatch".into()));
        }
    }
    GridField::try_build(grid, FieldKind::Map, d * m, |p, out| {
        let mut grad = [0.0; 3 * MAX_TARGET];
        if !gradient_at(f, p, &mut grad[..n * m]) {
            return Ok(false);
        }
        let basis = tangent_basis(&grad[..n * m], n, m).map_err(|sigma| Error::DegenerateImmersion {
            location: grid.position(p)[..n].to_vec(),
            sigma,
        })?;
        for j in 0..d {
            let mut v = [0.0; MAX_TARGET];
            match reference.filter(|r| r.is_valid(p)) {
                Some(r) => v[..m].copy_from_slice(&r.at(p)[j * m..(j + 1) * m]),
                None => v[n + j] = 1.0,
            }
            let seed_norm = norm(&v[..m]);
            for pass in 0..2 {
                for q in basis.iter().take(n) {
                    project_out(&mut v[..m], &q[..m]);
                }
                for k in 0..j {
                    project_out(&mut v[..m], &out[k * m..(k + 1) * m]);
                }
                if pass == 0 {
                    let r = norm(&v[..m]) / seed_norm;
                    if r < SEED_FLOOR {
                        return Err(Error::FrameSeed { location: grid.position(p)[..n].to_vec(), norm: r });
                    }
                }
            }
            let len = norm(&v[..m]);
            for c in 0..m {
                out[j * m + c] = v[c] / len;
            }
        }
        Ok(true)
    })
}

/// Orthonormal tangent basis by modified Gram–Schmidt with reorthogonalization.
fn tangent_basis(grad: &[f64], n: usize, m: usize) -> std::result::Result<[[f64; MAX_TARGET]; 3], f64> {
    let mut g = [0.0; 6];
    for i in 0..n {
        for j in i..n {
            g[sym_idx(n, i, j)] = dot(&grad[i * m..(i + 1) * m], &grad[j * m..(j + 1) * m]);
        }
    }
    let sigma = sym_min_eig(n, &g[..sym_dim(n)]).max(0.0).sqrt();
    if sigma < RANK_FLOOR {
        return Err(sigma);
    }
    let mut q = [[0.0; MAX_TARGET]; 3];
    for i in 0..n {
        q[i][..m].copy_from_slice(&grad[i * m..(i + 1) * m]);
        for _ in 0..2 {
            for k in 0..i {
                let (head, tail) = q.split_at_mut(i);
                project_out(&mut tail[0][..m], &head[k][..m]);
            }
        }
        let len = norm(&q[i][..m]);
        for c in 0..m {
            q[i][c] /= len;
        }
    }
    Ok(q)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn project_out(v: &mut [f64], unit: &[f64]) {
    let c = dot(v, unit);
    for (x, u) in v.iter_mut().zip(unit) {
        *x -= c * u;
    }
}

/// ν¹_k = Σ_r (g_ℓ⁻¹ n_k)^r ∂_r f_ℓ for every direction.
pub fn tangent_frame(f_ell: &GridField, g_ell: &MetricField, dirs: &DirectionSet) -> Result<GridField> {
    let grid = *f_ell.grid();
    let (n, m, nd) = (grid.n, f_ell.components(), dirs.len());
    if m > MAX_TARGET {
        return Err(Error::Config(format!("target dimension {m} exceeds {MAX_TARGET}")));
    }
    GridField::try_build(grid, FieldKind::Map, nd * m, |p, out| {
        let mut grad = [0.0; 3 * MAX_TARGET];
        if !g_ell.is_valid(p) || !gradient_at(f_ell, p, &mut grad[..n * m]) {
            return Ok(false);
        }
        let g = g_ell.at(p);
        let eig = sym_min_eig(n, g);
        let inv = match sym_inverse(n, g) {
            Some(inv) if eig >= 1e-6 => inv,
            _ => return Err(Error::SingularMetric { location: grid.position(p)[..n].to_vec(), eig }),
        };
        for (k, nk) in dirs.dirs.iter().enumerate() {
            let o = &mut out[k * m..(k + 1) * m];
            o.fill(0.0);
            for r in 0..n {
                let v: f64 = (0..n).map(|i| inv[sym_idx(n, r, i)] * nk[i]).sum();
                for c in 0..m {
                    o[c] += v * grad[r * m + c];
                }
            }
        }
        Ok(true)
    })
}

/// Orthonormality residuals of a frame family against the tangent space of f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameResidual {
    /// max |ν_a · ∂_i f|
    pub tangent: f64,
    /// max |ν_a · ν_b − δ_ab|
    pub gram: f64,
}

/// Tangency and Gram residuals of `vectors` (d·m components) against ∂f.
pub fn frame_residual(f: &GridField, vectors: &GridField) -> FrameResidual {
    let grid = *f.grid();
    let (n, m) = (grid.n, f.components());
    let d = vectors.components() / m;
    let (t, g) = (0..f.len())
        .into_par_iter()
        .filter(|&p| vectors.is_valid(p))
        .map(|p| {
            let mut grad = [0.0; 3 * MAX_TARGET];
            if !gradient_at(f, p, &mut grad[..n * m]) {
                return (0.0, 0.0);
            }
            let v = vectors.at(p);
            let mut t: f64 = 0.0;
            let mut g: f64 = 0.0;
            for a in 0..d {
                let va = &v[a * m..(a + 1) * m];
                for i in 0..n {
                    t = t.max(dot(va, &grad[i * m..(i + 1) * m]).abs());
                }
                for b in a..d {
                    let e = dot(va, &v[b * m..(b + 1) * m]) - if a == b { 1.0 } else { 0.0 };
                    g = g.max(e.abs());
                }
            }
            (t, g)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    FrameResidual { tangent: t, gram: g }
}

/// Largest |ν¹_a · ν²_b| between two families.
pub fn cross_residual(nu1: &GridField, nu2: &GridField, m: usize) -> f64 {
    let (d1, d2) = (nu1.components() / m, nu2.components() / m);
    (0..nu1.len())
        .into_par_iter()
        .filter(|&p| nu1.is_valid(p) && nu2.is_valid(p))
        .map(|p| {
            let (a, b) = (nu1.at(p), nu2.at(p));
            let mut r: f64 = 0.0;
            for i in 0..d1 {
                for j in 0..d2 {
                    r = r.max(dot(&a[i * m..(i + 1) * m], &b[j * m..(j + 1) * m]).abs());
                }
            }
            r
        })
        .reduce(|| 0.0, f64::max)
}

/// The fundamental identity ∂_i f·ν¹_k = (n_k)_i measured against a finite-difference truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub max_residual: f64,
    /// Propagated Richardson estimate of the fourth-order truncation error.
    pub truncation_estimate: f64,
}

/// Evaluate the fundamental identity with the same finite differences used to build ν¹.
///
/// The truncation estimate at a point is Σ_r |v_k^r|(T_i|∂_r f| + |∂_i f|T_r) with
/// T_a = |D_h f − D_{2h} f|/15 along axis a and v_k = g_ℓ⁻¹n_k.
pub fn fundamental_identity(
    f_ell: &GridField,
    g_ell: &MetricField,
    nu1: &GridField,
    dirs: &DirectionSet,
) -> Result<IdentityCheck> {
    let grid = *f_ell.grid();
    let (n, m) = (grid.n, f_ell.components());
    let mut fine = Vec::new();
    let mut coarse = Vec::new();
    for a in 0..n {
        fine.push(partial(f_ell, a)?);
        coarse.push(partial_coarse(f_ell, a)?);
    }
    let (res, est) = (0..f_ell.len())
        .into_par_iter()
        .filter(|&p| nu1.is_valid(p) && g_ell.is_valid(p) && fine.iter().all(|d| d.is_valid(p)))
        .map(|p| {
            let inv = sym_inverse(n, g_ell.at(p)).unwrap_or([0.0; 6]);
            let have_coarse = coarse.iter().all(|d| d.is_valid(p));
            let mut t = [0.0; 3];
            let mut gnorm = [0.0; 3];
            for a in 0..n {
                gnorm[a] = norm(fine[a].at(p));
                if have_coarse {
                    let diff: Vec<f64> = fine[a].at(p).iter().zip(coarse[a].at(p)).map(|(x, y)| x - y).collect();
                    t[a] = norm(&diff) / 15.0;
                }
            }
            let mut res: f64 = 0.0;
            let mut est: f64 = 0.0;
            for (k, nk) in dirs.dirs.iter().enumerate() {
                let v: Vec<f64> = (0..n).map(|r| (0..n).map(|i| inv[sym_idx(n, r, i)] * nk[i]).sum()).collect();
                let nu = &nu1.at(p)[k * m..(k + 1) * m];
                for i in 0..n {
                    res = res.max((dot(fine[i].at(p), nu) - nk[i]).abs());
                    let e: f64 = (0..n).map(|r| v[r].abs() * (t[i] * gnorm[r] + gnorm[i] * t[r])).sum();
                    est = est.max(e);
                }
            }
            (res, est)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(IdentityCheck { max_residual: res, truncation_estimate: est })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equiangular_coefficients() {
        let d = make_directions(2).unwrap();
        for c in &d.id_coeffs {
            assert!((c * c - 2.0 / 3.0).abs() < 1e-14);
        }
        assert!(d.gram_condition.is_finite() && d.gram_condition > 1.0);
    }

    #[test]
    fn icosahedral_coefficients() {
        let d = make_directions(3).unwrap();
        for c in &d.id_coeffs {
            assert!((c * c - 0.5).abs() < 1e-13);
        }
        for v in &d.dirs {
            assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unsupported_dimension() {
        assert!(make_directions(4).is_err());
    }
}
