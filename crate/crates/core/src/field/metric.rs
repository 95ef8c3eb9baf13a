use super::{gradient_at, FieldKind, GridField, MetricField};
use crate::error::{Error, Result};
use crate::linalg::{sym_dim, sym_idx, sym_min_eig};
use rayon::prelude::*;

/// Pullback metric g_ij = ∂_i f · ∂_j f of a map field.
pub fn pullback(f: &GridField) -> Result<MetricField> {
    let grid = *f.grid();
    let (n, m) = (grid.n, f.components());
    if m < n {
        return Err(Error::Config(format!("pullback needs m ≥ n, got m = {m}, n = {n}")));
    }
    if grid.points_per_axis < 5 {
        return Err(Error::Config("grid too small for derivatives".into()));
    }
    Ok(GridField::build(grid, FieldKind::SymTensor, sym_dim(n), |p, out| {
        let mut d = [0.0; 3 * 64];
        if m > 64 {
            return false;
        }
        if !gradient_at(f, p, &mut d[..n * m]) {
            return false;
        }
        for i in 0..n {
            for j in i..n {
                let (a, b) = (&d[i * m..(i + 1) * m], &d[j * m..(j + 1) * m]);
                out[sym_idx(n, i, j)] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        true
    }))
}

/// Symmetric part of a full-matrix field (a symmetric-tensor field is returned unchanged).
pub fn sym(t: &GridField) -> Result<GridField> {
    let n = t.grid().n;
    match t.kind() {
        FieldKind::SymTensor => Ok(t.clone()),
        FieldKind::Matrix => Ok(t.map(FieldKind::SymTensor, sym_dim(n), |v, out| {
            crate::linalg::sym_of_full(n, v, out)
        })),
        k => Err(Error::Config(format!("sym needs a square matrix field, got {k:?}"))),
    }
}

/// Smallest eigenvalue over all valid points (`+∞` if no point is valid).
pub fn min_eigenvalue(g: &MetricField) -> Result<f64> {
    let n = g.grid().n;
    if g.kind() != FieldKind::SymTensor {
        return Err(Error::Config("min_eigenvalue needs a symmetric tensor field".into()));
    }
    Ok((0..g.len())
        .into_par_iter()
        .filter(|&p| g.is_valid(p))
        .map(|p| sym_min_eig(n, g.at(p)))
        .reduce(|| f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    #[test]
    fn sym_examples() {
        let g = GridSpec::centered(2, 5, 1.0).unwrap();
        let t = GridField::sample(g, FieldKind::Matrix, 4, |_, o| o.copy_from_slice(&[1.0, 2.0, 0.0, 1.0]));
        let s = sym(&t).unwrap();
        assert_eq!(s.at(12), &[1.0, 1.0, 1.0]);
        let a = GridField::sample(g, FieldKind::Matrix, 4, |_, o| o.copy_from_slice(&[0.0, 3.0, -3.0, 0.0]));
        assert_eq!(sym(&a).unwrap().at(12), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn inclusion_pullback_is_identity() {
        let g = GridSpec::centered(2, 33, 1.0).unwrap();
        let f = GridField::sample(g, FieldKind::Map, 4, |x, o| {
            o[0] = x[0];
            o[1] = x[1];
            o[2] = 0.0;
            o[3] = 0.0;
        });
        let m = pullback(&f).unwrap();
        for p in 0..m.len() {
            if m.is_valid(p) {
                let v = m.at(p);
                assert!((v[0] - 1.0).abs() < 1e-13 && v[1].abs() < 1e-13 && (v[2] - 1.0).abs() < 1e-13);
            }
        }
        assert!((min_eigenvalue(&m).unwrap() - 1.0).abs() < 1e-13);
    }
}
