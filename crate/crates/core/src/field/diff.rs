use super::GridField;
use crate::error::{Error, Result};

/// Derivative counts per axis.
pub type MultiIndex = [u8; 3];

/// Fourth-order central difference along `axis`.
///
/// A point's derivative is valid only if the point and its four stencil
/// neighbours along `axis` are valid; no one-sided stencils are used.
pub fn partial(f: &GridField, axis: usize) -> Result<GridField> {
    partial_step(f, axis, 1)
}

/// The same stencil at doubled spacing; `(partial − partial_coarse)/15` estimates the truncation error of `partial`.
pub fn partial_coarse(f: &GridField, axis: usize) -> Result<GridField> {
    partial_step(f, axis, 2)
}

/// Fourth-order central difference along `axis` with points `step` cells apart.
pub fn partial_step(f: &GridField, axis: usize, step: usize) -> Result<GridField> {
    let grid = *f.grid();
    if axis >= grid.n {
        return Err(Error::Config(format!("axis {axis} out of range for n = {}", grid.n)));
    }
    if grid.extent(axis) < 4 * step + 1 || grid.points_per_axis < 5 {
        return Err(Error::Config(format!(
            "grid extent {} along axis {axis} too small for the 5-point stencil",
            grid.extent(axis)
        )));
    }
    let stride = grid.stride(axis) * step;
    let extent = grid.extent(axis);
    let inv = 1.0 / (12.0 * grid.spacing * step as f64);
    let c = f.components();
    let s = f.samples();
    let m = f.mask();
    Ok(GridField::build(grid, f.kind(), c, |p, out| {
        let i = grid.index(p)[axis];
        if i < 2 * step || i + 2 * step >= extent {
            return false;
        }
        let (m2, m1, p1, p2) = (p - 2 * stride, p - stride, p + stride, p + 2 * stride);
        if !(m[p] && m[m2] && m[m1] && m[p1] && m[p2]) {
            return false;
        }
        for k in 0..c {
            out[k] = (s[m2 * c + k] - 8.0 * s[m1 * c + k] + 8.0 * s[p1 * c + k] - s[p2 * c + k]) * inv;
        }
        true
    }))
}

/// Fourth-order differences of every component along every axis at point `p`,
/// written as `out[axis * components + c]`. Returns false if any stencil point is invalid.
pub(crate) fn gradient_at(f: &GridField, p: usize, out: &mut [f64]) -> bool {
    let grid = f.grid();
    let c = f.components();
    let s = f.samples();
    let m = f.mask();
    if !m[p] {
        return false;
    }
    let idx = grid.index(p);
    let inv = 1.0 / (12.0 * grid.spacing);
    for axis in 0..grid.n {
        let stride = grid.stride(axis);
        let i = idx[axis];
        if i < 2 || i + 2 >= grid.extent(axis) {
            return false;
        }
        let (m2, m1, p1, p2) = (p - 2 * stride, p - stride, p + stride, p + 2 * stride);
        if !(m[m2] && m[m1] && m[p1] && m[p2]) {
            return false;
        }
        for k in 0..c {
            out[axis * c + k] = (s[m2 * c + k] - 8.0 * s[m1 * c + k] + 8.0 * s[p1 * c + k] - s[p2 * c + k]) * inv;
        }
    }
    true
}

/// All derivatives ∂^a f with |a| ≤ k, including f itself, ordered by total order.
pub fn derivative_family(f: &GridField, k: usize) -> Result<Vec<(MultiIndex, GridField)>> {
    let n = f.grid().n;
    // Each entry remembers the last axis differentiated so multi-indices are produced once.
    let mut out: Vec<(MultiIndex, GridField)> = vec![([0; 3], f.clone())];
    let mut frontier: Vec<(MultiIndex, usize, usize)> = vec![([0; 3], 0, 0)];
    for _ in 0..k {
        let mut next = Vec::new();
        for &(a, last, idx) in &frontier {
            for axis in last..n {
                let d = partial(&out[idx].1, axis)?;
                let mut b = a;
                b[axis] += 1;
                out.push((b, d));
                next.push((b, axis, out.len() - 1));
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// Total order of a multi-index.
pub fn order(a: &MultiIndex) -> usize {
    a.iter().map(|v| *v as usize).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldKind, GridSpec};

    #[test]
    fn linear_function_is_exact() {
        let g = GridSpec::centered(2, 65, 1.0).unwrap();
        let f = GridField::scalar(g, |x| 3.0 * x[0] - 2.0 * x[1]);
        let d0 = partial(&f, 0).unwrap();
        let d1 = partial(&f, 1).unwrap();
        for p in 0..g.len() {
            if d0.is_valid(p) {
                assert!((d0.at(p)[0] - 3.0).abs() < 1e-12);
            }
            if d1.is_valid(p) {
                assert!((d1.at(p)[0] + 2.0).abs() < 1e-12);
            }
        }
        assert!(d0.valid_count() > 0);
    }

    #[test]
    fn family_counts() {
        let g = GridSpec::centered(3, 15, 1.0).unwrap();
        let f = GridField::sample(g, FieldKind::Map, 2, |x, o| {
            o[0] = x[0];
            o[1] = x[1] * x[2];
        });
        let fam = derivative_family(&f, 2).unwrap();
        // 1 + 3 + 6 multi-indices
        assert_eq!(fam.len(), 10);
        assert_eq!(fam.iter().filter(|(a, _)| order(a) == 2).count(), 6);
    }
}
