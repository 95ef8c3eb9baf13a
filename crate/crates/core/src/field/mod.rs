//! Sampled fields on a uniform grid over a shrinking ball.
//!
//! A [`GridField`] stores per-point components in row-major point order with
//! axis 0 slowest. Every point carries a validity flag: points outside the
//! ball, or whose stencils would need data that is not available, are invalid
//! and excluded from every norm.

mod container;
mod diff;
mod holder;
mod mesh;
mod metric;

pub use container::{read_container, write_container};
pub use diff::{derivative_family, order, partial, partial_coarse, partial_step, MultiIndex};
pub(crate) use diff::gradient_at;
pub use holder::{
    cr_norm, cr_norm_rows, cr_seminorm, holder_norm, holder_norm_with, interpolation_check, norm_real, HolderEstimate,
    HolderOptions, InterpolationReport, DEFAULT_PAIR_BUDGET,
};
pub use mesh::write_obj;
pub use metric::{min_eigenvalue, pullback, sym};

use crate::error::{Error, Result};
use crate::linalg::sym_dim;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Geometry of a uniform grid, possibly restricted to a band of axis-0 rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub points_per_axis: usize,
    pub spacing: f64,
    pub center: [f64; 3],
    pub radius: f64,
    /// First global axis-0 index held by this grid.
    pub row_start: usize,
    /// Number of axis-0 indices held.
    pub rows: usize,
}

impl GridSpec {
    /// Full grid of `points_per_axis` points per axis covering the ball of `radius` about `center`.
    pub fn new(n: usize, points_per_axis: usize, spacing: f64, center: &[f64], radius: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::Config(format!("grid dimension {n} not in 1..=3")));
        }
        if center.len() != n {
            return Err(Error::Config("center length differs from n".into()));
        }
        if points_per_axis < 5 {
            return Err(Error::Config(format!("{points_per_axis} points per axis; at least 5 needed")));
        }
        if !(spacing > 0.0) || !(radius > 0.0) {
            return Err(Error::Config("spacing and radius must be positive".into()));
        }
        if spacing * (points_per_axis as f64 - 1.0) < 2.0 * radius * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "grid of {points_per_axis} points at spacing {spacing} does not cover radius {radius}"
            )));
        }
        let mut c = [0.0; 3];
        c[..n].copy_from_slice(center);
        Ok(Self { n, points_per_axis, spacing, center: c, radius, row_start: 0, rows: points_per_axis })
    }

    /// Grid centered at the origin whose extent is exactly the ball diameter.
    pub fn centered(n: usize, points_per_axis: usize, radius: f64) -> Result<Self> {
        let spacing = 2.0 * radius / (points_per_axis as f64 - 1.0);
        Self::new(n, points_per_axis, spacing, &vec![0.0; n], radius)
    }

    /// Number of points held (rows × points_per_axis^{n−1}).
    pub fn len(&self) -> usize {
        self.rows * self.points_per_axis.pow(self.n as u32 - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether this grid covers every axis-0 row of the full grid.
    pub fn is_full(&self) -> bool {
        self.row_start == 0 && self.rows == self.points_per_axis
    }

    /// Stride of a unit step along `axis` in point indices.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.n - 1 - axis) as u32)
    }

    /// Local extent along `axis`.
    pub fn extent(&self, axis: usize) -> usize {
        if axis == 0 {
            self.rows
        } else {
            self.points_per_axis
        }
    }

    /// Local multi-index of point `p`.
    pub fn index(&self, p: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = p;
        for axis in (0..self.n).rev() {
            let e = self.extent(axis);
            idx[axis] = rem % e;
            rem /= e;
        }
        idx
    }

    /// Point number of a local multi-index.
    pub fn point(&self, idx: &[usize]) -> usize {
        (0..self.n).map(|a| idx[a] * self.stride(a)).sum()
    }

    /// Coordinate of a global grid index along `axis`.
    pub fn coord(&self, axis: usize, global: usize) -> f64 {
        self.center[axis] + (global as f64 - 0.5 * (self.points_per_axis as f64 - 1.0)) * self.spacing
    }

    /// Position of point `p`.
    pub fn position(&self, p: usize) -> [f64; 3] {
        let idx = self.index(p);
        let mut x = [0.0; 3];
        for a in 0..self.n {
            let g = if a == 0 { idx[0] + self.row_start } else { idx[a] };
            x[a] = self.coord(a, g);
        }
        x
    }

    /// Position relative to the center.
    pub fn offset(&self, p: usize) -> [f64; 3] {
        let mut x = self.position(p);
        for a in 0..self.n {
            x[a] -= self.center[a];
        }
        x
    }

    /// Whether point `p` lies in the closed ball.
    pub fn in_ball(&self, p: usize) -> bool {
        let x = self.offset(p);
        let r2: f64 = x[..self.n].iter().map(|v| v * v).sum();
        r2.sqrt() <= self.radius * (1.0 + 1e-12)
    }

    /// Same grid geometry with a smaller radius.
    pub fn with_radius(&self, radius: f64) -> Self {
        Self { radius, ..*self }
    }

    /// Band of `rows` axis-0 rows starting at local row `start`.
    pub fn band(&self, start: usize, rows: usize) -> Self {
        Self { row_start: self.row_start + start, rows, ..*self }
    }
}

/// Tensor type of a field's components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Scalar,
    /// Vector-valued map, also used for coefficient families.
    Map,
    /// Symmetric n×n tensor, upper triangle stored.
    SymTensor,
    /// Full n×n matrix stored row-major (unsymmetrized terms).
    Matrix,
}

impl FieldKind {
    pub fn code(self) -> u8 {
        match self {
            FieldKind::Scalar => 0,
            FieldKind::Map => 1,
            FieldKind::SymTensor => 2,
            FieldKind::Matrix => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => FieldKind::Scalar,
            1 => FieldKind::Map,
            2 => FieldKind::SymTensor,
            3 => FieldKind::Matrix,
            _ => return None,
        })
    }
}

/// Samples of a field on a grid with a per-point validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    kind: FieldKind,
    components: usize,
    samples: Vec<f64>,
    valid: Vec<bool>,
}

/// Symmetric-tensor field used as a metric.
pub type MetricField = GridField;

impl GridField {
    /// Assemble from raw parts; invalid samples are zeroed.
    pub fn from_parts(
        grid: GridSpec,
        kind: FieldKind,
        components: usize,
        mut samples: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        check_components(&grid, kind, components)?;
        if samples.len() != grid.len() * components || valid.len() != grid.len() {
            return Err(Error::Config("sample or mask length does not match grid".into()));
        }
        for (p, ok) in valid.iter().enumerate() {
            let s = &mut samples[p * components..(p + 1) * components];
            if !ok {
                s.fill(0.0);
            } else if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite sample at point {p}")));
            }
        }
        Ok(Self { grid, kind, components, samples, valid })
    }

    /// Build pointwise in parallel. The closure receives the point number and
    /// its output slot, and returns whether the point is valid.
    pub fn build<F>(grid: GridSpec, kind: FieldKind, components: usize, f: F) -> Self
    where
        F: Fn(usize, &mut [f64]) -> bool + Sync,
    {
        check_components(&grid, kind, components).expect("component count matches kind");
        let mut samples = vec![0.0; grid.len() * components];
        let mut valid = vec![false; grid.len()];
        samples
            .par_chunks_mut(components.max(1))
            .zip(valid.par_iter_mut())
            .enumerate()
            .for_each(|(p, (out, ok))| {
                *ok = f(p, out);
                if !*ok || out.iter().any(|v| !v.is_finite()) {
                    *ok = false;
                    out.fill(0.0);
                }
            });
        Self { grid, kind, components, samples, valid }
    }

    /// Fallible pointwise build. The first error in point order is returned.
    pub fn try_build<F>(grid: GridSpec, kind: FieldKind, components: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, &mut [f64]) -> Result<bool> + Sync,
    {
        check_components(&grid, kind, components)?;
        let mut samples = vec![0.0; grid.len() * components];
        let mut valid = vec![false; grid.len()];
        let first_err = samples
            .par_chunks_mut(components.max(1))
            .zip(valid.par_iter_mut())
            .enumerate()
            .filter_map(|(p, (out, ok))| match f(p, out) {
                Ok(v) => {
                    *ok = v && out.iter().all(|x| x.is_finite());
                    if !*ok {
                        out.fill(0.0);
                    }
                    None
                }
                Err(e) => Some((p, e)),
            })
            .min_by_key(|(p, _)| *p);
        match first_err {
            Some((_, e)) => Err(e),
            None => Ok(Self { grid, kind, components, samples, valid }),
        }
    }

    /// Sample a function of position on the ball.
    pub fn sample<F>(grid: GridSpec, kind: FieldKind, components: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        Self::build(grid, kind, components, |p, out| {
            if !grid.in_ball(p) {
                return false;
            }
            let x = grid.position(p);
            f(&x[..grid.n], out);
            true
        })
    }

    /// Scalar field from a function of position.
    pub fn scalar<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        Self::sample(grid, FieldKind::Scalar, 1, |x, out| out[0] = f(x))
    }

    /// Field that is zero wherever `like` is valid.
    pub fn zeros_like(like: &GridField, kind: FieldKind, components: usize) -> Self {
        Self::build(like.grid, kind, components, |p, out| {
            out.fill(0.0);
            like.valid[p]
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn is_valid(&self, p: usize) -> bool {
        self.valid[p]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Components at point `p`.
    pub fn at(&self, p: usize) -> &[f64] {
        &self.samples[p * self.components..(p + 1) * self.components]
    }

    /// Same samples with the grid's radius replaced; points outside the new ball become invalid.
    pub fn restrict_radius(&self, radius: f64) -> Self {
        let grid = self.grid.with_radius(radius);
        Self::build(grid, self.kind, self.components, |p, out| {
            out.copy_from_slice(self.at(p));
            self.valid[p] && grid.in_ball(p)
        })
    }

    /// Restrict validity to the intersection with another mask on the same grid.
    pub fn restrict_mask(&self, mask: &[bool]) -> Self {
        let mut out = self.clone();
        for (p, v) in out.valid.iter_mut().enumerate() {
            if *v && !mask[p] {
                *v = false;
                out.samples[p * self.components..(p + 1) * self.components].fill(0.0);
            }
        }
        out
    }

    /// Component `c` as a scalar field.
    pub fn component(&self, c: usize) -> Self {
        Self::build(self.grid, FieldKind::Scalar, 1, |p, out| {
            out[0] = self.at(p)[c];
            self.valid[p]
        })
    }

    /// Pointwise map producing a new field; validity is inherited.
    pub fn map<F>(&self, kind: FieldKind, components: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        Self::build(self.grid, kind, components, |p, out| {
            if !self.valid[p] {
                return false;
            }
            f(self.at(p), out);
            true
        })
    }

    /// Pointwise combination of two fields on the same grid; valid where both are.
    pub fn zip<F>(&self, other: &GridField, kind: FieldKind, components: usize, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    {
        assert_eq!(self.grid.len(), other.grid.len(), "fields live on different grids");
        Self::build(self.grid, kind, components, |p, out| {
            if !(self.valid[p] && other.valid[p]) {
                return false;
            }
            f(self.at(p), other.at(p), out);
            true
        })
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &GridField, b: f64) -> Self {
        assert_eq!(self.components, other.components);
        self.zip(other, self.kind, self.components, |x, y, out| {
            for c in 0..out.len() {
                out[c] = a * x[c] + b * y[c];
            }
        })
    }

    pub fn add(&self, other: &GridField) -> Self {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &GridField) -> Self {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(self.kind, self.components, |x, out| {
            for c in 0..out.len() {
                out[c] = s * x[c];
            }
        })
    }

    /// Pointwise norm used by all sup-norms: Euclidean for scalars and maps,
    /// largest entry magnitude for tensors.
    pub fn point_norm(&self, v: &[f64]) -> f64 {
        match self.kind {
            FieldKind::Scalar | FieldKind::Map => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            FieldKind::SymTensor | FieldKind::Matrix => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Supremum of the pointwise norm over valid points (0 if none).
    pub fn sup_norm(&self) -> f64 {
        self.argmax_norm().map(|(_, v)| v).unwrap_or(0.0)
    }

    /// Supremum restricted to local axis-0 rows `[from, to)`.
    pub fn sup_norm_rows(&self, from: usize, to: usize) -> f64 {
        let per_row = self.grid.stride(0);
        (from * per_row..to * per_row)
            .into_par_iter()
            .filter(|&p| self.valid[p])
            .map(|p| self.point_norm(self.at(p)))
            .reduce(|| 0.0, f64::max)
    }

    /// Point attaining the sup-norm together with the value.
    pub fn argmax_norm(&self) -> Option<(usize, f64)> {
        (0..self.len())
            .into_par_iter()
            .filter(|&p| self.valid[p])
            .map(|p| (p, self.point_norm(self.at(p))))
            .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
    }

    /// Copy of local axis-0 rows `[start, start + rows)` as a field on the band grid.
    pub fn band(&self, start: usize, rows: usize) -> Self {
        let per_row = self.grid.stride(0);
        let grid = self.grid.band(start, rows);
        let lo = start * per_row;
        let hi = (start + rows) * per_row;
        Self {
            grid,
            kind: self.kind,
            components: self.components,
            samples: self.samples[lo * self.components..hi * self.components].to_vec(),
            valid: self.valid[lo..hi].to_vec(),
        }
    }

    /// Write rows `[from, to)` of a band field (local to the band) into this field.
    pub fn write_band_rows(&mut self, band: &GridField, from: usize, to: usize) {
        assert_eq!(band.components, self.components);
        let per_row = self.grid.stride(0);
        let offset = band.grid.row_start - self.grid.row_start;
        let c = self.components;
        let (src_lo, src_hi) = (from * per_row, to * per_row);
        let dst_lo = (offset + from) * per_row;
        let dst_hi = (offset + to) * per_row;
        self.samples[dst_lo * c..dst_hi * c].copy_from_slice(&band.samples[src_lo * c..src_hi * c]);
        self.valid[dst_lo..dst_hi].copy_from_slice(&band.valid[src_lo..src_hi]);
    }

    /// Empty (all-invalid) field of the given shape, used as a stitching target.
    pub fn empty(grid: GridSpec, kind: FieldKind, components: usize) -> Self {
        check_components(&grid, kind, components).expect("component count matches kind");
        Self { grid, kind, components, samples: vec![0.0; grid.len() * components], valid: vec![false; grid.len()] }
    }

    /// Reinterpret the kind (same component layout).
    pub fn with_kind(mut self, kind: FieldKind) -> Result<Self> {
        check_components(&self.grid, kind, self.components)?;
        self.kind = kind;
        Ok(self)
    }
}

fn check_components(grid: &GridSpec, kind: FieldKind, components: usize) -> Result<()> {
    let ok = match kind {
        FieldKind::Scalar => components == 1,
        FieldKind::Map => components >= 1,
        FieldKind::SymTensor => components == sym_dim(grid.n),
        FieldKind::Matrix => components == grid.n * grid.n,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{components} components invalid for {kind:?} in dimension {}", grid.n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_position_round_trip() {
        let g = GridSpec::centered(3, 7, 1.0).unwrap();
        for p in [0, 5, 48, 200, g.len() - 1] {
            assert_eq!(g.point(&g.index(p)), p);
        }
        let x = g.position(g.point(&[3, 3, 3]));
        assert!(x.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn band_positions_match_full_grid() {
        let g = GridSpec::centered(2, 9, 1.0).unwrap();
        let f = GridField::sample(g, FieldKind::Map, 2, |x, out| out.copy_from_slice(x));
        let b = f.band(3, 4);
        for p in 0..b.len() {
            assert_eq!(b.grid().position(p), g.position(p + 3 * 9));
            assert_eq!(b.at(p), f.at(p + 3 * 9));
        }
        let mut target = GridField::empty(g, FieldKind::Map, 2);
        target.write_band_rows(&b, 1, 3);
        assert_eq!(target.at(4 * 9 + 4), f.at(4 * 9 + 4));
        assert!(!target.is_valid(3 * 9 + 4));
    }

    #[test]
    fn coverage_is_checked() {
        assert!(GridSpec::new(2, 11, 0.1, &[0.0, 0.0], 0.6).is_err());
        assert!(GridSpec::new(2, 4, 1.0, &[0.0, 0.0], 1.0).is_err());
    }
}
