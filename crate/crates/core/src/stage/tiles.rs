//! Row-band tiling: each band carries a halo wide enough that every value
//! computed on its core rows equals the value a whole-grid computation gives.

use crate::error::Result;
use crate::field::{cr_norm_rows, GridField};

/// A band of global axis-0 rows `[start, start + rows)` with core `[core_from, core_to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub start: usize,
    pub rows: usize,
    pub core_from: usize,
    pub core_to: usize,
}

impl Tile {
    /// Core rows in band-local numbering.
    pub fn local_core(&self) -> (usize, usize) {
        (self.core_from - self.start, self.core_to - self.start)
    }
}

/// Rows of `f` holding at least one valid point, as a half-open range.
pub fn active_rows(f: &GridField) -> Option<(usize, usize)> {
    let per_row = f.grid().stride(0);
    let rows = f.grid().extent(0);
    let live = |r: usize| (r * per_row..(r + 1) * per_row).any(|p| f.is_valid(p));
    let lo = (0..rows).find(|&r| live(r))?;
    let hi = (0..rows).rev().find(|&r| live(r))?;
    Some((lo, hi + 1))
}

/// Cover the active rows of `f` with cores of about `tile_points` points each.
pub fn plan(f: &GridField, tile_points: usize, halo: usize) -> Vec<Tile> {
    let grid = f.grid();
    let per_row = grid.stride(0);
    let total = grid.extent(0);
    let (lo, hi) = match active_rows(f) {
        Some(r) => r,
        None => return vec![],
    };
    let core_rows = (tile_points / per_row).max(1);
    let mut tiles = Vec::new();
    let mut from = lo;
    while from < hi {
        let to = (from + core_rows).min(hi);
        let start = from.saturating_sub(halo);
        let end = (to + halo).min(total);
        tiles.push(Tile { start, rows: end - start, core_from: from, core_to: to });
        from = to;
    }
    tiles
}

/// ‖f‖_r for r = 0..=rmax, evaluated band by band.
pub fn cr_norms(f: &GridField, rmax: usize, tile_points: usize) -> Result<Vec<f64>> {
    let halo = 2 * rmax + 2;
    let mut out = vec![0.0f64; rmax + 1];
    for t in plan(f, tile_points, halo) {
        let band = f.band(t.start, t.rows);
        let (a, b) = t.local_core();
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = slot.max(cr_norm_rows(&band, r, a, b)?);
        }
    }
    Ok(out)
}
