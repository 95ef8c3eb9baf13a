//! Triangulated surface export (OBJ) of a two-dimensional map field.

use super::GridField;
use crate::error::{Error, Result};
use std::io::Write;

/// Write `v` records for the selected zero-based components at every valid point
/// and two `f` records per grid cell whose four corners are valid.
pub fn write_obj<W: Write>(mut w: W, f: &GridField, coords: [usize; 3]) -> Result<()> {
    let grid = *f.grid();
    if grid.n != 2 {
        return Err(Error::Config(format!("mesh export needs n = 2, got {}", grid.n)));
    }
    if let Some(c) = coords.iter().find(|&&c| c >= f.components()) {
        return Err(Error::Config(format!("coordinate {} out of range 1..={}", c + 1, f.components())));
    }
    let mut index = vec![0usize; f.len()];
    let mut next = 1usize;
    let mut out = std::io::BufWriter::new(&mut w);
    for p in 0..f.len() {
        if f.is_valid(p) {
            let v = f.at(p);
            writeln!(out, "v {:.12e} {:.12e} {:.12e}", v[coords[0]], v[coords[1]], v[coords[2]])?;
            index[p] = next;
            next += 1;
        }
    }
    let (rows, cols) = (grid.extent(0), grid.extent(1));
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols - 1 {
            let a = grid.point(&[i, j, 0]);
            let b = grid.point(&[i, j + 1, 0]);
            let c = grid.point(&[i + 1, j, 0]);
            let d = grid.point(&[i + 1, j + 1, 0]);
            if [a, b, c, d].iter().all(|&p| f.is_valid(p)) {
                writeln!(out, "f {} {} {}", index[a], index[b], index[d])?;
                writeln!(out, "f {} {} {}", index[a], index[d], index[c])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldKind, GridSpec};

    #[test]
    fn flat_disc_has_one_vertex_per_valid_point() {
        let g = GridSpec::centered(2, 21, 1.0).unwrap();
        let f = GridField::sample(g, FieldKind::Map, 3, |x, o| {
            o[0] = x[0];
            o[1] = x[1];
            o[2] = 0.0;
        });
        let mut buf = Vec::new();
        write_obj(&mut buf, &f, [0, 1, 2]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let verts: Vec<&str> = text.lines().filter(|l| l.starts_with("v ")).collect();
        assert_eq!(verts.len(), f.valid_count());
        assert!(verts.iter().all(|l| l.split_whitespace().nth(3).unwrap().parse::<f64>().unwrap() == 0.0));
        let faces = text.lines().filter(|l| l.starts_with("f ")).count();
        assert!(faces > 0 && faces % 2 == 0);
    }

    #[test]
    fn bad_coordinate_is_rejected() {
        let g = GridSpec::centered(2, 11, 1.0).unwrap();
        let f = GridField::scalar(g, |x| x[0]);
        assert!(matches!(write_obj(Vec::new(), &f, [0, 0, 3]), Err(Error::Config(_))));
    }
}
