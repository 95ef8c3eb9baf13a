//! Flat binary container ("CIGF").
//!
//! Invalid points are written as NaN in every component and read back as invalid.

use super::{FieldKind, GridField, GridSpec};
use crate::error::{Error, Result};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"CIGF";
const VERSION: u32 = 1;

/// Serialize a full-grid field.
pub fn write_container<W: Write>(mut w: W, f: &GridField) -> Result<()> {
    let g = f.grid();
    if !g.is_full() {
        return Err(Error::Format("only full-grid fields can be serialized".into()));
    }
    let mut buf = Vec::with_capacity(64 + f.samples().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(f.kind().code());
    buf.push(g.n as u8);
    buf.extend_from_slice(&(f.components() as u16).to_le_bytes());
    buf.extend_from_slice(&(g.points_per_axis as u32).to_le_bytes());
    buf.extend_from_slice(&g.spacing.to_le_bytes());
    buf.extend_from_slice(&g.radius.to_le_bytes());
    for a in 0..g.n {
        buf.extend_from_slice(&g.center[a].to_le_bytes());
    }
    for p in 0..f.len() {
        for &v in f.at(p) {
            let v = if f.is_valid(p) { v } else { f64::NAN };
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Deserialize a field written by [`write_container`].
pub fn read_container<R: Read>(mut r: R) -> Result<GridField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |k: usize| -> Result<&[u8]> {
        if pos + k > bytes.len() {
            return Err(Error::Format("truncated container".into()));
        }
        let s = &bytes[pos..pos + k];
        pos += k;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = FieldKind::from_code(take(1)?[0]).ok_or_else(|| Error::Format("unknown kind".into()))?;
    let n = take(1)?[0] as usize;
    let components = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
    let ppa = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let spacing = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let radius = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut center = vec![0.0; n];
    for c in center.iter_mut() {
        *c = f64::from_le_bytes(take(8)?.try_into().unwrap());
    }
    let grid = GridSpec::new(n, ppa, spacing, &center, radius).map_err(|e| Error::Format(e.to_string()))?;
    let count = grid.len() * components;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        samples.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    let valid: Vec<bool> =
        (0..grid.len()).map(|p| samples[p * components..(p + 1) * components].iter().all(|v| !v.is_nan())).collect();
    GridField::from_parts(grid, kind, components, samples, valid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_samples_and_mask() {
        let g = GridSpec::new(2, 9, 0.3, &[0.5, -1.0], 1.2).unwrap();
        let f = GridField::sample(g, FieldKind::Map, 3, |x, o| {
            o[0] = x[0];
            o[1] = x[1] * x[0];
            o[2] = -x[1];
        });
        let mut buf = Vec::new();
        write_container(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"CIGF");
        let back = read_container(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_container(&b"NOPE0000"[..]), Err(Error::Format(_))));
        assert!(matches!(read_container(&b"CIG"[..]), Err(Error::Format(_))));
    }
}
