//! Flat binary field layout.
//!
//! Header: `n`, `m`, kind code as little-endian u64, then the domain center
//! (`n` f64) and half side (f64). Payload: node values as little-endian f64,
//! row-major with axis 0 slowest, components innermost.

use std::io::{Read, Write};

use super::{Field, FieldKind, GridSpec};
use crate::error::{invalid, Result};
use crate::grid::Cube;

pub fn write_field(f: &Field, w: &mut impl Write) -> Result<()> {
    let spec = f.spec();
    for v in [spec.n() as u64, spec.m as u64, f.kind().code()] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &c in spec.domain.center() {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(&spec.domain.half_side().to_le_bytes())?;
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<Field> {
    let mut b = [0u8; 8];
    let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let n = next_u64(r)? as usize;
    let m = next_u64(r)? as usize;
    let kind = FieldKind::from_code(next_u64(r)?)?;
    if !(2..=3).contains(&n) || m > 1 << 12 {
        return Err(invalid(format!("implausible field header n={n} m={m}")));
    }
    let read_f64 = |r: &mut dyn Read| -> Result<f64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    };
    let center = (0..n).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
    let half = read_f64(r)?;
    let spec = GridSpec::new(Cube::new(center, half)?, m)?;
    let len = spec.len() * kind.comps(n);
    let values = (0..len).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
    Field::new(spec, kind, values)
}

pub fn to_bytes(f: &Field) -> Vec<u8> {
    let mut out = Vec::new();
    write_field(f, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Field> {
    read_field(&mut &bytes[..])
}
