//! Binary field checkpoints: `RFG1`, three little-endian `u32` dims, six
//! `f64` bounds (min xyz, max xyz), then `Nx·Ny·Nz·4` `f64` voxel values.

use std::path::Path;

use super::{Aabb, RadianceField, CHANNELS};
use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader};

const MAGIC: &[u8; 4] = b"RFG1";

pub fn encode_field(field: &RadianceField) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 12 + 48 + field.data.len() * 8);
    out.extend_from_slice(MAGIC);
    for d in field.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in field.bounds.min.iter().chain(field.bounds.max.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &field.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(path: &Path, bytes: &[u8]) -> Result<RadianceField> {
    let mut r = ByteReader::new(path, bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::parse(path, 0, "missing RFG1 header"));
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let min = [r.f64()?, r.f64()?, r.f64()?];
    let max = [r.f64()?, r.f64()?, r.f64()?];
    let mut field =
        RadianceField::constant(dims, Aabb { min, max }, 0.0).map_err(|e| r.err(e.to_string()))?;
    let n = field.voxel_count() * CHANNELS;
    if bytes.len() != 4 + 12 + 48 + n * 8 {
        return Err(r.err(format!("expected {n} voxel values")));
    }
    for v in field.data.iter_mut() {
        *v = r.f64()?;
    }
    r.finish()?;
    Ok(field)
}

pub fn write_field(path: &Path, field: &RadianceField) -> Result<()> {
    write_atomic(path, &encode_field(field))
}

pub fn read_field(path: &Path) -> Result<RadianceField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let mut f = RadianceField::constant([2, 3, 4], Aabb { min: [-1.0, -0.5, 0.1], max: [1.0, 0.5, 0.7] }, -2.0).unwrap();
        for (i, v) in f.data.iter_mut().enumerate() {
            *v = (i as f64).sin() * 1e3 + 1.0 / 3.0;
        }
        let p = Path::new("mem");
        assert_eq!(decode_field(p, &encode_field(&f)).unwrap(), f);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let f = RadianceField::constant([2, 2, 2], Aabb::cube(1.0), 0.0).unwrap();
        let mut bytes = encode_field(&f);
        let p = Path::new("mem");
        assert!(decode_field(p, &bytes[..bytes.len() - 1]).is_err());
        let last = bytes.len() - 8;
        bytes[last..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_field(p, &bytes), Err(Error::Parse { .. })));
        assert!(decode_field(p, b"RFG2").is_err());
    }
}
