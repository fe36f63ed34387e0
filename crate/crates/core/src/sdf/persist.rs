//! Atlas cache file.
//!
//! Little-endian layout: magic `SDFATLAS`, `u32` version, geometry block
//! (`u32` dims ×3, `f64` spacing ×3, `f64` origin ×3, `f64` direction ×9 in
//! row-major order), `u32` label count, then per label a `u32` value, a
//! `u32`-length-prefixed UTF-8 name and the raw `f32` values x-fastest.
//! A trailing `u64` CRC-64/XZ covers every preceding byte.

use std::io::{Read, Write};

use super::{SdfAtlas, SdfVolume};
use crate::checksum::{crc64, geometry_bytes};
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::volume::{Mat3, Vec3, VoxelGeometry};

pub const ATLAS_MAGIC: &[u8; 8] = b"SDFATLAS";
pub const ATLAS_VERSION: u32 = 1;

const GEOMETRY_LEN: usize = 12 + 15 * 8;
const FIXED_LEN: usize = 8 + 4 + GEOMETRY_LEN + 4;

pub fn save_atlas<W: Write>(atlas: &SdfAtlas, mut sink: W) -> Result<()> {
    let n = atlas.geometry().voxel_count();
    let mut buf = Vec::with_capacity(FIXED_LEN + 8 + atlas.len() * (n * 4 + 64));
    buf.extend_from_slice(ATLAS_MAGIC);
    buf.extend_from_slice(&ATLAS_VERSION.to_le_bytes());
    buf.extend_from_slice(&geometry_bytes(atlas.geometry()));
    buf.extend_from_slice(&(atlas.len() as u32).to_le_bytes());
    for v in atlas.volumes() {
        buf.extend_from_slice(&v.label.to_le_bytes());
        buf.extend_from_slice(&(v.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(v.name.as_bytes());
        for x in v.values.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc64(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    sink.write_all(&buf)?;
    Ok(())
}

pub fn load_atlas<R: Read>(mut source: R) -> Result<SdfAtlas> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(Error::Truncated);
    }
    if &bytes[..8] != ATLAS_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != ATLAS_VERSION {
        return Err(Error::Version(version));
    }
    if bytes.len() < FIXED_LEN + 8 {
        return Err(Error::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = crc64(body);
    if stored != computed {
        // a short file cannot hold what its header declares
        if declared_len(body).is_none_or(|need| need > body.len()) {
            return Err(Error::Truncated);
        }
        return Err(Error::Checksum { stored, computed });
    }
    decode(body)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Body length implied by the header fields, if they can be read at all.
fn declared_len(body: &[u8]) -> Option<usize> {
    let mut c = Cursor { bytes: body, pos: 12 };
    let dims: Vec<usize> = (0..3).map(|_| c.u32().map(|v| v as usize)).collect::<Result<_>>().ok()?;
    c.take(15 * 8).ok()?;
    let count = c.u32().ok()?;
    let payload = dims.iter().try_fold(4usize, |a, &d| a.checked_mul(d))?;
    for _ in 0..count {
        c.take(4).ok()?;
        let name_len = c.u32().ok()? as usize;
        let skip = name_len.checked_add(payload)?;
        if c.take(skip).is_err() {
            return Some(body.len() + 1);
        }
    }
    Some(c.pos)
}

fn decode(body: &[u8]) -> Result<SdfAtlas> {
    let mut c = Cursor { bytes: body, pos: 12 };
    let dims = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let spacing = Vec3::new(c.f64()?, c.f64()?, c.f64()?);
    let origin = Vec3::new(c.f64()?, c.f64()?, c.f64()?);
    let mut m = [0.0; 9];
    for v in &mut m {
        *v = c.f64()?;
    }
    let direction = Mat3::from_row_slice(&m);
    let geometry = VoxelGeometry::new(dims, spacing, origin, direction)
        .map_err(|e| Error::InvalidAtlas(e.to_string()))?;
    let count = c.u32()?;
    let n = geometry.voxel_count();
    let mut volumes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let label = c.u32()?;
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::InvalidAtlas("label name is not UTF-8".into()))?
            .to_string();
        let raw = c.take(n.checked_mul(4).ok_or(Error::Truncated)?)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        volumes.push(SdfVolume {
            geometry: geometry.clone(),
            label,
            name,
            values: Grid3::from_vec(dims, values).expect("payload sized from dims"),
        });
    }
    if c.pos != body.len() {
        return Err(Error::InvalidAtlas("trailing bytes after last volume".into()));
    }
    SdfAtlas::new(geometry, volumes, None)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::sdf::build_atlas;
    use crate::volume::LabelVolume;

    fn atlas() -> SdfAtlas {
        let r = nalgebra::Rotation3::from_euler_angles(0.1, 0.2, 0.3);
        let g = VoxelGeometry::new([32; 3], Vec3::new(0.5, 0.5, 0.8), Vec3::new(1.0, -2.0, 3.0), *r.matrix())
            .unwrap();
        let labels = Grid3::from_fn([32; 3], |[i, j, k]| {
            if i < 6 {
                1
            } else if j > 25 {
                2
            } else if (i as i32 - 20).pow(2) + (k as i32 - 16).pow(2) < 16 {
                3
            } else {
                0
            }
        });
        let table = BTreeMap::from([(1, "TMJ".into()), (2, "EAC".into()), (3, "Sinus".into())]);
        build_atlas(&LabelVolume::new(g, labels, table).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = atlas();
        let mut buf = Vec::new();
        save_atlas(&a, &mut buf).unwrap();
        let b = load_atlas(&buf[..]).unwrap();
        assert_eq!(a.geometry(), b.geometry());
        assert_eq!(b.source_checksum(), None);
        for (x, y) in a.volumes().iter().zip(b.volumes()) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.name, y.name);
            assert!(x.values.as_slice().iter().zip(y.values.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        let mut again = Vec::new();
        save_atlas(&b, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_payload_byte() {
        let mut buf = Vec::new();
        save_atlas(&atlas(), &mut buf).unwrap();
        let mid = buf.len() / 2;
        buf[mid] ^= 0x40;
        assert!(matches!(load_atlas(&buf[..]), Err(Error::Checksum { .. })));
    }

    #[test]
    fn future_version() {
        let mut buf = Vec::new();
        save_atlas(&atlas(), &mut buf).unwrap();
        buf[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(load_atlas(&buf[..]), Err(Error::Version(2))));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut buf = Vec::new();
        save_atlas(&atlas(), &mut buf).unwrap();
        assert!(matches!(load_atlas(&b"NOTATLAS...."[..]), Err(Error::BadMagic)));
        assert!(matches!(load_atlas(&buf[..5]), Err(Error::Truncated)));
        assert!(matches!(load_atlas(&buf[..100]), Err(Error::Truncated)));
        assert!(matches!(load_atlas(&buf[..buf.len() - 1000]), Err(Error::Truncated)));
    }
}
