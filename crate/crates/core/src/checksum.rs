//! CRC-64 (XZ variant) shared by the atlas cache and label-volume fingerprints.

use crc::{Crc, Digest, CRC_64_XZ};

use crate::volume::VoxelGeometry;

pub(crate) static CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

pub(crate) fn digest() -> Digest<'static, u64> {
    CRC64.digest()
}

pub fn crc64(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

pub(crate) fn geometry_bytes(g: &VoxelGeometry) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 15 * 8);
    for n in g.dims() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in g.spacing().iter().chain(g.origin().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    // row-major
    let d = g.direction();
    for r in 0..3 {
        for c in 0..3 {
            out.extend_from_slice(&d[(r, c)].to_le_bytes());
        }
    }
    out
}

pub(crate) fn update_geometry(d: &mut Digest<'static, u64>, g: &VoxelGeometry) {
    d.update(&geometry_bytes(g));
}
