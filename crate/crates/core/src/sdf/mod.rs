//! Per-anatomy signed distance fields and the atlas that groups them.
//!
//! Distances are measured between voxel centers: an exterior voxel stores the
//! distance to the nearest voxel of the anatomy, an interior voxel stores minus
//! the distance to the nearest voxel outside it. The implicit surface therefore
//! sits between the `−spacing` and `+spacing` shells, and a voxel touching the
//! anatomy reads `+spacing` rather than `+spacing/2`.

mod edt;
mod persist;

use rayon::prelude::*;

pub use edt::{edt, edt_bruteforce, edt_squared, BRUTEFORCE_LIMIT};
pub use persist::{load_atlas, save_atlas, ATLAS_MAGIC, ATLAS_VERSION};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};
use crate::volume::{LabelVolume, VoxelGeometry};

/// Signed distance field of one anatomy, in mm (negative inside).
#[derive(Debug, Clone, PartialEq)]
pub struct SdfVolume {
    pub geometry: VoxelGeometry,
    pub label: u32,
    pub name: String,
    pub values: Grid3<f32>,
}

/// All per-label fields of one labelmap, sharing its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfAtlas {
    geometry: VoxelGeometry,
    volumes: Vec<SdfVolume>,
    source_checksum: Option<u64>,
}

impl SdfAtlas {
    /// Assembles an atlas, checking shared geometry and strictly increasing labels.
    pub fn new(
        geometry: VoxelGeometry,
        volumes: Vec<SdfVolume>,
        source_checksum: Option<u64>,
    ) -> Result<Self> {
        if volumes.is_empty() {
            return Err(Error::InvalidAtlas("atlas has no volumes".into()));
        }
        for v in &volumes {
            if v.geometry != geometry || v.values.dims() != geometry.dims() {
                return Err(Error::InvalidAtlas(format!(
                    "volume {} does not share the atlas geometry",
                    v.label
                )));
            }
        }
        if volumes.windows(2).any(|w| w[0].label >= w[1].label) {
            return Err(Error::InvalidAtlas("labels must be strictly increasing".into()));
        }
        Ok(Self {
            geometry,
            volumes,
            source_checksum,
        })
    }

    pub fn geometry(&self) -> &VoxelGeometry {
        &self.geometry
    }

    pub fn volumes(&self) -> &[SdfVolume] {
        &self.volumes
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn volume(&self, label: u32) -> Option<&SdfVolume> {
        self.volumes
            .binary_search_by_key(&label, |v| v.label)
            .ok()
            .map(|i| &self.volumes[i])
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.volumes.iter().map(|v| v.label)
    }

    /// Checksum of the label volume this atlas was built from. Absent for
    /// atlases read back from a cache file, which does not record it.
    pub fn source_checksum(&self) -> Option<u64> {
        self.source_checksum
    }
}

/// Combines the exterior and interior transforms of `mask` into signed values.
pub fn sign(exterior: &Grid3<f64>, interior: &Grid3<f64>, mask: &Mask) -> Result<Grid3<f32>> {
    if exterior.dims() != mask.dims() {
        return Err(Error::DimsMismatch(exterior.dims(), mask.dims()));
    }
    if interior.dims() != mask.dims() {
        return Err(Error::DimsMismatch(interior.dims(), mask.dims()));
    }
    let values: Vec<f32> = mask
        .as_slice()
        .par_iter()
        .zip(exterior.as_slice().par_iter().zip(interior.as_slice()))
        .map(|(&inside, (&ext, &int))| if inside { -int as f32 } else { ext as f32 })
        .collect();
    Ok(Grid3::from_vec(mask.dims(), values).expect("same length as mask"))
}

/// Signed distance field of one mask with the given grid spacing.
pub fn signed_field(mask: &Mask, spacing: [f64; 3]) -> Result<Grid3<f32>> {
    let exterior = edt(mask, spacing)?;
    let interior = edt(&mask.complement(), spacing)?;
    sign(&exterior, &interior, mask)
}

/// Builds one field per labeled anatomy on the current rayon pool.
pub fn build_atlas(volume: &LabelVolume) -> Result<SdfAtlas> {
    if volume.table().is_empty() {
        return Err(Error::NoLabels);
    }
    let g = volume.geometry();
    let spacing: [f64; 3] = g.spacing().into();
    let labels: Vec<(u32, String)> = volume
        .table()
        .iter()
        .map(|(&v, n)| (v, n.clone()))
        .collect();
    let volumes = labels
        .into_par_iter()
        .map(|(label, name)| {
            let mask = volume.label_mask(label)?;
            let count = mask.count();
            if count == 0 {
                return Err(Error::EmptyLabel(label));
            }
            if count == mask.len() {
                return Err(Error::FullLabel(label));
            }
            Ok(SdfVolume {
                geometry: g.clone(),
                label,
                name,
                values: signed_field(&mask, spacing)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SdfAtlas::new(g.clone(), volumes, Some(volume.checksum()))
}

/// [`build_atlas`] on a dedicated pool of `workers` threads.
pub fn build_atlas_with_workers(volume: &LabelVolume, workers: usize) -> Result<SdfAtlas> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    pool.install(|| build_atlas(volume))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn single_voxel_volume() -> LabelVolume {
        let mut labels = Grid3::filled([9; 3], 0u32);
        *labels.get_mut([4, 4, 4]) = 1;
        let g = VoxelGeometry::axis_aligned([9; 3], [1.0; 3], [0.0; 3]).unwrap();
        LabelVolume::new(g, labels, BTreeMap::new()).unwrap()
    }

    #[test]
    fn single_voxel_signs() {
        let atlas = build_atlas(&single_voxel_volume()).unwrap();
        let s = &atlas.volumes()[0].values;
        assert_eq!(*s.get([4, 4, 4]), -1.0);
        assert_eq!(*s.get([6, 4, 4]), 2.0);
        assert_eq!(*s.get([5, 4, 4]), 1.0);
    }

    #[test]
    fn slab_surface_values() {
        let mask = Grid3::from_fn([6, 4, 4], |[i, _, _]| i < 3);
        let s = signed_field(&mask, [1.0; 3]).unwrap();
        assert_eq!(*s.get([3, 1, 1]), 1.0);
        assert_eq!(*s.get([2, 1, 1]), -1.0);
        assert_eq!(*s.get([0, 1, 1]), -3.0);
        assert_eq!(*s.get([5, 1, 1]), 3.0);
    }

    #[test]
    fn sign_checks_dims() {
        let m = Mask::filled([2, 2, 2], true);
        let a = Grid3::filled([2, 2, 2], 0.0);
        let b = Grid3::filled([2, 2, 3], 0.0);
        assert!(matches!(sign(&a, &b, &m), Err(Error::DimsMismatch(..))));
        assert!(matches!(sign(&b, &a, &m), Err(Error::DimsMismatch(..))));
    }

    #[test]
    fn build_errors() {
        let g = VoxelGeometry::axis_aligned([3; 3], [1.0; 3], [0.0; 3]).unwrap();
        let empty = LabelVolume::new(g.clone(), Grid3::filled([3; 3], 0), BTreeMap::new()).unwrap();
        assert!(matches!(build_atlas(&empty), Err(Error::NoLabels)));

        let mut labels = Grid3::filled([3; 3], 0u32);
        *labels.get_mut([0, 0, 0]) = 1;
        let table = BTreeMap::from([(2, "Sinus".to_string())]);
        let missing = LabelVolume::new(g.clone(), labels, table).unwrap();
        assert!(matches!(build_atlas(&missing), Err(Error::EmptyLabel(2))));

        let full = LabelVolume::new(g, Grid3::filled([3; 3], 4), BTreeMap::new()).unwrap();
        assert!(matches!(build_atlas(&full), Err(Error::FullLabel(4))));
    }

    #[test]
    fn atlas_orders_labels_and_checks_geometry() {
        let g = VoxelGeometry::axis_aligned([8; 3], [1.0; 3], [0.0; 3]).unwrap();
        let labels = Grid3::from_fn([8; 3], |[i, j, _]| match (i, j) {
            (1, 1) => 7,
            (6, 6) => 2,
            (1, 6) => 5,
            _ => 0,
        });
        let v = LabelVolume::new(g.clone(), labels, BTreeMap::new()).unwrap();
        let atlas = build_atlas(&v).unwrap();
        assert_eq!(atlas.labels().collect::<Vec<_>>(), [2, 5, 7]);
        assert_eq!(atlas.source_checksum(), Some(v.checksum()));
        assert!(atlas.volume(5).is_some() && atlas.volume(3).is_none());

        let mut vols = atlas.volumes().to_vec();
        vols.swap(0, 1);
        assert!(SdfAtlas::new(g.clone(), vols, None).is_err());
        let other = VoxelGeometry::axis_aligned([8; 3], [2.0; 3], [0.0; 3]).unwrap();
        assert!(SdfAtlas::new(other, atlas.volumes().to_vec(), None).is_err());
        assert!(SdfAtlas::new(g, Vec::new(), None).is_err());
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let g = VoxelGeometry::axis_aligned([13, 11, 9], [0.6, 0.8, 1.7], [0.0; 3]).unwrap();
        let labels = Grid3::from_fn([13, 11, 9], |[i, j, k]| ((i * 7 + j * 3 + k * 5) % 23 % 4) as u32);
        let v = LabelVolume::new(g, labels, BTreeMap::new()).unwrap();
        let a = build_atlas_with_workers(&v, 1).unwrap();
        for w in [2, 4] {
            let b = build_atlas_with_workers(&v, w).unwrap();
            for (x, y) in a.volumes().iter().zip(b.volumes()) {
                let bits = |g: &Grid3<f32>| g.as_slice().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&x.values), bits(&y.values));
            }
        }
    }
}
