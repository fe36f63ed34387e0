//! Segmented labelmaps and their voxel geometry.

mod geometry;
pub mod nrrd;

use std::collections::{BTreeMap, BTreeSet};

pub use geometry::{Mat3, Vec3, VoxelGeometry};
pub use nrrd::{parse_nrrd, parse_nrrd_with_warnings, write_nrrd, NrrdEncoding};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};

/// Label value reserved for unsegmented voxels.
pub const BACKGROUND: u32 = 0;

/// A segmented voxel grid: one label per voxel, plus a table naming each label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: VoxelGeometry,
    labels: Grid3<u32>,
    table: BTreeMap<u32, String>,
    critical: BTreeSet<u32>,
    space: Option<String>,
}

impl LabelVolume {
    /// Builds a volume, adding `label_<v>` entries for any nonzero value missing from `table`.
    pub fn new(
        geometry: VoxelGeometry,
        labels: Grid3<u32>,
        mut table: BTreeMap<u32, String>,
    ) -> Result<Self> {
        if labels.dims() != geometry.dims() {
            return Err(Error::DimsMismatch(labels.dims(), geometry.dims()));
        }
        if table.contains_key(&BACKGROUND) {
            return Err(Error::MalformedHeader(
                "label value 0 is reserved for background".into(),
            ));
        }
        for v in distinct_nonzero(&labels) {
            table.entry(v).or_insert_with(|| format!("label_{v}"));
        }
        Ok(Self {
            geometry,
            labels,
            table,
            critical: BTreeSet::new(),
            space: None,
        })
    }

    /// Marks labels as critical anatomy. Every value must be in the table.
    pub fn with_critical(mut self, critical: impl IntoIterator<Item = u32>) -> Result<Self> {
        let critical: BTreeSet<u32> = critical.into_iter().collect();
        if let Some(&bad) = critical.iter().find(|v| !self.table.contains_key(v)) {
            return Err(Error::UnknownLabel(bad));
        }
        self.critical = critical;
        Ok(self)
    }

    pub fn with_space(mut self, space: Option<String>) -> Self {
        self.space = space;
        self
    }

    pub fn geometry(&self) -> &VoxelGeometry {
        &self.geometry
    }

    pub fn labels(&self) -> &Grid3<u32> {
        &self.labels
    }

    pub fn table(&self) -> &BTreeMap<u32, String> {
        &self.table
    }

    pub fn critical(&self) -> &BTreeSet<u32> {
        &self.critical
    }

    /// The NRRD `space` field, kept verbatim.
    pub fn space(&self) -> Option<&str> {
        self.space.as_deref()
    }

    pub fn name_of(&self, label: u32) -> Option<&str> {
        self.table.get(&label).map(String::as_str)
    }

    /// Label value for an anatomy name.
    pub fn value_of(&self, name: &str) -> Option<u32> {
        self.table.iter().find(|(_, n)| *n == name).map(|(&v, _)| v)
    }

    /// Membership mask of one labeled anatomy.
    pub fn label_mask(&self, label: u32) -> Result<Mask> {
        if label == BACKGROUND || !self.table.contains_key(&label) {
            return Err(Error::UnknownLabel(label));
        }
        Ok(self.labels.map(|&v| v == label))
    }

    /// CRC-64 over geometry, labels and the label table.
    pub fn checksum(&self) -> u64 {
        let mut d = crate::checksum::digest();
        crate::checksum::update_geometry(&mut d, &self.geometry);
        for v in self.labels.as_slice() {
            d.update(&v.to_le_bytes());
        }
        for (v, name) in &self.table {
            d.update(&v.to_le_bytes());
            d.update(&(name.len() as u32).to_le_bytes());
            d.update(name.as_bytes());
        }
        d.finalize()
    }
}

fn distinct_nonzero(labels: &Grid3<u32>) -> BTreeSet<u32> {
    let mut seen = BTreeSet::new();
    let mut last = BACKGROUND;
    for &v in labels.as_slice() {
        if v != BACKGROUND && v != last {
            seen.insert(v);
            last = v;
        }
    }
    seen
}
