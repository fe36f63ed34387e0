use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ORTHO_TOL: f64 = 1e-6;

/// Placement of a voxel grid in world space (millimeters).
///
/// Voxel `(i, j, k)` is centered at `origin + direction · (spacing ∘ (i, j, k))`.
/// A voxel covers continuous indices within ±0.5 of its integer index.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGeometry {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    direction: Mat3,
}

impl VoxelGeometry {
    pub fn new(dims: [usize; 3], spacing: Vec3, origin: Vec3, direction: Mat3) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Geometry(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Geometry(format!(
                "spacing must be positive, got {:?}",
                spacing.as_slice()
            )));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("origin is not finite".into()));
        }
        for a in 0..3 {
            let col = direction.column(a);
            if (col.norm() - 1.0).abs() > ORTHO_TOL {
                return Err(Error::Geometry(format!("direction column {a} is not unit length")));
            }
            for b in a + 1..3 {
                if col.dot(&direction.column(b)).abs() > ORTHO_TOL {
                    return Err(Error::Geometry(format!(
                        "direction columns {a} and {b} are not orthogonal"
                    )));
                }
            }
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            direction,
        })
    }

    /// Axis-aligned geometry with the given spacing and origin.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing.into(), origin.into(), Mat3::identity())
    }

    /// Splits NRRD-style `space directions` (one column per axis, each scaled by
    /// the voxel spacing) into spacing and a unit direction matrix.
    pub fn from_space_directions(dims: [usize; 3], axes: [Vec3; 3], origin: Vec3) -> Result<Self> {
        let m = Mat3::from_columns(&axes);
        if m.determinant().abs() < 1e-12 {
            return Err(Error::Geometry("space directions are not invertible".into()));
        }
        let spacing = Vec3::new(axes[0].norm(), axes[1].norm(), axes[2].norm());
        let direction = Mat3::from_columns(&[
            axes[0] / spacing[0],
            axes[1] / spacing[1],
            axes[2] / spacing[2],
        ]);
        Self::new(dims, spacing, origin, direction)
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    #[inline]
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    #[inline]
    pub fn direction(&self) -> &Mat3 {
        &self.direction
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// The per-axis step vectors in world space (`direction` columns scaled by spacing).
    pub fn space_directions(&self) -> [Vec3; 3] {
        [0, 1, 2].map(|a| self.direction.column(a) * self.spacing[a])
    }

    /// Continuous voxel index of a world point. Out-of-volume points are allowed.
    #[inline]
    pub fn world_to_index(&self, p: &Vec3) -> Vec3 {
        // direction is orthonormal, so its inverse is its transpose
        let local = self.direction.tr_mul(&(p - self.origin));
        local.component_div(&self.spacing)
    }

    #[inline]
    pub fn index_to_world(&self, c: &Vec3) -> Vec3 {
        self.origin + self.direction * c.component_mul(&self.spacing)
    }

    /// World position of an integer voxel center.
    #[inline]
    pub fn voxel_center(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        self.index_to_world(&Vec3::new(i as f64, j as f64, k as f64))
    }

    /// True when the continuous index falls inside some voxel's extent.
    pub fn contains_index(&self, c: &Vec3) -> bool {
        (0..3).all(|a| c[a] >= -0.5 && c[a] <= self.dims[a] as f64 - 0.5)
    }

    /// Rounds a continuous index to the voxel that covers it, if any.
    pub fn voxel_of(&self, c: &Vec3) -> Option<[usize; 3]> {
        if !self.contains_index(c) {
            return None;
        }
        Some([0, 1, 2].map(|a| (c[a].round().max(0.0) as usize).min(self.dims[a] - 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rot_z(theta: f64) -> Mat3 {
        let (s, c) = theta.sin_cos();
        Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn origin_maps_to_first_voxel() {
        let g = VoxelGeometry::axis_aligned([4, 4, 4], [0.7, 1.0, 2.0], [10.0, -3.0, 5.5]).unwrap();
        let c = g.world_to_index(&g.origin());
        assert!(c.norm() < 1e-12);
        assert_eq!(g.index_to_world(&Vec3::zeros()), g.origin());
    }

    #[test]
    fn uniform_scaling() {
        let g = VoxelGeometry::axis_aligned([8, 8, 8], [0.5; 3], [0.0; 3]).unwrap();
        let c = g.world_to_index(&Vec3::new(1.0, 1.0, 1.0));
        assert!((c - Vec3::new(2.0, 2.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn anisotropic_step() {
        let g = VoxelGeometry::axis_aligned([4, 4, 4], [0.6, 1.0, 1.0], [1.0, 2.0, 3.0]).unwrap();
        let p = g.index_to_world(&Vec3::new(1.0, 0.0, 0.0));
        assert!((p - Vec3::new(1.6, 2.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn rotated_about_z() {
        let r = rot_z(std::f64::consts::FRAC_PI_2);
        let origin = Vec3::new(5.0, -2.0, 1.0);
        let g = VoxelGeometry::new([8, 8, 8], Vec3::repeat(1.0), origin, r).unwrap();
        // by hand: R·(3,0,0) = (0,3,0)
        let p = origin + Vec3::new(0.0, 3.0, 0.0);
        let c = g.world_to_index(&p);
        assert!((c - Vec3::new(3.0, 0.0, 0.0)).norm() < 1e-12, "{c:?}");
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(VoxelGeometry::axis_aligned([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(VoxelGeometry::axis_aligned([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        let skew = Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(VoxelGeometry::new([1, 1, 1], Vec3::repeat(1.0), Vec3::zeros(), skew).is_err());
        let flat = [Vec3::x(), Vec3::y(), Vec3::zeros()];
        assert!(VoxelGeometry::from_space_directions([2, 2, 2], flat, Vec3::zeros()).is_err());
    }

    #[test]
    fn voxel_extent_is_half_open_around_center() {
        let g = VoxelGeometry::axis_aligned([3, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(g.voxel_of(&Vec3::new(-0.5, 0.0, 2.5)), Some([0, 0, 2]));
        assert_eq!(g.voxel_of(&Vec3::new(-0.51, 0.0, 0.0)), None);
        assert_eq!(g.voxel_of(&Vec3::new(1.4, 1.6, 0.0)), Some([1, 2, 0]));
    }

    proptest! {
        #[test]
        fn world_index_round_trip(
            theta in -3.2f64..3.2,
            tilt in -1.5f64..1.5,
            sx in 0.2f64..3.0, sy in 0.2f64..3.0, sz in 0.2f64..3.0,
            ox in -200.0f64..200.0, oy in -200.0f64..200.0, oz in -200.0f64..200.0,
            ci in 0.0f64..255.0, cj in 0.0f64..255.0, ck in 0.0f64..255.0,
        ) {
            let (s, c) = tilt.sin_cos();
            let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
            let g = VoxelGeometry::new(
                [256; 3],
                Vec3::new(sx, sy, sz),
                Vec3::new(ox, oy, oz),
                rot_z(theta) * rx,
            ).unwrap();
            let idx = Vec3::new(ci, cj, ck);
            let back = g.world_to_index(&g.index_to_world(&idx));
            prop_assert!((back - idx).component_mul(&g.spacing()).norm() < 1e-9);
            let p = Vec3::new(ci - 100.0, cj * 0.3, -ck);
            let p2 = g.index_to_world(&g.world_to_index(&p));
            prop_assert!((p2 - p).norm() < 1e-9);
        }
    }
}
