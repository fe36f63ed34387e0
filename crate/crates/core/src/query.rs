//! Point queries against an atlas: nearest anatomy, signed distance, gradient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::sdf::{SdfAtlas, SdfVolume};
use crate::volume::{Vec3, VoxelGeometry};

/// Below this gradient norm (mm/mm) the direction is reported as degenerate.
pub const DEGENERATE_GRADIENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Value of the voxel whose extent contains the point.
    #[default]
    Nearest,
    /// Interpolation between the eight surrounding voxel centers.
    Trilinear,
}

impl FromStr for SampleMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "trilinear" => Ok(Self::Trilinear),
            other => Err(format!("unknown sampling mode `{other}`")),
        }
    }
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nearest => "nearest",
            Self::Trilinear => "trilinear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    pub mode: SampleMode,
    /// Clamp points outside the volume to its border instead of failing.
    pub clamp: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            mode: SampleMode::Nearest,
            clamp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProximityResult {
    pub label: u32,
    pub name: String,
    /// Signed distance in mm from the query point to the closest anatomy.
    pub distance: f64,
    /// Unit direction of increasing distance in world space; `None` when degenerate.
    pub gradient: Option<Vec3>,
    pub voxel: [usize; 3],
}

/// Resolves a world point to a continuous index inside the grid, applying the bounds policy.
fn locate(g: &VoxelGeometry, p: &Vec3, clamp: bool) -> Result<Vec3> {
    let mut c = g.world_to_index(p);
    if !clamp && !g.contains_index(&c) {
        return Err(Error::OutOfBounds([p[0], p[1], p[2]]));
    }
    let dims = g.dims();
    for a in 0..3 {
        c[a] = c[a].clamp(0.0, (dims[a] - 1) as f64);
    }
    Ok(c)
}

#[inline]
fn round_index(c: &Vec3, dims: [usize; 3]) -> [usize; 3] {
    [0, 1, 2].map(|a| (c[a].round() as usize).min(dims[a] - 1))
}

/// Samples a grid at a continuous index already clamped to `[0, n − 1]`.
#[inline]
fn sample_index(values: &Grid3<f32>, c: &Vec3, mode: SampleMode) -> f64 {
    let dims = values.dims();
    match mode {
        SampleMode::Nearest => *values.get(round_index(c, dims)) as f64,
        SampleMode::Trilinear => {
            let mut base = [0usize; 3];
            let mut t = [0.0f64; 3];
            for a in 0..3 {
                if dims[a] == 1 {
                    continue;
                }
                let f = c[a].floor().min((dims[a] - 2) as f64);
                base[a] = f as usize;
                t[a] = c[a] - f;
            }
            let data = values.as_slice();
            let [nx, ny, _] = dims;
            let step = [
                usize::from(dims[0] > 1),
                if dims[1] > 1 { nx } else { 0 },
                if dims[2] > 1 { nx * ny } else { 0 },
            ];
            let origin = values.linear_index(base);
            let at = |dx: usize, dy: usize, dz: usize| -> f64 {
                data[origin + dx * step[0] + dy * step[1] + dz * step[2]] as f64
            };
            let lerp = |a: f64, b: f64, w: f64| a + (b - a) * w;
            let c00 = lerp(at(0, 0, 0), at(1, 0, 0), t[0]);
            let c10 = lerp(at(0, 1, 0), at(1, 1, 0), t[0]);
            let c01 = lerp(at(0, 0, 1), at(1, 0, 1), t[0]);
            let c11 = lerp(at(0, 1, 1), at(1, 1, 1), t[0]);
            lerp(lerp(c00, c10, t[1]), lerp(c01, c11, t[1]), t[2])
        }
    }
}

/// Signed distance of one field at a world point.
pub fn sample(v: &SdfVolume, p: &Vec3, opts: QueryOptions) -> Result<f64> {
    let c = locate(&v.geometry, p, opts.clamp)?;
    Ok(sample_index(&v.values, &c, opts.mode))
}

/// Central difference with a one-voxel step per axis, rotated into world space.
fn gradient_index(v: &SdfVolume, c: &Vec3, mode: SampleMode) -> Option<Vec3> {
    let dims = v.geometry.dims();
    let spacing = v.geometry.spacing();
    let mut local = Vec3::zeros();
    for a in 0..3 {
        let hi_max = (dims[a] - 1) as f64;
        let mut plus = *c;
        let mut minus = *c;
        plus[a] = (c[a] + 1.0).min(hi_max);
        minus[a] = (c[a] - 1.0).max(0.0);
        let diff = sample_index(&v.values, &plus, mode) - sample_index(&v.values, &minus, mode);
        local[a] = diff / (2.0 * spacing[a]);
    }
    let world = v.geometry.direction() * local;
    let norm = world.norm();
    (norm >= DEGENERATE_GRADIENT).then(|| world / norm)
}

/// Unit gradient of one field at a world point, or `None` when it vanishes.
pub fn sdf_gradient(v: &SdfVolume, p: &Vec3, opts: QueryOptions) -> Result<Option<Vec3>> {
    let c = locate(&v.geometry, p, opts.clamp)?;
    Ok(gradient_index(v, &c, opts.mode))
}

/// Minimum over every field of the atlas; ties go to the lowest label.
pub fn nearest_anatomy(atlas: &SdfAtlas, p: &Vec3, opts: QueryOptions) -> Result<ProximityResult> {
    let c = locate(atlas.geometry(), p, opts.clamp)?;
    let mut best: Option<(&SdfVolume, f64)> = None;
    for v in atlas.volumes() {
        let d = sample_index(&v.values, &c, opts.mode);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((v, d));
        }
    }
    let (v, distance) = best.ok_or_else(|| Error::InvalidAtlas("atlas has no volumes".into()))?;
    Ok(ProximityResult {
        label: v.label,
        name: v.name.clone(),
        distance,
        gradient: gradient_index(v, &c, opts.mode),
        voxel: round_index(&c, atlas.geometry().dims()),
    })
}
