use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed NRRD header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NRRD {field}: {value}")]
    Unsupported { field: &'static str, value: String },
    #[error("voxel data size mismatch: expected {expected} bytes, found {found}")]
    DataSize { expected: usize, found: usize },
    #[error("invalid voxel geometry: {0}")]
    Geometry(String),

    #[error("label {0} is not present in the label table")]
    UnknownLabel(u32),
    #[error("label volume has no segmented labels")]
    NoLabels,
    #[error("label {0} is in the label table but has no voxels")]
    EmptyLabel(u32),
    #[error("label {0} covers every voxel, its interior distance is undefined")]
    FullLabel(u32),
    #[error("distance transform input has no feature voxels")]
    EmptyMask,
    #[error("grid dimensions differ: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("brute-force oracle refuses grids above {limit} voxels (got {got})")]
    OracleTooLarge { limit: usize, got: usize },

    #[error("not an atlas file (bad magic)")]
    BadMagic,
    #[error("unsupported atlas version {0}")]
    Version(u32),
    #[error("atlas checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("atlas file truncated")]
    Truncated,
    #[error("invalid atlas: {0}")]
    InvalidAtlas(String),

    #[error("point {0:?} lies outside the volume")]
    OutOfBounds([f64; 3]),

    #[error("config error on line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid feedback config: {0}")]
    InvalidConfig(String),

    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("atlas was not built from this label volume")]
    AtlasMismatch,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
