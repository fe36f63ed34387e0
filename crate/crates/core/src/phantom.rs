//! Synthetic labelmaps and tool paths so everything runs without patient data.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::drillsim::TrajectorySample;
use crate::grid::Grid3;
use crate::volume::{LabelVolume, Vec3, VoxelGeometry};

pub const EAC: u32 = 1;
pub const TMJ: u32 = 2;
pub const SINUS: u32 = 3;

/// Blob placement of the three-anatomy phantom, in voxel units.
pub struct Blob {
    pub label: u32,
    pub name: &'static str,
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

pub const THREE_BLOB_DIMS: [usize; 3] = [48, 48, 24];
pub const THREE_BLOB_SPACING: [f64; 3] = [0.5, 0.5, 0.5];

/// Ear canal on the left, joint upper right, sinus lower right, all cut by the
/// mid-depth slice.
pub const THREE_BLOBS: [Blob; 3] = [
    Blob {
        label: EAC,
        name: "EAC",
        center: [12.0, 24.0, 12.0],
        radii: [6.0, 6.0, 6.0],
    },
    Blob {
        label: TMJ,
        name: "TMJ",
        center: [35.0, 12.0, 12.0],
        radii: [7.0, 6.0, 6.0],
    },
    Blob {
        label: SINUS,
        name: "Sinus",
        center: [35.0, 37.0, 12.0],
        radii: [8.0, 5.0, 4.0],
    },
];

fn inside(b: &Blob, [i, j, k]: [usize; 3]) -> bool {
    let p = [i as f64, j as f64, k as f64];
    (0..3).map(|a| ((p[a] - b.center[a]) / b.radii[a]).powi(2)).sum::<f64>() <= 1.0
}

/// Three ellipsoidal anatomies (EAC, TMJ, Sinus) in unlabeled bone.
pub fn three_blob() -> LabelVolume {
    let g = VoxelGeometry::axis_aligned(THREE_BLOB_DIMS, THREE_BLOB_SPACING, [0.0; 3])
        .expect("valid phantom geometry");
    let labels = Grid3::from_fn(THREE_BLOB_DIMS, |idx| {
        THREE_BLOBS
            .iter()
            .find(|b| inside(b, idx))
            .map_or(0, |b| b.label)
    });
    let table = THREE_BLOBS.iter().map(|b| (b.label, b.name.to_string())).collect();
    LabelVolume::new(g, labels, table)
        .expect("phantom labels match table")
        .with_space(Some("LPS".into()))
}

/// `n_labels` ellipsoids on a jittered lattice, one per cell, labels `1..=n_labels`.
pub fn multi_label(dims: [usize; 3], spacing: [f64; 3], n_labels: u32, seed: u64) -> LabelVolume {
    assert!(n_labels >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // smallest lattice with enough cells, splitting the longest axis first
    let mut cells = [1usize; 3];
    while cells.iter().product::<usize>() < n_labels as usize {
        let a = (0..3)
            .max_by(|&a, &b| {
                let ra = dims[a] as f64 / cells[a] as f64;
                let rb = dims[b] as f64 / cells[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            })
            .unwrap();
        cells[a] += 1;
    }
    let cell_size: [f64; 3] = [0, 1, 2].map(|a| dims[a] as f64 / cells[a] as f64);
    let mut blobs = Vec::new();
    for label in 1..=n_labels {
        let n = label as usize - 1;
        let cell = [n % cells[0], (n / cells[0]) % cells[1], n / (cells[0] * cells[1])];
        let mut center = [0.0; 3];
        let mut radii = [0.0; 3];
        for a in 0..3 {
            let half = cell_size[a] / 2.0;
            radii[a] = (half * rng.random_range(0.3..0.7)).max(0.6);
            let slack = (half - radii[a]).max(0.0);
            center[a] = cell[a] as f64 * cell_size[a] + half + rng.random_range(-slack..=slack) - 0.5;
        }
        blobs.push(Blob {
            label,
            name: "",
            center,
            radii,
        });
    }
    let labels = Grid3::from_fn(dims, |idx| blobs.iter().find(|b| inside(b, idx)).map_or(0, |b| b.label));
    let g = VoxelGeometry::axis_aligned(dims, spacing, [0.0; 3]).expect("valid phantom geometry");
    let table: BTreeMap<u32, String> = (1..=n_labels).map(|l| (l, format!("anatomy_{l:02}"))).collect();
    LabelVolume::new(g, labels, table).expect("phantom labels match table")
}

/// Burr radius of the demo drilling pass, mm.
pub const DEMO_BURR_RADIUS: f64 = 0.75;
/// Demo sample period, s.
pub const DEMO_DT: f64 = 0.0125;

/// A pedal-down pass along y that skims the top of the EAC blob of
/// [`three_blob`], preceded and followed by idle samples.
pub fn demo_trajectory() -> Vec<TrajectorySample> {
    let g = three_blob().geometry().clone();
    let eac = &THREE_BLOBS[0];
    let top = eac.center[2] + eac.radii[2];
    let x = eac.center[0] + 1.0;
    let z = top + 0.5;
    let (y0, y1) = (eac.center[1] - 10.0, eac.center[1] + 10.0);
    let steps = 160;
    let mut out = Vec::with_capacity(steps + 21);
    let mut t = 0.0;
    let at = |y: f64| g.index_to_world(&Vec3::new(x, y, z));
    for _ in 0..10 {
        out.push(TrajectorySample {
            t,
            tip: at(y0),
            burr_radius: DEMO_BURR_RADIUS,
            drilling: false,
        });
        t += DEMO_DT;
    }
    for n in 0..=steps {
        let y = y0 + (y1 - y0) * n as f64 / steps as f64;
        out.push(TrajectorySample {
            t,
            tip: at(y),
            burr_radius: DEMO_BURR_RADIUS,
            drilling: true,
        });
        t += DEMO_DT;
    }
    for _ in 0..10 {
        out.push(TrajectorySample {
            t,
            tip: at(y1),
            burr_radius: DEMO_BURR_RADIUS,
            drilling: false,
        });
        t += DEMO_DT;
    }
    out
}

/// Feedback configuration used with the demo pass: all three blobs are critical.
pub fn demo_feedback() -> crate::feedback::FeedbackConfig {
    crate::feedback::FeedbackConfig {
        critical_labels: [EAC, TMJ, SINUS].into(),
        ..Default::default()
    }
}
