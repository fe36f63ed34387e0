use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdfguide_core::sdf::{build_atlas, edt, edt_bruteforce, signed_field};
use sdfguide_core::{phantom, Grid3, LabelVolume, Mask, VoxelGeometry};

fn random_mask(rng: &mut ChaCha8Rng, max: usize) -> (Mask, [f64; 3]) {
    let dims = [0; 3].map(|_| rng.random_range(2..=max));
    let density = rng.random_range(0.01..0.5);
    let mut m = Grid3::from_fn(dims, |_| rng.random_bool(density));
    // keep both phases non-empty
    *m.get_mut([0, 0, 0]) = true;
    *m.get_mut([dims[0] - 1, dims[1] - 1, dims[2] - 1]) = false;
    let spacing = [0; 3].map(|_| rng.random_range(0.3..2.0));
    (m, spacing)
}

/// Exact distance to the nearest center of opposite membership.
fn signed_oracle(mask: &Mask, spacing: [f64; 3]) -> Grid3<f64> {
    let ext = edt_bruteforce(mask, spacing).unwrap();
    let int = edt_bruteforce(&mask.complement(), spacing).unwrap();
    Grid3::from_fn(mask.dims(), |idx| {
        if *mask.get(idx) {
            -*int.get(idx)
        } else {
            *ext.get(idx)
        }
    })
}

#[test]
fn signed_values_match_oracle_and_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let (m, s) = random_mask(&mut rng, 16);
        let got = signed_field(&m, s).unwrap();
        let want = signed_oracle(&m, s);
        for l in 0..m.len() {
            let (g, w) = (got.as_slice()[l] as f64, want.as_slice()[l]);
            assert!((g - w).abs() <= 1e-5 * (1.0 + w.abs()), "{g} vs {w}");
            assert_eq!(g < 0.0, m.as_slice()[l]);
            assert!(g != 0.0);
        }
    }
}

/// Each sign branch is a distance function and so 1-Lipschitz. Across the
/// boundary both magnitudes are bounded by the pair distance, giving 2x.
#[test]
fn signed_field_is_lipschitz_per_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let (m, s) = random_mask(&mut rng, 20);
        let f = signed_field(&m, s).unwrap();
        for _ in 0..2000 {
            let a = m.coords(rng.random_range(0..m.len()));
            let b = m.coords(rng.random_range(0..m.len()));
            let dist = (0..3)
                .map(|k| ((a[k] as f64 - b[k] as f64) * s[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            let diff = (*f.get(a) as f64 - *f.get(b) as f64).abs();
            let bound = if m.get(a) == m.get(b) { dist } else { 2.0 * dist };
            // f32 storage rounding
            assert!(diff <= bound + 1e-4 * (1.0 + dist), "{diff} > {bound}");
        }
    }
}

#[test]
fn slab_neighbours_straddle_the_surface() {
    // adjacent centers 1 mm apart on either side of a slab face read -1 and +1
    let m = Grid3::from_fn([6, 4, 4], |[i, _, _]| i < 3);
    let f = signed_field(&m, [1.0; 3]).unwrap();
    assert_eq!(*f.get([2, 1, 1]), -1.0);
    assert_eq!(*f.get([3, 1, 1]), 1.0);
}

#[test]
fn larger_anisotropic_grids_match_bruteforce() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for density in [0.001, 0.01, 0.2] {
        let dims = [32, 28, 20];
        let mut m = Grid3::from_fn(dims, |_| rng.random_bool(density));
        *m.get_mut([31, 0, 19]) = true;
        let s = [0.35, 0.9, 1.8];
        let fast = edt(&m, s).unwrap();
        let slow = edt_bruteforce(&m, s).unwrap();
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + b));
        }
    }
}

#[test]
fn three_blob_fields_grow_away_from_own_blob() {
    let v = phantom::three_blob();
    let atlas = build_atlas(&v).unwrap();
    let g = v.geometry();
    for b in &phantom::THREE_BLOBS {
        let f = &atlas.volume(b.label).unwrap().values;
        let c = b.center.map(|x| x as usize);
        assert!(*f.get(c) < 0.0);
        // moving radially out along x, the field increases monotonically past the surface
        let mut last = f64::NEG_INFINITY;
        let mut i = c[0];
        while i < g.dims()[0] && i <= c[0] + 10 {
            let val = *f.get([i, c[1], c[2]]) as f64;
            if i > c[0] + b.radii[0] as usize {
                assert!(val > 0.0);
            }
            assert!(val >= last);
            last = val;
            i += 1;
        }
    }
}

#[test]
fn sixteen_labels_give_sixteen_volumes() {
    let v = phantom::multi_label([32, 32, 16], [0.6, 0.6, 1.0], 16, 3);
    let atlas = build_atlas(&v).unwrap();
    assert_eq!(atlas.len(), 16);
    assert_eq!(atlas.labels().collect::<Vec<_>>(), (1..=16).collect::<Vec<_>>());
}

#[test]
fn anisotropic_slab() {
    // flat slab: values are a multiple of the z spacing above and below it
    let g = VoxelGeometry::axis_aligned([4, 4, 10], [0.4, 0.4, 1.5], [0.0; 3]).unwrap();
    let labels = Grid3::from_fn([4, 4, 10], |[_, _, k]| u32::from((3..6).contains(&k)));
    let v = LabelVolume::new(g, labels, BTreeMap::new()).unwrap();
    let atlas = build_atlas(&v).unwrap();
    let f = &atlas.volumes()[0].values;
    assert_eq!(*f.get([1, 1, 2]), 1.5);
    assert_eq!(*f.get([1, 1, 0]), 4.5);
    assert_eq!(*f.get([1, 1, 4]), -3.0);
    assert_eq!(*f.get([1, 1, 5]), -1.5);
}
