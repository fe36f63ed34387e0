//! Timing of the full per-tick feedback query (nearest anatomy, gradient, frame).

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::feedback::{compose_frame, FeedbackConfig};
use crate::query::{nearest_anatomy, QueryOptions, SampleMode};
use crate::sdf::SdfAtlas;
use crate::volume::Vec3;

/// Haptic-loop rate the query path must sustain, Hz.
pub const RATE_FLOOR_HZ: f64 = 80.0;
/// Single-stream engineering target, queries/s.
pub const STRETCH_TARGET_QPS: f64 = 1e5;

#[derive(Debug, Clone, Serialize)]
pub struct ThroughputReport {
    pub mode: SampleMode,
    pub queries_per_run: usize,
    pub runs: usize,
    pub streams: usize,
    /// Median over runs of aggregate queries per second.
    pub median_qps: f64,
    /// 99th percentile single-query latency over all runs, seconds.
    pub p99_latency: f64,
    pub meets_floor: bool,
    pub meets_stretch: bool,
}

/// Uniformly random points inside the atlas volume, reproducible from `seed`.
pub fn random_points(atlas: &SdfAtlas, count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = atlas.geometry();
    let dims = g.dims();
    (0..count)
        .map(|_| {
            let c = Vec3::new(
                rng.random_range(0.0..=(dims[0] - 1) as f64),
                rng.random_range(0.0..=(dims[1] - 1) as f64),
                rng.random_range(0.0..=(dims[2] - 1) as f64),
            );
            g.index_to_world(&c)
        })
        .collect()
}

fn run_stream(atlas: &SdfAtlas, points: &[Vec3], opts: QueryOptions, cfg: &FeedbackConfig) -> (f64, Vec<f64>) {
    let mut latencies = Vec::with_capacity(points.len());
    let start = Instant::now();
    for (n, p) in points.iter().enumerate() {
        let t0 = Instant::now();
        let r = nearest_anatomy(atlas, p, opts).expect("points are in bounds");
        black_box(compose_frame(&r, cfg, n as f64));
        latencies.push(t0.elapsed().as_secs_f64());
    }
    (start.elapsed().as_secs_f64(), latencies)
}

/// Runs `runs` timing passes of `count` queries on `streams` threads.
pub fn bench_queries(
    atlas: &SdfAtlas,
    count: usize,
    mode: SampleMode,
    seed: u64,
    runs: usize,
    streams: usize,
) -> ThroughputReport {
    let opts = QueryOptions { mode, clamp: true };
    let cfg = FeedbackConfig {
        critical_labels: atlas.labels().collect(),
        ..Default::default()
    };
    let streams = streams.max(1);
    let point_sets: Vec<Vec<Vec3>> = (0..streams)
        .map(|s| random_points(atlas, count, seed.wrapping_add(s as u64)))
        .collect();
    let mut qps = Vec::with_capacity(runs);
    let mut latencies = Vec::with_capacity(runs * count * streams);
    for _ in 0..runs.max(1) {
        let start = Instant::now();
        let results: Vec<(f64, Vec<f64>)> = if streams == 1 {
            vec![run_stream(atlas, &point_sets[0], opts, &cfg)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = point_sets
                    .iter()
                    .map(|pts| scope.spawn(|| run_stream(atlas, pts, opts, &cfg)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("bench stream")).collect()
            })
        };
        let wall = start.elapsed().as_secs_f64();
        qps.push((count * streams) as f64 / wall);
        for (_, l) in results {
            latencies.extend(l);
        }
    }
    qps.sort_by(f64::total_cmp);
    latencies.sort_by(f64::total_cmp);
    let median_qps = qps[qps.len() / 2];
    let p99_latency = latencies[((latencies.len() as f64 * 0.99).ceil() as usize).saturating_sub(1)];
    ThroughputReport {
        mode,
        queries_per_run: count,
        runs: qps.len(),
        streams,
        median_qps,
        p99_latency,
        meets_floor: median_qps >= RATE_FLOOR_HZ,
        meets_stretch: median_qps >= STRETCH_TARGET_QPS,
    }
}
