//! Replay harness: carve voxels along a recorded tool path, emit feedback frames
//! and compute the trial metrics (completion time, unintended removals).
//!
//! A voxel is removed when its center lies inside the burr sphere, boundary
//! included. Each voxel carries one label, so a removal counts once even when
//! the burr overlaps several anatomies. The atlas stays fixed during a trial.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{compose_frame, FeedbackConfig, FeedbackFrame};
use crate::grid::Grid3;
use crate::query::{nearest_anatomy, QueryOptions};
use crate::sdf::SdfAtlas;
use crate::volume::{LabelVolume, Vec3, VoxelGeometry};

/// Slack (mm²) on the inclusive sphere test, absorbing rounding in rotated grids.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub tip: Vec3,
    pub burr_radius: f64,
    /// Foot-pedal state.
    pub drilling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemovalEvent {
    pub t: f64,
    pub voxel: [usize; 3],
    /// Label before removal; 0 is bone or background.
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub completion_time: f64,
    pub removed_total: usize,
    pub unintended_removed: BTreeMap<u32, usize>,
    pub frames_emitted: usize,
}

/// Mutable working copy of a labelmap during a trial.
#[derive(Debug, Clone)]
pub struct DrillState {
    geometry: VoxelGeometry,
    labels: Grid3<u32>,
    removed: Vec<bool>,
}

impl DrillState {
    pub fn new(volume: &LabelVolume) -> Self {
        Self {
            geometry: volume.geometry().clone(),
            labels: volume.labels().clone(),
            removed: vec![false; volume.labels().len()],
        }
    }

    pub fn is_removed(&self, idx: [usize; 3]) -> bool {
        self.removed[self.labels.linear_index(idx)]
    }

    pub fn removed_count(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }

    pub fn remaining(&self) -> usize {
        self.removed.len() - self.removed_count()
    }
}

/// Removes every remaining voxel whose center is within the burr sphere.
pub fn carve(state: &mut DrillState, s: &TrajectorySample) -> Vec<RemovalEvent> {
    carve_at(state, s.t, &s.tip, s.burr_radius, s.drilling)
}

fn carve_at(state: &mut DrillState, t: f64, tip: &Vec3, radius: f64, drilling: bool) -> Vec<RemovalEvent> {
    let mut events = Vec::new();
    if !drilling {
        return events;
    }
    let g = &state.geometry;
    let dims = g.dims();
    let spacing = g.spacing();
    let c = g.world_to_index(tip);
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let reach = radius / spacing[a];
        let first = (c[a] - reach).ceil().max(0.0);
        let last = (c[a] + reach).floor().min((dims[a] - 1) as f64);
        if first > last {
            return events;
        }
        lo[a] = first as usize;
        hi[a] = last as usize;
    }
    let limit = radius * radius + BOUNDARY_SLACK;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let idx = [i, j, k];
                let d2: f64 = (0..3).map(|a| ((idx[a] as f64 - c[a]) * spacing[a]).powi(2)).sum();
                if d2 > limit {
                    continue;
                }
                let l = state.labels.linear_index(idx);
                if state.removed[l] {
                    continue;
                }
                state.removed[l] = true;
                events.push(RemovalEvent {
                    t,
                    voxel: idx,
                    label: state.labels.as_slice()[l],
                });
            }
        }
    }
    events
}

/// Time between the first and last removal; zero without removals.
pub fn completion_time(events: &[RemovalEvent]) -> f64 {
    let mut it = events.iter().map(|e| e.t);
    let Some(first) = it.next() else {
        return 0.0;
    };
    let (lo, hi) = it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t)));
    hi - lo
}

/// Removals per critical label; labels with no removals are omitted.
pub fn count_unintended(events: &[RemovalEvent], critical: &BTreeSet<u32>) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for e in events.iter().filter(|e| critical.contains(&e.label)) {
        *out.entry(e.label).or_insert(0) += 1;
    }
    out
}

/// How the simulated tool reacts to feedback before carving.
pub trait ToolResponse {
    /// Position at which the burr carves this tick.
    fn carve_position(&mut self, sample: &TrajectorySample, frame: Option<&FeedbackFrame>) -> Vec3;
}

/// Follows the recorded path and ignores feedback.
#[derive(Debug, Default, Clone, Copy)]
pub struct RigidTool;

impl ToolResponse for RigidTool {
    fn carve_position(&mut self, sample: &TrajectorySample, _: Option<&FeedbackFrame>) -> Vec3 {
        sample.tip
    }
}

/// Test fixture standing in for a hand that yields to the haptic force: the
/// tip retreats by `|F| / stiffness` along `F`, one step per tick.
#[derive(Debug, Clone, Copy)]
pub struct CompliantTool {
    /// N/mm.
    pub stiffness: f64,
}

impl Default for CompliantTool {
    fn default() -> Self {
        Self { stiffness: 10.0 }
    }
}

impl ToolResponse for CompliantTool {
    fn carve_position(&mut self, sample: &TrajectorySample, frame: Option<&FeedbackFrame>) -> Vec3 {
        match frame {
            Some(f) => sample.tip + f.force_vector() / self.stiffness,
            None => sample.tip,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrialConfig {
    pub feedback: FeedbackConfig,
    pub query: QueryOptions,
}

#[derive(Debug, Clone)]
pub struct TrialLog {
    pub frames: Vec<FeedbackFrame>,
    pub events: Vec<RemovalEvent>,
    pub metrics: TrialMetrics,
}

pub fn validate_trajectory(trajectory: &[TrajectorySample]) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    for (n, s) in trajectory.iter().enumerate() {
        if !(s.burr_radius > 0.0 && s.burr_radius.is_finite()) {
            return Err(Error::Trajectory(format!("sample {n}: burr_radius must be > 0")));
        }
        if !s.t.is_finite() || s.tip.iter().any(|v| !v.is_finite()) {
            return Err(Error::Trajectory(format!("sample {n}: non-finite value")));
        }
    }
    if let Some(n) = trajectory.windows(2).position(|w| w[1].t <= w[0].t) {
        return Err(Error::Trajectory(format!(
            "time must increase strictly (sample {})",
            n + 1
        )));
    }
    Ok(())
}

/// Replays a trajectory: per sample query the atlas at the tip, compose the
/// feedback frame, let the tool react, then carve.
pub fn run_trial(
    volume: &LabelVolume,
    atlas: &SdfAtlas,
    config: &TrialConfig,
    trajectory: &[TrajectorySample],
    tool: &mut dyn ToolResponse,
) -> Result<TrialLog> {
    validate_trajectory(trajectory)?;
    config.feedback.validate()?;
    if atlas.geometry() != volume.geometry()
        || atlas.source_checksum().is_some_and(|c| c != volume.checksum())
        || atlas.labels().any(|l| !volume.table().contains_key(&l))
    {
        return Err(Error::AtlasMismatch);
    }

    let mut state = DrillState::new(volume);
    let mut frames = Vec::with_capacity(trajectory.len());
    let mut events = Vec::new();
    for s in trajectory {
        let frame = match nearest_anatomy(atlas, &s.tip, config.query) {
            Ok(r) => Some(compose_frame(&r, &config.feedback, s.t)),
            Err(Error::OutOfBounds(_)) => None,
            Err(e) => return Err(e),
        };
        let tip = tool.carve_position(s, frame.as_ref());
        events.extend(carve_at(&mut state, s.t, &tip, s.burr_radius, s.drilling));
        frames.extend(frame);
    }
    let metrics = TrialMetrics {
        completion_time: completion_time(&events),
        removed_total: events.len(),
        unintended_removed: count_unintended(&events, &config.feedback.critical_labels),
        frames_emitted: frames.len(),
    };
    debug_assert_eq!(metrics.removed_total, state.removed_count());
    Ok(TrialLog {
        frames,
        events,
        metrics,
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct TrajectoryRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    burr_radius: f64,
    drilling: u8,
}

/// Reads a `t,x,y,z,burr_radius,drilling` CSV (seconds, mm, 0/1).
pub fn read_trajectory<R: Read>(source: R) -> Result<Vec<TrajectorySample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let expected = ["t", "x", "y", "z", "burr_radius", "drilling"];
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(expected) {
        return Err(Error::Trajectory(format!(
            "header must be `{}`",
            expected.join(",")
        )));
    }
    rdr.deserialize::<TrajectoryRow>()
        .map(|row| {
            let row = row?;
            let drilling = match row.drilling {
                0 => false,
                1 => true,
                v => return Err(Error::Trajectory(format!("drilling must be 0 or 1, got {v}"))),
            };
            Ok(TrajectorySample {
                t: row.t,
                tip: Vec3::new(row.x, row.y, row.z),
                burr_radius: row.burr_radius,
                drilling,
            })
        })
        .collect()
}

pub fn write_trajectory<W: Write>(samples: &[TrajectorySample], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for s in samples {
        w.serialize(TrajectoryRow {
            t: s.t,
            x: s.tip[0],
            y: s.tip[1],
            z: s.tip[2],
            burr_radius: s.burr_radius,
            drilling: u8::from(s.drilling),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut sink: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut sink, item)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}
