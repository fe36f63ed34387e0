use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use sdfguide_core::drillsim::{self, CompliantTool, RigidTool, ToolResponse, TrialConfig, TrialLog};
use sdfguide_core::phantom;
use sdfguide_core::query::nearest_anatomy;
use sdfguide_core::sdf::{build_atlas_with_workers, load_atlas, save_atlas};
use sdfguide_core::throughput::{bench_queries, ThroughputReport};
use sdfguide_core::volume::{parse_nrrd_with_warnings, write_nrrd, NrrdEncoding};
use sdfguide_core::{Error, LabelVolume, QueryOptions, SampleMode, SdfAtlas, Vec3};

use crate::error::{CliError, CliResult};
use crate::run_config::{RunConfig, ToolKind};

/// Reads a labelmap; parser warnings go to stderr.
pub fn load_labelmap(path: &Path) -> CliResult<LabelVolume> {
    let bytes = fs::read(path).map_err(|e| CliError::input(path, e))?;
    let (volume, warnings) = parse_nrrd_with_warnings(&bytes).map_err(|e| CliError::input(path, e))?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(volume)
}

pub fn load_atlas_file(path: &Path) -> CliResult<SdfAtlas> {
    let file = File::open(path).map_err(|e| CliError::input(path, e))?;
    load_atlas(BufReader::new(file)).map_err(|e| CliError::input(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(dir.display(), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(path.display(), e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::runtime(path.display(), e))
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub labels: usize,
    pub dims: [usize; 3],
    pub seconds: f64,
}

pub fn cmd_build(labelmap: &Path, out: &Path, workers: usize) -> CliResult<BuildSummary> {
    let volume = load_labelmap(labelmap)?;
    let start = Instant::now();
    let atlas = build_atlas_with_workers(&volume, workers).map_err(|e| CliError::runtime("build", e))?;
    let seconds = start.elapsed().as_secs_f64();
    let mut w = create(out)?;
    save_atlas(&atlas, &mut w).map_err(|e| CliError::runtime(out.display(), e))?;
    finish(w, out)?;
    Ok(BuildSummary {
        labels: atlas.len(),
        dims: atlas.geometry().dims(),
        seconds,
    })
}

/// Reads query points from a CSV with `x`, `y`, `z` columns (mm).
pub fn read_points<R: Read>(source: R) -> Result<Vec<Vec3>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    };
    let cols = [column("x")?, column("y")?, column("z")?];
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let mut p = Vec3::zeros();
        for (a, &c) in cols.iter().enumerate() {
            let field = rec.get(c).unwrap_or_default();
            p[a] = field.parse().map_err(|_| format!("row {}: bad number `{field}`", n + 1))?;
        }
        out.push(p);
    }
    Ok(out)
}

/// Parses `x,y,z`.
pub fn parse_point(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got `{s}`"));
    }
    let mut p = Vec3::zeros();
    for (a, v) in parts.iter().enumerate() {
        p[a] = v.parse().map_err(|_| format!("bad coordinate `{v}`"))?;
    }
    Ok(p)
}

pub const QUERY_HEADER: [&str; 13] = ["x", "y", "z", "label", "name", "distance", "gx", "gy", "gz", "i", "j", "k", "error"];

/// One CSV row per point, in input order. Failed points keep their row with
/// the `error` column set and the result columns empty.
pub fn cmd_query<W: Write>(atlas: &SdfAtlas, points: &[Vec3], opts: QueryOptions, sink: W) -> CliResult<usize> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| CliError::runtime("query output", e);
    w.write_record(QUERY_HEADER).map_err(io)?;
    let mut failed = 0;
    for p in points {
        let mut row: Vec<String> = p.iter().map(f64::to_string).collect();
        match nearest_anatomy(atlas, p, opts) {
            Ok(r) => {
                row.extend([r.label.to_string(), r.name.clone(), r.distance.to_string()]);
                match r.gradient {
                    Some(g) => row.extend(g.iter().map(f64::to_string)),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
                row.extend(r.voxel.iter().map(usize::to_string));
                row.push(String::new());
            }
            Err(e) => {
                failed += 1;
                row.extend(std::iter::repeat_n(String::new(), 9));
                row.push(match e {
                    Error::OutOfBounds(_) => "out_of_bounds".to_string(),
                    other => other.to_string(),
                });
            }
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::runtime("query output", e))?;
    Ok(failed)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayOutputs {
    pub frames: PathBuf,
    pub events: PathBuf,
    pub metrics: PathBuf,
}

/// Runs one trial from a config file and writes the frame, event and metrics logs.
pub fn cmd_replay(cfg: &RunConfig) -> CliResult<(TrialLog, ReplayOutputs)> {
    let volume = load_labelmap(&cfg.labelmap)?;
    let trajectory = {
        let file = File::open(&cfg.trajectory).map_err(|e| CliError::input(&cfg.trajectory, e))?;
        let t = drillsim::read_trajectory(BufReader::new(file)).map_err(|e| CliError::input(&cfg.trajectory, e))?;
        drillsim::validate_trajectory(&t).map_err(|e| CliError::input(&cfg.trajectory, e))?;
        t
    };
    let atlas = match &cfg.atlas {
        Some(p) => load_atlas_file(p)?,
        None => build_atlas_with_workers(&volume, cfg.workers).map_err(|e| CliError::runtime("build", e))?,
    };
    let trial = TrialConfig {
        feedback: cfg.feedback.clone(),
        query: cfg.query,
    };
    let mut rigid = RigidTool;
    let mut compliant;
    let tool: &mut dyn ToolResponse = match cfg.tool {
        ToolKind::Rigid => &mut rigid,
        ToolKind::Compliant(stiffness) => {
            compliant = CompliantTool { stiffness };
            &mut compliant
        }
    };
    let log = drillsim::run_trial(&volume, &atlas, &trial, &trajectory, tool).map_err(|e| match e {
        Error::AtlasMismatch => CliError::Input(e.to_string()),
        e => CliError::runtime("replay", e),
    })?;

    let outputs = ReplayOutputs {
        frames: cfg.out_dir.join("frames.jsonl"),
        events: cfg.out_dir.join("events.jsonl"),
        metrics: cfg.out_dir.join("metrics.json"),
    };
    let mut w = create(&outputs.frames)?;
    drillsim::write_jsonl(&log.frames, &mut w).map_err(|e| CliError::runtime(outputs.frames.display(), e))?;
    finish(w, &outputs.frames)?;
    let mut w = create(&outputs.events)?;
    drillsim::write_jsonl(&log.events, &mut w).map_err(|e| CliError::runtime(outputs.events.display(), e))?;
    finish(w, &outputs.events)?;
    let mut w = create(&outputs.metrics)?;
    serde_json::to_writer_pretty(&mut w, &log.metrics).map_err(|e| CliError::runtime(outputs.metrics.display(), e))?;
    writeln!(w).map_err(|e| CliError::runtime(outputs.metrics.display(), e))?;
    finish(w, &outputs.metrics)?;
    Ok((log, outputs))
}

/// Times the full feedback query for each requested mode.
pub fn cmd_bench(
    atlas: &SdfAtlas,
    count: usize,
    modes: &[SampleMode],
    seed: u64,
    runs: usize,
    streams: usize,
) -> Vec<ThroughputReport> {
    modes
        .iter()
        .map(|&m| bench_queries(atlas, count.max(1), m, seed, runs, streams))
        .collect()
}

pub fn format_report(r: &ThroughputReport) -> String {
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    format!(
        "{:<9} {:>12.0} q/s (median of {}, {} x {} queries)  p99 {:>8.2} us  80 Hz floor {}  1e5 q/s target {}",
        r.mode.to_string(),
        r.median_qps,
        r.runs,
        r.streams,
        r.queries_per_run,
        r.p99_latency * 1e6,
        verdict(r.meets_floor),
        verdict(r.meets_stretch),
    )
}

/// Files written by [`cmd_phantom`].
#[derive(Debug, Clone)]
pub struct PhantomFiles {
    pub labelmap: PathBuf,
    pub trajectory: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

/// Writes the three-blob phantom with its demo trajectory and replay config.
pub fn cmd_phantom(out_dir: &Path) -> CliResult<PhantomFiles> {
    let files = PhantomFiles {
        labelmap: out_dir.join("phantom.seg.nrrd"),
        trajectory: Some(out_dir.join("trajectory.csv")),
        config: Some(out_dir.join("replay.cfg")),
    };
    write_labelmap(&phantom::three_blob(), &files.labelmap)?;

    let path = files.trajectory.as_deref().expect("set above");
    let mut w = create(path)?;
    drillsim::write_trajectory(&phantom::demo_trajectory(), &mut w).map_err(|e| CliError::runtime(path.display(), e))?;
    finish(w, path)?;

    let path = files.config.as_deref().expect("set above");
    let text = format!(
        "labelmap = phantom.seg.nrrd\ntrajectory = trajectory.csv\nout_dir = replay\n\
         mode = nearest\nclamp = on\nworkers = 1\ntool = compliant\nstiffness = 10\n{}",
        phantom::demo_feedback().to_text()
    );
    fs::write(path, text).map_err(|e| CliError::runtime(path.display(), e))?;
    Ok(files)
}

/// Writes a many-label benchmark phantom (cubic grid of `size` voxels per side).
pub fn cmd_phantom_multi(out_dir: &Path, size: usize, spacing: f64, labels: u32, seed: u64) -> CliResult<PhantomFiles> {
    if size < 2 || labels == 0 || spacing.is_nan() || spacing <= 0.0 {
        return Err(CliError::Input("phantom needs size >= 2, labels >= 1 and spacing > 0".into()));
    }
    let files = PhantomFiles {
        labelmap: out_dir.join("multi.seg.nrrd"),
        trajectory: None,
        config: None,
    };
    write_labelmap(&phantom::multi_label([size; 3], [spacing; 3], labels, seed), &files.labelmap)?;
    Ok(files)
}

fn write_labelmap(v: &LabelVolume, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    write_nrrd(v, NrrdEncoding::Gzip, &mut w).map_err(|e| CliError::runtime(path.display(), e))?;
    finish(w, path)
}

/// Closest-anatomy map on the axial slice `k`, one CSV row per voxel center.
pub fn cmd_slice<W: Write>(atlas: &SdfAtlas, k: usize, opts: QueryOptions, sink: W) -> CliResult<()> {
    let g = atlas.geometry();
    let [nx, ny, nz] = g.dims();
    if k >= nz {
        return Err(CliError::Input(format!("slice {k} outside 0..{nz}")));
    }
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| CliError::runtime("slice output", e);
    w.write_record(["i", "j", "k", "x", "y", "z", "label", "name", "distance"]).map_err(io)?;
    for j in 0..ny {
        for i in 0..nx {
            let p = g.voxel_center([i, j, k]);
            let r = nearest_anatomy(atlas, &p, opts).map_err(|e| CliError::runtime("slice", e))?;
            w.write_record([
                i.to_string(),
                j.to_string(),
                k.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                r.label.to_string(),
                r.name,
                r.distance.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::runtime("slice output", e))
}
