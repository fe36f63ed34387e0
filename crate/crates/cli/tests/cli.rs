use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sdfguide_core::drillsim::{run_trial, CompliantTool, TrialConfig};
use sdfguide_core::phantom;
use sdfguide_core::sdf::build_atlas;

fn sdfguide(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdfguide"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn sdfguide")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn phantom_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    assert!(sdfguide(&["phantom", "--out", "."], dir.path()).status.success());
    let o = sdfguide(&["build", "--labelmap", "phantom.seg.nrrd", "--out", "atlas.sdfa"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("built 3 labels on 48x48x24"));
    dir
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdfguide(&["build", "--labelmap", "absent.nrrd", "--out", "a.sdfa"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = sdfguide(&["query", "--atlas", "absent.sdfa", "--point", "0,0,0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = sdfguide(&["build", "--labelmap"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rebuild_is_byte_identical() {
    let dir = phantom_dir();
    let o = sdfguide(&["build", "--labelmap", "phantom.seg.nrrd", "--out", "again.sdfa"], dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("atlas.sdfa")).unwrap(), fs::read(dir.path().join("again.sdfa")).unwrap());
}

#[test]
fn query_rows_keep_order_and_flag_out_of_bounds() {
    let dir = phantom_dir();
    fs::write(dir.path().join("pts.csv"), "x,y,z\n6,12,6\n17.5,6,6\n").unwrap();
    let o = sdfguide(
        &["query", "--atlas", "atlas.sdfa", "--point", "-50,0,0", "--points-csv", "pts.csv", "--clamp", "off"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][..3], ["-50", "0", "0"]);
    assert_eq!(rows[0][12], "out_of_bounds");
    assert_eq!(rows[1][..5], ["6", "12", "6", "1", "EAC"]);
    assert_eq!(rows[2][..5], ["17.5", "6", "6", "2", "TMJ"]);
    assert!(rows[1][12].is_empty() && rows[2][12].is_empty());

    // clamped queries succeed everywhere
    let o = sdfguide(&["query", "--atlas", "atlas.sdfa", "--point", "-50,0,0"], dir.path());
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn replay_reproduces_library_metrics() {
    let dir = phantom_dir();
    let o = sdfguide(&["replay", "--config", "replay.cfg"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let v = phantom::three_blob();
    let atlas = build_atlas(&v).unwrap();
    let cfg = TrialConfig {
        feedback: phantom::demo_feedback(),
        ..Default::default()
    };
    let log = run_trial(&v, &atlas, &cfg, &phantom::demo_trajectory(), &mut CompliantTool::default()).unwrap();

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("replay/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics, serde_json::to_value(&log.metrics).unwrap());
    let frames = fs::read_to_string(dir.path().join("replay/frames.jsonl")).unwrap();
    assert_eq!(frames.lines().count(), log.frames.len());
    let events = fs::read_to_string(dir.path().join("replay/events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), log.events.len());
}

#[test]
fn replay_with_atlas_file_matches_in_memory_build() {
    let dir = phantom_dir();
    let cfg = fs::read_to_string(dir.path().join("replay.cfg")).unwrap();
    fs::write(dir.path().join("cached.cfg"), format!("{cfg}atlas = atlas.sdfa\nout_dir = cached\n")).unwrap();
    assert!(sdfguide(&["replay", "--config", "replay.cfg"], dir.path()).status.success());
    assert!(sdfguide(&["replay", "--config", "cached.cfg"], dir.path()).status.success());
    for f in ["frames.jsonl", "events.jsonl", "metrics.json"] {
        assert_eq!(
            fs::read(dir.path().join("replay").join(f)).unwrap(),
            fs::read(dir.path().join("cached").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn feedback_off_gives_zero_force() {
    let dir = phantom_dir();
    let cfg = fs::read_to_string(dir.path().join("replay.cfg")).unwrap();
    fs::write(dir.path().join("off.cfg"), format!("{cfg}enable_haptic = off\nout_dir = off\n")).unwrap();
    let o = sdfguide(&["replay", "--config", "off.cfg"], dir.path());
    assert!(o.status.success());
    let frames = fs::read_to_string(dir.path().join("off/frames.jsonl")).unwrap();
    assert!(frames.lines().count() > 0);
    for line in frames.lines() {
        let f: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(f["force"], serde_json::json!([0.0, 0.0, 0.0]));
    }
}

#[test]
fn empty_trajectory_is_an_error() {
    let dir = phantom_dir();
    fs::write(dir.path().join("trajectory.csv"), "t,x,y,z,burr_radius,drilling\n").unwrap();
    let o = sdfguide(&["replay", "--config", "replay.cfg"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn bench_reports_both_modes_reproducibly() {
    let dir = phantom_dir();
    let o = sdfguide(&["bench", "--atlas", "atlas.sdfa", "--count", "2000", "--runs", "3", "--json"], dir.path());
    assert!(o.status.success());
    let reports: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["mode"], "nearest");
    assert_eq!(reports[1]["mode"], "trilinear");
    for r in reports {
        assert_eq!(r["meets_floor"], true);
    }
    let o = sdfguide(&["bench", "--atlas", "atlas.sdfa", "--count", "500", "--mode", "trilinear"], dir.path());
    let text = stdout(&o);
    assert!(text.contains("80 Hz floor PASS"));
    assert!(!text.contains("nearest"));
}

#[test]
fn slice_covers_every_voxel_of_the_plane() {
    let dir = phantom_dir();
    let o = sdfguide(&["slice", "--atlas", "atlas.sdfa", "--k", "12"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 48 * 48);
    assert_eq!(sdfguide(&["slice", "--atlas", "atlas.sdfa", "--k", "99"], dir.path()).status.code(), Some(2));
}
