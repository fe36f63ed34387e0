//! Replay configuration: input/output paths, query options and the feedback block.
//!
//! ```text
//! labelmap = seg.nrrd
//! atlas = atlas.sdfa        # optional, built in memory when absent
//! trajectory = trajectory.csv
//! out_dir = replay
//! mode = nearest
//! clamp = on
//! workers = 1
//! tool = compliant          # or rigid
//! stiffness = 10
//! tau_force = 1.0           # any FeedbackConfig field
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use sdfguide_core::config::parse_entries;
use sdfguide_core::{FeedbackConfig, QueryOptions};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToolKind {
    Rigid,
    /// Yields to the haptic force with the given stiffness, N/mm.
    Compliant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub labelmap: PathBuf,
    pub atlas: Option<PathBuf>,
    pub trajectory: PathBuf,
    pub out_dir: PathBuf,
    pub feedback: FeedbackConfig,
    pub query: QueryOptions,
    pub workers: usize,
    pub tool: ToolKind,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base).map_err(|e| CliError::input(path, e))?;
        for p in [Some(&cfg.labelmap), cfg.atlas.as_ref(), Some(&cfg.trajectory)].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::input(p, "no such file"));
            }
        }
        Ok(cfg)
    }

    /// Parses config text; paths are joined onto `base` unless absolute.
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut feedback = FeedbackConfig::default();
        let mut query = QueryOptions::default();
        let (mut labelmap, mut atlas, mut trajectory, mut out_dir) = (None, None, None, None);
        let mut workers = 1;
        let mut tool = "rigid".to_string();
        let mut stiffness = 10.0;
        for e in parse_entries(text).map_err(|e| e.to_string())? {
            let path = || base.join(&e.value);
            match e.key.as_str() {
                "labelmap" => labelmap = Some(path()),
                "atlas" => atlas = Some(path()),
                "trajectory" => trajectory = Some(path()),
                "out_dir" => out_dir = Some(path()),
                "mode" => query.mode = e.parse().map_err(|e| e.to_string())?,
                "clamp" => query.clamp = e.flag().map_err(|e| e.to_string())?,
                "workers" => workers = e.parse().map_err(|e| e.to_string())?,
                "tool" => tool = e.value.clone(),
                "stiffness" => stiffness = e.parse().map_err(|e| e.to_string())?,
                _ => {
                    if !feedback.apply(&e).map_err(|e| e.to_string())? {
                        return Err(e.error("unknown key").to_string());
                    }
                }
            }
        }
        feedback.validate().map_err(|e| e.to_string())?;
        let tool = match tool.as_str() {
            "rigid" => ToolKind::Rigid,
            "compliant" if stiffness > 0.0 => ToolKind::Compliant(stiffness),
            "compliant" => return Err(format!("stiffness must be > 0, got {stiffness}")),
            other => return Err(format!("tool must be rigid or compliant, got `{other}`")),
        };
        let required = |v: Option<PathBuf>, key: &str| v.ok_or_else(|| format!("missing required key `{key}`"));
        Ok(Self {
            labelmap: required(labelmap, "labelmap")?,
            atlas,
            trajectory: required(trajectory, "trajectory")?,
            out_dir: required(out_dir, "out_dir")?,
            feedback,
            query,
            workers: workers.max(1),
            tool,
        })
    }
}
