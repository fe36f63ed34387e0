use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sdfguide_cli::error::CliResult;
use sdfguide_cli::{
    cmd_bench, cmd_build, cmd_phantom, cmd_phantom_multi, cmd_query, cmd_replay, cmd_slice, format_report,
    load_atlas_file, parse_point, read_points, CliError, RunConfig,
};
use sdfguide_core::{QueryOptions, SampleMode};

#[derive(Parser)]
#[command(name = "sdfguide", version, about = "Signed distance field atlases and proximity guidance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Nearest,
    Trilinear,
}

impl From<Mode> for SampleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Nearest => SampleMode::Nearest,
            Mode::Trilinear => SampleMode::Trilinear,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> Self {
        matches!(s, Switch::On)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a signed distance atlas from a labelmap.
    Build {
        #[arg(long)]
        labelmap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Nearest-anatomy queries; prints one CSV row per point.
    Query {
        #[arg(long)]
        atlas: PathBuf,
        /// Point in mm as `x,y,z`; repeatable.
        #[arg(long = "point", allow_hyphen_values = true)]
        points: Vec<String>,
        /// CSV file with `x,y,z` columns.
        #[arg(long)]
        points_csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "nearest")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "on")]
        clamp: Switch,
        /// Output file, stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a drilling trajectory and write frame, event and metrics logs.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config file's `mode`.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Overrides the config file's `clamp`.
        #[arg(long, value_enum)]
        clamp: Option<Switch>,
        /// Overrides the config file's `workers`.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Time the full feedback query on random in-bounds points.
    Bench {
        #[arg(long)]
        atlas: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        /// Only this mode; both are reported when absent.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Concurrent query streams.
        #[arg(long, default_value_t = 1)]
        streams: usize,
        /// Print the reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic phantom labelmap (plus demo trajectory and config).
    Phantom {
        #[arg(long)]
        out: PathBuf,
        /// Write a many-label cubic phantom instead of the three-blob demo.
        #[arg(long)]
        labels: Option<u32>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0.5)]
        spacing: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closest-anatomy map of one axial slice as CSV.
    Slice {
        #[arg(long)]
        atlas: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "nearest")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::runtime(p.display(), e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Build { labelmap, out, workers } => {
            let s = cmd_build(&labelmap, &out, workers)?;
            println!(
                "built {} labels on {}x{}x{} voxels in {:.3} s -> {}",
                s.labels,
                s.dims[0],
                s.dims[1],
                s.dims[2],
                s.seconds,
                out.display()
            );
        }
        Command::Query {
            atlas,
            points,
            points_csv,
            mode,
            clamp,
            out,
        } => {
            let mut pts = points
                .iter()
                .map(|s| parse_point(s).map_err(CliError::Input))
                .collect::<CliResult<Vec<_>>>()?;
            if let Some(p) = &points_csv {
                let file = File::open(p).map_err(|e| CliError::input(p, e))?;
                pts.extend(read_points(BufReader::new(file)).map_err(|e| CliError::input(p, e))?);
            }
            if pts.is_empty() {
                return Err(CliError::Input("no query points: pass --point or --points-csv".into()));
            }
            let atlas = load_atlas_file(&atlas)?;
            let opts = QueryOptions {
                mode: mode.into(),
                clamp: clamp.into(),
            };
            let failed = cmd_query(&atlas, &pts, opts, output(out.as_ref())?)?;
            if failed > 0 {
                eprintln!("{failed} of {} points failed", pts.len());
            }
        }
        Command::Replay {
            config,
            mode,
            clamp,
            workers,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.query.mode = m.into();
            }
            if let Some(c) = clamp {
                cfg.query.clamp = c.into();
            }
            if let Some(w) = workers {
                cfg.workers = w.max(1);
            }
            let (log, outputs) = cmd_replay(&cfg)?;
            let m = &log.metrics;
            println!(
                "frames {}  removed {}  unintended {:?}  completion {:.4} s",
                m.frames_emitted, m.removed_total, m.unintended_removed, m.completion_time
            );
            println!("wrote {}", outputs.metrics.display());
        }
        Command::Bench {
            atlas,
            count,
            mode,
            seed,
            runs,
            streams,
            json,
        } => {
            let atlas = load_atlas_file(&atlas)?;
            let modes = match mode {
                Some(m) => vec![m.into()],
                None => vec![SampleMode::Nearest, SampleMode::Trilinear],
            };
            let reports = cmd_bench(&atlas, count, &modes, seed, runs, streams);
            if json {
                let text = serde_json::to_string_pretty(&reports).map_err(|e| CliError::runtime("bench", e))?;
                println!("{text}");
            } else {
                println!("{} labels, {:?} voxels", atlas.len(), atlas.geometry().dims());
                for r in &reports {
                    println!("{}", format_report(r));
                }
            }
        }
        Command::Phantom {
            out,
            labels,
            size,
            spacing,
            seed,
        } => {
            let files = match labels {
                Some(n) => cmd_phantom_multi(&out, size, spacing, n, seed)?,
                None => cmd_phantom(&out)?,
            };
            for p in [Some(&files.labelmap), files.trajectory.as_ref(), files.config.as_ref()].into_iter().flatten() {
                println!("wrote {}", p.display());
            }
        }
        Command::Slice { atlas, k, mode, out } => {
            let atlas = load_atlas_file(&atlas)?;
            let opts = QueryOptions {
                mode: mode.into(),
                clamp: true,
            };
            cmd_slice(&atlas, k, opts, output(out.as_ref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
