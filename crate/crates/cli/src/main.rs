use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use classtrack_core::eval::{self, track_sequence, ExperimentReport};
use classtrack_core::io::{self, DetectionsFile, DetectionsHeader, IoError};
use classtrack_core::{
    generate, make_clean_suite, make_corruption_suite, Mode, ScenarioConfig, SimError, TrackStatus, TrackerConfig,
    TrackerError,
};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "classtrack", version, about = "Robust class tracking over detector proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic detections (and ground truth) from a scenario config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output file, or output directory with --suite.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Write N numbered corrupted sequences into the --out directory.
        #[arg(long)]
        suite: Option<usize>,
        /// With --suite, write uncorrupted sequences instead.
        #[arg(long, requires = "suite")]
        clean: bool,
    },
    /// Run the tracker over a detections file.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-sequence CSV plot data.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        /// Ground truth used for the px_truth column of the plot data.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Rescale confidence vectors that do not sum to 1.
        #[arg(long)]
        normalize_conf: bool,
    },
    /// Run both modes over a simulated suite and count lost tracks.
    Evaluate {
        #[arg(long)]
        suite_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Validate a detections file.
    Check {
        #[arg(long)]
        detections: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    File(#[from] IoError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Malformed(String),
    #[error("{path}: {message}")]
    NonMonotonic { path: PathBuf, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::File(IoError::Io { .. }) => 3,
            CliError::File(IoError::NonMonotonic { .. }) | CliError::NonMonotonic { .. } => 4,
            CliError::File(_) | CliError::Config(_) | CliError::Malformed(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn tracker_error(path: &Path, e: TrackerError) -> CliError {
    match e {
        TrackerError::NonMonotonicFrameIndex { .. } => CliError::NonMonotonic {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        TrackerError::InvalidConfig(_) => CliError::Config(e.to_string()),
        other => CliError::Runtime(format!("{}: {other}", path.display())),
    }
}

fn tracker_config(path: Option<&Path>) -> Result<TrackerConfig, CliError> {
    match path {
        Some(p) => Ok(io::read_tracker_config(p)?),
        None => Ok(TrackerConfig::default()),
    }
}

/// Sequence id: the file name up to its first dot.
fn sequence_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn header_for(cfg: &ScenarioConfig) -> DetectionsHeader {
    DetectionsHeader {
        classes: cfg.names(),
        image_size: cfg.image_size,
    }
}

fn write_scenario(cfg: &ScenarioConfig, out: &Path, truth: Option<&Path>) -> Result<(), CliError> {
    let scenario = generate(cfg)?;
    let file = DetectionsFile::new(header_for(cfg), scenario.frames);
    io::write_file(out, |w| io::write_detections(&file, w))?;
    if let Some(t) = truth {
        io::write_file(t, |w| io::write_truth(&scenario.truth, w))?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| {
        IoError::Io {
            path: dir.to_path_buf(),
            source,
        }
        .into()
    })
}

fn simulate(config: &Path, out: &Path, truth: Option<&Path>, suite: Option<usize>, clean: bool) -> Result<(), CliError> {
    let cfg = io::read_scenario_config(config)?;
    let Some(n) = suite else {
        write_scenario(&cfg, out, truth)?;
        println!("wrote {} frames to {}", cfg.num_frames, out.display());
        return Ok(());
    };
    let suite = if clean {
        if n == 0 {
            return Err(CliError::Config("suite size must be at least 1".into()));
        }
        make_clean_suite(&cfg, n)
    } else {
        make_corruption_suite(&cfg, n)?
    };
    create_dir(out)?;
    for (i, sc) in suite.iter().enumerate() {
        let id = format!("seq{i:03}");
        write_scenario(
            sc,
            &out.join(format!("{id}.detections.jsonl")),
            Some(&out.join(format!("{id}.truth.jsonl"))),
        )?;
    }
    println!("wrote {n} sequences to {}", out.display());
    Ok(())
}

struct TrackArgs<'a> {
    detections: &'a Path,
    mode: Mode,
    config: Option<&'a Path>,
    out: &'a Path,
    plot_data: Option<&'a Path>,
    truth: Option<&'a Path>,
    normalize_conf: bool,
}

fn track(a: TrackArgs) -> Result<(), CliError> {
    let cfg = tracker_config(a.config)?.with_mode(a.mode);
    let file = io::read_detections(a.detections, a.normalize_conf)?;
    if let Some((line, previous, got)) = file.first_non_monotonic() {
        return Err(IoError::NonMonotonic {
            path: a.detections.to_path_buf(),
            line,
            previous,
            got,
        }
        .into());
    }
    let truth = a.truth.map(io::read_truth).transpose()?;
    let id = sequence_id(a.detections);
    let (result, reports) = track_sequence(&id, &file.frames, truth.as_ref(), &file.header.classes, &cfg)
        .map_err(|e| tracker_error(a.detections, e))?;
    io::write_file(a.out, |w| io::write_tracks(&reports, w))?;
    if let Some(dir) = a.plot_data {
        eval::emit_plot_data(std::slice::from_ref(&result), dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let born: usize = reports.iter().map(|r| r.births.len()).sum();
    let ended = reports.iter().flat_map(|r| &r.tracks).filter(|t| t.status != TrackStatus::Active);
    let (mut dead, mut lost) = (0, 0);
    for t in ended {
        match t.status {
            TrackStatus::Lost => lost += 1,
            _ => dead += 1,
        }
    }
    println!("tracks born: {born}, dead: {dead}, lost: {lost}");
    Ok(())
}

fn evaluate(suite_dir: &Path, config: Option<&Path>, report: &Path, plot_data: Option<&Path>) -> Result<(), CliError> {
    let cfg = tracker_config(config)?;
    let entries = fs::read_dir(suite_dir).map_err(|source| IoError::Io {
        path: suite_dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.to_string_lossy().ends_with(".detections.jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Malformed(format!(
            "{}: no *.detections.jsonl files",
            suite_dir.display()
        )));
    }
    let mut pairs = Vec::with_capacity(files.len());
    for path in &files {
        let id = sequence_id(path);
        let file = io::check_detections(path).map_err(|e| match e {
            IoError::Io { .. } => CliError::File(e),
            other => CliError::Malformed(other.to_string()),
        })?;
        let truth_path = suite_dir.join(format!("{id}.truth.jsonl"));
        let truth = if truth_path.exists() {
            Some(io::read_truth(&truth_path)?)
        } else {
            None
        };
        let pair = eval::evaluate_sequence(&id, &file.frames, truth.as_ref(), &file.header.classes, &cfg)
            .map_err(|e| tracker_error(path, e))?;
        pairs.push(pair);
    }
    let result = ExperimentReport::from_pairs(pairs);
    if let Some(dir) = plot_data {
        let all: Vec<_> = result
            .sequences
            .iter()
            .flat_map(|p| [p.robust.clone(), p.standard.clone()])
            .collect();
        eval::emit_plot_data(&all, dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let json = serde_json::to_string_pretty(&result.to_json()).expect("report serializes");
    io::write_file(report, |w| {
        use std::io::Write;
        writeln!(w, "{json}")
    })?;
    print!("{}", result.table());
    Ok(())
}

fn check(detections: &Path) -> Result<(), CliError> {
    let file = io::check_detections(detections)?;
    println!(
        "ok: {} frames, {} classes plus background",
        file.frames.len(),
        file.num_classes()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate {
            config,
            out,
            truth,
            suite,
            clean,
        } => simulate(config, out, truth.as_deref(), *suite, *clean),
        Command::Track {
            detections,
            mode,
            config,
            out,
            plot_data,
            truth,
            normalize_conf,
        } => track(TrackArgs {
            detections,
            mode: *mode,
            config: config.as_deref(),
            out,
            plot_data: plot_data.as_deref(),
            truth: truth.as_deref(),
            normalize_conf: *normalize_conf,
        }),
        Command::Evaluate {
            suite_dir,
            config,
            report,
            plot_data,
        } => evaluate(suite_dir, config.as_deref(), report, plot_data.as_deref()),
        Command::Check { detections } => check(detections),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
