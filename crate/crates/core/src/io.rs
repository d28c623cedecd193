//! File formats and configuration loading.
//!
//! Detections, tracks and ground truth are JSON Lines with one record per
//! line. Configuration files are TOML.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classfilter::GainPolicy;
use crate::cov::Covariance4;
use crate::fusion::FusionConfig;
use crate::kf::{MotionModel, DEFAULT_POSITION_SIGMA, DEFAULT_SIZE_SIGMA};
use crate::sim::{GroundTruth, GroundTruthFrame, ScenarioConfig};
use crate::tracker::{Confirmation, FrameReport, Mode, TrackStatus, TrackerConfig};
use crate::types::{validate_pmf, BoundingBox, ClassPmf, FrameDetections, Proposal};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("{path}: line {line}: frame index {got} does not follow {previous}")]
    NonMonotonic {
        path: PathBuf,
        line: usize,
        previous: u64,
        got: u64,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
}

/// A schema violation before a path is attached.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct SchemaError {
    pub line: usize,
    pub message: String,
}

impl SchemaError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }

    pub fn at(self, path: &Path) -> IoError {
        IoError::Schema {
            path: path.to_path_buf(),
            line: self.line,
            message: self.message,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionsHeader {
    /// Object class names; the background class is implicit and last.
    pub classes: Vec<String>,
    pub image_size: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionsFile {
    pub header: DetectionsHeader,
    pub frames: Vec<FrameDetections>,
    /// 1-based source line of each frame; empty for files built in memory.
    pub frame_lines: Vec<usize>,
}

impl DetectionsFile {
    pub fn new(header: DetectionsHeader, frames: Vec<FrameDetections>) -> Self {
        Self {
            header,
            frames,
            frame_lines: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.header.classes.len()
    }

    fn line_of(&self, i: usize) -> usize {
        self.frame_lines.get(i).copied().unwrap_or(i + 2)
    }

    /// First frame whose index does not strictly increase, as
    /// `(line, previous, got)`.
    pub fn first_non_monotonic(&self) -> Option<(usize, u64, u64)> {
        self.frames
            .windows(2)
            .enumerate()
            .find(|(_, w)| w[1].frame_index <= w[0].frame_index)
            .map(|(i, w)| (self.line_of(i + 1), w[0].frame_index, w[1].frame_index))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Header {
        classes: Vec<String>,
        background_last: bool,
        image_size: [f64; 2],
    },
    Frame {
        t: u64,
        proposals: Vec<RawProposal>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProposal {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    conf: Vec<f64>,
}

fn parse_header(line: &str) -> Result<DetectionsHeader, SchemaError> {
    let fail = |m: String| SchemaError::new(1, m);
    match serde_json::from_str::<Record>(line) {
        Ok(Record::Header {
            classes,
            background_last,
            image_size,
        }) => {
            if classes.is_empty() {
                return Err(fail("header lists no classes".into()));
            }
            if !background_last {
                return Err(fail("background_last must be true".into()));
            }
            if !image_size.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(fail("image_size must be two positive numbers".into()));
            }
            Ok(DetectionsHeader { classes, image_size })
        }
        Ok(Record::Frame { .. }) => Err(fail("expected a header record first, found a frame".into())),
        Err(e) => Err(fail(format!("expected a header record: {e}"))),
    }
}

fn parse_frame(line: &str, lineno: usize, num_classes: usize, normalize: bool) -> Result<FrameDetections, SchemaError> {
    let (t, raw) = match serde_json::from_str::<Record>(line) {
        Ok(Record::Frame { t, proposals }) => (t, proposals),
        Ok(Record::Header { .. }) => return Err(SchemaError::new(lineno, "duplicate header record")),
        Err(e) => return Err(SchemaError::new(lineno, e.to_string())),
    };
    let mut proposals = Vec::with_capacity(raw.len());
    for (k, p) in raw.into_iter().enumerate() {
        let [px, py, l, h] = p.bbox;
        let bbox = BoundingBox::new(px, py, l, h)
            .map_err(|e| SchemaError::new(lineno, format!("proposal {k}: {e}")))?;
        let conf = validate_pmf(&p.conf, num_classes, normalize)
            .map_err(|e| SchemaError::new(lineno, format!("proposal {k} conf: {e}")))?;
        proposals.push(Proposal::new(bbox, conf));
    }
    Ok(FrameDetections::new(t, proposals))
}

/// Parses a detections file. Frame-index monotonicity is not checked here;
/// see [`DetectionsFile::first_non_monotonic`].
pub fn parse_detections(text: &str, normalize: bool) -> Result<DetectionsFile, SchemaError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = match lines.next() {
        Some((_, l)) if !l.trim().is_empty() => parse_header(l)?,
        _ => return Err(SchemaError::new(1, "missing header record")),
    };
    let mut frames = Vec::new();
    let mut frame_lines = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        frames.push(parse_frame(line, lineno, header.classes.len(), normalize)?);
        frame_lines.push(lineno);
    }
    Ok(DetectionsFile {
        header,
        frames,
        frame_lines,
    })
}

pub fn read_detections(path: &Path, normalize: bool) -> Result<DetectionsFile, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_detections(&text, normalize).map_err(|e| e.at(path))
}

/// Full schema check, monotonic frame indices included.
pub fn check_detections(path: &Path) -> Result<DetectionsFile, IoError> {
    let file = read_detections(path, false)?;
    if let Some((line, previous, got)) = file.first_non_monotonic() {
        return Err(IoError::NonMonotonic {
            path: path.to_path_buf(),
            line,
            previous,
            got,
        });
    }
    Ok(file)
}

pub fn write_detections<W: Write>(file: &DetectionsFile, mut out: W) -> std::io::Result<()> {
    let header = Record::Header {
        classes: file.header.classes.clone(),
        background_last: true,
        image_size: file.header.image_size,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for f in &file.frames {
        let rec = Record::Frame {
            t: f.frame_index,
            proposals: f
                .proposals
                .iter()
                .map(|p| RawProposal {
                    bbox: p.bbox.to_array(),
                    conf: p.confidence.probs().to_vec(),
                })
                .collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    out.flush()
}

/// One track on one frame in a tracks file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub t: u64,
    pub id: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub box_cov: Covariance4,
    pub pmf: ClassPmf,
    pub top: usize,
    pub status: TrackStatus,
    pub reason: Option<String>,
}

pub fn track_records(reports: &[FrameReport]) -> Vec<TrackRecord> {
    reports
        .iter()
        .flat_map(|rep| {
            rep.tracks.iter().map(move |tr| TrackRecord {
                t: rep.frame_index,
                id: tr.id,
                bbox: tr.box_state.mean,
                box_cov: tr.box_state.cov,
                pmf: tr.pmf.clone(),
                top: tr.top,
                status: tr.status,
                reason: tr.reason.map(|r| r.as_str().to_string()),
            })
        })
        .collect()
}

pub fn write_tracks<W: Write>(reports: &[FrameReport], mut out: W) -> std::io::Result<()> {
    for rec in track_records(reports) {
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    out.flush()
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, SchemaError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| SchemaError::new(i + 1, e.to_string())))
        .collect()
}

pub fn parse_tracks(text: &str) -> Result<Vec<TrackRecord>, SchemaError> {
    parse_jsonl(text)
}

pub fn write_truth<W: Write>(truth: &GroundTruth, mut out: W) -> std::io::Result<()> {
    for f in &truth.frames {
        writeln!(out, "{}", serde_json::to_string(f)?)?;
    }
    out.flush()
}

pub fn parse_truth(text: &str) -> Result<GroundTruth, SchemaError> {
    Ok(GroundTruth {
        frames: parse_jsonl::<GroundTruthFrame>(text)?,
    })
}

pub fn read_truth(path: &Path) -> Result<GroundTruth, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_truth(&text).map_err(|e| e.at(path))
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(io_err(path))
}

fn config_err(path: &Path, message: impl std::fmt::Display) -> IoError {
    IoError::Config {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig, String> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn read_scenario_config(path: &Path) -> Result<ScenarioConfig, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_scenario_config(&text).map_err(|m| config_err(path, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MotionSection {
    position_sigma: f64,
    size_sigma: f64,
    class_overrides: Vec<ClassOverride>,
}

impl Default for MotionSection {
    fn default() -> Self {
        Self {
            position_sigma: DEFAULT_POSITION_SIGMA,
            size_sigma: DEFAULT_SIZE_SIGMA,
            class_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassOverride {
    class: usize,
    position_sigma: f64,
    size_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrackerFile {
    mode: Mode,
    assoc_gate: f64,
    kill_threshold: f64,
    birth_threshold: f64,
    max_misses: u32,
    kill_max_includes_background: bool,
    gain: GainPolicy,
    fusion: FusionConfig,
    motion: MotionSection,
    confirmation: Option<Confirmation>,
}

impl Default for TrackerFile {
    fn default() -> Self {
        let d = TrackerConfig::default();
        Self {
            mode: d.mode,
            assoc_gate: d.assoc_gate,
            kill_threshold: d.kill_threshold,
            birth_threshold: d.birth_threshold,
            max_misses: d.max_misses,
            kill_max_includes_background: d.kill_max_includes_background,
            gain: d.gain,
            fusion: d.fusion,
            motion: MotionSection::default(),
            confirmation: d.confirmation,
        }
    }
}

impl TrackerFile {
    fn into_config(self) -> Result<TrackerConfig, String> {
        let motion = |p: f64, s: f64| {
            if !(p >= 0.0 && s >= 0.0 && p.is_finite() && s.is_finite()) {
                return Err(format!("motion: sigmas must be finite and >= 0, got {p} and {s}"));
            }
            MotionModel::from_sigmas(p, s).map_err(|e| format!("motion: {e}"))
        };
        let mut class_motion = BTreeMap::new();
        for o in &self.motion.class_overrides {
            if class_motion.insert(o.class, motion(o.position_sigma, o.size_sigma)?).is_some() {
                return Err(format!("motion: class {} overridden twice", o.class));
            }
        }
        let cfg = TrackerConfig {
            fusion: self.fusion,
            motion: motion(self.motion.position_sigma, self.motion.size_sigma)?,
            class_motion,
            gain: self.gain,
            assoc_gate: self.assoc_gate,
            kill_threshold: self.kill_threshold,
            birth_threshold: self.birth_threshold,
            max_misses: self.max_misses,
            kill_max_includes_background: self.kill_max_includes_background,
            confirmation: self.confirmation,
            mode: self.mode,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

pub fn parse_tracker_config(text: &str) -> Result<TrackerConfig, String> {
    let file: TrackerFile = toml::from_str(text).map_err(|e| e.to_string())?;
    file.into_config()
}

pub fn read_tracker_config(path: &Path) -> Result<TrackerConfig, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_tracker_config(&text).map_err(|m| config_err(path, m))
}
