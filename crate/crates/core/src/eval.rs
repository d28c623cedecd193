//! Lost-track experiments comparing the robust and standard modes.
//!
//! Each sequence is followed through its first-born track. The headline
//! number is whether that track is still alive at the last frame; a sequence
//! in which no track is ever born counts as lost.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::sim::{generate, make_corruption_suite, GroundTruth, ScenarioConfig, SimError};
use crate::tracker::{FrameReport, Mode, TrackStatus, Tracker, TrackerConfig, TrackerError};
use crate::types::{BoundingBox, ClassPmf, FrameDetections};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sequence {0} has no ground truth")]
    NoTruth(String),
    #[error("sequence {0}: the followed track is never active on a frame with ground truth")]
    NoActiveFrames(String),
    #[error("experiment needs at least one sequence")]
    EmptySuite,
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const NEVER_BORN: &str = "never_born";

/// What the followed track looked like on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub estimate: Option<ClassPmf>,
    pub measurement: Option<ClassPmf>,
    pub box_estimate: Option<BoundingBox>,
    pub box_measurement: Option<BoundingBox>,
    pub truth: Option<BoundingBox>,
    /// The followed track has ended on or before this frame.
    pub lost: bool,
}

impl FrameRecord {
    pub fn max_object(&self) -> Option<f64> {
        self.estimate.as_ref().map(ClassPmf::max_object)
    }

    pub fn argmax(&self) -> Option<usize> {
        self.estimate.as_ref().map(ClassPmf::top_class)
    }

    /// Center distance to the truth, pixels.
    pub fn position_error(&self) -> Option<f64> {
        let (e, t) = (self.box_estimate?, self.truth?);
        Some((e.px() - t.px()).hypot(e.py() - t.py()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub id: String,
    pub mode: Mode,
    /// Column labels for the `M + 1` class entries, background last.
    pub class_labels: Vec<String>,
    pub lost_at_final: bool,
    pub lost_reason: Option<String>,
    pub frames: Vec<FrameRecord>,
}

/// Runs one mode over a sequence, following its first-born track.
pub fn track_sequence(
    id: &str,
    frames: &[FrameDetections],
    truth: Option<&GroundTruth>,
    class_names: &[String],
    cfg: &TrackerConfig,
) -> Result<(SequenceResult, Vec<FrameReport>), TrackerError> {
    let mut tracker = Tracker::new(cfg.clone())?;
    let reports = tracker.run(frames)?;
    let mut followed: Option<u64> = None;
    let mut ended: Option<String> = None;
    let mut records = Vec::with_capacity(frames.len());
    for rep in &reports {
        if followed.is_none() {
            followed = rep.births.first().copied();
        }
        let row = followed.and_then(|id| rep.tracks.iter().find(|t| t.id == id));
        if let Some(r) = row {
            if r.status != TrackStatus::Active {
                ended = Some(r.reason.map(|e| e.as_str().to_string()).unwrap_or_else(|| r.status.as_str().into()));
            }
        }
        records.push(FrameRecord {
            frame_index: rep.frame_index,
            estimate: row.map(|r| r.pmf.clone()),
            measurement: row.and_then(|r| r.measurement.clone()),
            box_estimate: row.map(|r| r.box_state.mean),
            box_measurement: row.and_then(|r| r.measured_box),
            truth: truth.and_then(|g| g.at(rep.frame_index)).map(|g| g.bbox),
            lost: ended.is_some(),
        });
    }
    let (lost_at_final, lost_reason) = match (followed, &ended) {
        (None, _) => (true, Some(NEVER_BORN.to_string())),
        (Some(_), Some(r)) => (true, Some(r.clone())),
        (Some(_), None) => (false, None),
    };
    let mut class_labels: Vec<String> = class_names.to_vec();
    class_labels.push("background".into());
    Ok((
        SequenceResult {
            id: id.to_string(),
            mode: cfg.mode,
            class_labels,
            lost_at_final,
            lost_reason,
            frames: records,
        },
        reports,
    ))
}

/// Root-mean-square center error over frames where the followed track has
/// an estimate and ground truth exists.
pub fn rmse_px(result: &SequenceResult) -> Result<f64, EvalError> {
    if result.frames.iter().all(|f| f.truth.is_none()) {
        return Err(EvalError::NoTruth(result.id.clone()));
    }
    let errs: Vec<f64> = result.frames.iter().filter_map(FrameRecord::position_error).collect();
    if errs.is_empty() {
        return Err(EvalError::NoActiveFrames(result.id.clone()));
    }
    Ok((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    pub robust: SequenceResult,
    pub standard: SequenceResult,
}

/// Both modes over the same detections.
pub fn evaluate_sequence(
    id: &str,
    frames: &[FrameDetections],
    truth: Option<&GroundTruth>,
    class_names: &[String],
    cfg: &TrackerConfig,
) -> Result<SequencePair, TrackerError> {
    let run = |mode| track_sequence(id, frames, truth, class_names, &cfg.clone().with_mode(mode)).map(|r| r.0);
    Ok(SequencePair {
        robust: run(Mode::Robust)?,
        standard: run(Mode::Standard)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub n: usize,
    pub lost_robust: usize,
    pub lost_standard: usize,
    pub sequences: Vec<SequencePair>,
}

impl ExperimentReport {
    pub fn from_pairs(sequences: Vec<SequencePair>) -> Self {
        Self {
            n: sequences.len(),
            lost_robust: sequences.iter().filter(|p| p.robust.lost_at_final).count(),
            lost_standard: sequences.iter().filter(|p| p.standard.lost_at_final).count(),
            sequences,
        }
    }

    /// Machine-readable summary.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct ModeSummary<'a> {
            lost_at_final: bool,
            lost_reason: Option<&'a str>,
            final_max_object: Option<f64>,
            final_top: Option<usize>,
            rmse_px: Option<f64>,
        }
        #[derive(Serialize)]
        struct Row<'a> {
            id: &'a str,
            robust: ModeSummary<'a>,
            standard: ModeSummary<'a>,
        }
        #[derive(Serialize)]
        struct Report<'a> {
            n: usize,
            lost_robust: usize,
            lost_standard: usize,
            per_sequence: Vec<Row<'a>>,
        }
        fn summary(r: &SequenceResult) -> ModeSummary<'_> {
            let last = r.frames.last();
            ModeSummary {
                lost_at_final: r.lost_at_final,
                lost_reason: r.lost_reason.as_deref(),
                final_max_object: last.and_then(FrameRecord::max_object),
                final_top: last.and_then(FrameRecord::argmax),
                rmse_px: rmse_px(r).ok(),
            }
        }
        let report = Report {
            n: self.n,
            lost_robust: self.lost_robust,
            lost_standard: self.lost_standard,
            per_sequence: self
                .sequences
                .iter()
                .map(|p| Row {
                    id: &p.robust.id,
                    robust: summary(&p.robust),
                    standard: summary(&p.standard),
                })
                .collect(),
        };
        serde_json::to_value(report).expect("report serializes")
    }

    /// Two-column lost-track table.
    pub fn table(&self) -> String {
        let robust = format!("{}/{}", self.lost_robust, self.n);
        let standard = format!("{}/{}", self.lost_standard, self.n);
        format!(
            "{:<24}| {:<22}| {:<22}\n{:-<24}+{:-<23}+{:-<23}\n{:<24}| {:<22}| {:<22}\n",
            "Detection using",
            "Robust (recursive)",
            "Standard (per-frame)",
            "",
            "",
            "",
            "Number of lost tracks",
            robust,
            standard
        )
    }
}

/// Generates and evaluates every scenario of a suite in both modes.
pub fn run_experiment(suite: &[ScenarioConfig], cfg: &TrackerConfig) -> Result<ExperimentReport, EvalError> {
    if suite.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let mut pairs = Vec::with_capacity(suite.len());
    for (i, sc) in suite.iter().enumerate() {
        let scenario = generate(sc)?;
        let id = format!("seq{i:03}");
        pairs.push(evaluate_sequence(&id, &scenario.frames, Some(&scenario.truth), &sc.names(), cfg)?);
    }
    Ok(ExperimentReport::from_pairs(pairs))
}

/// Lost counts `(correct_conf, lost_robust, lost_standard)` on a corruption
/// suite rebuilt at each confidence level.
pub fn difficulty_sweep(
    base: &ScenarioConfig,
    n: usize,
    levels: &[f64],
    cfg: &TrackerConfig,
) -> Result<Vec<(f64, usize, usize)>, EvalError> {
    levels
        .iter()
        .map(|&c| {
            let suite = make_corruption_suite(&ScenarioConfig { correct_conf: c, ..base.clone() }, n)?;
            let r = run_experiment(&suite, cfg)?;
            Ok((c, r.lost_robust, r.lost_standard))
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one sequence's plot data as CSV:
/// `frame, est_*, meas_*, px_estimate, px_measurement, px_truth, lost`.
pub fn write_plot_csv<W: Write>(result: &SequenceResult, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let width = result.class_labels.len();
    let mut header = vec!["frame".to_string()];
    header.extend(result.class_labels.iter().map(|c| format!("est_{c}")));
    header.extend(result.class_labels.iter().map(|c| format!("meas_{c}")));
    header.extend(["px_estimate", "px_measurement", "px_truth", "lost"].map(String::from));
    w.write_record(&header)?;
    for f in &result.frames {
        let mut row = vec![f.frame_index.to_string()];
        for pmf in [&f.estimate, &f.measurement] {
            match pmf {
                Some(p) => row.extend(p.probs().iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), width)),
            }
        }
        row.push(cell(f.box_estimate.map(|b| b.px())));
        row.push(cell(f.box_measurement.map(|b| b.px())));
        row.push(cell(f.truth.map(|b| b.px())));
        row.push(u8::from(f.lost).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: PathBuf::new(),
        source,
    })?;
    Ok(())
}

/// Writes `<dir>/<id>_<mode>.csv` for each result; returns the paths written.
pub fn emit_plot_data(results: &[SequenceResult], dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::with_capacity(results.len());
    for r in results {
        let path = dir.join(format!("{}_{}.csv", r.id, r.mode.as_str()));
        let file = fs::File::create(&path).map_err(|source| EvalError::Io {
            path: path.clone(),
            source,
        })?;
        write_plot_csv(r, std::io::BufWriter::new(file))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::make_clean_suite;

    fn record(est: Option<BoundingBox>, truth: Option<BoundingBox>) -> FrameRecord {
        FrameRecord {
            frame_index: 0,
            estimate: None,
            measurement: None,
            box_estimate: est,
            box_measurement: None,
            truth,
            lost: false,
        }
    }

    fn result(frames: Vec<FrameRecord>) -> SequenceResult {
        SequenceResult {
            id: "s".into(),
            mode: Mode::Robust,
            class_labels: vec!["a".into(), "background".into()],
            lost_at_final: false,
            lost_reason: None,
            frames,
        }
    }

    fn bx(px: f64, py: f64) -> BoundingBox {
        BoundingBox::new(px, py, 10.0, 10.0).unwrap()
    }

    #[test]
    fn rmse_cases() {
        let exact = result(vec![record(Some(bx(1.0, 2.0)), Some(bx(1.0, 2.0))); 3]);
        assert_eq!(rmse_px(&exact).unwrap(), 0.0);
        let shifted = result(vec![record(Some(bx(13.0, 2.0)), Some(bx(10.0, 2.0))); 4]);
        assert!((rmse_px(&shifted).unwrap() - 3.0).abs() < 1e-12);
        let diag = result(vec![record(Some(bx(13.0, 6.0)), Some(bx(10.0, 2.0))); 2]);
        assert!((rmse_px(&diag).unwrap() - 5.0).abs() < 1e-12);
        let none = result(vec![record(Some(bx(0.0, 0.0)), None)]);
        assert!(matches!(rmse_px(&none), Err(EvalError::NoTruth(_))));
        let inactive = result(vec![record(None, Some(bx(0.0, 0.0)))]);
        assert!(matches!(rmse_px(&inactive), Err(EvalError::NoActiveFrames(_))));
    }

    #[test]
    fn default_suite_counts() {
        let suite = make_corruption_suite(&ScenarioConfig::default(), 20).unwrap();
        let r = run_experiment(&suite, &TrackerConfig::default()).unwrap();
        assert_eq!(r.n, 20);
        assert_eq!(r.lost_standard, 20);
        assert_eq!(r.lost_robust, 0);
    }

    #[test]
    fn clean_suite_loses_nothing() {
        let base = ScenarioConfig {
            num_frames: 3,
            ..Default::default()
        };
        let r = run_experiment(&make_clean_suite(&base, 20), &TrackerConfig::default()).unwrap();
        assert_eq!((r.lost_robust, r.lost_standard), (0, 0));
    }

    #[test]
    fn empty_suite_rejected() {
        assert!(matches!(
            run_experiment(&[], &TrackerConfig::default()),
            Err(EvalError::EmptySuite)
        ));
    }

    #[test]
    fn never_born_counts_as_lost() {
        let cfg = ScenarioConfig {
            correct_conf: 0.3,
            conf_jitter: 0.0,
            num_frames: 3,
            ..Default::default()
        };
        let r = run_experiment(&[cfg], &TrackerConfig::default()).unwrap();
        assert_eq!(r.sequences[0].standard.lost_reason.as_deref(), Some(NEVER_BORN));
        assert_eq!((r.lost_robust, r.lost_standard), (1, 1));
    }

    #[test]
    fn csv_shape() {
        let cfg = ScenarioConfig {
            num_frames: 3,
            ..Default::default()
        };
        let r = run_experiment(std::slice::from_ref(&cfg), &TrackerConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_plot_csv(&r.sequences[0].robust, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        let m = cfg.num_classes;
        for l in &lines {
            assert_eq!(l.split(',').count(), 1 + 2 * (m + 1) + 3 + 1);
        }
        assert!(lines[0].starts_with("frame,est_bear,est_lynx"));
    }

    #[test]
    fn table_mentions_counts() {
        let suite = make_corruption_suite(&ScenarioConfig::default(), 4).unwrap();
        let r = run_experiment(&suite, &TrackerConfig::default()).unwrap();
        let t = r.table();
        assert!(t.contains("0/4") && t.contains("4/4"));
        let j = r.to_json();
        assert_eq!(j["n"], 4);
        assert_eq!(j["per_sequence"].as_array().unwrap().len(), 4);
    }
}
