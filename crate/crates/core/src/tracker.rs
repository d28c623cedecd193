//! Multi-object track management.
//!
//! Per frame: predict every live track, fuse the frame's proposals into
//! measurements, associate greedily by IoU, update matched tracks, age the
//! unmatched ones and give birth to tracks for confident leftovers.
//!
//! The two [`Mode`]s see identical fused measurements. `Robust` folds each
//! class measurement into the track's running class estimate; `Standard`
//! takes the frame's class measurement as the track's class outright. Both
//! apply the same lost-track rule to whatever class vector they hold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classfilter::{is_lost, ClassFilterError, ClassTrackState, GainPolicy, LostReason};
use crate::fusion::{iou, measure_frame, FusedMeasurement, FusionConfig, FusionError};
use crate::kf::{BoxState, KfError, MotionModel};
use crate::types::{BoundingBox, ClassPmf, CoreError, FrameDetections};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("frame index {got} does not follow {previous}")]
    NonMonotonicFrameIndex { previous: u64, got: u64 },
    #[error("measurement has {got} object classes, tracker was started with {expected}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Kalman(#[from] KfError),
    #[error(transparent)]
    ClassFilter(#[from] ClassFilterError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Recursive class estimate.
    Robust,
    /// Per-frame class measurement only.
    Standard,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Robust => "robust",
            Mode::Standard => "standard",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "robust" => Ok(Mode::Robust),
            "standard" => Ok(Mode::Standard),
            other => Err(format!("unknown mode '{other}' (expected robust or standard)")),
        }
    }
}

/// Optional n-of-m confirmation: a track must collect `hits` matched frames
/// within its first `window` frames or it is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confirmation {
    pub hits: u32,
    pub window: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub fusion: FusionConfig,
    pub motion: MotionModel,
    /// Process noise overrides keyed by zero-based class index.
    pub class_motion: BTreeMap<usize, MotionModel>,
    pub gain: GainPolicy,
    pub assoc_gate: f64,
    pub kill_threshold: f64,
    pub birth_threshold: f64,
    pub max_misses: u32,
    pub kill_max_includes_background: bool,
    pub confirmation: Option<Confirmation>,
    pub mode: Mode,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            fusion: FusionConfig::default(),
            motion: MotionModel::default(),
            class_motion: BTreeMap::new(),
            gain: GainPolicy::Reciprocal,
            assoc_gate: 0.3,
            kill_threshold: 0.4,
            birth_threshold: 0.4,
            max_misses: 3,
            kill_max_includes_background: false,
            confirmation: None,
            mode: Mode::Robust,
        }
    }
}

impl TrackerConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        self.fusion.validate()?;
        self.gain.validate()?;
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.kill_threshold) || !open(self.birth_threshold) {
            return Err(TrackerError::InvalidConfig(
                "kill_threshold and birth_threshold must lie in (0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.assoc_gate) {
            return Err(TrackerError::InvalidConfig("assoc_gate must lie in [0, 1]".into()));
        }
        if let Some(c) = self.confirmation {
            if c.hits == 0 || c.window < c.hits {
                return Err(TrackerError::InvalidConfig(
                    "confirmation needs 1 <= hits <= window".into(),
                ));
            }
        }
        Ok(())
    }

    /// Process noise for a track currently labelled `class`.
    pub fn motion_for(&self, class: usize) -> &MotionModel {
        self.class_motion.get(&class).unwrap_or(&self.motion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Active,
    Lost,
    Dead,
}

impl TrackStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackStatus::Active => "active",
            TrackStatus::Lost => "lost",
            TrackStatus::Dead => "dead",
        }
    }
}

/// Why a track stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Lost(LostReason),
    /// More than `max_misses` consecutive frames without a measurement.
    Missed,
    /// Failed n-of-m confirmation.
    Unconfirmed,
}

impl EndReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            EndReason::Lost(r) => r.as_str(),
            EndReason::Missed => "missed",
            EndReason::Unconfirmed => "unconfirmed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub box_state: BoxState,
    pub cls: ClassTrackState,
    /// Most likely object class as of the last update.
    pub top: usize,
    pub misses: u32,
    pub hits: u32,
    /// Frames processed since birth, birth frame included.
    pub age: u32,
    pub confirmed: bool,
    pub status: TrackStatus,
    pub born_at: u64,
    pub last_seen: u64,
    pub end_reason: Option<EndReason>,
}

/// Matched `(track index, measurement index)` pairs plus leftovers on both sides.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Association {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_measurements: Vec<usize>,
}

/// Greedy IoU association: repeatedly pairs the highest-IoU track and
/// measurement at or above `gate`. Ties go to the lower track id, then the
/// earlier measurement.
pub fn associate(tracks: &[Track], measurements: &[FusedMeasurement], gate: f64) -> Association {
    let ious: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| measurements.iter().map(|m| iou(&t.box_state.mean, &m.z_box)).collect())
        .collect();
    let ids: Vec<u64> = tracks.iter().map(|t| t.id).collect();
    greedy_assign(&ious, &ids, measurements.len(), gate)
}

/// Greedy assignment over a precomputed `tracks x measurements` IoU table.
pub fn greedy_assign(ious: &[Vec<f64>], track_ids: &[u64], num_measurements: usize, gate: f64) -> Association {
    let mut candidates = Vec::new();
    for (ti, row) in ious.iter().enumerate() {
        for (mi, &v) in row.iter().enumerate() {
            if v >= gate {
                candidates.push((v, ti, mi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(track_ids[a.1].cmp(&track_ids[b.1]))
            .then(a.2.cmp(&b.2))
    });
    let mut track_used = vec![false; ious.len()];
    let mut meas_used = vec![false; num_measurements];
    let mut out = Association::default();
    for (_, ti, mi) in candidates {
        if !track_used[ti] && !meas_used[mi] {
            track_used[ti] = true;
            meas_used[mi] = true;
            out.matches.push((ti, mi));
        }
    }
    out.unmatched_tracks = (0..ious.len()).filter(|&i| !track_used[i]).collect();
    out.unmatched_measurements = (0..num_measurements).filter(|&i| !meas_used[i]).collect();
    out
}

/// One track's row in a frame report.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub id: u64,
    pub box_state: BoxState,
    pub pmf: ClassPmf,
    /// Class measurement associated this frame, if any.
    pub measurement: Option<ClassPmf>,
    /// Box measurement associated this frame, if any.
    pub measured_box: Option<BoundingBox>,
    pub top: usize,
    pub status: TrackStatus,
    pub reason: Option<EndReason>,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameReport {
    pub frame_index: u64,
    pub measurements: usize,
    pub births: Vec<u64>,
    pub deaths: Vec<u64>,
    pub lost: Vec<(u64, LostReason)>,
    /// Every track that was live during this frame, by id.
    pub tracks: Vec<TrackReport>,
}

/// Tracker state between frames. Cheap to clone; [`TrackerState::step`] is a
/// pure transition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackerState {
    pub tracks: Vec<Track>,
    pub next_id: u64,
    pub last_frame: Option<u64>,
    pub num_classes: Option<usize>,
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self, frame: &FrameDetections, cfg: &TrackerConfig) -> Result<(TrackerState, FrameReport), TrackerError> {
        let mut next = self.clone();
        let report = next.advance(frame, cfg)?;
        Ok((next, report))
    }

    fn advance(&mut self, frame: &FrameDetections, cfg: &TrackerConfig) -> Result<FrameReport, TrackerError> {
        let t = frame.frame_index;
        if let Some(previous) = self.last_frame {
            if t <= previous {
                return Err(TrackerError::NonMonotonicFrameIndex { previous, got: t });
            }
        }

        let measurements = measure_frame(frame, &cfg.fusion)?;
        for m in &measurements {
            let got = m.z_class.num_classes();
            match self.num_classes {
                Some(expected) if expected != got => {
                    return Err(TrackerError::ClassCountMismatch { expected, got });
                }
                _ => self.num_classes = Some(got),
            }
        }

        for track in &mut self.tracks {
            track.box_state = track.box_state.predict(cfg.motion_for(track.top));
            track.age += 1;
        }

        let assoc = associate(&self.tracks, &measurements, cfg.assoc_gate);
        let mut report = FrameReport {
            frame_index: t,
            measurements: measurements.len(),
            ..Default::default()
        };
        let mut matched_meas: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for &(ti, mi) in &assoc.matches {
            matched_meas[ti] = Some(mi);
        }

        for (ti, track) in self.tracks.iter_mut().enumerate() {
            match matched_meas[ti] {
                Some(mi) => {
                    let m = &measurements[mi];
                    track.box_state = track.box_state.update(&m.z_box, &m.r_box)?;
                    apply_class_measurement(track, m, cfg, t)?;
                }
                None => {
                    track.misses += 1;
                    if track.misses > cfg.max_misses {
                        track.status = TrackStatus::Dead;
                        track.end_reason = Some(EndReason::Missed);
                    }
                }
            }
            check_confirmation(track, cfg);
        }

        for &mi in &assoc.unmatched_measurements {
            let m = &measurements[mi];
            if m.z_class.max_object() < cfg.birth_threshold {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let mut track = Track {
                id,
                box_state: BoxState::new(m.z_box, m.r_box),
                cls: ClassTrackState::flat(m.z_class.num_classes())?,
                top: m.top_class,
                misses: 0,
                hits: 0,
                age: 1,
                confirmed: cfg.confirmation.is_none(),
                status: TrackStatus::Active,
                born_at: t,
                last_seen: t,
                end_reason: None,
            };
            apply_class_measurement(&mut track, m, cfg, t)?;
            check_confirmation(&mut track, cfg);
            report.births.push(id);
            matched_meas.push(Some(mi));
            self.tracks.push(track);
        }

        for (ti, track) in self.tracks.iter().enumerate() {
            let m = matched_meas[ti].map(|mi| &measurements[mi]);
            report.tracks.push(TrackReport {
                id: track.id,
                box_state: track.box_state.clone(),
                pmf: track.cls.pmf.clone(),
                measurement: m.map(|m| m.z_class.clone()),
                measured_box: m.map(|m| m.z_box),
                top: track.top,
                status: track.status,
                reason: track.end_reason,
                confirmed: track.confirmed,
            });
            if track.status != TrackStatus::Active {
                report.deaths.push(track.id);
            }
            if let Some(EndReason::Lost(r)) = track.end_reason {
                report.lost.push((track.id, r));
            }
        }
        report.tracks.sort_by_key(|r| r.id);
        report.deaths.sort_unstable();
        report.lost.sort_by_key(|(id, _)| *id);

        self.tracks.retain(|tr| tr.status == TrackStatus::Active);
        self.last_frame = Some(t);
        Ok(report)
    }
}

fn apply_class_measurement(track: &mut Track, m: &FusedMeasurement, cfg: &TrackerConfig, t: u64) -> Result<(), TrackerError> {
    track.cls = match cfg.mode {
        Mode::Robust => track.cls.update(&m.z_class, cfg.gain)?,
        Mode::Standard => ClassTrackState {
            pmf: m.z_class.clone(),
            t: track.cls.t + 1,
        },
    };
    track.misses = 0;
    track.hits += 1;
    track.last_seen = t;
    match is_lost(
        &track.cls.pmf,
        track.top,
        cfg.kill_threshold,
        cfg.kill_max_includes_background,
    ) {
        Some(reason) => {
            track.status = TrackStatus::Lost;
            track.end_reason = Some(EndReason::Lost(reason));
        }
        None => track.top = track.cls.pmf.top_class(),
    }
    Ok(())
}

fn check_confirmation(track: &mut Track, cfg: &TrackerConfig) {
    let Some(c) = cfg.confirmation else { return };
    if track.confirmed || track.status != TrackStatus::Active {
        return;
    }
    if track.hits >= c.hits {
        track.confirmed = true;
    } else if track.age >= c.window {
        track.status = TrackStatus::Dead;
        track.end_reason = Some(EndReason::Unconfirmed);
    }
}

/// Owns a config and state and steps through a sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    state: TrackerState,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: TrackerState::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn step(&mut self, frame: &FrameDetections) -> Result<FrameReport, TrackerError> {
        self.state.advance(frame, &self.cfg)
    }

    pub fn run(&mut self, frames: &[FrameDetections]) -> Result<Vec<FrameReport>, TrackerError> {
        frames.iter().map(|f| self.step(f)).collect()
    }
}
