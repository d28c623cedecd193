//! Detection-level object tracking with a recursive class estimate.
//!
//! Each frame's overlapping detector proposals are fused into one box and
//! class measurement per object ([`fusion`]). The box is tracked with a
//! linear Kalman filter ([`kf`]) and the class distribution with a running
//! average ([`classfilter`]), so a single misclassified frame does not
//! flip or kill a track. [`tracker`] manages association and track
//! lifecycles, [`sim`] generates synthetic sequences, [`eval`] counts lost
//! tracks, and [`io`] handles the file formats.

pub mod classfilter;
pub mod cov;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod kf;
pub mod sim;
pub mod tracker;
pub mod types;

pub use classfilter::{gain, is_lost, update_class, ClassTrackState, GainPolicy, LostReason};
pub use cov::{psd_project, Covariance4};
pub use eval::{
    difficulty_sweep, emit_plot_data, evaluate_sequence, rmse_px, run_experiment, write_plot_csv, EvalError,
    ExperimentReport, FrameRecord, SequencePair, SequenceResult,
};
pub use fusion::{cluster_proposals, fuse, iou, measure_frame, nms_baseline, FusedMeasurement, FusionConfig, FusionError};
pub use kf::{BoxState, KfError, MotionModel};
pub use sim::{generate, make_clean_suite, make_corruption_suite, Corruption, GroundTruth, Scenario, ScenarioConfig, SimError};
pub use tracker::{
    associate, Confirmation, EndReason, FrameReport, Mode, Track, TrackReport, TrackStatus, Tracker, TrackerConfig,
    TrackerError, TrackerState,
};
pub use types::{validate_pmf, BoundingBox, ClassPmf, CoreError, FrameDetections, Proposal};
