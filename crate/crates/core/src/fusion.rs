//! Turning a frame's anchor-box proposals into measurements.
//!
//! Instead of keeping a single survivor per object (NMS), the proposals that
//! overlap an object are pooled: their boxes and class vectors are averaged
//! with weights proportional to each proposal's confidence in the object's
//! most probable class, and the weighted scatter of the boxes becomes the
//! measurement covariance handed to the Kalman filter.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cov::{psd_project, Covariance4};
use crate::types::{BoundingBox, ClassPmf, CoreError, FrameDetections, Proposal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("cannot fuse an empty proposal group")]
    EmptyGroup,
    #[error("proposal {index} has {actual} confidence entries, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("every proposal has zero confidence in class {top_class}")]
    AllZeroWeights { top_class: usize },
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Maximum number of proposals pooled per object.
    pub max_proposals: usize,
    /// IoU with the seed proposal required to join its group.
    pub cluster_gate: f64,
    /// Minimum object score for a proposal to seed a group.
    pub min_object_conf: f64,
    /// Eigenvalue floor applied to the fused covariance, pixels².
    pub cov_floor: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            max_proposals: 10,
            cluster_gate: 0.5,
            min_object_conf: 0.2,
            cov_floor: 1e-6,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.max_proposals == 0 {
            return Err(FusionError::InvalidConfig("max_proposals must be at least 1".into()));
        }
        if !unit(self.cluster_gate) || !unit(self.min_object_conf) {
            return Err(FusionError::InvalidConfig(
                "cluster_gate and min_object_conf must lie in [0, 1]".into(),
            ));
        }
        if !(self.cov_floor >= 0.0 && self.cov_floor.is_finite()) {
            return Err(FusionError::InvalidConfig("cov_floor must be a finite value >= 0".into()));
        }
        Ok(())
    }
}

/// One object's measurement for the current frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedMeasurement {
    pub z_box: BoundingBox,
    pub z_class: ClassPmf,
    pub r_box: Covariance4,
    /// Most probable object class of the best proposal (zero-based).
    pub top_class: usize,
    /// Number of proposals pooled.
    pub support: usize,
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let w = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let h = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    // areas from the same corners as the intersection
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Most probable non-background class (zero-based, lowest index on ties).
pub fn top_class(p: &ClassPmf) -> usize {
    p.top_class()
}

/// Index of the highest-scoring proposal, lowest index on ties.
fn best_index(group: &[Proposal]) -> usize {
    let mut best = 0;
    for (i, p) in group.iter().enumerate() {
        if p.score() > group[best].score() {
            best = i;
        }
    }
    best
}

/// Proposal indices sorted by descending score; stable, so equal scores keep input order.
fn by_score(proposals: &[Proposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| proposals[b].score().total_cmp(&proposals[a].score()));
    order
}

/// Groups a frame's proposals into per-object clusters.
///
/// The highest-scoring ungrouped proposal at or above `min_object_conf` seeds
/// a group that claims every ungrouped proposal with IoU to the seed at or
/// above `cluster_gate`. Only the `max_proposals` best members are kept; the
/// claimed surplus is discarded rather than left to seed a duplicate object.
/// Each group is returned best-first.
pub fn cluster_proposals(frame: &FrameDetections, cfg: &FusionConfig) -> Vec<Vec<Proposal>> {
    let props = &frame.proposals;
    let order = by_score(props);
    let mut taken = vec![false; props.len()];
    let mut groups = Vec::new();
    for &seed in &order {
        if taken[seed] {
            continue;
        }
        if props[seed].score() < cfg.min_object_conf {
            // order is descending, nothing later can seed either
            break;
        }
        let seed_box = props[seed].bbox;
        let mut members = Vec::new();
        // members come out best-first
        for &i in &order {
            if !taken[i] && (i == seed || iou(&seed_box, &props[i].bbox) >= cfg.cluster_gate) {
                taken[i] = true;
                members.push(i);
            }
        }
        members.truncate(cfg.max_proposals);
        groups.push(members.into_iter().map(|i| props[i].clone()).collect());
    }
    groups
}

/// Normalized weights, fused box, fused class vector and unfloored scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMoments {
    pub top_class: usize,
    pub weights: Vec<f64>,
    pub mean: Vector4<f64>,
    pub class_mean: Vec<f64>,
    pub scatter: Matrix4<f64>,
}

/// Weighted first and second central moments of a proposal group.
pub fn group_moments(group: &[Proposal]) -> Result<GroupMoments, FusionError> {
    let first = group.first().ok_or(FusionError::EmptyGroup)?;
    let width = first.confidence.probs().len();
    for (index, p) in group.iter().enumerate() {
        let actual = p.confidence.probs().len();
        if actual != width {
            return Err(FusionError::LengthMismatch {
                index,
                expected: width,
                actual,
            });
        }
    }
    let top = group[best_index(group)].confidence.top_class();
    let raw: Vec<f64> = group.iter().map(|p| p.confidence.probs()[top]).collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(FusionError::AllZeroWeights { top_class: top });
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let boxes: Vec<Vector4<f64>> = group.iter().map(|p| Vector4::from(p.bbox.to_array())).collect();
    // accumulate offsets from the first box
    let origin = boxes[0];
    let mean = origin
        + boxes
            .iter()
            .zip(&weights)
            .fold(Vector4::zeros(), |acc, (b, w)| acc + (b - origin) * *w);
    let mut class_mean = vec![0.0; width];
    for (p, w) in group.iter().zip(&weights) {
        for (acc, v) in class_mean.iter_mut().zip(p.confidence.probs()) {
            *acc += w * v;
        }
    }
    let scatter = boxes.iter().zip(&weights).fold(Matrix4::zeros(), |acc, (b, w)| {
        let d = b - mean;
        acc + d * d.transpose() * *w
    });
    Ok(GroupMoments {
        top_class: top,
        weights,
        mean,
        class_mean,
        scatter,
    })
}

/// Fuses one object's proposals into a measurement with covariance.
pub fn fuse(group: &[Proposal], cfg: &FusionConfig) -> Result<FusedMeasurement, FusionError> {
    let m = group_moments(group)?;
    let z_box = BoundingBox::new(m.mean[0], m.mean[1], m.mean[2], m.mean[3])?;
    let z_class = ClassPmf::from_mixture(m.class_mean);
    let r_box = psd_project(&m.scatter, cfg.cov_floor)?;
    Ok(FusedMeasurement {
        z_box,
        z_class,
        r_box,
        top_class: m.top_class,
        support: group.len(),
    })
}

/// Clusters and fuses a whole frame.
pub fn measure_frame(frame: &FrameDetections, cfg: &FusionConfig) -> Result<Vec<FusedMeasurement>, FusionError> {
    cluster_proposals(frame, cfg)
        .iter()
        .map(|g| fuse(g, cfg))
        .collect()
}

/// Greedy non-maximum suppression, kept as the single-survivor baseline.
pub fn nms_baseline(frame: &FrameDetections, iou_gate: f64, conf_gate: f64) -> Vec<Proposal> {
    let props = &frame.proposals;
    let mut kept: Vec<&Proposal> = Vec::new();
    for i in by_score(props) {
        let p = &props[i];
        if p.score() < conf_gate {
            continue;
        }
        if kept.iter().all(|k| iou(&k.bbox, &p.bbox) < iou_gate) {
            kept.push(p);
        }
    }
    kept.into_iter().cloned().collect()
}
