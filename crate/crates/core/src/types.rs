//! Domain values shared by every stage of the pipeline.
//!
//! Boxes are always center/size `[px, py, l, h]`; corner formats are converted
//! at the I/O boundary. Class vectors carry `M + 1` entries with the background
//! class in the last slot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sum tolerance accepted from external inputs (detector exports are float32).
pub const INGEST_SIMPLEX_TOL: f64 = 1e-6;
/// Sum tolerance for vectors produced inside the library.
pub const INTERNAL_SIMPLEX_TOL: f64 = 1e-9;

/// Sums within this distance of 1.0 are treated as exact and left untouched.
const EXACT_SUM_TOL: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("expected {expected} class entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("entries sum to {sum}, not 1")]
    NotASimplex { sum: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("invalid box [{px}, {py}, {l}, {h}]: sizes must be positive and all fields finite")]
    InvalidBox { px: f64, py: f64, l: f64, h: f64 },
    #[error("a class vector needs at least one object class plus background")]
    NoClasses,
}

/// Axis-aligned box in center/size form, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    px: f64,
    py: f64,
    l: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(px: f64, py: f64, l: f64, h: f64) -> Result<Self, CoreError> {
        let ok = px.is_finite() && py.is_finite() && l.is_finite() && h.is_finite();
        if !ok || l <= 0.0 || h <= 0.0 {
            return Err(CoreError::InvalidBox { px, py, l, h });
        }
        Ok(Self { px, py, l, h })
    }

    /// Builds from corner coordinates `(x0, y0, x1, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, CoreError> {
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn px(&self) -> f64 {
        self.px
    }
    pub fn py(&self) -> f64 {
        self.py
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.px, self.py, self.l, self.h]
    }

    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.px - self.l / 2.0,
            self.py - self.h / 2.0,
            self.px + self.l / 2.0,
            self.py + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.l * self.h
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = CoreError;
    fn try_from(v: [f64; 4]) -> Result<Self, CoreError> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Categorical distribution over `M` object classes plus background (last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassPmf {
    probs: Vec<f64>,
}

/// Checks `raw` against the `(M+1)`-simplex and returns it as a [`ClassPmf`].
///
/// Vectors whose sum is within [`INGEST_SIMPLEX_TOL`] of 1 are rescaled onto
/// the exact simplex. With `normalize`, any nonnegative vector with a
/// positive sum is scaled instead of rejected.
pub fn validate_pmf(raw: &[f64], num_classes: usize, normalize: bool) -> Result<ClassPmf, CoreError> {
    if num_classes == 0 {
        return Err(CoreError::NoClasses);
    }
    if raw.len() != num_classes + 1 {
        return Err(CoreError::LengthMismatch {
            expected: num_classes + 1,
            actual: raw.len(),
        });
    }
    ClassPmf::checked(raw, INGEST_SIMPLEX_TOL, normalize)
}

impl ClassPmf {
    fn checked(raw: &[f64], tol: f64, normalize: bool) -> Result<Self, CoreError> {
        if raw.len() < 2 {
            return Err(CoreError::NoClasses);
        }
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(CoreError::NonFinite { index });
            }
            if value < 0.0 {
                return Err(CoreError::NegativeEntry { index, value });
            }
        }
        let sum: f64 = raw.iter().sum();
        let accept = if normalize {
            sum > 0.0
        } else {
            (sum - 1.0).abs() <= tol && raw.iter().all(|&v| v <= 1.0 + tol)
        };
        if !accept {
            return Err(CoreError::NotASimplex { sum });
        }
        Ok(Self {
            probs: onto_simplex(raw.to_vec()),
        })
    }

    /// Internal constructor for convex combinations computed by the library.
    pub(crate) fn from_mixture(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= INTERNAL_SIMPLEX_TOL);
        Self {
            probs: onto_simplex(probs),
        }
    }

    /// Uniform over all `M + 1` entries.
    pub fn flat(num_classes: usize) -> Result<Self, CoreError> {
        if num_classes == 0 {
            return Err(CoreError::NoClasses);
        }
        let n = num_classes + 1;
        Ok(Self::from_mixture(vec![1.0 / n as f64; n]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of object classes `M` (background excluded).
    pub fn num_classes(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn background(&self) -> f64 {
        self.probs[self.probs.len() - 1]
    }

    pub fn object_probs(&self) -> &[f64] {
        &self.probs[..self.probs.len() - 1]
    }

    /// Largest non-background entry.
    pub fn max_object(&self) -> f64 {
        self.object_probs().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest entry including background.
    pub fn max_any(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Zero-based index of the most probable object class; ties go to the lowest index.
    pub fn top_class(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.object_probs().iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// `(1 - k) * self + k * other`.
    pub fn blend(&self, other: &ClassPmf, k: f64) -> Result<Self, CoreError> {
        if other.probs.len() != self.probs.len() {
            return Err(CoreError::LengthMismatch {
                expected: self.probs.len(),
                actual: other.probs.len(),
            });
        }
        let mixed = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - k) * a + k * b)
            .collect();
        Ok(Self::from_mixture(mixed))
    }

    /// Returns a copy with entries `a` and `b` exchanged.
    pub fn swapped(&self, a: usize, b: usize) -> Self {
        let mut probs = self.probs.clone();
        probs.swap(a, b);
        Self { probs }
    }
}

impl TryFrom<Vec<f64>> for ClassPmf {
    type Error = CoreError;
    fn try_from(v: Vec<f64>) -> Result<Self, CoreError> {
        Self::checked(&v, INGEST_SIMPLEX_TOL, false)
    }
}

impl From<ClassPmf> for Vec<f64> {
    fn from(p: ClassPmf) -> Self {
        p.probs
    }
}

/// Rescales a nonnegative vector with positive sum so its sequential sum is
/// 1 to within a few ulps. Vectors already that close are returned as-is,
/// which makes the operation idempotent.
fn onto_simplex(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() <= EXACT_SUM_TOL {
        return v;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    // push the rounding residue onto the largest entry
    for _ in 0..4 {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() <= EXACT_SUM_TOL {
            break;
        }
        let imax = (0..v.len())
            .max_by(|&a, &b| v[a].total_cmp(&v[b]))
            .unwrap_or(0);
        v[imax] = (v[imax] + (1.0 - sum)).clamp(0.0, 1.0);
    }
    v
}

/// One anchor-box output: a box and its class confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "conf")]
    pub confidence: ClassPmf,
}

impl Proposal {
    pub fn new(bbox: BoundingBox, confidence: ClassPmf) -> Self {
        Self { bbox, confidence }
    }

    /// Object confidence used for ranking: the largest non-background entry.
    pub fn score(&self) -> f64 {
        self.confidence.max_object()
    }
}

/// Everything the detector emitted for one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    #[serde(rename = "t")]
    pub frame_index: u64,
    pub proposals: Vec<Proposal>,
}

impl FrameDetections {
    pub fn new(frame_index: u64, proposals: Vec<Proposal>) -> Self {
        Self {
            frame_index,
            proposals,
        }
    }
}
