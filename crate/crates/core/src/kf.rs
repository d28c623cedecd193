//! Linear Kalman filter on the box state with a constant-position model.
//!
//! The state is the box itself and each fused measurement observes it
//! directly, so both the transition and observation matrices are identity.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cov::{symmetrize, Covariance4};
use crate::types::{BoundingBox, CoreError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KfError {
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("posterior box is degenerate: {0}")]
    DegenerateBox(#[from] CoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxState {
    pub mean: BoundingBox,
    pub cov: Covariance4,
}

/// Process noise for the constant-position model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub q: Covariance4,
}

pub const DEFAULT_POSITION_SIGMA: f64 = 10.0;
pub const DEFAULT_SIZE_SIGMA: f64 = 5.0;

impl MotionModel {
    pub fn new(q: Covariance4) -> Self {
        Self { q }
    }

    pub fn from_sigmas(position: f64, size: f64) -> Result<Self, CoreError> {
        Ok(Self::new(Covariance4::from_sigmas(position, size)?))
    }

    pub fn still() -> Self {
        Self::new(Covariance4::zeros())
    }
}

impl Default for MotionModel {
    fn default() -> Self {
        Self::from_sigmas(DEFAULT_POSITION_SIGMA, DEFAULT_SIZE_SIGMA).expect("default sigmas are valid")
    }
}

impl BoxState {
    pub fn new(mean: BoundingBox, cov: Covariance4) -> Self {
        Self { mean, cov }
    }

    fn mean_vec(&self) -> Vector4<f64> {
        Vector4::from(self.mean.to_array())
    }

    /// Time update: mean unchanged, covariance grows by Q.
    pub fn predict(&self, model: &MotionModel) -> BoxState {
        let p = self.cov.matrix() + model.q.matrix();
        BoxState {
            mean: self.mean,
            cov: Covariance4::from_trusted(p),
        }
    }

    /// Measurement update with observation `z` and noise covariance `r`,
    /// using the Joseph form for the posterior covariance.
    pub fn update(&self, z: &BoundingBox, r: &Covariance4) -> Result<BoxState, KfError> {
        let p = self.cov.matrix();
        let r = r.matrix();
        let s = symmetrize(&(p + r));
        let s_inv = s
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| s.try_inverse())
            .ok_or(KfError::SingularInnovation)?;
        if !s_inv.iter().all(|v| v.is_finite()) {
            return Err(KfError::SingularInnovation);
        }
        let k = p * s_inv;
        let innovation = Vector4::from(z.to_array()) - self.mean_vec();
        let mean = self.mean_vec() + k * innovation;
        let i_k = Matrix4::identity() - k;
        let post = i_k * p * i_k.transpose() + k * r * k.transpose();
        Ok(BoxState {
            mean: BoundingBox::new(mean[0], mean[1], mean[2], mean[3])?,
            cov: Covariance4::from_trusted(post),
        })
    }
}

/// Free-function form of [`BoxState::predict`].
pub fn predict(s: &BoxState, m: &MotionModel) -> BoxState {
    s.predict(m)
}

/// Free-function form of [`BoxState::update`] taking a fused measurement.
pub fn update(s: &BoxState, z: &crate::fusion::FusedMeasurement) -> Result<BoxState, KfError> {
    s.update(&z.z_box, &z.r_box)
}
