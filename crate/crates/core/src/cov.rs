//! Symmetric 4x4 covariances over `[px, py, l, h]`.

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::types::CoreError;

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

/// Symmetric positive semidefinite 4x4 matrix, pixels².
///
/// Serialized as its 10 upper-triangular entries in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 10]", into = "[f64; 10]")]
pub struct Covariance4(Matrix4<f64>);

/// Absolute tolerance scaled by the matrix magnitude, so pixel² values in the
/// thousands are compared on the same footing as unit-scale ones.
fn scaled(tol: f64, m: &Matrix4<f64>) -> f64 {
    tol * m.amax().max(1.0)
}

fn asymmetry(m: &Matrix4<f64>) -> f64 {
    (m - m.transpose()).amax()
}

impl Covariance4 {
    /// Validates symmetry and positive semidefiniteness; the stored matrix is
    /// the symmetric part of `m`.
    pub fn new(m: Matrix4<f64>) -> Result<Self, CoreError> {
        let asym = asymmetry(&m);
        if asym > scaled(SYMMETRY_TOL, &m) {
            return Err(CoreError::NotSymmetric { asymmetry: asym });
        }
        let sym = symmetrize(&m);
        let min = min_eigenvalue(&sym);
        if min < -scaled(PSD_TOL, &sym) {
            return Err(CoreError::NotPsd { min_eigenvalue: min });
        }
        Ok(Self(sym))
    }

    pub fn zeros() -> Self {
        Self(Matrix4::zeros())
    }

    pub fn scaled_identity(s: f64) -> Result<Self, CoreError> {
        Self::new(Matrix4::identity() * s)
    }

    pub fn diagonal(d: [f64; 4]) -> Result<Self, CoreError> {
        Self::new(Matrix4::from_diagonal(&d.into()))
    }

    /// `diag(sp², sp², ss², ss²)` for position and size standard deviations.
    pub fn from_sigmas(position: f64, size: f64) -> Result<Self, CoreError> {
        let (p, s) = (position * position, size * size);
        Self::diagonal([p, p, s, s])
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: [f64; 4] = SymmetricEigen::new(self.0).eigenvalues.into();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn upper_triangle(&self) -> [f64; 10] {
        let mut out = [0.0; 10];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                out[k] = self.0[(i, j)];
                k += 1;
            }
        }
        out
    }

    pub fn from_upper_triangle(v: [f64; 10]) -> Result<Self, CoreError> {
        let mut m = Matrix4::zeros();
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                m[(i, j)] = v[k];
                m[(j, i)] = v[k];
                k += 1;
            }
        }
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite { index });
        }
        Self::new(m)
    }

    /// Wraps a matrix the caller has already made symmetric PSD.
    pub(crate) fn from_trusted(m: Matrix4<f64>) -> Self {
        Self(symmetrize(&m))
    }
}

impl TryFrom<[f64; 10]> for Covariance4 {
    type Error = CoreError;
    fn try_from(v: [f64; 10]) -> Result<Self, CoreError> {
        Self::from_upper_triangle(v)
    }
}

impl From<Covariance4> for [f64; 10] {
    fn from(c: Covariance4) -> Self {
        c.upper_triangle()
    }
}

pub(crate) fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &Matrix4<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

/// Clamps every eigenvalue of a symmetric matrix to at least `floor`.
///
/// Matrices whose spectrum already clears the floor are returned unchanged
/// (apart from exact symmetrization), so projecting twice is a no-op.
pub fn psd_project(m: &Matrix4<f64>, floor: f64) -> Result<Covariance4, CoreError> {
    let asym = asymmetry(m);
    if asym > scaled(SYMMETRY_TOL, m) {
        return Err(CoreError::NotSymmetric { asymmetry: asym });
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.min() >= floor {
        return Ok(Covariance4(sym));
    }
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let rebuilt = eig.eigenvectors * Matrix4::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok(Covariance4(symmetrize(&rebuilt)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use classtrack_oracle::jacobi_eigenvalues;
    use proptest::prelude::*;

    fn to_rows(m: &Matrix4<f64>) -> Vec<Vec<f64>> {
        (0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect()
    }

    #[test]
    fn identity_is_fixed() {
        let c = psd_project(&Matrix4::identity(), 0.0).unwrap();
        assert_eq!(*c.matrix(), Matrix4::identity());
    }

    #[test]
    fn zero_clamps_to_floor() {
        let c = psd_project(&Matrix4::zeros(), 1e-6).unwrap();
        assert_relative_eq!(*c.matrix(), Matrix4::identity() * 1e-6, epsilon = 1e-18);
    }

    #[test]
    fn negative_diagonal_entry_is_lifted() {
        let m = Matrix4::from_diagonal(&[4.0, -1.0, 2.0, 3.0].into());
        let c = psd_project(&m, 0.0).unwrap();
        let expected = Matrix4::from_diagonal(&[4.0, 0.0, 2.0, 3.0].into());
        assert_relative_eq!(*c.matrix(), expected, epsilon = 1e-12);
        // cross-check the diagonal spectrum with the Jacobi solver
        assert_eq!(jacobi_eigenvalues(&to_rows(&m)), vec![-1.0, 2.0, 3.0, 4.0]);
        let ev = jacobi_eigenvalues(&to_rows(c.matrix()));
        for (a, b) in ev.iter().zip([0.0, 2.0, 3.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let mut m = Matrix4::identity();
        m[(0, 1)] = 0.5;
        assert!(matches!(psd_project(&m, 0.0), Err(CoreError::NotSymmetric { .. })));
        assert!(matches!(Covariance4::new(m), Err(CoreError::NotSymmetric { .. })));
    }

    #[test]
    fn indefinite_rejected_by_constructor() {
        let m = Matrix4::from_diagonal(&[1.0, -0.5, 1.0, 1.0].into());
        assert!(matches!(Covariance4::new(m), Err(CoreError::NotPsd { .. })));
    }

    #[test]
    fn upper_triangle_layout() {
        let mut m = Matrix4::identity();
        m[(0, 3)] = 0.25;
        m[(3, 0)] = 0.25;
        let c = Covariance4::new(m).unwrap();
        assert_eq!(
            c.upper_triangle(),
            [1.0, 0.0, 0.0, 0.25, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]
        );
        assert_eq!(Covariance4::from_upper_triangle(c.upper_triangle()).unwrap(), c);
    }

    fn symmetric() -> impl Strategy<Value = Matrix4<f64>> {
        prop::array::uniform16(-5.0f64..5.0).prop_map(|a| {
            let m = Matrix4::from_row_slice(&a);
            symmetrize(&m)
        })
    }

    proptest! {
        #[test]
        fn projection_respects_floor_and_is_idempotent(m in symmetric(), floor in 0.0f64..2.0) {
            let once = psd_project(&m, floor).unwrap();
            for ev in jacobi_eigenvalues(&to_rows(once.matrix())) {
                prop_assert!(ev >= floor - 1e-9);
            }
            let twice = psd_project(once.matrix(), floor).unwrap();
            prop_assert!((once.matrix() - twice.matrix()).amax() <= 1e-9);
        }

        #[test]
        fn projection_never_lowers_eigenvalues(m in symmetric()) {
            let before = jacobi_eigenvalues(&to_rows(&m));
            let after = jacobi_eigenvalues(&to_rows(psd_project(&m, 0.0).unwrap().matrix()));
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(*a >= b.max(0.0) - 1e-9);
            }
        }

        #[test]
        fn serde_roundtrip(m in symmetric()) {
            let c = psd_project(&m, 0.1).unwrap();
            let text = serde_json::to_string(&c).unwrap();
            let back: Covariance4 = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
