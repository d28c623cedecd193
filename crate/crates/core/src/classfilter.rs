//! Recursive estimation of a track's class distribution.
//!
//! Each per-frame class measurement is blended into the running estimate:
//!
//! ```text
//! pmf_t = (1 - K_t) * pmf_{t-1} + K_t * z_t
//! ```
//!
//! With the reciprocal gain `K_t = 1 / (t + 1)` the estimate is the plain
//! average of the prior and every measurement so far, so a single bad frame
//! late in a track can only move it by a bounded amount. The class is assumed
//! constant over the track, so there is no prediction step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ClassPmf, CoreError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassFilterError {
    #[error("constant gain must lie in (0, 1], got {0}")]
    InvalidGain(f64),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// How much weight each new class measurement receives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainPolicy {
    /// `K_t = 1 / (t + 1)`: running average with the prior.
    #[default]
    Reciprocal,
    /// Fixed gain; `1 - lambda` acts as a forgetting factor.
    Constant { lambda: f64 },
}

impl GainPolicy {
    pub fn constant(lambda: f64) -> Result<Self, ClassFilterError> {
        let p = GainPolicy::Constant { lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ClassFilterError> {
        match *self {
            GainPolicy::Reciprocal => Ok(()),
            GainPolicy::Constant { lambda } if lambda > 0.0 && lambda <= 1.0 => Ok(()),
            GainPolicy::Constant { lambda } => Err(ClassFilterError::InvalidGain(lambda)),
        }
    }
}

/// Gain for the `t`-th update (`t >= 1`; the birth prior is update 0).
pub fn gain(t: u64, policy: GainPolicy) -> f64 {
    debug_assert!(t >= 1, "update index starts at 1");
    match policy {
        GainPolicy::Reciprocal => 1.0 / (t as f64 + 1.0),
        GainPolicy::Constant { lambda } => lambda,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrackState {
    pub pmf: ClassPmf,
    /// Measurement updates applied since birth.
    pub t: u64,
}

impl ClassTrackState {
    pub fn new(prior: ClassPmf) -> Self {
        Self { pmf: prior, t: 0 }
    }

    /// Flat prior over all `M + 1` entries.
    pub fn flat(num_classes: usize) -> Result<Self, CoreError> {
        Ok(Self::new(ClassPmf::flat(num_classes)?))
    }

    pub fn update(&self, z: &ClassPmf, policy: GainPolicy) -> Result<Self, ClassFilterError> {
        let t = self.t + 1;
        let k = gain(t, policy);
        Ok(Self {
            pmf: self.pmf.blend(z, k)?,
            t,
        })
    }
}

/// Free-function form of [`ClassTrackState::update`].
pub fn update_class(s: &ClassTrackState, z: &ClassPmf, policy: GainPolicy) -> Result<ClassTrackState, ClassFilterError> {
    s.update(z, policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LostReason {
    BelowThreshold,
    ClassChanged,
    BelowThresholdAndClassChanged,
}

impl LostReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            LostReason::BelowThreshold => "below_threshold",
            LostReason::ClassChanged => "class_changed",
            LostReason::BelowThresholdAndClassChanged => "below_threshold_and_class_changed",
        }
    }
}

/// Lost-track test: the class estimate's peak fell under `threshold`, or its
/// most likely object class is no longer `prev_top`. Returns `None` when the
/// track survives.
///
/// The peak is taken over object classes only unless `include_background`.
pub fn is_lost(pmf: &ClassPmf, prev_top: usize, threshold: f64, include_background: bool) -> Option<LostReason> {
    let peak = if include_background {
        pmf.max_any()
    } else {
        pmf.max_object()
    };
    let weak = peak < threshold;
    let changed = pmf.top_class() != prev_top;
    match (weak, changed) {
        (false, false) => None,
        (true, false) => Some(LostReason::BelowThreshold),
        (false, true) => Some(LostReason::ClassChanged),
        (true, true) => Some(LostReason::BelowThresholdAndClassChanged),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_pmf;
    use classtrack_oracle as oracle;
    use proptest::prelude::*;

    fn pmf(v: &[f64]) -> ClassPmf {
        validate_pmf(v, v.len() - 1, false).unwrap()
    }

    #[test]
    fn reciprocal_gain_values() {
        assert_eq!(gain(1, GainPolicy::Reciprocal), 0.5);
        assert!((gain(9, GainPolicy::Reciprocal) - 0.1).abs() < 1e-15);
        assert!(gain(1_000_000, GainPolicy::Reciprocal) < 1.1e-6);
        let mut last = 1.0;
        for t in 1..200 {
            let g = gain(t, GainPolicy::Reciprocal);
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn constant_gain_validation() {
        assert!(GainPolicy::constant(0.0).is_err());
        assert!(GainPolicy::constant(1.5).is_err());
        assert_eq!(gain(5, GainPolicy::constant(0.25).unwrap()), 0.25);
    }

    #[test]
    fn unit_gain_replaces() {
        let s = ClassTrackState::new(pmf(&[0.2, 0.3, 0.5]));
        let z = pmf(&[0.7, 0.1, 0.2]);
        let next = s.update(&z, GainPolicy::constant(1.0).unwrap()).unwrap();
        assert_eq!(next.pmf, z);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn first_update_is_midpoint() {
        let s = ClassTrackState::new(pmf(&[0.5, 0.5]));
        let next = s.update(&pmf(&[1.0, 0.0]), GainPolicy::Reciprocal).unwrap();
        assert_eq!(next.pmf.probs(), &[0.75, 0.25]);
    }

    #[test]
    fn corrupted_third_frame_survives() {
        let good = pmf(&[0.9, 0.05, 0.05]);
        let bad = pmf(&[0.05, 0.9, 0.05]);
        let mut s = ClassTrackState::flat(2).unwrap();
        for z in [&good, &good, &bad] {
            s = s.update(z, GainPolicy::Reciprocal).unwrap();
        }
        let expected = oracle::running_average(
            &[1.0 / 3.0; 3],
            &[good.probs().to_vec(), good.probs().to_vec(), bad.probs().to_vec()],
        );
        // (1/3 + 1.85) / 4, (1/3 + 1.0) / 4, (1/3 + 0.15) / 4
        let frozen = [0.545_833_333_333_333_3, 0.333_333_333_333_333_3, 0.120_833_333_333_333_3];
        for ((a, b), c) in s.pmf.probs().iter().zip(&expected).zip(frozen) {
            assert!((a - b).abs() < 1e-12);
            assert!((a - c).abs() < 1e-12);
        }
        assert_eq!(s.pmf.top_class(), 0);
        assert_eq!(is_lost(&s.pmf, 0, 0.4, false), None);
    }

    #[test]
    fn lost_rule_examples() {
        assert_eq!(is_lost(&pmf(&[0.9, 0.05, 0.05]), 0, 0.4, false), None);
        assert_eq!(
            is_lost(&pmf(&[0.3, 0.3, 0.4]), 0, 0.4, false),
            Some(LostReason::BelowThreshold)
        );
        // counting background lifts the peak to exactly the threshold
        assert_eq!(is_lost(&pmf(&[0.3, 0.3, 0.4]), 0, 0.4, true), None);
        assert_eq!(
            is_lost(&pmf(&[0.3, 0.55, 0.15]), 0, 0.4, false),
            Some(LostReason::ClassChanged)
        );
        assert_eq!(
            is_lost(&pmf(&[0.2, 0.3, 0.5]), 0, 0.4, false),
            Some(LostReason::BelowThresholdAndClassChanged)
        );
    }

    fn sequence() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        (1usize..7).prop_flat_map(|m| {
            let v = move || prop::collection::vec(0.001f64..1.0, m + 1);
            (v(), prop::collection::vec(v(), 1..50))
        })
    }

    fn normalized(v: &[f64]) -> ClassPmf {
        validate_pmf(v, v.len() - 1, true).unwrap()
    }

    proptest! {
        #[test]
        fn reciprocal_is_running_average((prior, zs) in sequence()) {
            let prior = normalized(&prior);
            let zs: Vec<ClassPmf> = zs.iter().map(|z| normalized(z)).collect();
            let mut s = ClassTrackState::new(prior.clone());
            for (i, z) in zs.iter().enumerate() {
                let before = s.clone();
                s = s.update(z, GainPolicy::Reciprocal).unwrap();
                let sum: f64 = s.pmf.probs().iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                prop_assert!(s.pmf.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
                // contraction toward the newest measurement
                let k = gain(i as u64 + 1, GainPolicy::Reciprocal);
                let dist = |a: &ClassPmf| a.probs().iter().zip(z.probs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(dist(&s.pmf) <= (1.0 - k) * dist(&before.pmf) + 1e-12);
            }
            let raw: Vec<Vec<f64>> = zs.iter().map(|z| z.probs().to_vec()).collect();
            let expected = oracle::running_average(prior.probs(), &raw);
            for (a, b) in s.pmf.probs().iter().zip(&expected) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert_eq!(s.t, zs.len() as u64);
        }

        #[test]
        fn two_good_one_bad_keeps_class(m in 2usize..6, c1 in 0.8f64..0.99, c2 in 0.8f64..0.99,
                                         bad in 0.0f64..=0.05, truth in 0usize..6, wrong in 0usize..6) {
            let truth = truth % m;
            let wrong = (truth + 1 + wrong % (m - 1)) % m;
            let make = |hi: usize, c: f64| {
                let rest = (1.0 - c) / m as f64;
                let mut v = vec![rest; m + 1];
                v[hi] = c;
                normalized(&v)
            };
            let good1 = make(truth, c1);
            let good2 = make(truth, c2);
            let mut raw = vec![0.0; m + 1];
            raw[truth] = bad;
            raw[wrong] = 1.0 - bad;
            let corrupted = normalized(&raw);
            let mut s = ClassTrackState::flat(m).unwrap();
            for z in [&good1, &good2, &corrupted] {
                s = s.update(z, GainPolicy::Reciprocal).unwrap();
            }
            prop_assert_eq!(s.pmf.top_class(), truth);
            prop_assert!(s.pmf.max_object() >= 0.4);
        }
    }
}
