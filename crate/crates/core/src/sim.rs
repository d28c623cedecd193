//! Seeded synthetic detection sequences.
//!
//! A single object sits at (or random-walks around) a ground-truth box. Each
//! frame carries a cloud of jittered proposals whose class vectors put most
//! mass on the true class. A corruption frame replays the previous frame's
//! proposals with the true and wrong class entries swapped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BoundingBox, ClassPmf, CoreError, FrameDetections, Proposal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::InvalidConfig(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corruption {
    /// Zero-based frame index; must be at least 1 since it copies its predecessor.
    pub frame: usize,
    /// Zero-based object class that takes the true class's confidence.
    pub wrong_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_frames: usize,
    /// Number of object classes `M`, background excluded.
    pub num_classes: usize,
    /// Optional display names, one per object class.
    pub class_names: Option<Vec<String>>,
    pub true_class: usize,
    /// `[width, height]` in pixels.
    pub image_size: [f64; 2],
    pub true_box: [f64; 4],
    pub walk_sigma: f64,
    pub proposals_per_frame: usize,
    pub box_jitter_sigma: f64,
    pub correct_conf: f64,
    pub conf_jitter: f64,
    pub corruption: Option<Corruption>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_frames: 10,
            num_classes: 4,
            class_names: Some(
                ["bear", "lynx", "wolf", "wolverine"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
            true_class: 1,
            image_size: [640.0, 480.0],
            true_box: [320.0, 240.0, 120.0, 80.0],
            walk_sigma: 0.0,
            proposals_per_frame: 8,
            box_jitter_sigma: 4.0,
            correct_conf: 0.9,
            conf_jitter: 0.03,
            corruption: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_classes == 0 {
            return invalid("num_classes must be at least 1");
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                return invalid(format!(
                    "class_names has {} entries, num_classes is {}",
                    names.len(),
                    self.num_classes
                ));
            }
        }
        if self.num_frames == 0 {
            return invalid("num_frames must be at least 1");
        }
        if self.true_class >= self.num_classes {
            return invalid("true_class must be below num_classes");
        }
        if self.proposals_per_frame == 0 {
            return invalid("proposals_per_frame must be at least 1");
        }
        for (name, v) in [
            ("walk_sigma", self.walk_sigma),
            ("box_jitter_sigma", self.box_jitter_sigma),
            ("conf_jitter", self.conf_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be a finite value >= 0"));
            }
        }
        if !(self.correct_conf > 0.0 && self.correct_conf <= 1.0) {
            return invalid("correct_conf must lie in (0, 1]");
        }
        let [w, h] = self.image_size;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return invalid("image_size must be positive");
        }
        let b = BoundingBox::try_from(self.true_box)?;
        let (x0, y0, x1, y1) = b.corners();
        if x0 < 0.0 || y0 < 0.0 || x1 > w || y1 > h {
            return invalid("true_box must lie inside the image");
        }
        if let Some(c) = self.corruption {
            if c.frame == 0 || c.frame >= self.num_frames {
                return invalid("corruption frame must satisfy 1 <= frame < num_frames");
            }
            if c.wrong_class >= self.num_classes || c.wrong_class == self.true_class {
                return invalid("corruption wrong_class must be a different object class");
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.class_names
            .clone()
            .unwrap_or_else(|| (0..self.num_classes).map(|i| format!("class{i}")).collect())
    }

    /// The unperturbed class vector: `correct_conf` on the true class, the
    /// remainder spread evenly over the other object classes and background.
    pub fn template(&self) -> Vec<f64> {
        let rest = (1.0 - self.correct_conf) / self.num_classes as f64;
        let mut v = vec![rest; self.num_classes + 1];
        v[self.true_class] = self.correct_conf;
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    #[serde(rename = "t")]
    pub frame_index: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "class")]
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub frames: Vec<GroundTruthFrame>,
}

impl GroundTruth {
    pub fn at(&self, frame_index: u64) -> Option<&GroundTruthFrame> {
        self.frames.iter().find(|f| f.frame_index == frame_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frames: Vec<FrameDetections>,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
}

fn walk(truth: BoundingBox, cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<BoundingBox, CoreError> {
    let [w, h] = cfg.image_size;
    let half_l = truth.l() / 2.0;
    let half_h = truth.h() / 2.0;
    let px = (truth.px() + gaussian(rng, cfg.walk_sigma)).clamp(half_l, w - half_l);
    let py = (truth.py() + gaussian(rng, cfg.walk_sigma)).clamp(half_h, h - half_h);
    BoundingBox::new(px, py, truth.l(), truth.h())
}

fn draw_proposal(truth: &BoundingBox, cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Proposal, SimError> {
    let s = cfg.box_jitter_sigma;
    let bbox = BoundingBox::new(
        truth.px() + gaussian(rng, s),
        truth.py() + gaussian(rng, s),
        (truth.l() + gaussian(rng, s)).max(1.0),
        (truth.h() + gaussian(rng, s)).max(1.0),
    )?;
    let template = cfg.template();
    let raw: Vec<f64> = template
        .iter()
        .map(|&p| (p + gaussian(rng, cfg.conf_jitter)).max(0.0))
        .collect();
    // a fully clipped draw falls back to the template
    let raw = if raw.iter().sum::<f64>() > 0.0 { raw } else { template };
    let confidence = crate::types::validate_pmf(&raw, cfg.num_classes, true)?;
    Ok(Proposal::new(bbox, confidence))
}

fn swap_classes(p: &Proposal, a: usize, b: usize) -> Proposal {
    Proposal::new(p.bbox, ClassPmf::swapped(&p.confidence, a, b))
}

/// Generates detections and ground truth; identical configs give identical output.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth_box = BoundingBox::try_from(cfg.true_box)?;
    let mut frames: Vec<FrameDetections> = Vec::with_capacity(cfg.num_frames);
    let mut truth = GroundTruth::default();
    for k in 0..cfg.num_frames {
        let t = k as u64;
        let proposals = match cfg.corruption {
            Some(c) if c.frame == k => frames[k - 1]
                .proposals
                .iter()
                .map(|p| swap_classes(p, cfg.true_class, c.wrong_class))
                .collect(),
            _ => {
                if k > 0 {
                    truth_box = walk(truth_box, cfg, &mut rng)?;
                }
                (0..cfg.proposals_per_frame)
                    .map(|_| draw_proposal(&truth_box, cfg, &mut rng))
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        frames.push(FrameDetections::new(t, proposals));
        truth.frames.push(GroundTruthFrame {
            frame_index: t,
            bbox: truth_box,
            class: cfg.true_class,
        });
    }
    Ok(Scenario { frames, truth })
}

/// `n` three-frame sequences, corrupted on the third frame, with seeds
/// `base.seed + i` and the wrong class cycling over the other object classes.
pub fn make_corruption_suite(base: &ScenarioConfig, n: usize) -> Result<Vec<ScenarioConfig>, SimError> {
    if n == 0 {
        return invalid("suite size must be at least 1");
    }
    if base.num_classes < 2 {
        return invalid("class corruption needs at least two object classes");
    }
    let wrong: Vec<usize> = (0..base.num_classes).filter(|&c| c != base.true_class).collect();
    let suite: Vec<ScenarioConfig> = (0..n)
        .map(|i| ScenarioConfig {
            seed: base.seed.wrapping_add(i as u64),
            num_frames: 3,
            corruption: Some(Corruption {
                frame: 2,
                wrong_class: wrong[i % wrong.len()],
            }),
            ..base.clone()
        })
        .collect();
    for cfg in &suite {
        cfg.validate()?;
    }
    Ok(suite)
}

/// `n` clean sequences sharing `base` apart from the seed.
pub fn make_clean_suite(base: &ScenarioConfig, n: usize) -> Vec<ScenarioConfig> {
    (0..n)
        .map(|i| ScenarioConfig {
            seed: base.seed.wrapping_add(i as u64),
            corruption: None,
            ..base.clone()
        })
        .collect()
}
