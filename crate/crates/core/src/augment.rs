// SPDX-License-Identifier: Apache-2.0

//! Seedable weak and strong augmentation, and view construction.
//!
//! Images (samples with a shape) get a horizontal flip as the weak policy and
//! shift → erase → noise as the strong one. Plain feature vectors get Gaussian
//! jitter for weak, and larger jitter plus coordinate dropout for strong.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ImageShape>,
    pub label: usize,
    pub task_id: usize,
    pub sample_id: u64,
}

impl Sample {
    pub fn vector(features: Vec<f64>, label: usize, task_id: usize, sample_id: u64) -> Self {
        Self {
            features,
            shape: None,
            label,
            task_id,
            sample_id,
        }
    }

    pub fn image(
        pixels: Vec<f64>,
        shape: ImageShape,
        label: usize,
        task_id: usize,
        sample_id: u64,
    ) -> Result<Self> {
        if pixels.len() != shape.height * shape.width {
            return Err(Error::Dimension(format!(
                "{} pixels for a {}x{} image",
                pixels.len(),
                shape.height,
                shape.width
            )));
        }
        Ok(Self {
            features: pixels,
            shape: Some(shape),
            label,
            task_id,
            sample_id,
        })
    }
}

impl AsRef<Sample> for Sample {
    fn as_ref(&self) -> &Sample {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugKind {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugPolicy {
    pub kind: AugKind,
    #[serde(default)]
    pub shift_max: usize,
    #[serde(default)]
    pub erase_size: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub flip_prob: f64,
    /// Probability of zeroing each coordinate of a vector sample (strong only).
    #[serde(default)]
    pub dropout_prob: f64,
    /// Scale the kept coordinates by `1 / (1 - dropout_prob)` so the expected sample is unchanged.
    #[serde(default)]
    pub dropout_rescale: bool,
}

impl AugPolicy {
    pub fn identity(kind: AugKind) -> Self {
        Self {
            kind,
            shift_max: 0,
            erase_size: 0,
            noise_sigma: 0.0,
            flip_prob: 0.0,
            dropout_prob: 0.0,
            dropout_rescale: false,
        }
    }

    pub fn default_weak() -> Self {
        Self {
            flip_prob: 0.5,
            noise_sigma: 0.1,
            ..Self::identity(AugKind::Weak)
        }
    }

    pub fn default_strong() -> Self {
        Self {
            shift_max: 2,
            erase_size: 3,
            noise_sigma: 0.3,
            dropout_prob: 0.1,
            ..Self::identity(AugKind::Strong)
        }
    }

    /// Checks magnitudes, and the erase patch against the image size when there is one.
    pub fn validate(&self, shape: Option<ImageShape>) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("dropout_prob", self.dropout_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if let Some(s) = shape {
            if self.erase_size > s.height.min(s.width) {
                return Err(Error::Config(format!(
                    "erase_size {} exceeds the {}x{} image",
                    self.erase_size, s.height, s.width
                )));
            }
        }
        Ok(())
    }

    /// Applies the policy. Label, task and sample ids are carried over unchanged.
    pub fn apply<R: Rng + ?Sized>(&self, s: &Sample, rng: &mut R) -> Sample {
        let mut out = s.clone();
        match (self.kind, s.shape) {
            (AugKind::Weak, Some(shape)) => {
                if self.flip_prob > 0.0 && rng.random_bool(self.flip_prob) {
                    flip_horizontal(&mut out.features, shape);
                }
                add_noise(&mut out.features, self.noise_sigma, rng);
            }
            (AugKind::Weak, None) => add_noise(&mut out.features, self.noise_sigma, rng),
            (AugKind::Strong, Some(shape)) => {
                if self.shift_max > 0 {
                    let m = self.shift_max as i64;
                    let dy = rng.random_range(-m..=m);
                    let dx = rng.random_range(-m..=m);
                    out.features = shift(&out.features, shape, dy, dx);
                }
                if self.erase_size > 0 {
                    let k = self.erase_size;
                    let top = rng.random_range(0..=shape.height - k);
                    let left = rng.random_range(0..=shape.width - k);
                    erase(&mut out.features, shape, top, left, k);
                }
                add_noise(&mut out.features, self.noise_sigma, rng);
            }
            (AugKind::Strong, None) => {
                add_noise(&mut out.features, self.noise_sigma, rng);
                if self.dropout_prob > 0.0 {
                    let keep = if self.dropout_rescale && self.dropout_prob < 1.0 {
                        1.0 / (1.0 - self.dropout_prob)
                    } else {
                        1.0
                    };
                    for v in &mut out.features {
                        if rng.random_bool(self.dropout_prob) {
                            *v = 0.0;
                        } else {
                            *v *= keep;
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn flip_horizontal(pixels: &mut [f64], shape: ImageShape) {
    for row in pixels.chunks_exact_mut(shape.width).take(shape.height) {
        row.reverse();
    }
}

/// Translates by (dy, dx) pixels with zero fill.
pub fn shift(pixels: &[f64], shape: ImageShape, dy: i64, dx: i64) -> Vec<f64> {
    let (h, w) = (shape.height as i64, shape.width as i64);
    let mut out = vec![0.0; pixels.len()];
    for y in 0..h {
        let sy = y - dy;
        if !(0..h).contains(&sy) {
            continue;
        }
        for x in 0..w {
            let sx = x - dx;
            if (0..w).contains(&sx) {
                out[(y * w + x) as usize] = pixels[(sy * w + sx) as usize];
            }
        }
    }
    out
}

pub fn erase(pixels: &mut [f64], shape: ImageShape, top: usize, left: usize, size: usize) {
    for y in top..top + size {
        for x in left..left + size {
            pixels[y * shape.width + x] = 0.0;
        }
    }
}

fn add_noise<R: Rng + ?Sized>(v: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for x in v {
        let z: f64 = rng.sample(StandardNormal);
        *x += sigma * z;
    }
}

/// The weak/strong pair used to expand a sample into its views.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmenter {
    weak: AugPolicy,
    strong: AugPolicy,
    strong_enabled: bool,
}

impl Augmenter {
    pub fn new(
        weak: AugPolicy,
        strong: AugPolicy,
        strong_enabled: bool,
        shape: Option<ImageShape>,
    ) -> Result<Self> {
        if weak.kind != AugKind::Weak || strong.kind != AugKind::Strong {
            return Err(Error::Config(
                "policy kinds must be weak then strong".into(),
            ));
        }
        weak.validate(shape)?;
        strong.validate(shape)?;
        Ok(Self {
            weak,
            strong,
            strong_enabled,
        })
    }

    pub fn weak_policy(&self) -> &AugPolicy {
        &self.weak
    }

    pub fn strong_policy(&self) -> &AugPolicy {
        &self.strong
    }

    pub fn augment_weak<R: Rng + ?Sized>(&self, s: &Sample, rng: &mut R) -> Sample {
        self.weak.apply(s, rng)
    }

    /// Strong view; falls back to the weak policy when strong augmentation is disabled.
    pub fn augment_strong<R: Rng + ?Sized>(&self, s: &Sample, rng: &mut R) -> Sample {
        if self.strong_enabled {
            self.strong.apply(s, rng)
        } else {
            self.weak.apply(s, rng)
        }
    }

    /// One weak view followed by `views - 1` strong views.
    pub fn make_views<R: Rng + ?Sized>(
        &self,
        s: &Sample,
        views: usize,
        rng: &mut R,
    ) -> Result<Vec<Sample>> {
        if views == 0 {
            return Err(Error::Argument(
                "a view-batch entry needs at least one view".into(),
            ));
        }
        let mut out = Vec::with_capacity(views);
        out.push(self.augment_weak(s, rng));
        for _ in 1..views {
            out.push(self.augment_strong(s, rng));
        }
        Ok(out)
    }
}
