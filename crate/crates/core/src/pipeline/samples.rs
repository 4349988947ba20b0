use std::fmt;
use std::str::FromStr;

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::imaging::{image_center, load_image_scaled, rotate_image, ImageTensor, RotationSpec};
use crate::landmarks::{attach_channel, augment_fll, augmented_landmarks_for_rotation, LandmarkChannel, LandmarkSet};
use crate::nn::Example;

/// Plain RGB input or RGB plus the nearest-landmark channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputMode {
    Baseline,
    Lacnn,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::Baseline => 3,
            InputMode::Lacnn => 4,
        }
    }

    pub fn from_channels(c: usize) -> Option<Self> {
        match c {
            3 => Some(InputMode::Baseline),
            4 => Some(InputMode::Lacnn),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputMode::Baseline => "baseline",
            InputMode::Lacnn => "lacnn",
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(InputMode::Baseline),
            "lacnn" => Ok(InputMode::Lacnn),
            other => Err(Error::InvalidData(format!(
                "unknown mode '{other}' (expected baseline or lacnn)"
            ))),
        }
    }
}

/// One training or test input: a (possibly rotated) image, its landmark
/// channel in lacnn mode, and the class index for the trait.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub image_id: String,
    /// Rotation applied to the source image, 0 for the original.
    pub angle: f64,
    pub tensor: ImageTensor,
    pub channel: Option<LandmarkChannel>,
    pub label: Option<usize>,
}

/// The landmarks of a manifest entry, rescaled from original-image space.
fn entry_landmarks(entry: &ManifestEntry, original: (usize, usize), size: usize) -> Result<LandmarkSet> {
    let missing = || Error::MissingLandmarks {
        image_id: entry.image_id.clone(),
    };
    let path = entry.landmark_path.as_ref().ok_or_else(missing)?;
    if !path.exists() {
        return Err(missing());
    }
    let lm = LandmarkSet::from_sidecar(path, entry.image_id.clone())?;
    Ok(lm.rescale(original, (size, size)))
}

/// Loads one entry and expands it into the original plus one sample per
/// rotation angle. The landmark channel of a rotated sample is recomputed
/// from analytically rotated landmarks.
pub fn prepare_entry(
    entry: &ManifestEntry,
    mode: InputMode,
    rotation: &RotationSpec,
    size: usize,
    label: Option<usize>,
) -> Result<Vec<AugmentedSample>> {
    let (img, original) = load_image_scaled(&entry.image_path, size)?;
    let landmarks = match mode {
        InputMode::Lacnn => Some(entry_landmarks(entry, original, size)?),
        InputMode::Baseline => None,
    };
    expand(&entry.image_id, &img, landmarks.as_ref(), rotation, label)
}

/// [`prepare_entry`] for an image already in memory. `landmarks` must be in
/// the image's pixel space; `None` produces baseline samples.
pub fn expand(
    image_id: &str,
    img: &ImageTensor,
    landmarks: Option<&LandmarkSet>,
    rotation: &RotationSpec,
    label: Option<usize>,
) -> Result<Vec<AugmentedSample>> {
    let (w, h) = (img.width(), img.height());
    let center = image_center(w, h);
    let angles = std::iter::once(0.0).chain(rotation.angles.iter().copied());
    angles
        .map(|angle| {
            let rotated = rotate_image(img, angle, rotation)?;
            let (tensor, channel) = match landmarks {
                Some(lm) => {
                    let lm = augmented_landmarks_for_rotation(lm, angle, center, w, h);
                    let ch = augment_fll(&lm, h, w)?;
                    (attach_channel(&rotated, &ch)?, Some(ch))
                }
                None => (rotated, None),
            };
            Ok(AugmentedSample {
                image_id: image_id.to_string(),
                angle,
                tensor,
                channel,
                label,
            })
        })
        .collect()
}

/// Samples for every entry labeled for `trait_name`: `1 + rotation.angles.len()`
/// per image.
pub fn build_samples(
    manifest: &DatasetManifest,
    trait_name: &str,
    mode: InputMode,
    rotation: &RotationSpec,
    size: usize,
) -> Result<Vec<AugmentedSample>> {
    build_samples_where(manifest, trait_name, mode, rotation, size, |_| true)
}

/// [`build_samples`] restricted to entries accepted by `keep`.
pub fn build_samples_where(
    manifest: &DatasetManifest,
    trait_name: &str,
    mode: InputMode,
    rotation: &RotationSpec,
    size: usize,
    keep: impl Fn(&ManifestEntry) -> bool,
) -> Result<Vec<AugmentedSample>> {
    let mut out = Vec::new();
    for (entry, label) in manifest.labeled(trait_name)? {
        if keep(entry) {
            out.extend(prepare_entry(entry, mode, rotation, size, Some(label))?);
        }
    }
    Ok(out)
}

/// Mean of every channel over all pixels of all samples.
pub fn channel_means(samples: &[AugmentedSample]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let c = first.tensor.channels();
    let mut sums = vec![0.0f64; c];
    let mut n = 0usize;
    for s in samples {
        for px in s.tensor.data().chunks_exact(c) {
            for (acc, &v) in sums.iter_mut().zip(px) {
                *acc += v as f64;
            }
            n += 1;
        }
    }
    sums.into_iter().map(|s| s / n as f64).collect()
}

/// Channel-major network input with `means` subtracted per channel.
pub fn to_network_input(tensor: &ImageTensor, means: &[f64]) -> Vec<f32> {
    let mut chw = tensor.to_chw();
    let plane = tensor.height() * tensor.width();
    for (c, m) in means.iter().enumerate().take(tensor.channels()) {
        for v in &mut chw[c * plane..(c + 1) * plane] {
            *v -= *m as f32;
        }
    }
    chw
}

/// Converts labeled samples to network examples; unlabeled samples are skipped.
pub fn to_examples(samples: &[AugmentedSample], means: &[f64]) -> Vec<Example> {
    samples
        .iter()
        .filter_map(|s| {
            s.label.map(|label| Example {
                input: to_network_input(&s.tensor, means),
                label,
            })
        })
        .collect()
}
