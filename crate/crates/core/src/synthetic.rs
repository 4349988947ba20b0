//! Generated datasets whose label depends on one landmark's region.
//!
//! Every image is partitioned into the Voronoi cells of `k` random landmarks.
//! Half of the cells carry texture A (reddish noise), the other half texture
//! B (bluish noise). The class is the texture of the cell belonging to the
//! designated landmark (the last one). Since every image has the same number
//! of A and B cells, color statistics alone say little about the label; a
//! model has to know where the designated landmark is.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotations::TraitSchema;
use crate::error::{Error, Result};
use crate::imaging::{from_rgb8, ImageTensor};
use crate::landmarks::{augment_fll, LandmarkSet};
use crate::pipeline::{DatasetManifest, ManifestEntry};

pub const TRAIT_NAME: &str = "cell_texture";
pub const CLASSES: [&str; 2] = ["A", "B"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_images: usize,
    pub size: usize,
    pub k: usize,
    /// Landmarks are drawn in `[margin, size - 1 - margin]` on both axes.
    pub margin: f64,
    pub min_separation: f64,
    /// Per-pixel uniform noise amplitude around the texture color.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_images: 400,
            size: 32,
            k: 8,
            margin: 6.0,
            min_separation: 5.0,
            noise: 0.15,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub id: String,
    pub image: image::RgbImage,
    pub landmarks: LandmarkSet,
    /// Index into [`CLASSES`].
    pub label: usize,
}

impl SyntheticImage {
    pub fn tensor(&self) -> Result<ImageTensor> {
        from_rgb8(&self.image)
    }
}

const TEXTURE_A: [f64; 3] = [0.75, 0.35, 0.3];
const TEXTURE_B: [f64; 3] = [0.3, 0.35, 0.75];

fn place_landmarks(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> {
    let hi = cfg.size as f64 - 1.0 - cfg.margin;
    if hi <= cfg.margin {
        return Err(Error::InvalidConfig("image too small for the landmark margin".into()));
    }
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(cfg.k);
    for _ in 0..10_000 {
        if pts.len() == cfg.k {
            break;
        }
        let p = (rng.random_range(cfg.margin..=hi), rng.random_range(cfg.margin..=hi));
        if pts.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= cfg.min_separation) {
            pts.push(p);
        }
    }
    if pts.len() < cfg.k {
        return Err(Error::InvalidConfig(format!(
            "cannot place {} landmarks {} px apart",
            cfg.k, cfg.min_separation
        )));
    }
    Ok(pts)
}

/// Generates the dataset in memory. Labels alternate, so classes are balanced.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<SyntheticImage>> {
    if cfg.k < 2 || !cfg.k.is_multiple_of(2) {
        return Err(Error::InvalidConfig("synthetic data needs an even k >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let designated = cfg.k - 1;
    (0..cfg.n_images)
        .map(|i| {
            let id = format!("syn{i:04}");
            let label = i % 2;
            let landmarks = LandmarkSet::new(place_landmarks(cfg, &mut rng)?, id.clone())?;
            // Cells other than the designated one, half of all cells textured A.
            let mut others: Vec<usize> = (0..designated).collect();
            others.shuffle(&mut rng);
            let mut is_a = vec![false; cfg.k];
            is_a[designated] = label == 0;
            let extra_a = cfg.k / 2 - usize::from(label == 0);
            for &c in &others[..extra_a] {
                is_a[c] = true;
            }
            let cells = augment_fll(&landmarks, cfg.size, cfg.size)?;
            let mut image = image::RgbImage::new(cfg.size as u32, cfg.size as u32);
            for (x, y, px) in image.enumerate_pixels_mut() {
                let cell = cells.index_at(x as usize, y as usize) as usize;
                let base = if is_a[cell] { TEXTURE_A } else { TEXTURE_B };
                for (c, v) in px.0.iter_mut().enumerate() {
                    let n = rng.random_range(-cfg.noise..=cfg.noise);
                    *v = ((base[c] + n).clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
            Ok(SyntheticImage {
                id,
                image,
                landmarks,
                label,
            })
        })
        .collect()
}

pub fn schema() -> TraitSchema {
    TraitSchema::new().with_trait(TRAIT_NAME, CLASSES)
}

/// Writes PNG images, landmark sidecars and `manifest.csv` into `dir`, and
/// returns the manifest.
pub fn write_dataset(dir: &Path, cfg: &SyntheticConfig) -> Result<DatasetManifest> {
    let images = generate(cfg)?;
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("landmarks"))?;
    let mut csv = format!("image_id,image_path,landmark_path,{TRAIT_NAME}\n");
    let mut entries = Vec::with_capacity(images.len());
    for img in &images {
        let img_rel = format!("images/{}.png", img.id);
        let lm_rel = format!("landmarks/{}.txt", img.id);
        img.image
            .save(dir.join(&img_rel))
            .map_err(|e| Error::InvalidData(format!("writing {img_rel}: {e}")))?;
        std::fs::write(dir.join(&lm_rel), img.landmarks.to_sidecar())?;
        let class = CLASSES[img.label];
        let _ = writeln!(csv, "{},{img_rel},{lm_rel},{class}", img.id);
        entries.push(ManifestEntry {
            image_id: img.id.clone(),
            image_path: dir.join(&img_rel),
            landmark_path: Some(dir.join(&lm_rel)),
            labels: [(TRAIT_NAME.to_string(), Some(class.to_string()))]
                .into_iter()
                .collect(),
        });
    }
    crate::util::write_atomic(&dir.join("manifest.csv"), csv.as_bytes())?;
    DatasetManifest::new(entries, schema())
}
