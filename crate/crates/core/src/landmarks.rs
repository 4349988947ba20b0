//! The nearest-landmark channel.
//!
//! Every pixel is labeled with the index of the facial landmark closest to
//! it (a discrete Voronoi map over the landmark points), and that label is
//! appended to the RGB image as a fourth input channel.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{resize_dest_coord, rotate_point, ChannelSemantics, ImageTensor};

/// Ordered landmark coordinates for one image. The position in the list is
/// the landmark's identity and must mean the same thing across images.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<(f64, f64)>,
    source_image_id: String,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f64, f64)>, source_image_id: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyLandmarks);
        }
        if let Some(p) = points.iter().find(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite landmark {p:?}")));
        }
        Ok(Self {
            points,
            source_image_id: source_image_id.into(),
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_image_id(&self) -> &str {
        &self.source_image_id
    }

    /// Parses a sidecar file with one `index x y` line per landmark.
    ///
    /// Indices may start at 0 or 1 but must be contiguous; lines may appear in
    /// any order. Blank lines and lines starting with `#` are ignored.
    pub fn from_sidecar(path: &Path, source_image_id: impl Into<String>) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse_sidecar(&text, source_image_id).map_err(|e| match e {
            Error::InvalidData(reason) => Error::LandmarkFormat {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn parse_sidecar(text: &str, source_image_id: impl Into<String>) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::InvalidData(format!("line {}: expected 'index x y'", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let idx: usize = fields[0].parse().map_err(|_| bad())?;
            let x: f64 = fields[1].parse().map_err(|_| bad())?;
            let y: f64 = fields[2].parse().map_err(|_| bad())?;
            rows.push((idx, (x, y)));
        }
        if rows.is_empty() {
            return Err(Error::EmptyLandmarks);
        }
        rows.sort_by_key(|r| r.0);
        let first = rows[0].0;
        if first > 1 {
            return Err(Error::InvalidData(format!("indices must start at 0 or 1, got {first}")));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.0 != first + i {
                return Err(Error::InvalidData(format!(
                    "landmark indices are not contiguous near index {}",
                    r.0
                )));
            }
        }
        Self::new(rows.into_iter().map(|r| r.1).collect(), source_image_id)
    }

    /// Sidecar text with 0-based indices.
    pub fn to_sidecar(&self) -> String {
        let mut s = String::new();
        for (i, (x, y)) in self.points.iter().enumerate() {
            let _ = writeln!(s, "{i} {x} {y}");
        }
        s
    }

    /// Maps coordinates from a `from` = (width, height) image onto a resized
    /// `to` image, using the same pixel-center convention as the resampler.
    pub fn rescale(&self, from: (usize, usize), to: (usize, usize)) -> Self {
        let points = self
            .points
            .iter()
            .map(|&(x, y)| (resize_dest_coord(x, from.0, to.0), resize_dest_coord(y, from.1, to.1)))
            .collect();
        Self {
            points,
            source_image_id: self.source_image_id.clone(),
        }
    }

    /// Clamps every point into the pixel-center range of a `width` x `height` image.
    pub fn clamped(&self, width: usize, height: usize) -> Self {
        let mx = width.saturating_sub(1) as f64;
        let my = height.saturating_sub(1) as f64;
        Self {
            points: self
                .points
                .iter()
                .map(|&(x, y)| (x.clamp(0.0, mx), y.clamp(0.0, my)))
                .collect(),
            source_image_id: self.source_image_id.clone(),
        }
    }
}

/// Per-pixel index of the nearest landmark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkChannel {
    height: usize,
    width: usize,
    k: usize,
    indices: Vec<u32>,
}

impl LandmarkChannel {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Raw 0-based indices, row-major.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn index_at(&self, x: usize, y: usize) -> u32 {
        self.indices[y * self.width + x]
    }

    /// Channel value for an index: `index / (k - 1)`, or 0 when `k == 1`.
    pub fn normalized(&self, index: u32) -> f32 {
        if self.k <= 1 {
            0.0
        } else {
            (index as f64 / (self.k - 1) as f64) as f32
        }
    }
}

/// Euclidean distance between a pixel and a landmark.
#[inline]
pub fn pixel_landmark_distance(pixel: (f64, f64), landmark: (f64, f64)) -> f64 {
    let dx = landmark.0 - pixel.0;
    let dy = landmark.1 - pixel.1;
    (dx * dx + dy * dy).sqrt()
}

/// Assigns every pixel of a `height` x `width` grid the index of its nearest
/// landmark; equidistant landmarks resolve to the lowest index. Landmarks are
/// clamped into the image first.
pub fn augment_fll(landmarks: &LandmarkSet, height: usize, width: usize) -> Result<LandmarkChannel> {
    if landmarks.is_empty() {
        return Err(Error::EmptyLandmarks);
    }
    if height == 0 || width == 0 {
        return Err(Error::ZeroDimension { width, height });
    }
    let pts = landmarks.clamped(width, height);
    let pts = pts.points();
    let mut indices = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let p = (x as f64, y as f64);
            let mut best = 0usize;
            let mut best_d = pixel_landmark_distance(p, pts[0]);
            for (j, &l) in pts.iter().enumerate().skip(1) {
                let d = pixel_landmark_distance(p, l);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            indices.push(best as u32);
        }
    }
    Ok(LandmarkChannel {
        height,
        width,
        k: landmarks.len(),
        indices,
    })
}

/// Appends the normalized landmark channel to an RGB image.
pub fn attach_channel(img: &ImageTensor, ch: &LandmarkChannel) -> Result<ImageTensor> {
    if img.semantics() != ChannelSemantics::Rgb {
        return Err(Error::NotRgb(img.channels()));
    }
    if img.height() != ch.height || img.width() != ch.width {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{}, landmark channel is {}x{}",
            img.width(),
            img.height(),
            ch.width,
            ch.height
        )));
    }
    let mut data = Vec::with_capacity(ch.indices.len() * 4);
    for (px, &idx) in img.data().chunks_exact(3).zip(&ch.indices) {
        data.extend_from_slice(px);
        data.push(ch.normalized(idx));
    }
    ImageTensor::new(img.height(), img.width(), ChannelSemantics::RgbLandmark, data)
}

/// Landmarks for an image rotated by `angle_deg` about `center`, clamped to a
/// `width` x `height` image. The channel is recomputed from these rather than
/// by rotating the categorical map.
pub fn augmented_landmarks_for_rotation(
    landmarks: &LandmarkSet,
    angle_deg: f64,
    center: (f64, f64),
    width: usize,
    height: usize,
) -> LandmarkSet {
    let rotated = LandmarkSet {
        points: landmarks
            .points
            .iter()
            .map(|&p| rotate_point(p, angle_deg, center))
            .collect(),
        source_image_id: landmarks.source_image_id.clone(),
    };
    rotated.clamped(width, height)
}
