//! Image ingestion, resizing and rotation augmentation.
//!
//! Images are held as [`ImageTensor`]s: `f32` samples laid out row-major by
//! `(row, column, channel)`. Pixel `(x, y)` has its center at integer
//! coordinates, so the image spans `[-0.5, width - 0.5]` horizontally.

use std::path::Path;

use crate::error::{Error, Result};

/// Which meaning the channels of an [`ImageTensor`] carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelSemantics {
    Rgb,
    /// RGB followed by the normalized nearest-landmark channel.
    RgbLandmark,
}

impl ChannelSemantics {
    pub fn channels(self) -> usize {
        match self {
            ChannelSemantics::Rgb => 3,
            ChannelSemantics::RgbLandmark => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    semantics: ChannelSemantics,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, semantics: ChannelSemantics, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroDimension { width, height });
        }
        let expected = height * width * semantics.channels();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} image needs {} values, got {}",
                height,
                width,
                semantics.channels(),
                expected,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            semantics,
            data,
        })
    }

    /// An RGB image with every sample set to `value`.
    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, ChannelSemantics::Rgb, vec![value; height * width * 3])
    }

    /// Builds an RGB image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(height, width, ChannelSemantics::Rgb, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.semantics.channels()
    }

    pub fn semantics(&self) -> ChannelSemantics {
        self.semantics
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    /// Channel-major copy (`channel, row, column`), the layout the network consumes.
    pub fn to_chw(&self) -> Vec<f32> {
        let c = self.channels();
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for (p, px) in self.data.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                out[ch * plane + p] = v;
            }
        }
        out
    }

    /// Converts to an 8-bit RGB image (the landmark channel, if any, is dropped).
    pub fn to_rgb8(&self) -> image::RgbImage {
        let c = self.channels();
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let base = (y as usize * self.width + x as usize) * c;
            let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgb([q(self.data[base]), q(self.data[base + 1]), q(self.data[base + 2])])
        })
    }

    /// The RGB part of the tensor, dropping an attached landmark channel.
    pub fn rgb(&self) -> ImageTensor {
        match self.semantics {
            ChannelSemantics::Rgb => self.clone(),
            ChannelSemantics::RgbLandmark => {
                let data = self
                    .data
                    .chunks_exact(4)
                    .flat_map(|px| px[..3].iter().copied())
                    .collect();
                ImageTensor {
                    height: self.height,
                    width: self.width,
                    semantics: ChannelSemantics::Rgb,
                    data,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
}

/// The set of rotations applied to every training image.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSpec {
    pub angles: Vec<f64>,
    pub interpolation: Interpolation,
    pub fill_value: f32,
}

impl Default for RotationSpec {
    fn default() -> Self {
        Self {
            angles: vec![-40.0, -20.0, 20.0, 40.0],
            interpolation: Interpolation::Bilinear,
            fill_value: 0.0,
        }
    }
}

impl RotationSpec {
    pub fn none() -> Self {
        Self {
            angles: Vec::new(),
            ..Self::default()
        }
    }

    pub fn with_angles(angles: Vec<f64>) -> Result<Self> {
        if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
            return Err(Error::InvalidData(format!("rotation angle {a} is not finite")));
        }
        Ok(Self {
            angles,
            ..Self::default()
        })
    }

    /// Parses a comma-separated angle list such as `"-40,-20,20,40"`.
    /// The empty string means no rotations.
    pub fn parse_angles(s: &str) -> Result<Self> {
        let angles = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidData(format!("bad rotation angle '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_angles(angles)
    }
}

/// Decodes a PNG or JPEG file and resamples it to `target_size` x `target_size`.
pub fn load_image(path: &Path, target_size: usize) -> Result<ImageTensor> {
    load_image_scaled(path, target_size).map(|(img, _)| img)
}

/// Like [`load_image`], also returning the original `(width, height)` so that
/// coordinates in original-image space can be rescaled.
pub fn load_image_scaled(path: &Path, target_size: usize) -> Result<(ImageTensor, (usize, usize))> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let decoded = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let img = from_rgb8(&decoded)?;
    Ok((resize_bilinear(&img, target_size, target_size)?, (w, h)))
}

/// Converts 8-bit RGB pixels to a tensor with values in `[0, 1]`.
pub fn from_rgb8(img: &image::RgbImage) -> Result<ImageTensor> {
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    ImageTensor::new(img.height() as usize, img.width() as usize, ChannelSemantics::Rgb, data)
}

/// Maps a destination pixel coordinate to source space under a resize with
/// pixel centers aligned (`src = (dst + 0.5) * scale - 0.5`).
#[inline]
pub fn resize_source_coord(dst: f64, src_len: usize, dst_len: usize) -> f64 {
    (dst + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

/// Maps a source-space coordinate to destination space; the inverse of
/// [`resize_source_coord`].
#[inline]
pub fn resize_dest_coord(src: f64, src_len: usize, dst_len: usize) -> f64 {
    (src + 0.5) * dst_len as f64 / src_len as f64 - 0.5
}

/// Non-uniform bilinear resampling to `width` x `height`. Source coordinates
/// are clamped to the edge pixels.
pub fn resize_bilinear(img: &ImageTensor, width: usize, height: usize) -> Result<ImageTensor> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension { width, height });
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let c = img.channels();
    let mut data = Vec::with_capacity(width * height * c);
    for y in 0..height {
        let sy = resize_source_coord(y as f64, img.height, height).clamp(0.0, (img.height - 1) as f64);
        for x in 0..width {
            let sx = resize_source_coord(x as f64, img.width, width).clamp(0.0, (img.width - 1) as f64);
            for ch in 0..c {
                data.push(bilinear_at(img, sx, sy, ch));
            }
        }
    }
    ImageTensor::new(height, width, img.semantics, data)
}

/// Bilinear sample at an in-bounds source position.
#[inline]
fn bilinear_at(img: &ImageTensor, sx: f64, sy: f64, ch: usize) -> f32 {
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let fx = (sx - x0 as f64) as f32;
    let fy = (sy - y0 as f64) as f32;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let top = if fx == 0.0 {
        img.get(x0, y0, ch)
    } else {
        img.get(x0, y0, ch) * (1.0 - fx) + img.get(x1, y0, ch) * fx
    };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        img.get(x0, y1, ch)
    } else {
        img.get(x0, y1, ch) * (1.0 - fx) + img.get(x1, y1, ch) * fx
    };
    top * (1.0 - fy) + bottom * fy
}

/// Geometric center of a `width` x `height` pixel grid.
pub fn image_center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Rotates `p` by `angle_deg` about `center`:
/// `x' = cx + dx cos - dy sin`, `y' = cy + dx sin + dy cos`.
pub fn rotate_point(p: (f64, f64), angle_deg: f64, center: (f64, f64)) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let dx = p.0 - center.0;
    let dy = p.1 - center.1;
    (center.0 + dx * c - dy * s, center.1 + dx * s + dy * c)
}

// Inverse-mapped coordinates within this distance of the border are snapped
// onto it so exact quarter turns do not lose edge pixels to rounding.
const EDGE_SLACK: f64 = 1e-6;

/// Rotates an RGB image about its center by inverse mapping each output
/// pixel with [`rotate_point`] and sampling bilinearly. Content at source
/// position `p` lands at `rotate_point(p, angle, center)`.
pub fn rotate_image(img: &ImageTensor, angle_deg: f64, spec: &RotationSpec) -> Result<ImageTensor> {
    if img.semantics != ChannelSemantics::Rgb {
        return Err(Error::NotRgb(img.channels()));
    }
    if !angle_deg.is_finite() {
        return Err(Error::InvalidData(format!("rotation angle {angle_deg} is not finite")));
    }
    if angle_deg == 0.0 {
        return Ok(img.clone());
    }
    let center = image_center(img.width, img.height);
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let snap = |v: f64, max: f64| -> Option<f64> {
        if v < -EDGE_SLACK || v > max + EDGE_SLACK {
            None
        } else {
            let r = v.round();
            Some(if (v - r).abs() < EDGE_SLACK { r } else { v }.clamp(0.0, max))
        }
    };
    let mut data = Vec::with_capacity(img.data.len());
    for y in 0..img.height {
        for x in 0..img.width {
            let (sx, sy) = rotate_point((x as f64, y as f64), -angle_deg, center);
            match (snap(sx, max_x), snap(sy, max_y)) {
                (Some(sx), Some(sy)) => {
                    for ch in 0..3 {
                        data.push(bilinear_at(img, sx, sy, ch));
                    }
                }
                _ => data.extend_from_slice(&[spec.fill_value; 3]),
            }
        }
    }
    ImageTensor::new(img.height, img.width, ChannelSemantics::Rgb, data)
}

/// The original image followed by one rotated copy per angle in `spec`.
pub fn augment_rotations(img: &ImageTensor, spec: &RotationSpec) -> Result<Vec<(f64, ImageTensor)>> {
    let mut out = Vec::with_capacity(1 + spec.angles.len());
    out.push((0.0, img.clone()));
    for &a in &spec.angles {
        out.push((a, rotate_image(img, a, spec)?));
    }
    Ok(out)
}
