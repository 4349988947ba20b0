use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use super::samples::to_network_input;
use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::nn::ModelCheckpoint;

/// First-layer feature maps laid out row-major on the smallest square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationGrid {
    /// Each map min-max normalized to [0, 1], `map_height * map_width` long.
    pub maps: Vec<Vec<f32>>,
    pub map_height: usize,
    pub map_width: usize,
    /// Cells per side.
    pub side: usize,
}

/// Smallest `s` with `s * s >= n`.
pub fn grid_side(n: usize) -> usize {
    let mut s = (n as f64).sqrt() as usize;
    while s * s < n {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= n {
        s -= 1;
    }
    s
}

/// Constant maps normalize to flat gray (0.5).
pub fn min_max_normalize(map: &[f32]) -> Vec<f32> {
    let lo = map.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = map.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![0.5; map.len()];
    }
    map.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

impl ActivationGrid {
    pub fn blank_cells(&self) -> usize {
        self.side * self.side - self.maps.len()
    }

    /// Grayscale image with a one-pixel black gap between cells; blank
    /// cells stay black.
    pub fn to_image(&self) -> GrayImage {
        let gap = 1;
        let cell_w = self.map_width + gap;
        let cell_h = self.map_height + gap;
        let w = (self.side * cell_w).saturating_sub(gap).max(1);
        let h = (self.side * cell_h).saturating_sub(gap).max(1);
        let mut img = GrayImage::new(w as u32, h as u32);
        for (i, map) in self.maps.iter().enumerate() {
            let (ox, oy) = ((i % self.side) * cell_w, (i / self.side) * cell_h);
            for y in 0..self.map_height {
                for x in 0..self.map_width {
                    let v = (map[y * self.map_width + x].clamp(0.0, 1.0) * 255.0).round() as u8;
                    img.put_pixel((ox + x) as u32, (oy + y) as u32, Luma([v]));
                }
            }
        }
        img
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_image()
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| Error::InvalidData(format!("PNG encoding failed: {e}")))?;
        Ok(buf.into_inner())
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, &self.to_png()?)
    }
}

/// First convolutional layer outputs (before the nonlinearity) for one
/// prepared sample. The checkpoint's channel means are applied first.
pub fn first_layer_activations(checkpoint: &ModelCheckpoint, sample: &ImageTensor) -> Result<ActivationGrid> {
    let input = checkpoint.config.input;
    if (sample.channels(), sample.height(), sample.width()) != (input.channels, input.height, input.width) {
        return Err(Error::ShapeMismatch(format!(
            "sample is {}x{}x{}, network expects {}x{}x{}",
            sample.channels(),
            sample.height(),
            sample.width(),
            input.channels,
            input.height,
            input.width
        )));
    }
    let network = checkpoint.network()?;
    let (shape, out) = network.first_layer_output(&to_network_input(sample, &checkpoint.meta.channel_means))?;
    let plane = shape.height * shape.width;
    let maps = out.chunks_exact(plane).map(min_max_normalize).collect::<Vec<_>>();
    Ok(ActivationGrid {
        side: grid_side(maps.len()),
        maps,
        map_height: shape.height,
        map_width: shape.width,
    })
}
