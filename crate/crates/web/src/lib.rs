//! Browser bindings for the demo page in `www/`.
//!
//! Everything crosses the boundary as flat typed arrays: landmarks as
//! `[x0, y0, x1, y1, ...]`, images as row-major RGBA bytes, rating counts as
//! one row of `categories` values per subject. The functions are plain Rust
//! underneath, so the native test suite exercises them directly.

use wasm_bindgen::prelude::*;

use lacnn::annotations::{classify_agreement, RatingMatrix};
use lacnn::imaging::{image_center, rotate_image, ChannelSemantics, ImageTensor, RotationSpec};
use lacnn::landmarks::{augment_fll, augmented_landmarks_for_rotation, LandmarkSet};

type JsResult<T> = Result<T, String>;

fn landmark_set(points: &[f64]) -> JsResult<LandmarkSet> {
    if !points.len().is_multiple_of(2) {
        return Err(format!("expected x,y pairs, got {} numbers", points.len()));
    }
    let pts = points.chunks(2).map(|p| (p[0], p[1])).collect();
    LandmarkSet::new(pts, "demo").map_err(|e| e.to_string())
}

fn flatten(set: &LandmarkSet) -> Vec<f64> {
    set.points().iter().flat_map(|&(x, y)| [x, y]).collect()
}

/// Index of the nearest landmark for every pixel, row-major.
#[wasm_bindgen(js_name = voronoiIndices)]
pub fn voronoi_indices(width: usize, height: usize, points: &[f64]) -> JsResult<Vec<u32>> {
    let ch = augment_fll(&landmark_set(points)?, height, width).map_err(|e| e.to_string())?;
    Ok(ch.indices().to_vec())
}

/// RGBA rendering of the landmark channel. In gray mode a pixel shows the
/// channel value the network sees, `index / (k - 1)`; otherwise each cell
/// gets its own hue.
#[wasm_bindgen(js_name = voronoiRgba)]
pub fn voronoi_rgba(width: usize, height: usize, points: &[f64], gray: bool) -> JsResult<Vec<u8>> {
    let set = landmark_set(points)?;
    let ch = augment_fll(&set, height, width).map_err(|e| e.to_string())?;
    let k = set.len();
    let mut out = Vec::with_capacity(width * height * 4);
    for &i in ch.indices() {
        let rgb = if gray {
            let v = (ch.normalized(i) * 255.0).round() as u8;
            [v, v, v]
        } else {
            hue(i as f64 / k as f64)
        };
        out.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
    }
    Ok(out)
}

fn hue(h: f64) -> [u8; 3] {
    let f = |n: f64| {
        let k = (n + h * 6.0) % 6.0;
        let v = 0.85 - 0.6 * k.min(4.0 - k).clamp(0.0, 1.0);
        (v * 255.0).round() as u8
    };
    [f(5.0), f(3.0), f(1.0)]
}

/// Rotates an RGBA image by `angle_deg` about its center with bilinear
/// sampling. Alpha is dropped; uncovered pixels come out black and opaque.
#[wasm_bindgen(js_name = rotateRgba)]
pub fn rotate_rgba(rgba: &[u8], width: usize, height: usize, angle_deg: f64) -> JsResult<Vec<u8>> {
    if rgba.len() != width * height * 4 {
        return Err(format!(
            "{width}x{height} RGBA needs {} bytes, got {}",
            width * height * 4,
            rgba.len()
        ));
    }
    let data = rgba
        .chunks(4)
        .flat_map(|p| [p[0], p[1], p[2]].map(|v| v as f32 / 255.0))
        .collect();
    let img = ImageTensor::new(height, width, ChannelSemantics::Rgb, data).map_err(|e| e.to_string())?;
    let spec = RotationSpec::none();
    let turned = rotate_image(&img, angle_deg, &spec).map_err(|e| e.to_string())?;
    Ok(turned
        .to_rgb8()
        .pixels()
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect())
}

/// Landmarks moved with an image rotated by `angle_deg`, clamped to its bounds.
#[wasm_bindgen(js_name = rotateLandmarks)]
pub fn rotate_landmarks(points: &[f64], width: usize, height: usize, angle_deg: f64) -> JsResult<Vec<f64>> {
    let set = landmark_set(points)?;
    let center = image_center(width, height);
    Ok(flatten(&augmented_landmarks_for_rotation(
        &set, angle_deg, center, width, height,
    )))
}

/// Fleiss' kappa of a subjects x categories count matrix given row by row.
#[wasm_bindgen(js_name = fleissKappa)]
pub fn fleiss_kappa(counts: &[u32], categories: usize) -> JsResult<f64> {
    if categories == 0 || !counts.len().is_multiple_of(categories) {
        return Err(format!(
            "{} counts do not split into rows of {categories}",
            counts.len()
        ));
    }
    let rows = counts.chunks(categories).map(<[u32]>::to_vec).collect();
    let m = RatingMatrix::new(rows).map_err(|e| e.to_string())?;
    lacnn::annotations::fleiss_kappa(&m).map_err(|e| e.to_string())
}

/// Landis-Koch band of a kappa value, e.g. `"SA"`.
#[wasm_bindgen(js_name = agreementBand)]
pub fn agreement_band(kappa: f64) -> JsResult<String> {
    classify_agreement(kappa)
        .map(|b| b.abbreviation().to_string())
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cells_split_down_the_middle() {
        let idx = voronoi_indices(4, 2, &[0.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(idx, vec![0, 0, 1, 1, 0, 0, 1, 1]);
        let gray = voronoi_rgba(4, 2, &[0.0, 0.0, 3.0, 0.0], true).unwrap();
        assert_eq!(&gray[..4], &[0, 0, 0, 255]);
        assert_eq!(&gray[8..12], &[255, 255, 255, 255]);
    }

    #[test]
    fn odd_coordinate_count_is_rejected() {
        assert!(voronoi_indices(4, 4, &[1.0, 2.0, 3.0]).is_err());
        assert!(rotate_landmarks(&[1.0], 4, 4, 10.0).is_err());
    }

    #[test]
    fn quarter_turn_of_a_3x3() {
        let rgba: Vec<u8> = (1..=9u8).flat_map(|v| [v * 20, 0, 0, 255]).collect();
        let out = rotate_rgba(&rgba, 3, 3, 90.0).unwrap();
        let reds: Vec<u8> = out.chunks(4).map(|p| p[0] / 20).collect();
        assert_eq!(reds, vec![7, 4, 1, 8, 5, 2, 9, 6, 3]);
        assert!(rotate_rgba(&rgba[1..], 3, 3, 90.0).is_err());
    }

    #[test]
    fn landmark_follows_rotation() {
        let p = rotate_landmarks(&[2.0, 1.0], 3, 3, 90.0).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_from_flat_counts() {
        // Two subjects, unanimous and opposite: perfect agreement.
        assert_eq!(fleiss_kappa(&[3, 0, 0, 3], 2).unwrap(), 1.0);
        assert!(fleiss_kappa(&[3, 0, 0], 2).is_err());
        assert_eq!(agreement_band(0.719).unwrap(), "SA");
        assert!(agreement_band(1.5).is_err());
    }
}
