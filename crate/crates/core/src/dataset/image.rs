use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel-major 3 x side x side image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageArray {
    side: usize,
    data: Vec<f32>,
}

impl ImageArray {
    pub fn new(side: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * side * side {
            return Err(Error::Contract(format!(
                "image buffer has {} values, expected 3 x {side} x {side}",
                data.len()
            )));
        }
        Ok(ImageArray { side, data })
    }

    /// Replicates a single side x side plane into three channels.
    pub fn from_gray(side: usize, plane: &[f32]) -> Result<Self> {
        if plane.len() != side * side {
            return Err(Error::Contract(format!(
                "plane has {} values, expected {side} x {side}",
                plane.len()
            )));
        }
        let mut data = Vec::with_capacity(3 * plane.len());
        for _ in 0..3 {
            data.extend_from_slice(plane);
        }
        Ok(ImageArray { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.side * self.side;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Per-channel affine standardization applied to [0, 1] intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { mean: 0.5, std: 0.25 }
    }
}

impl Normalization {
    pub fn apply(&self, v: f32) -> f32 {
        (v - self.mean) / self.std
    }
}

/// Bilinear resampling with half-pixel centres. Resizing to the same size is
/// the identity and constant planes stay constant.
pub fn resize_bilinear(src: &[f32], width: usize, height: usize, side: usize) -> Vec<f32> {
    assert_eq!(src.len(), width * height);
    let coords = |out: usize, n_in: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / side as f64;
        (0..out)
            .map(|o| {
                let x = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(n_in - 1);
                (x0, x1, (x - x0 as f64) as f32)
            })
            .collect()
    };
    let xs = coords(side, width);
    let ys = coords(side, height);
    let lerp = |a: f32, b: f32, t: f32| if t == 0.0 { a } else { a + t * (b - a) };
    let mut out = Vec::with_capacity(side * side);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = lerp(src[y0 * width + x0], src[y0 * width + x1], tx);
            let bottom = lerp(src[y1 * width + x0], src[y1 * width + x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

/// Decodes `path`, converts to grayscale in [0, 1], resizes to side x side,
/// normalizes and replicates to three channels.
pub fn load_image(path: &Path, side: usize, norm: &Normalization) -> Result<ImageArray> {
    if side == 0 {
        return Err(Error::Contract("image side must be positive".into()));
    }
    let err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let decoded = image::open(path).map_err(|e| err(e.to_string()))?;
    let gray = decoded.to_luma32f();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    if w == 0 || h == 0 {
        return Err(err("empty image".into()));
    }
    let plane = resize_bilinear(gray.as_raw(), w, h, side);
    let plane: Vec<f32> = plane.into_iter().map(|v| norm.apply(v)).collect();
    ImageArray::from_gray(side, &plane)
}

/// Writes a [0, 1] grayscale plane as an 8-bit PNG.
pub fn save_gray_png(path: &Path, width: usize, height: usize, plane: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = plane
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::Contract("plane size does not match dimensions".into()))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
