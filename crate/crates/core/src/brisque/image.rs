//! Grayscale planes and RGB-to-luminance conversion.

use image::ImageFormat;
use serde::{Deserialize, Serialize};

use super::BrisqueError;

pub const MIN_DIMENSION: usize = 16;

/// Row-major real-valued matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length");
        Self { width, height, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        Self::new(width, height, rows.concat())
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.width.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// 2×2 box average followed by 2× decimation (odd trailing row/column
    /// dropped).
    pub fn downscale_half(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let (r2, c2) = (2 * r, 2 * c);
                let sum = self.get(r2, c2) + self.get(r2, c2 + 1) + self.get(r2 + 1, c2) + self.get(r2 + 1, c2 + 1);
                data.push(sum / 4.0);
            }
        }
        Plane::new(w, h, data)
    }

    pub fn mirrored_horizontally(&self) -> Plane {
        let data = self
            .data
            .chunks(self.width)
            .flat_map(|row| row.iter().rev().copied())
            .collect();
        Plane::new(self.width, self.height, data)
    }
}

/// Grayscale image with pixels in [0, 255], at least 16×16.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    plane: Plane,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, BrisqueError> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(BrisqueError::TooSmall { width, height });
        }
        if pixels.len() != width * height {
            return Err(BrisqueError::PixelCount {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if let Some(&v) = pixels.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(BrisqueError::PixelRange(v));
        }
        Ok(Self {
            plane: Plane::new(width, height, pixels),
        })
    }

    pub fn width(&self) -> usize {
        self.plane.width
    }

    pub fn height(&self) -> usize {
        self.plane.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.plane.data
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn mirrored_horizontally(&self) -> Self {
        Self {
            plane: self.plane.mirrored_horizontally(),
        }
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B` of a PNG (alpha ignored).
pub fn to_luminance(png_bytes: &[u8]) -> Result<GrayImage, BrisqueError> {
    let img = image::load_from_memory_with_format(png_bytes, ImageFormat::Png)
        .map_err(|e| BrisqueError::Decode(e.to_string()))?
        .to_rgb8();
    luminance_of(&img)
}

pub fn luminance_of(img: &image::RgbImage) -> Result<GrayImage, BrisqueError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img
        .pixels()
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .map(|v| v.clamp(0.0, 255.0))
        .collect();
    GrayImage::new(w, h, pixels)
}
