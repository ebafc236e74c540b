//! Intensity rasters and pixel-space rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Single-channel intensity raster, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S> {
    width: u32,
    height: u32,
    data: Vec<S>,
}

impl<S: Scalar> Image<S> {
    /// Build from row-major data, validating length and range.
    pub fn from_vec(width: u32, height: u32, data: Vec<S>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} intensities for {width}x{height}, got {}",
                (width as usize) * (height as usize),
                data.len()
            )));
        }
        for &v in &data {
            if !v.is_finite() || v < S::zero() || v > S::one() {
                return Err(Error::IntensityOutOfRange(v.to_f64().unwrap_or(f64::NAN)));
            }
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Build by clamping arbitrary finite values into `[0, 1]`.
    pub fn from_vec_clamped(width: u32, height: u32, data: Vec<S>) -> Result<Self> {
        let clamped = data
            .into_iter()
            .map(|v| {
                if v.is_finite() {
                    Ok(v.max(S::zero()).min(S::one()))
                } else {
                    Err(Error::NonFinite)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Image::from_vec(width, height, clamped)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> S) -> Result<Self> {
        let mut data = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image::from_vec(width, height, data)
    }

    pub fn filled(width: u32, height: u32, value: S) -> Result<Self> {
        Image::from_vec(
            width,
            height,
            vec![value; (width as usize) * (height as usize)],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> S {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Set a pixel, clamping into `[0, 1]`.
    #[inline]
    pub fn set_clamped(&mut self, x: u32, y: u32, v: S) {
        let v = v.max(S::zero()).min(S::one());
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn crop(&self, rect: Rect) -> Result<Self> {
        rect.check_inside(self.width, self.height)?;
        let mut data = Vec::with_capacity((rect.w as usize) * (rect.h as usize));
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                data.push(self.get(x, y));
            }
        }
        Image::from_vec(rect.w, rect.h, data)
    }

    /// Quantize to 8 bits: `round(v * 255)` with round-half-up, clamped.
    pub fn to_bytes(&self) -> Vec<u8> {
        let k = S::from_f64_lit(255.0);
        self.data
            .iter()
            .map(|&v| {
                let q = (v * k + S::from_f64_lit(0.5)).floor();
                q.max(S::zero()).min(k).to_u8().unwrap_or(255)
            })
            .collect()
    }

    /// Inverse of [`to_bytes`](Self::to_bytes) up to quantization.
    pub fn from_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        let k = S::from_f64_lit(255.0);
        let data = bytes
            .iter()
            .map(|&b| S::from_u8(b).expect("u8 fits any float") / k)
            .collect();
        Image::from_vec(width, height, data)
    }
}

/// Axis-aligned pixel rectangle, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        assert!(w >= 1 && h >= 1, "rect must be at least 1x1");
        Rect { x, y, w, h }
    }

    pub fn check_inside(&self, width: u32, height: u32) -> Result<()> {
        if self.x + self.w > width || self.y + self.h > height {
            return Err(Error::DimensionMismatch(format!(
                "rect {self:?} not contained in {width}x{height} raster"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_intensity() {
        assert!(Image::<f64>::from_vec(1, 1, vec![1.5]).is_err());
        assert!(Image::<f64>::from_vec(1, 1, vec![-0.1]).is_err());
        assert!(Image::<f64>::from_vec(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn rejects_bad_length() {
        assert!(Image::<f64>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn quantization_rounds_half_up() {
        let img = Image::<f64>::from_vec(3, 1, vec![0.5, 1.0, 0.0]).unwrap();
        assert_eq!(img.to_bytes(), vec![128, 255, 0]);
    }

    #[test]
    fn clamped_constructor_clamps() {
        let img = Image::<f64>::from_vec_clamped(2, 1, vec![-0.2, 1.7]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn crop_extracts_subraster() {
        let img = Image::<f64>::from_fn(4, 4, |x, y| (x + y) as f64 / 8.0).unwrap();
        let c = img.crop(Rect::new(1, 2, 2, 2)).unwrap();
        assert_eq!(c.get(0, 0), img.get(1, 2));
        assert_eq!(c.get(1, 1), img.get(2, 3));
    }

    #[test]
    fn generic_over_f32() {
        let img = Image::<f32>::filled(2, 2, 0.25).unwrap();
        assert_eq!(img.to_bytes(), vec![64; 4]);
    }
}
