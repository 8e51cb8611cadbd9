//! Dense floating-point images and bilinear sampling.
//!
//! Every image in the crate is a row-major grid of `f64` samples with the
//! channels of a pixel stored contiguously. Light fields, depth maps and
//! disparity maps all reduce to this layout when they need to be resampled.

use thiserror::Error;

/// Rec.601 luma weights, used wherever an RGB image is collapsed to intensity.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("buffer holds {actual} samples, expected {expected} for {height}x{width}x{channels}")]
    DimensionMismatch {
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
}

/// A `height x width x channels` grid of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ImageError::DimensionMismatch {
                height,
                width,
                channels,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(y, x, c)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<(), ImageError> {
        if self.shape() != other.shape() {
            return Err(ImageError::ShapeMismatch(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Extracts a single channel as a one-channel image.
    pub fn channel(&self, c: usize) -> Image {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Rec.601 luma of a three-channel image. One-channel images are returned as is.
    pub fn luma(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        assert_eq!(self.channels, 3, "luma needs an RGB image");
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect();
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    pub fn transpose(&self) -> Image {
        let mut out = Image::zeros(self.width, self.height, self.channels);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(x, y, c, self.get(y, x, c));
                }
            }
        }
        out
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Bilinear sample at continuous coordinates `(y, x)`, pixel centres at integers.
    ///
    /// Returns `false` and leaves `out` untouched when the point lies outside
    /// `[0, height-1] x [0, width-1]`.
    #[inline]
    pub fn sample_bilinear(&self, y: f64, x: f64, out: &mut [f64]) -> bool {
        let max_y = (self.height - 1) as f64;
        let max_x = (self.width - 1) as f64;
        if !(y >= 0.0 && y <= max_y && x >= 0.0 && x <= max_x) {
            return false;
        }
        self.sample_bilinear_unchecked(y, x, out);
        true
    }

    /// Bilinear sample with coordinates clamped to the image (edge replication).
    /// The return value reports whether the unclamped point was inside.
    #[inline]
    pub fn sample_bilinear_clamped(&self, y: f64, x: f64, out: &mut [f64]) -> bool {
        let max_y = (self.height - 1) as f64;
        let max_x = (self.width - 1) as f64;
        let inside = y >= 0.0 && y <= max_y && x >= 0.0 && x <= max_x;
        self.sample_bilinear_unchecked(y.clamp(0.0, max_y), x.clamp(0.0, max_x), out);
        inside
    }

    #[inline]
    fn sample_bilinear_unchecked(&self, y: f64, x: f64, out: &mut [f64]) {
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let fy = y - y0 as f64;
        let fx = x - x0 as f64;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let ch = self.channels;
        let p00 = (y0 * self.width + x0) * ch;
        let p01 = (y0 * self.width + x1) * ch;
        let p10 = (y1 * self.width + x0) * ch;
        let p11 = (y1 * self.width + x1) * ch;
        for (c, o) in out.iter_mut().enumerate().take(ch) {
            let top = lerp(self.data[p00 + c], self.data[p01 + c], fx);
            let bottom = lerp(self.data[p10 + c], self.data[p11 + c], fx);
            *o = lerp(top, bottom, fy);
        }
    }
}

/// `a + (b - a) t`; returns `a` exactly when `a == b`.
#[inline]
pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Fills invalid pixels of a one-channel map from the nearest valid pixel
/// (breadth-first over the 4-neighbourhood, row-major tie order).
///
/// Returns `None` when no pixel is valid.
pub fn fill_nearest(values: &mut [f64], valid: &[bool], height: usize, width: usize) -> Option<()> {
    use std::collections::VecDeque;
    debug_assert_eq!(values.len(), height * width);
    let mut seen = valid.to_vec();
    let mut queue: VecDeque<usize> = (0..values.len()).filter(|&i| valid[i]).collect();
    if queue.is_empty() {
        return None;
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = (i / width, i % width);
        let mut visit = |j: usize| {
            if !seen[j] {
                seen[j] = true;
                values[j] = values[i];
                queue.push_back(j);
            }
        };
        if y > 0 {
            visit(i - width);
        }
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < width {
            visit(i + 1);
        }
        if y + 1 < height {
            visit(i + width);
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_is_exact_on_linear_ramp() {
        let img = Image::from_fn(4, 6, 1, |y, x, _| 0.1 * x as f64 + 0.03 * y as f64);
        let mut out = [0.0];
        assert!(img.sample_bilinear(1.25, 2.5, &mut out));
        assert!((out[0] - (0.25 + 0.0375)).abs() < 1e-15);
        assert!(!img.sample_bilinear(0.0, 5.01, &mut out));
        assert!(img.sample_bilinear(3.0, 5.0, &mut out));
    }

    #[test]
    fn clamped_sampling_replicates_edges() {
        let img = Image::from_fn(3, 3, 1, |_, x, _| x as f64);
        let mut out = [0.0];
        assert!(!img.sample_bilinear_clamped(1.0, -4.0, &mut out));
        assert_eq!(out[0], 0.0);
        assert!(!img.sample_bilinear_clamped(1.0, 7.0, &mut out));
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn nearest_fill_covers_everything() {
        let mut v = vec![0.0, 0.0, 5.0, 0.0, 0.0, 0.0];
        let valid = vec![false, false, true, false, false, false];
        fill_nearest(&mut v, &valid, 2, 3).unwrap();
        assert!(v.iter().all(|&x| x == 5.0));
        let mut none = vec![0.0; 4];
        assert!(fill_nearest(&mut none, &[false; 4], 2, 2).is_none());
    }

    #[test]
    fn luma_of_gray_is_gray() {
        let img = Image::filled(2, 2, 3, 0.4);
        for &v in img.luma().as_slice() {
            assert!((v - 0.4).abs() < 1e-15);
        }
    }
}
