//! The 4-D light-field container and the geometry that ties disparity to depth.
//!
//! A light field is stored as a `V x U` grid of sub-aperture images (SAIs),
//! each `H x W x 3`. Angular positions are always addressed relative to the
//! central view: view `(v, u)` has offset `(v - v_c, u - u_c)`, and a scene
//! point with disparity `d` that sits at `(y, x)` in the central view appears
//! at `(y + (v - v_c) d, x + (u - u_c) d)` in view `(v, u)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;

pub const CHANNELS: usize = 3;

/// Disparities whose magnitude is at or below this are treated as "at infinity".
pub const DEFAULT_MIN_DISPARITY: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LfError {
    #[error("radiance buffer holds {actual} samples, dimensions need {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("sample {index} is {value}, outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("angular size {rows}x{cols} has an even side; a central view is required")]
    EvenAngularSize { rows: usize, cols: usize },
    #[error("index ({0}, {1}) is out of range")]
    IndexOutOfRange(usize, usize),
    #[error("depth {value} at pixel {index} is not a positive finite length")]
    NonPositiveDepth { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),
}

/// Angular and spatial extent of a light field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LfDims {
    pub rows: usize,
    pub cols: usize,
    pub height: usize,
    pub width: usize,
}

impl LfDims {
    pub fn new(rows: usize, cols: usize, height: usize, width: usize) -> Self {
        Self {
            rows,
            cols,
            height,
            width,
        }
    }

    pub fn view_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn view_len(&self) -> usize {
        self.height * self.width * CHANNELS
    }

    pub fn center(&self) -> (usize, usize) {
        ((self.rows - 1) / 2, (self.cols - 1) / 2)
    }

    /// Signed angular offset of view `(v, u)` from the centre, as `(dv, du)`.
    pub fn offset(&self, v: usize, u: usize) -> (f64, f64) {
        let (vc, uc) = self.center();
        (v as f64 - vc as f64, u as f64 - uc as f64)
    }

    /// All angular indices in row-major order.
    pub fn angular_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |v| (0..self.cols).map(move |u| (v, u)))
    }
}

/// A validated 4-D light field with unit-interval RGB radiance.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    dims: LfDims,
    data: Vec<f64>,
}

impl LightField {
    /// Validates and wraps a `[v][u][y][x][c]` radiance buffer.
    pub fn new(dims: LfDims, values: Vec<f64>) -> Result<Self, LfError> {
        let expected = dims.view_count() * dims.view_len();
        if values.len() != expected || dims.height == 0 || dims.width == 0 {
            return Err(LfError::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        if dims.rows % 2 == 0 || dims.cols % 2 == 0 {
            return Err(LfError::EvenAngularSize {
                rows: dims.rows,
                cols: dims.cols,
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(LfError::ValueOutOfRange { index, value });
        }
        Ok(Self { dims, data: values })
    }

    /// Assembles a light field from row-major views.
    pub fn from_views(rows: usize, cols: usize, views: &[Image]) -> Result<Self, LfError> {
        let first = views
            .first()
            .ok_or(LfError::DimensionMismatch { expected: rows * cols, actual: 0 })?;
        let dims = LfDims::new(rows, cols, first.height(), first.width());
        if views.len() != dims.view_count() {
            return Err(LfError::DimensionMismatch {
                expected: dims.view_count(),
                actual: views.len(),
            });
        }
        let mut data = Vec::with_capacity(dims.view_count() * dims.view_len());
        for view in views {
            if view.shape() != (dims.height, dims.width, CHANNELS) {
                return Err(LfError::ShapeMismatch(format!(
                    "view shape {:?} differs from {:?}",
                    view.shape(),
                    (dims.height, dims.width, CHANNELS)
                )));
            }
            data.extend_from_slice(view.as_slice());
        }
        Self::new(dims, data)
    }

    #[inline]
    pub fn dims(&self) -> LfDims {
        self.dims
    }

    pub fn center_index(&self) -> (usize, usize) {
        self.dims.center()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn view_range(&self, v: usize, u: usize) -> std::ops::Range<usize> {
        let len = self.dims.view_len();
        let start = (v * self.dims.cols + u) * len;
        start..start + len
    }

    /// Raw samples of view `(v, u)`. Panics on out-of-range indices.
    pub fn view_slice(&self, v: usize, u: usize) -> &[f64] {
        &self.data[self.view_range(v, u)]
    }

    /// Sub-aperture image at angular index `(v, u)`.
    pub fn sai(&self, v: usize, u: usize) -> Result<Image, LfError> {
        if v >= self.dims.rows || u >= self.dims.cols {
            return Err(LfError::IndexOutOfRange(v, u));
        }
        Ok(self.sai_unchecked(v, u))
    }

    pub(crate) fn sai_unchecked(&self, v: usize, u: usize) -> Image {
        Image::from_vec(
            self.dims.height,
            self.dims.width,
            CHANNELS,
            self.view_slice(v, u).to_vec(),
        )
        .expect("view slice has view_len samples")
    }

    pub fn center_view(&self) -> Image {
        let (vc, uc) = self.center_index();
        self.sai_unchecked(vc, uc)
    }

    /// All views in row-major angular order.
    pub fn views(&self) -> Vec<Image> {
        self.dims
            .angular_indices()
            .map(|(v, u)| self.sai_unchecked(v, u))
            .collect()
    }

    /// Builds a new light field by transforming every view independently.
    /// The closure receives the angular index and the view; its output is
    /// clamped to `[0, 1]`.
    pub fn map_views<F>(&self, f: F) -> LightField
    where
        F: Fn((usize, usize), &Image) -> Image + Sync,
    {
        use rayon::prelude::*;
        let indices: Vec<_> = self.dims.angular_indices().collect();
        let views: Vec<Image> = indices
            .par_iter()
            .map(|&(v, u)| {
                let mut out = f((v, u), &self.sai_unchecked(v, u));
                out.clamp_unit();
                out
            })
            .collect();
        LightField::from_views(self.dims.rows, self.dims.cols, &views)
            .expect("mapped views keep the light-field shape")
    }

    /// Epipolar-plane image through the light field.
    ///
    /// Horizontal: fixed view row `v = fixed_angular` and image row
    /// `y = fixed_spatial`, spanning `(u, x)`. Vertical: fixed view column `u`
    /// and image column `x`, spanning `(v, y)`.
    pub fn epi(
        &self,
        orientation: EpiOrientation,
        fixed_angular: usize,
        fixed_spatial: usize,
    ) -> Result<EpiSlice, LfError> {
        let d = self.dims;
        let (ang_ok, sp_ok) = match orientation {
            EpiOrientation::Horizontal => (fixed_angular < d.rows, fixed_spatial < d.height),
            EpiOrientation::Vertical => (fixed_angular < d.cols, fixed_spatial < d.width),
        };
        if !ang_ok || !sp_ok {
            return Err(LfError::IndexOutOfRange(fixed_angular, fixed_spatial));
        }
        let image = match orientation {
            EpiOrientation::Horizontal => Image::from_fn(d.cols, d.width, CHANNELS, |u, x, c| {
                self.view_slice(fixed_angular, u)[(fixed_spatial * d.width + x) * CHANNELS + c]
            }),
            EpiOrientation::Vertical => Image::from_fn(d.rows, d.height, CHANNELS, |v, y, c| {
                self.view_slice(v, fixed_angular)[(y * d.width + fixed_spatial) * CHANNELS + c]
            }),
        };
        Ok(EpiSlice {
            orientation,
            fixed_angular,
            fixed_spatial,
            image,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpiOrientation {
    Horizontal,
    Vertical,
}

/// A 2-D slice over one angular and one spatial axis. Rows are angular.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSlice {
    pub orientation: EpiOrientation,
    pub fixed_angular: usize,
    pub fixed_spatial: usize,
    pub image: Image,
}

impl EpiSlice {
    /// Least-squares slope (pixels per view) of the lines in this slice.
    ///
    /// Each angular row is aligned to the central row by a sub-pixel shift
    /// search in `[-max_shift, max_shift]`; the slope is the least-squares fit
    /// of those shifts against the angular offset, through the origin.
    /// `margin` columns are skipped on both sides of the row.
    pub fn fit_slope(&self, max_shift: f64, margin: usize) -> f64 {
        let rows = self.image.height();
        let width = self.image.width();
        let center = (rows - 1) / 2;
        let reference: Vec<f64> = (margin..width - margin)
            .flat_map(|x| self.image.pixel(center, x).to_vec())
            .collect();
        let row_image = |r: usize| Image::from_fn(1, width, CHANNELS, |_, x, c| self.image.get(r, x, c));

        let step = 0.01;
        let steps = (max_shift / step).round() as i64;
        let (mut num, mut den) = (0.0, 0.0);
        for r in 0..rows {
            let offset = r as f64 - center as f64;
            if offset == 0.0 {
                continue;
            }
            let row = row_image(r);
            let cost = |shift: f64| -> f64 {
                let mut buf = [0.0; CHANNELS];
                let mut sum = 0.0;
                for (i, x) in (margin..width - margin).enumerate() {
                    row.sample_bilinear_clamped(0.0, x as f64 + shift, &mut buf);
                    for c in 0..CHANNELS {
                        let e = buf[c] - reference[i * CHANNELS + c];
                        sum += e * e;
                    }
                }
                sum
            };
            let costs: Vec<f64> = (-steps..=steps).map(|k| cost(k as f64 * step)).collect();
            let best = costs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let mut shift = (best as i64 - steps) as f64 * step;
            if best > 0 && best + 1 < costs.len() {
                let (l, m, h) = (costs[best - 1], costs[best], costs[best + 1]);
                let curv = l - 2.0 * m + h;
                if curv > 0.0 {
                    shift += 0.5 * (l - h) / curv * step;
                }
            }
            num += offset * shift;
            den += offset * offset;
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

/// Length units for baselines and scene depths; the two must agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Millimeter,
    Centimeter,
    #[default]
    Meter,
}

/// Planar camera rig: focal length and sensor size share one unit, the
/// baseline shares the unit of scene depth, and `resolution` is the number of
/// pixels across the sensor width.
///
/// `zero_parallax` is the absolute disparity (pixels per view) that has been
/// shifted to zero by refocusing; `0` means the zero-parallax plane is at
/// infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub focal_length: f64,
    pub baseline: f64,
    pub sensor_size: f64,
    pub resolution: usize,
    #[serde(default)]
    pub zero_parallax: f64,
    #[serde(default)]
    pub unit: LengthUnit,
}

impl CameraRig {
    pub fn new(
        focal_length: f64,
        baseline: f64,
        sensor_size: f64,
        resolution: usize,
    ) -> Result<Self, LfError> {
        let rig = Self {
            focal_length,
            baseline,
            sensor_size,
            resolution,
            zero_parallax: 0.0,
            unit: LengthUnit::Meter,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn with_zero_parallax(mut self, zero_parallax: f64) -> Self {
        self.zero_parallax = zero_parallax;
        self
    }

    /// A zero baseline is accepted as a degenerate rig (all views coincide).
    pub fn validate(&self) -> Result<(), LfError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.focal_length) || !positive(self.sensor_size) || self.resolution == 0 {
            return Err(LfError::InvalidRig(format!(
                "focal length, sensor size and resolution must be positive: {self:?}"
            )));
        }
        if !(self.baseline.is_finite() && self.baseline >= 0.0) {
            return Err(LfError::InvalidRig(format!("baseline {} is negative", self.baseline)));
        }
        if !self.zero_parallax.is_finite() {
            return Err(LfError::InvalidRig("zero parallax must be finite".into()));
        }
        Ok(())
    }

    /// `f * b * r / s`: the disparity of a point at unit depth.
    #[inline]
    pub fn disparity_scale(&self) -> f64 {
        self.focal_length * self.baseline * self.resolution as f64 / self.sensor_size
    }

    /// Absolute disparity of a point at `depth`.
    #[inline]
    pub fn disparity_at(&self, depth: f64) -> f64 {
        self.disparity_scale() / depth
    }

    /// Depth of a point with absolute disparity `disparity`.
    #[inline]
    pub fn depth_at(&self, disparity: f64) -> f64 {
        self.disparity_scale() / disparity
    }

    /// Rig whose disparity spans `span` pixels per view between `near` and
    /// `far`, refocused to the integer disparity closest to the middle of
    /// that span. With `span <= 5` every scene point then stays within
    /// `[-3, 3]` pixels per view, and refocusing moves views by whole pixels.
    pub fn for_depth_range(near: f64, far: f64, resolution: usize, span: f64) -> Result<Self, LfError> {
        if !(near > 0.0 && far > near && span > 0.0) {
            return Err(LfError::InvalidRig(format!(
                "need 0 < near < far and a positive span, got near={near}, far={far}, span={span}"
            )));
        }
        let focal_length = 35.0;
        let sensor_size = 32.0;
        let unit_scale = focal_length * resolution as f64 / sensor_size;
        let baseline = span / (unit_scale * (1.0 / near - 1.0 / far));
        let rig = Self::new(focal_length, baseline, sensor_size, resolution)?;
        let mid = 0.5 * (rig.disparity_at(near) + rig.disparity_at(far));
        Ok(rig.with_zero_parallax(mid.round()))
    }
}

/// Per-pixel scene depth, strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, LfError> {
        if values.len() != height * width {
            return Err(LfError::DimensionMismatch {
                expected: height * width,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(LfError::NonPositiveDepth { index, value });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, depth: f64) -> Result<Self, LfError> {
        Self::new(height, width, vec![depth; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn to_image(&self) -> Image {
        Image::from_vec(self.height, self.width, 1, self.values.clone()).expect("shape")
    }
}

/// Per-pixel disparity (pixels per unit angular offset) with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self, LfError> {
        if values.len() != height * width || valid.len() != height * width {
            return Err(LfError::DimensionMismatch {
                expected: height * width,
                actual: values.len().min(valid.len()),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .zip(&valid)
            .enumerate()
            .find(|(_, (v, ok))| **ok && !v.is_finite())
            .map(|(i, (v, _))| (i, v))
        {
            return Err(LfError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            height,
            width,
            values,
            valid,
        })
    }

    /// A map that is valid everywhere.
    pub fn dense(height: usize, width: usize, values: Vec<f64>) -> Result<Self, LfError> {
        let n = values.len();
        Self::new(height, width, values, vec![true; n])
    }

    pub fn constant(height: usize, width: usize, d: f64) -> Self {
        Self::dense(height, width, vec![d; height * width]).expect("finite constant")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Adds `delta` to every value; used to move between absolute and
    /// refocused disparities.
    pub fn shifted(&self, delta: f64) -> DisparityMap {
        DisparityMap {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v + delta).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Range of valid values, if any.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

/// Depth recovered from disparity; pixels at (or beyond) infinity are masked.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDepth {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl MaskedDepth {
    /// Fills masked pixels from the nearest valid pixel. `None` if nothing is valid.
    pub fn fill_nearest(&self) -> Option<DepthMap> {
        let mut values = self.values.clone();
        crate::image::fill_nearest(&mut values, &self.valid, self.height, self.width)?;
        DepthMap::new(self.height, self.width, values).ok()
    }
}

/// Absolute disparity `d = f b r / (s D)` at every pixel.
pub fn disparity_from_depth(rig: &CameraRig, depth: &DepthMap) -> DisparityMap {
    let scale = rig.disparity_scale();
    let values = depth.values.iter().map(|&d| scale / d).collect();
    DisparityMap::dense(depth.height, depth.width, values).expect("positive depth gives finite disparity")
}

/// Inverse of [`disparity_from_depth`]. Pixels that are already invalid, or
/// whose disparity is not above `min_disparity` (so the point lies at or
/// beyond infinity), come back masked with an infinite depth.
pub fn depth_from_disparity(rig: &CameraRig, disp: &DisparityMap, min_disparity: f64) -> MaskedDepth {
    let scale = rig.disparity_scale();
    let mut values = Vec::with_capacity(disp.values.len());
    let mut valid = Vec::with_capacity(disp.values.len());
    for (&d, &ok) in disp.values.iter().zip(&disp.valid) {
        let depth = scale / d;
        if ok && d > min_disparity && depth.is_finite() && depth > 0.0 {
            values.push(depth);
            valid.push(true);
        } else {
            values.push(f64::INFINITY);
            valid.push(false);
        }
    }
    MaskedDepth {
        height: disp.height,
        width: disp.width,
        values,
        valid,
    }
}

/// Resamples `img` onto the central view: output `(y, x)` reads the input at
/// `(y + dv * d(y, x), x + du * d(y, x))`. Samples that fall outside the
/// input are zeroed and reported invalid.
pub fn warp_view(
    img: &Image,
    disp: &DisparityMap,
    angular_offset: (f64, f64),
) -> Result<(Image, Vec<bool>), LfError> {
    if img.height() != disp.height || img.width() != disp.width {
        return Err(LfError::ShapeMismatch(format!(
            "image {}x{} vs disparity {}x{}",
            img.height(),
            img.width(),
            disp.height,
            disp.width
        )));
    }
    let (dv, du) = angular_offset;
    let ch = img.channels();
    let mut out = Image::zeros(img.height(), img.width(), ch);
    let mut valid = vec![false; img.pixel_count()];
    let mut buf = vec![0.0; ch];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let i = y * img.width() + x;
            let d = disp.values[i];
            if img.sample_bilinear(y as f64 + dv * d, x as f64 + du * d, &mut buf) {
                out.as_mut_slice()[i * ch..(i + 1) * ch].copy_from_slice(&buf);
                valid[i] = true;
            }
        }
    }
    Ok((out, valid))
}

/// Shift-and-add refocusing: every view is moved by `slope * offset` and the
/// in-bounds samples are averaged. Points with disparity `slope` come into focus.
pub fn refocus(lf: &LightField, slope: f64) -> Image {
    let d = lf.dims();
    let views = lf.views();
    let mut out = Image::zeros(d.height, d.width, CHANNELS);
    let mut buf = [0.0; CHANNELS];
    for y in 0..d.height {
        for x in 0..d.width {
            let mut acc = [0.0; CHANNELS];
            let mut count = 0usize;
            for ((v, u), view) in d.angular_indices().zip(&views) {
                let (dv, du) = d.offset(v, u);
                if view.sample_bilinear(y as f64 + dv * slope, x as f64 + du * slope, &mut buf) {
                    for c in 0..CHANNELS {
                        acc[c] += buf[c];
                    }
                    count += 1;
                }
            }
            for c in 0..CHANNELS {
                let value = if count > 0 { acc[c] / count as f64 } else { 0.0 };
                out.set(y, x, c, value.clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Light field refocused so that disparity `d0` becomes zero parallax, with
/// a `[v][u][y][x]` mask marking samples that came from edge replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Recentered {
    pub lf: LightField,
    pub valid: Vec<bool>,
}

pub fn recenter_zero_parallax(lf: &LightField, d0: f64) -> Recentered {
    let d = lf.dims();
    let mut data = Vec::with_capacity(lf.as_slice().len());
    let mut valid = Vec::with_capacity(d.view_count() * d.height * d.width);
    let mut buf = [0.0; CHANNELS];
    for (v, u) in d.angular_indices() {
        let view = lf.sai_unchecked(v, u);
        let (dv, du) = d.offset(v, u);
        for y in 0..d.height {
            for x in 0..d.width {
                let inside = view.sample_bilinear_clamped(y as f64 + dv * d0, x as f64 + du * d0, &mut buf);
                data.extend(buf.iter().map(|s| s.clamp(0.0, 1.0)));
                valid.push(inside);
            }
        }
    }
    Recentered {
        lf: LightField::new(d, data).expect("resampled views stay in range"),
        valid,
    }
}

/// Shifts every per-view depth map like [`recenter_zero_parallax`] shifts the
/// views, using nearest-sample lookup so that depth edges are not blended.
pub fn recenter_depths(dims: LfDims, depths: &[DepthMap], d0: f64) -> Vec<DepthMap> {
    dims.angular_indices()
        .zip(depths)
        .map(|((v, u), depth)| {
            let (dv, du) = dims.offset(v, u);
            let (h, w) = (depth.height as f64, depth.width as f64);
            let values = (0..depth.height)
                .flat_map(|y| (0..depth.width).map(move |x| (y, x)))
                .map(|(y, x)| {
                    let sy = (y as f64 + dv * d0).round().clamp(0.0, h - 1.0) as usize;
                    let sx = (x as f64 + du * d0).round().clamp(0.0, w - 1.0) as usize;
                    depth.get(sy, sx)
                })
                .collect();
            DepthMap::new(depth.height, depth.width, values).expect("copied depths stay positive")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_lf(dims: LfDims) -> LightField {
        let n = dims.view_count() * dims.view_len();
        let values = (0..n).map(|i| (i % 97) as f64 / 96.0).collect();
        LightField::new(dims, values).unwrap()
    }

    #[test]
    fn constructor_validates() {
        let lf = LightField::new(LfDims::new(3, 3, 4, 4), vec![0.5; 9 * 48]).unwrap();
        assert_eq!(lf.center_index(), (1, 1));
        assert_eq!(
            LightField::new(LfDims::new(2, 3, 4, 4), vec![0.5; 6 * 48]),
            Err(LfError::EvenAngularSize { rows: 2, cols: 3 })
        );
        let mut bad = vec![0.5; 9 * 48];
        bad[17] = 1.2;
        assert!(matches!(
            LightField::new(LfDims::new(3, 3, 4, 4), bad),
            Err(LfError::ValueOutOfRange { index: 17, .. })
        ));
        let mut nan = vec![0.5; 9 * 48];
        nan[3] = f64::NAN;
        assert!(LightField::new(LfDims::new(3, 3, 4, 4), nan).is_err());
        assert!(matches!(
            LightField::new(LfDims::new(3, 3, 4, 4), vec![0.5; 10]),
            Err(LfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sai_round_trip_is_bit_exact() {
        let lf = ramp_lf(LfDims::new(3, 5, 4, 6));
        let views = lf.views();
        let rebuilt = LightField::from_views(3, 5, &views).unwrap();
        assert_eq!(rebuilt, lf);
        assert_eq!(lf.sai(1, 2).unwrap(), lf.center_view());
        assert_eq!(lf.sai(3, 0), Err(LfError::IndexOutOfRange(3, 0)));
    }

    #[test]
    fn epi_shapes_and_content() {
        let lf = ramp_lf(LfDims::new(3, 5, 4, 6));
        let h = lf.epi(EpiOrientation::Horizontal, 1, 2).unwrap();
        assert_eq!(h.image.shape(), (5, 6, 3));
        assert_eq!(h.image.pixel(3, 4), lf.sai(1, 3).unwrap().pixel(2, 4));
        let v = lf.epi(EpiOrientation::Vertical, 4, 5).unwrap();
        assert_eq!(v.image.shape(), (3, 4, 3));
        assert_eq!(v.image.pixel(2, 1), lf.sai(2, 4).unwrap().pixel(1, 5));
        assert!(lf.epi(EpiOrientation::Vertical, 5, 0).is_err());
        assert!(lf.epi(EpiOrientation::Horizontal, 0, 4).is_err());
    }

    #[test]
    fn constant_lf_gives_constant_epi() {
        let lf = LightField::new(LfDims::new(3, 3, 5, 5), vec![0.25; 9 * 75]).unwrap();
        let epi = lf.epi(EpiOrientation::Horizontal, 0, 0).unwrap();
        assert!(epi.image.as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn eq1_hand_value() {
        let rig = CameraRig::new(35.0, 0.1, 32.0, 512).unwrap();
        let depth = DepthMap::constant(1, 1, 10.0).unwrap();
        assert_eq!(disparity_from_depth(&rig, &depth).values()[0], 5.6);
        let back = depth_from_disparity(&rig, &DisparityMap::constant(1, 1, 5.6), DEFAULT_MIN_DISPARITY);
        assert!((back.values[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn eq1_limits() {
        let rig = CameraRig::new(35.0, 0.1, 32.0, 512).unwrap();
        assert!(rig.disparity_at(1e12).abs() < 1e-9);
        for depth in [0.3, 1.0, 7.5, 123.0] {
            assert_eq!(rig.disparity_at(2.0 * depth), rig.disparity_at(depth) / 2.0);
        }
    }

    #[test]
    fn zero_disparity_is_masked() {
        let rig = CameraRig::new(35.0, 0.1, 32.0, 512).unwrap();
        let disp = DisparityMap::dense(1, 3, vec![0.0, 1e-7, 2.0]).unwrap();
        let depth = depth_from_disparity(&rig, &disp, DEFAULT_MIN_DISPARITY);
        assert_eq!(depth.valid, vec![false, false, true]);
        let filled = depth.fill_nearest().unwrap();
        assert!(filled.values().iter().all(|&v| v == depth.values[2]));
    }

    #[test]
    fn rig_helper_respects_budget() {
        let rig = CameraRig::for_depth_range(1.5, 6.0, 256, 4.0).unwrap();
        let lo = rig.disparity_at(6.0) - rig.zero_parallax;
        let hi = rig.disparity_at(1.5) - rig.zero_parallax;
        assert!((hi - lo - 4.0).abs() < 1e-9);
        assert!(lo >= -3.0 && hi <= 3.0, "{lo} {hi}");
        assert_eq!(rig.zero_parallax.fract(), 0.0);
    }

    #[test]
    fn warp_identity_and_shape_check() {
        let img = Image::from_fn(5, 7, 3, |y, x, c| (y * 7 + x + c) as f64 / 40.0);
        let (out, valid) = warp_view(&img, &DisparityMap::constant(5, 7, 0.0), (1.0, -2.0)).unwrap();
        assert_eq!(out, img);
        assert!(valid.iter().all(|&v| v));
        assert!(warp_view(&img, &DisparityMap::constant(4, 7, 0.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn warp_integer_and_half_pixel_shift() {
        let img = Image::from_fn(4, 10, 1, |_, x, _| x as f64 / 9.0);
        let (out, valid) = warp_view(&img, &DisparityMap::constant(4, 10, 1.0), (0.0, 1.0)).unwrap();
        for x in 0..9 {
            assert!((out.get(2, x, 0) - (x + 1) as f64 / 9.0).abs() < 1e-6);
            assert!(valid[2 * 10 + x]);
        }
        assert!(!valid[2 * 10 + 9]);
        let (half, _) = warp_view(&img, &DisparityMap::constant(4, 10, 0.5), (0.0, 1.0)).unwrap();
        for x in 0..9 {
            assert!((half.get(1, x, 0) - (x as f64 + 0.5) / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refocus_matches_mean_of_warps() {
        let lf = ramp_lf(LfDims::new(3, 3, 6, 7));
        let d = lf.dims();
        for slope in [-0.7, 0.0, 0.35, 1.0] {
            let focused = refocus(&lf, slope);
            let disp = DisparityMap::constant(d.height, d.width, slope);
            let warps: Vec<_> = d
                .angular_indices()
                .map(|(v, u)| warp_view(&lf.sai(v, u).unwrap(), &disp, d.offset(v, u)).unwrap())
                .collect();
            for i in 0..d.height * d.width {
                let n = warps.iter().filter(|(_, ok)| ok[i]).count() as f64;
                for c in 0..3 {
                    let mean: f64 = warps
                        .iter()
                        .filter(|(_, ok)| ok[i])
                        .map(|(img, _)| img.as_slice()[i * 3 + c])
                        .sum::<f64>()
                        / n;
                    assert!((focused.as_slice()[i * 3 + c] - mean).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn recenter_identity_and_inverse() {
        let lf = ramp_lf(LfDims::new(3, 3, 8, 9));
        let same = recenter_zero_parallax(&lf, 0.0);
        assert_eq!(same.lf, lf);
        assert!(same.valid.iter().all(|&v| v));

        let fwd = recenter_zero_parallax(&lf, 1.0);
        assert_eq!(fwd.lf.center_view(), lf.center_view());
        let back = recenter_zero_parallax(&fwd.lf, -1.0);
        let d = lf.dims();
        for (v, u) in d.angular_indices() {
            let a = lf.sai(v, u).unwrap();
            let b = back.lf.sai(v, u).unwrap();
            for y in 2..d.height - 2 {
                for x in 2..d.width - 2 {
                    for c in 0..3 {
                        assert!((a.get(y, x, c) - b.get(y, x, c)).abs() < 1e-4);
                    }
                }
            }
        }
    }
}
