//! Image and disparity quality measures.
//!
//! Full-reference: PSNR and SSIM. No-reference underwater scores: UIQM
//! (colourfulness, sharpness and contrast terms) and UCIQE (chroma spread,
//! luminance contrast and saturation in CIELab). Disparity: mean absolute
//! error and bad-pixel ratio over mutually valid pixels.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;
use crate::lightfield::{DisparityMap, LightField};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 99.0;
/// Error above which a disparity pixel counts as bad.
pub const BADPIX_THRESHOLD: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("image is {0}x{1}; SSIM needs at least 11x11")]
    TooSmall(usize, usize),
    #[error("no pixel is valid in both disparity maps")]
    NoValidOverlap,
}

fn check_shape(a: &Image, b: &Image) -> Result<(), MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

fn check_lf_shape(a: &LightField, b: &LightField) -> Result<(), MetricsError> {
    let (da, db) = (a.dims(), b.dims());
    if da != db {
        return Err(MetricsError::ShapeMismatch(
            (da.rows * da.height, da.cols * da.width, 3),
            (db.rows * db.height, db.cols * db.width, 3),
        ));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_shape(a, b)?;
    let sum: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.as_slice().len() as f64)
}

/// Peak signal-to-noise ratio with peak 1, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// PSNR of every view, row-major.
pub fn psnr_views(a: &LightField, b: &LightField) -> Result<Vec<f64>, MetricsError> {
    check_lf_shape(a, b)?;
    Ok(a.views().iter().zip(b.views().iter()).map(|(x, y)| psnr(x, y).expect("same dims")).collect())
}

/// Mean of the per-view PSNR.
pub fn psnr_lf(a: &LightField, b: &LightField) -> Result<f64, MetricsError> {
    let v = psnr_views(a, b)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SsimMode {
    /// Single score on Rec.601 luma.
    #[default]
    Luma,
    /// Mean of the per-channel scores.
    PerChannel,
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Normalised 1-D Gaussian taps of the SSIM window.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let t = i as f64 - half;
        *v = (-t * t / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Mean structural similarity over all fully contained 11x11 windows.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    ssim_with(a, b, SsimMode::Luma)
}

pub fn ssim_with(a: &Image, b: &Image, mode: SsimMode) -> Result<f64, MetricsError> {
    check_shape(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(a.height(), a.width()));
    }
    match mode {
        SsimMode::Luma => Ok(ssim_plane(&a.luma(), &b.luma())),
        SsimMode::PerChannel => {
            let n = a.channels();
            Ok((0..n).map(|c| ssim_plane(&a.channel(c), &b.channel(c))).sum::<f64>() / n as f64)
        }
    }
}

/// Mean SSIM over views.
pub fn ssim_lf(a: &LightField, b: &LightField) -> Result<f64, MetricsError> {
    let v = ssim_views(a, b)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

pub fn ssim_views(a: &LightField, b: &LightField) -> Result<Vec<f64>, MetricsError> {
    check_lf_shape(a, b)?;
    a.views().iter().zip(b.views().iter()).map(|(x, y)| ssim(x, y)).collect()
}

/// Valid-region separable filtering of a one-channel plane.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &Image, b: &Image) -> f64 {
    let (h, w) = (a.height(), a.width());
    let k = ssim_kernel();
    let xa = a.as_slice();
    let xb = b.as_slice();
    let prod = |f: &dyn Fn(usize) -> f64| (0..h * w).map(f).collect::<Vec<f64>>();
    let mu_a = filter_valid(xa, h, w, &k);
    let mu_b = filter_valid(xb, h, w, &k);
    let aa = filter_valid(&prod(&|i| xa[i] * xa[i]), h, w, &k);
    let bb = filter_valid(&prod(&|i| xb[i] * xb[i]), h, w, &k);
    let ab = filter_valid(&prod(&|i| xa[i] * xb[i]), h, w, &k);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / mu_a.len() as f64
}

/// Block size of the EME and AMEE terms.
pub const UIQM_BLOCK: usize = 8;
const UIQM_C1: f64 = 0.0282;
const UIQM_C2: f64 = 0.2953;
const UIQM_C3: f64 = 3.5753;
const UICM_ALPHA_LOW: f64 = 0.1;
const UICM_ALPHA_HIGH: f64 = 0.1;

/// The three UIQM terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UiqmTerms {
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
    pub uiqm: f64,
}

/// Underwater image quality measure on the 0..255 scale.
pub fn uiqm(img: &Image) -> f64 {
    uiqm_terms(img).uiqm
}

pub fn uiqm_terms(img: &Image) -> UiqmTerms {
    assert_eq!(img.channels(), 3, "UIQM needs an RGB image");
    let (h, w) = (img.height(), img.width());
    let scaled: Vec<f64> = img.as_slice().iter().map(|v| v * 255.0).collect();
    let rgb = |i: usize| (scaled[3 * i], scaled[3 * i + 1], scaled[3 * i + 2]);

    let rg: Vec<f64> = (0..h * w).map(|i| rgb(i).0 - rgb(i).1).collect();
    let yb: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, g, b) = rgb(i);
            (r + g) / 2.0 - b
        })
        .collect();
    let (mu_rg, var_rg) = trimmed_stats(&rg);
    let (mu_yb, var_yb) = trimmed_stats(&yb);
    let uicm = -0.0268 * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt() + 0.1586 * (var_rg + var_yb).sqrt();

    let mut uism = 0.0;
    for (c, lambda) in [0.299, 0.587, 0.114].into_iter().enumerate() {
        let plane: Vec<f64> = (0..h * w).map(|i| scaled[3 * i + c]).collect();
        let grad = sobel_magnitude(&plane, h, w);
        let edge: Vec<f64> = grad.iter().zip(&plane).map(|(g, p)| g * p).collect();
        uism += lambda * eme(&edge, h, w);
    }

    let luma: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, g, b) = rgb(i);
            0.299 * r + 0.587 * g + 0.114 * b
        })
        .collect();
    let uiconm = amee(&luma, h, w);
    UiqmTerms {
        uicm,
        uism,
        uiconm,
        uiqm: UIQM_C1 * uicm + UIQM_C2 * uism + UIQM_C3 * uiconm,
    }
}

/// Asymmetric alpha-trimmed mean, and the mean squared deviation from it.
fn trimmed_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = (UICM_ALPHA_LOW * n as f64).ceil() as usize;
    let hi = (UICM_ALPHA_HIGH * n as f64).floor() as usize;
    let kept = &sorted[lo.min(n)..n.saturating_sub(hi).max(lo.min(n))];
    let mu = if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    };
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    (mu, var)
}

/// Sobel gradient magnitude with replicated borders.
fn sobel_magnitude(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        plane[yy * w + xx]
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Min and max over each block of the tiling (partial blocks at the edges included).
fn block_extrema(plane: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for by in (0..h).step_by(UIQM_BLOCK) {
        for bx in (0..w).step_by(UIQM_BLOCK) {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for y in by..(by + UIQM_BLOCK).min(h) {
                for &v in &plane[y * w + bx..y * w + (bx + UIQM_BLOCK).min(w)] {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            out.push((lo, hi));
        }
    }
    out
}

/// Measure of enhancement: `2/(k1 k2) * sum ln(max/min)`, blocks with a zero extreme skipped.
fn eme(plane: &[f64], h: usize, w: usize) -> f64 {
    let blocks = block_extrema(plane, h, w);
    let sum: f64 = blocks
        .iter()
        .filter(|(lo, hi)| *lo > 0.0 && *hi > 0.0)
        .map(|(lo, hi)| (hi / lo).ln())
        .sum();
    2.0 * sum / blocks.len() as f64
}

/// Michelson-contrast entropy: `-1/(k1 k2) * sum x ln x`, `x = (max-min)/(max+min)`.
fn amee(plane: &[f64], h: usize, w: usize) -> f64 {
    let blocks = block_extrema(plane, h, w);
    let sum: f64 = blocks
        .iter()
        .map(|&(lo, hi)| {
            let (num, den) = (hi - lo, hi + lo);
            if num == 0.0 || den == 0.0 {
                0.0
            } else {
                let x = num / den;
                x * x.ln()
            }
        })
        .sum();
    -sum / blocks.len() as f64
}

const UCIQE_C1: f64 = 0.4680;
const UCIQE_C2: f64 = 0.2745;
const UCIQE_C3: f64 = 0.2576;

/// The three UCIQE terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UciqeTerms {
    pub chroma_std: f64,
    pub luma_contrast: f64,
    pub saturation_mean: f64,
    pub uciqe: f64,
}

/// Underwater colour image quality evaluation: chroma spread, lightness
/// contrast (1% to 99% quantile) and mean saturation `C/L`, all in CIELab
/// of the sRGB-decoded image.
pub fn uciqe(img: &Image) -> f64 {
    uciqe_terms(img).uciqe
}

pub fn uciqe_terms(img: &Image) -> UciqeTerms {
    assert_eq!(img.channels(), 3, "UCIQE needs an RGB image");
    let n = img.pixel_count();
    let mut lightness = Vec::with_capacity(n);
    let (mut count, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    let mut sat_sum = 0.0;
    for p in img.as_slice().chunks_exact(3) {
        let (l, a, b) = lab(srgb_to_linear(p[0]), srgb_to_linear(p[1]), srgb_to_linear(p[2]));
        let (l, chroma) = (l / 100.0, (a * a + b * b).sqrt() / 100.0);
        count += 1;
        let delta = chroma - mean;
        mean += delta / count as f64;
        m2 += delta * (chroma - mean);
        sat_sum += if l > 0.0 { chroma / l } else { 0.0 };
        lightness.push(l);
    }
    let chroma_std = (m2 / n as f64).sqrt();
    lightness.sort_by(f64::total_cmp);
    let q = |p: f64| lightness[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let luma_contrast = q(0.99) - q(0.01);
    let saturation_mean = sat_sum / n as f64;
    UciqeTerms {
        chroma_std,
        luma_contrast,
        saturation_mean,
        uciqe: UCIQE_C1 * chroma_std + UCIQE_C2 * luma_contrast + UCIQE_C3 * saturation_mean,
    }
}

/// Removes the sRGB transfer curve; image samples are treated as display-encoded.
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

// Linear RGB to XYZ (sRGB primaries, D65 white).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// CIELab of a linear RGB triple. Neutral inputs give `a = b = 0` exactly.
pub fn lab(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let m = RGB_TO_XYZ;
    let xn = m[0][0] + m[0][1] + m[0][2];
    let zn = m[2][0] + m[2][1] + m[2][2];
    let y = m[1][0] * r + m[1][1] * g + m[1][2] * b;
    // X/Xn - Y and Z/Zn - Y have coefficients summing to zero
    let dx = (m[0][0] / xn - m[1][0]) * (r - b) + (m[0][1] / xn - m[1][1]) * (g - b);
    let dz = (m[2][0] / zn - m[1][0]) * (r - b) + (m[2][1] / zn - m[1][1]) * (g - b);
    let fy = lab_f(y);
    let l = (116.0 * fy - 16.0).max(0.0);
    (l, 500.0 * (lab_f(y + dx) - fy), 200.0 * (fy - lab_f(y + dz)))
}

fn lab_f(t: f64) -> f64 {
    const EPS: f64 = 216.0 / 24389.0;
    if t > EPS {
        t.cbrt()
    } else {
        t * (24389.0 / 27.0) / 116.0 + 16.0 / 116.0
    }
}

/// Disparity error over pixels valid in both maps (and inside `mask`, when given).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityErrorStats {
    pub mae: f64,
    pub badpix: f64,
    pub count: usize,
}

pub fn disparity_error(est: &DisparityMap, gt: &DisparityMap) -> Result<DisparityErrorStats, MetricsError> {
    disparity_error_masked(est, gt, None)
}

pub fn disparity_error_masked(
    est: &DisparityMap,
    gt: &DisparityMap,
    mask: Option<&[bool]>,
) -> Result<DisparityErrorStats, MetricsError> {
    if est.height() != gt.height() || est.width() != gt.width() {
        return Err(MetricsError::ShapeMismatch(
            (est.height(), est.width(), 1),
            (gt.height(), gt.width(), 1),
        ));
    }
    let (mut sum, mut bad, mut count) = (0.0, 0usize, 0usize);
    for i in 0..est.values().len() {
        if !est.valid()[i] || !gt.valid()[i] || mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let e = (est.values()[i] - gt.values()[i]).abs();
        sum += e;
        bad += usize::from(e > BADPIX_THRESHOLD);
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::NoValidOverlap);
    }
    Ok(DisparityErrorStats {
        mae: sum / count as f64,
        badpix: bad as f64 / count as f64,
        count,
    })
}

/// Scores of a result light field against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub psnr_views: Vec<f64>,
    pub ssim: f64,
    pub ssim_views: Vec<f64>,
    /// On the central view of the result.
    pub uiqm: f64,
    pub uciqe: f64,
    pub disparity_mae: Option<f64>,
    pub badpix_ratio: Option<f64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "psnr,ssim,uiqm,uciqe,disparity_mae,badpix_ratio";

    pub fn evaluate(
        result: &LightField,
        reference: &LightField,
        disparity: Option<(&DisparityMap, &DisparityMap)>,
    ) -> Result<Self, MetricsError> {
        let psnr_views = psnr_views(result, reference)?;
        let ssim_views = ssim_views(result, reference)?;
        let center = result.center_view();
        let disp = disparity.map(|(est, gt)| disparity_error(est, gt)).transpose()?;
        Ok(Self {
            psnr: psnr_views.iter().sum::<f64>() / psnr_views.len() as f64,
            ssim: ssim_views.iter().sum::<f64>() / ssim_views.len() as f64,
            psnr_views,
            ssim_views,
            uiqm: uiqm(&center),
            uciqe: uciqe(&center),
            disparity_mae: disp.map(|d| d.mae),
            badpix_ratio: disp.map(|d| d.badpix),
        })
    }

    /// Comma-separated row matching [`Self::CSV_HEADER`]; absent values are empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.psnr,
            self.ssim,
            self.uiqm,
            self.uciqe,
            opt(self.disparity_mae),
            opt(self.badpix_ratio)
        )
    }

    /// Parses a row written by [`Self::csv_row`]. Per-view lists are not part of the row.
    pub fn parse_csv_row(row: &str) -> Option<MetricRow> {
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != 6 {
            return None;
        }
        let req = |s: &str| s.parse::<f64>().ok();
        let opt = |s: &str| if s.is_empty() { Some(None) } else { s.parse::<f64>().ok().map(Some) };
        Some(MetricRow {
            psnr: req(fields[0])?,
            ssim: req(fields[1])?,
            uiqm: req(fields[2])?,
            uciqe: req(fields[3])?,
            disparity_mae: opt(fields[4])?,
            badpix_ratio: opt(fields[5])?,
        })
    }

    pub fn row(&self) -> MetricRow {
        MetricRow {
            psnr: self.psnr,
            ssim: self.ssim,
            uiqm: self.uiqm,
            uciqe: self.uciqe,
            disparity_mae: self.disparity_mae,
            badpix_ratio: self.badpix_ratio,
        }
    }
}

/// The summary columns of a [`MetricReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub psnr: f64,
    pub ssim: f64,
    pub uiqm: f64,
    pub uciqe: f64,
    pub disparity_mae: Option<f64>,
    pub badpix_ratio: Option<f64>,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14}{:>12.4} dB", "PSNR", self.psnr)?;
        writeln!(f, "{:<14}{:>12.4}", "SSIM", self.ssim)?;
        writeln!(f, "{:<14}{:>12.4}", "UIQM", self.uiqm)?;
        writeln!(f, "{:<14}{:>12.4}", "UCIQE", self.uciqe)?;
        if let Some(m) = self.disparity_mae {
            writeln!(f, "{:<14}{:>12.4} px", "disparity MAE", m)?;
        }
        if let Some(b) = self.badpix_ratio {
            writeln!(f, "{:<14}{:>12.4}", "badpix(0.2)", b)?;
        }
        Ok(())
    }
}
