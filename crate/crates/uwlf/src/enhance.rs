//! Physical enhancement and the progressive depth/enhancement loop.
//!
//! Each stage estimates central-view disparity, converts it to depth,
//! estimates the background light `A` from the farthest pixels and the
//! attenuation `beta` from how `ln|A - I|` falls off with depth, then inverts
//! the formation model in every view. The enhanced light field is the input
//! of the next stage, which re-estimates disparity and the water parameters
//! from it. The inversion is pixelwise, so it scales signal and noise alike
//! and later disparities are rarely more accurate than the first; the later
//! stages mostly correct `A` and `beta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degrade::DegradationParams;
use crate::disparity::{estimate_disparity, DisparityConfig, DisparityError};
use crate::image::{fill_nearest, Image};
use crate::lightfield::{
    depth_from_disparity, warp_view, CameraRig, DepthMap, DisparityMap, LfError, LightField, CHANNELS,
    DEFAULT_MIN_DISPARITY,
};
use crate::metrics::{disparity_error, psnr_lf};

/// Pixels whose `|A - I|` is at most this are left out of the attenuation fit.
pub const BETA_FIT_EPSILON: f64 = 1e-3;
/// Fewest samples per channel the attenuation fit accepts.
pub const MIN_BETA_SAMPLES: usize = 100;
/// Fraction of largest residuals dropped by the trimmed fit.
pub const TRIM_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnhanceError {
    #[error("invalid enhancement config: {0}")]
    InvalidConfig(String),
    #[error("no pixels to estimate the background light from")]
    EmptyFarSet,
    #[error("channel {channel}: {count} usable pixels for the attenuation fit, need {MIN_BETA_SAMPLES}")]
    InsufficientSamples { channel: usize, count: usize },
    #[error("disparity gives no finite positive depth anywhere")]
    NoValidDepth,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Disparity(#[from] DisparityError),
    #[error(transparent)]
    LightField(#[from] LfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaFit {
    #[default]
    LeastSquares,
    /// Least squares, then a refit without the largest tenth of residuals.
    RobustTrimmed,
}

/// Known model parameters, replacing estimation. Used for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOverride {
    pub beta: [f64; 3],
    pub background_light: [f64; 3],
    /// Per-view depth in row-major view order. `None` warps the centre depth.
    pub depths: Option<Vec<DepthMap>>,
}

impl OracleOverride {
    pub fn from_params(params: &DegradationParams) -> Self {
        Self {
            beta: params.beta,
            background_light: params.background_light,
            depths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceConfig {
    pub stages: usize,
    pub t_min: f64,
    pub far_percentile: f64,
    pub beta_fit: BetaFit,
    /// Rounds of background-light refinement after the far-pixel estimate.
    pub background_refinement: usize,
    /// Fraction of nearest and of farthest pixels compared by the refinement.
    pub consistency_quantile: f64,
    pub disparity: DisparityConfig,
    #[serde(skip)]
    pub oracle: Option<OracleOverride>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            stages: 3,
            t_min: 0.05,
            far_percentile: 0.01,
            beta_fit: BetaFit::default(),
            background_refinement: 5,
            consistency_quantile: 0.1,
            disparity: DisparityConfig::default(),
            oracle: None,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.stages == 0 {
            return Err(EnhanceError::InvalidConfig("stages must be at least 1".into()));
        }
        if !(self.t_min > 0.0 && self.t_min <= 1.0) {
            return Err(EnhanceError::InvalidConfig(format!("t_min {} outside (0, 1]", self.t_min)));
        }
        if !(self.far_percentile > 0.0 && self.far_percentile <= 0.5) {
            return Err(EnhanceError::InvalidConfig(format!(
                "far_percentile {} outside (0, 0.5]",
                self.far_percentile
            )));
        }
        if !(self.consistency_quantile > 0.0 && self.consistency_quantile <= 0.5) {
            return Err(EnhanceError::InvalidConfig(format!(
                "consistency_quantile {} outside (0, 0.5]",
                self.consistency_quantile
            )));
        }
        Ok(())
    }
}

/// What one stage estimated and, given a reference, how well it did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// 1-based.
    pub stage_index: usize,
    pub beta: [f64; 3],
    pub background_light: [f64; 3],
    /// Channels whose attenuation fit had too few samples and fell back to 0.
    pub beta_fallback: [bool; 3],
    /// Error of the disparity this stage estimated.
    pub disparity_mae: Option<f64>,
    /// PSNR of this stage's output against the clean light field.
    pub psnr: Option<f64>,
}

impl StageReport {
    pub fn any_fallback(&self) -> bool {
        self.beta_fallback.iter().any(|&b| b)
    }
}

fn check_depth_shape(img: &Image, depth: &DepthMap) -> Result<(), EnhanceError> {
    if img.height() != depth.height() || img.width() != depth.width() {
        return Err(EnhanceError::ShapeMismatch(format!(
            "image {}x{} vs depth {}x{}",
            img.height(),
            img.width(),
            depth.height(),
            depth.width()
        )));
    }
    Ok(())
}

/// Mean colour of the farthest pixels: those whose depth is at least the
/// depth ranked `ceil(far_percentile * N)` from the far end. Ties at the
/// cut are included, so a constant depth pools the whole image.
pub fn estimate_background_light(img: &Image, depth: &DepthMap, far_percentile: f64) -> Result<[f64; 3], EnhanceError> {
    check_depth_shape(img, depth)?;
    let n = img.pixel_count();
    if n == 0 {
        return Err(EnhanceError::EmptyFarSet);
    }
    let mut sorted = depth.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rank = ((far_percentile * n as f64).ceil() as usize).clamp(1, n);
    let cut = sorted[rank - 1];
    let mut sum = [0.0; CHANNELS];
    let mut count = 0usize;
    for (i, &d) in depth.values().iter().enumerate() {
        if d >= cut {
            for (c, s) in sum.iter_mut().enumerate() {
                *s += img.as_slice()[i * CHANNELS + c];
            }
            count += 1;
        }
    }
    Ok(sum.map(|s| (s / count as f64).clamp(0.0, 1.0)))
}

/// Slope of the least-squares line through `(x, y)`. Zero when `x` is constant.
fn ls_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Attenuation of one channel: minus the slope of `ln|A - I|` against depth.
pub fn estimate_beta_channel(
    img: &Image,
    depth: &DepthMap,
    channel: usize,
    background: f64,
    fit: BetaFit,
) -> Result<f64, EnhanceError> {
    check_depth_shape(img, depth)?;
    let mut points: Vec<(f64, f64)> = depth
        .values()
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| {
            let r = (background - img.as_slice()[i * CHANNELS + channel]).abs();
            (r > BETA_FIT_EPSILON).then(|| (d, r.ln()))
        })
        .collect();
    if points.len() < MIN_BETA_SAMPLES {
        return Err(EnhanceError::InsufficientSamples {
            channel,
            count: points.len(),
        });
    }
    let (mut slope, intercept) = ls_slope(&points);
    if fit == BetaFit::RobustTrimmed {
        let drop = (TRIM_FRACTION * points.len() as f64).floor() as usize;
        points.sort_by(|a, b| {
            let ra = (a.1 - intercept - slope * a.0).abs();
            let rb = (b.1 - intercept - slope * b.0).abs();
            ra.total_cmp(&rb)
        });
        points.truncate(points.len() - drop);
        slope = ls_slope(&points).0;
    }
    Ok((-slope).max(0.0))
}

/// Per-channel attenuation; fails if any channel lacks samples.
pub fn estimate_beta(img: &Image, depth: &DepthMap, background: [f64; 3], fit: BetaFit) -> Result<[f64; 3], EnhanceError> {
    let mut beta = [0.0; 3];
    for (c, b) in beta.iter_mut().enumerate() {
        *b = estimate_beta_channel(img, depth, c, background[c], fit)?;
    }
    Ok(beta)
}

/// Background light under which the restored scene has the same mean
/// colour among its nearest and its farthest pixels.
///
/// The far-pixel mean only equals `A` where the water column is opaque;
/// at moderate depth it still carries `T (J - A)`. Restoring with
/// `J = (I - A) / T + A`, equal near and far means give per channel
/// `A = (mean_far(I/T) - mean_near(I/T)) / (mean_far(1/T) - mean_near(1/T))`.
/// Channels without enough transmission contrast between the two sets keep
/// the `current` value.
pub fn refine_background_light(
    img: &Image,
    depth: &DepthMap,
    beta: [f64; 3],
    current: [f64; 3],
    quantile: f64,
    t_min: f64,
) -> Result<[f64; 3], EnhanceError> {
    check_depth_shape(img, depth)?;
    let n = depth.values().len();
    if n == 0 {
        return Err(EnhanceError::EmptyFarSet);
    }
    let mut sorted = depth.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((quantile * n as f64) as usize).min(n - 1);
    let (near_cut, far_cut) = (sorted[k], sorted[n - 1 - k]);
    let mut out = current;
    for (c, a) in out.iter_mut().enumerate() {
        let (mut far_i, mut far_t, mut far_n) = (0.0, 0.0, 0.0);
        let (mut near_i, mut near_t, mut near_n) = (0.0, 0.0, 0.0);
        for (i, &d) in depth.values().iter().enumerate() {
            let inv_t = 1.0 / (-beta[c] * d).exp().max(t_min);
            let v = img.as_slice()[i * CHANNELS + c];
            if d >= far_cut {
                far_i += v * inv_t;
                far_t += inv_t;
                far_n += 1.0;
            }
            if d <= near_cut {
                near_i += v * inv_t;
                near_t += inv_t;
                near_n += 1.0;
            }
        }
        let leverage = far_t / far_n - near_t / near_n;
        if leverage > 1e-3 {
            *a = ((far_i / far_n - near_i / near_n) / leverage).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// `J = (I - A (1 - T)) / max(T, t_min)` with `T = exp(-beta D)`, clamped to `[0, 1]`.
pub fn invert_model(img: &Image, depth: &DepthMap, beta: [f64; 3], background: [f64; 3], t_min: f64) -> Image {
    assert_eq!(img.height(), depth.height(), "depth height");
    assert_eq!(img.width(), depth.width(), "depth width");
    let ch = img.channels();
    let mut out = img.clone();
    for (i, px) in out.as_mut_slice().chunks_exact_mut(ch).enumerate() {
        let d = depth.values()[i];
        for (c, v) in px.iter_mut().enumerate() {
            let t = (-beta[c] * d).exp();
            let j = (*v - background[c] * (1.0 - t)) / t.max(t_min);
            *v = if j.is_finite() { j.clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    out
}

/// Central depth from a disparity map relative to the rig's zero-parallax
/// plane. Pixels at or beyond infinity take the nearest valid depth.
pub fn center_depth(rig: &CameraRig, disparity: &DisparityMap) -> Result<DepthMap, EnhanceError> {
    depth_from_disparity(rig, &disparity.shifted(rig.zero_parallax), DEFAULT_MIN_DISPARITY)
        .fill_nearest()
        .ok_or(EnhanceError::NoValidDepth)
}

/// Depth of every view, obtained by warping the central depth along the
/// central disparity. Pixels the warp cannot reach take the nearest value.
pub fn view_depths(lf: &LightField, depth: &DepthMap, disparity: &DisparityMap) -> Result<Vec<DepthMap>, EnhanceError> {
    let dims = lf.dims();
    let img = depth.to_image();
    dims.angular_indices()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(v, u)| {
            let (dv, du) = dims.offset(v, u);
            let (warped, valid) = warp_view(&img, disparity, (-dv, -du))?;
            let mut values = warped.into_vec();
            fill_nearest(&mut values, &valid, dims.height, dims.width).ok_or(EnhanceError::NoValidDepth)?;
            Ok(DepthMap::new(dims.height, dims.width, values)?)
        })
        .collect()
}

/// Everything one stage produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub lf: LightField,
    pub beta: [f64; 3],
    pub background_light: [f64; 3],
    pub beta_fallback: [bool; 3],
}

/// One enhancement pass given the central disparity.
pub fn enhance_stage(
    lf: &LightField,
    center_disparity: &DisparityMap,
    rig: &CameraRig,
    config: &EnhanceConfig,
) -> Result<LightField, EnhanceError> {
    Ok(enhance_stage_detailed(lf, center_disparity, rig, config)?.lf)
}

/// [`enhance_stage`] with the estimated parameters. A channel with too
/// few samples for the attenuation fit is left unattenuated (`beta = 0`)
/// and flagged instead of failing the stage.
pub fn enhance_stage_detailed(
    lf: &LightField,
    center_disparity: &DisparityMap,
    rig: &CameraRig,
    config: &EnhanceConfig,
) -> Result<StageOutcome, EnhanceError> {
    config.validate()?;
    let dims = lf.dims();
    if center_disparity.height() != dims.height || center_disparity.width() != dims.width {
        return Err(EnhanceError::ShapeMismatch(format!(
            "disparity {}x{} vs views {}x{}",
            center_disparity.height(),
            center_disparity.width(),
            dims.height,
            dims.width
        )));
    }
    let center = lf.center_view();
    let mut beta_fallback = [false; 3];
    let (beta, background_light) = match &config.oracle {
        Some(o) => (o.beta, o.background_light),
        None => {
            let depth = center_depth(rig, center_disparity)?;
            let mut a = estimate_background_light(&center, &depth, config.far_percentile)?;
            let fit = |a: [f64; 3], fallback: &mut [bool; 3]| -> Result<[f64; 3], EnhanceError> {
                let mut beta = [0.0; 3];
                for c in 0..CHANNELS {
                    fallback[c] = false;
                    match estimate_beta_channel(&center, &depth, c, a[c], config.beta_fit) {
                        Ok(b) => beta[c] = b,
                        Err(EnhanceError::InsufficientSamples { .. }) => fallback[c] = true,
                        Err(e) => return Err(e),
                    }
                }
                Ok(beta)
            };
            let mut beta = fit(a, &mut beta_fallback)?;
            for _ in 0..config.background_refinement {
                a = refine_background_light(&center, &depth, beta, a, config.consistency_quantile, config.t_min)?;
                beta = fit(a, &mut beta_fallback)?;
            }
            (beta, a)
        }
    };
    let depths = match config.oracle.as_ref().and_then(|o| o.depths.clone()) {
        Some(d) => {
            if d.len() != dims.view_count() {
                return Err(EnhanceError::ShapeMismatch(format!(
                    "{} oracle depth maps for {} views",
                    d.len(),
                    dims.view_count()
                )));
            }
            d
        }
        None => {
            let depth = center_depth(rig, center_disparity)?;
            view_depths(lf, &depth, center_disparity)?
        }
    };
    for d in &depths {
        if d.height() != dims.height || d.width() != dims.width {
            return Err(EnhanceError::ShapeMismatch("oracle depth map size".into()));
        }
    }
    let out = lf.map_views(|(v, u), view| {
        invert_model(view, &depths[v * dims.cols + u], beta, background_light, config.t_min)
    });
    Ok(StageOutcome {
        lf: out,
        beta,
        background_light,
        beta_fallback,
    })
}

/// Ground truth for per-stage reports.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub clean: Option<&'a LightField>,
    /// Disparity relative to the zero-parallax plane, like the estimates.
    pub disparity: Option<&'a DisparityMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Progressive {
    pub lf: LightField,
    /// Disparity estimated by the last stage.
    pub disparity: DisparityMap,
    /// Disparity estimated by each stage, in order.
    pub stage_disparities: Vec<DisparityMap>,
    pub reports: Vec<StageReport>,
}

/// Alternates disparity estimation and enhancement for `config.stages`
/// stages, feeding each stage the previous stage's output.
pub fn progressive_enhance(
    lf_degraded: &LightField,
    rig: &CameraRig,
    config: &EnhanceConfig,
    reference: Option<Reference<'_>>,
) -> Result<Progressive, EnhanceError> {
    config.validate()?;
    let mut current = lf_degraded.clone();
    let mut reports = Vec::with_capacity(config.stages);
    let mut stage_disparities = Vec::with_capacity(config.stages);
    for stage in 1..=config.stages {
        let disparity = estimate_disparity(&current, &config.disparity)?.disparity;
        let outcome = enhance_stage_detailed(&current, &disparity, rig, config)?;
        let disparity_mae = reference
            .and_then(|r| r.disparity)
            .and_then(|gt| disparity_error(&disparity, gt).ok())
            .map(|s| s.mae);
        let psnr = reference
            .and_then(|r| r.clean)
            .and_then(|clean| psnr_lf(&outcome.lf, clean).ok());
        reports.push(StageReport {
            stage_index: stage,
            beta: outcome.beta,
            background_light: outcome.background_light,
            beta_fallback: outcome.beta_fallback,
            disparity_mae,
            psnr,
        });
        stage_disparities.push(disparity);
        current = outcome.lf;
    }
    Ok(Progressive {
        lf: current,
        disparity: stage_disparities.last().cloned().expect("at least one stage"),
        stage_disparities,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::degrade_view;

    fn ramp_depth(h: usize, w: usize) -> DepthMap {
        DepthMap::new(h, w, (0..h * w).map(|i| 1.0 + 5.0 * (i % w) as f64 / (w - 1) as f64).collect()).unwrap()
    }

    fn params(beta: [f64; 3], a: [f64; 3]) -> DegradationParams {
        DegradationParams {
            beta,
            background_light: a,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn inversion_hand_value() {
        // T = 0.5 at D = ln 2 with beta = 1
        let img = Image::filled(1, 1, 3, 0.5);
        let depth = DepthMap::constant(1, 1, std::f64::consts::LN_2).unwrap();
        let j = invert_model(&img, &depth, [1.0; 3], [0.2; 3], 0.05);
        for &v in j.as_slice() {
            assert!((v - 0.8).abs() < 1e-12);
        }
        let same = invert_model(&img, &depth, [0.0; 3], [0.2; 3], 0.05);
        assert_eq!(same, img);
    }

    #[test]
    fn background_light_from_far_pixels() {
        let (h, w) = (10, 10);
        let depth = ramp_depth(h, w);
        let img = Image::from_fn(h, w, 3, |_, x, c| if x == w - 1 { [0.1, 0.3, 0.6][c] } else { 0.9 });
        let a = estimate_background_light(&img, &depth, 0.01).unwrap();
        for (got, want) in a.iter().zip([0.1, 0.3, 0.6]) {
            assert!((got - want).abs() < 1e-12);
        }
        let flat = DepthMap::constant(h, w, 2.0).unwrap();
        let a = estimate_background_light(&img, &flat, 0.01).unwrap();
        assert!((a[0] - (0.9 * 0.9 + 0.1 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn constant_scene_beta_is_exact() {
        let (h, w) = (24, 24);
        let depth = ramp_depth(h, w);
        let clean = Image::filled(h, w, 3, 0.7);
        let p = params([0.3, 0.12, 0.05], [0.1, 0.4, 0.6]);
        let degraded = degrade_view(&clean, &depth, &p, 0).unwrap();
        let beta = estimate_beta(&degraded, &depth, p.background_light, BetaFit::LeastSquares).unwrap();
        for c in 0..3 {
            assert!((beta[c] - p.beta[c]).abs() < 1e-6, "{beta:?}");
        }
        let robust = estimate_beta(&degraded, &depth, p.background_light, BetaFit::RobustTrimmed).unwrap();
        for c in 0..3 {
            assert!((robust[c] - p.beta[c]).abs() < 1e-6);
        }
        let undegraded = degrade_view(&clean, &depth, &params([0.0; 3], [0.1, 0.4, 0.6]), 0).unwrap();
        let zero = estimate_beta(&undegraded, &depth, [0.1, 0.4, 0.6], BetaFit::LeastSquares).unwrap();
        assert!(zero.iter().all(|&b| (0.0..1e-12).contains(&b)));
    }

    #[test]
    fn too_few_samples_is_reported() {
        let depth = ramp_depth(5, 5);
        let img = Image::filled(5, 5, 3, 0.2);
        assert_eq!(
            estimate_beta(&img, &depth, [0.1; 3], BetaFit::LeastSquares),
            Err(EnhanceError::InsufficientSamples { channel: 0, count: 25 })
        );
    }

    #[test]
    fn output_stays_in_range_under_floor() {
        let img = Image::from_fn(4, 4, 3, |y, x, c| ((y + x + c) % 5) as f64 / 4.0);
        let depth = DepthMap::constant(4, 4, 50.0).unwrap();
        let j = invert_model(&img, &depth, [2.0; 3], [0.9, 0.1, 0.5], 0.05);
        assert!(j.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn config_validation() {
        assert!(EnhanceConfig::default().validate().is_ok());
        for bad in [
            EnhanceConfig { stages: 0, ..Default::default() },
            EnhanceConfig { t_min: 0.0, ..Default::default() },
            EnhanceConfig { far_percentile: 0.6, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(EnhanceError::InvalidConfig(_))));
        }
    }
}
