//! Central-view disparity from photo-consistency across sub-light-fields.
//!
//! The light field is split into star-shaped subsets of views through the
//! centre (row, column and both diagonals). For each subset and each
//! disparity hypothesis the views are warped onto the centre and the
//! across-view variance is the matching cost. Winner-take-all with
//! parabolic refinement gives one estimate per subset together with a
//! reliability taken from the relative cost margin; the estimates are fused
//! per pixel by reliability, since a subset whose views see an occluder
//! loses photo-consistency and therefore margin. A guided weighted median cleans
//! the fused map up.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{fill_nearest, Image};
use crate::lightfield::{DisparityMap, LfDims, LightField, CHANNELS};

/// Cost given to pixels where fewer than two views produce a sample.
pub const SENTINEL_COST: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisparityError {
    #[error("no disparity hypotheses")]
    EmptyHypotheses,
    #[error("hypotheses must be finite and strictly increasing")]
    UnorderedHypotheses,
    #[error("sub-light-field has {0} views; matching needs at least two")]
    TooFewViews(usize),
    #[error("sub-light-field must contain the central view")]
    MissingCenter,
    #[error("view ({0}, {1}) is outside the light field")]
    ViewOutOfRange(usize, usize),
    #[error("no estimates to fuse")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("disparity map has no valid pixel")]
    NoValidPixels,
    #[error("channel weights {0:?} must be non-negative with a positive sum")]
    InvalidWeights([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubLfKind {
    HorizontalRow,
    VerticalColumn,
    MainDiagonal,
    AntiDiagonal,
}

impl SubLfKind {
    pub const ALL: [SubLfKind; 4] = [
        SubLfKind::HorizontalRow,
        SubLfKind::VerticalColumn,
        SubLfKind::MainDiagonal,
        SubLfKind::AntiDiagonal,
    ];
}

/// A subset of views through the centre.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubLf {
    pub id: SubLfKind,
    pub views: Vec<(usize, usize)>,
}

impl SubLf {
    pub fn new(dims: LfDims, id: SubLfKind) -> Self {
        let (vc, uc) = dims.center();
        let views = match id {
            SubLfKind::HorizontalRow => (0..dims.cols).map(|u| (vc, u)).collect(),
            SubLfKind::VerticalColumn => (0..dims.rows).map(|v| (v, uc)).collect(),
            SubLfKind::MainDiagonal | SubLfKind::AntiDiagonal => {
                let m = vc.min(uc) as isize;
                (-m..=m)
                    .map(|t| {
                        let v = (vc as isize + t) as usize;
                        let u = if id == SubLfKind::MainDiagonal {
                            (uc as isize + t) as usize
                        } else {
                            (uc as isize - t) as usize
                        };
                        (v, u)
                    })
                    .collect()
            }
        };
        Self { id, views }
    }

    fn check(&self, dims: LfDims) -> Result<(), DisparityError> {
        if let Some(&(v, u)) = self.views.iter().find(|&&(v, u)| v >= dims.rows || u >= dims.cols) {
            return Err(DisparityError::ViewOutOfRange(v, u));
        }
        if !self.views.contains(&dims.center()) {
            return Err(DisparityError::MissingCenter);
        }
        if self.views.len() < 2 {
            return Err(DisparityError::TooFewViews(self.views.len()));
        }
        Ok(())
    }
}

/// Evenly spaced hypotheses `min, min + step, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for HypothesisRange {
    fn default() -> Self {
        Self {
            min: -4.0,
            max: 4.0,
            step: 0.1,
        }
    }
}

impl HypothesisRange {
    /// Values are computed as `i * step` on an integer grid, so `0` is hit
    /// exactly whenever the range straddles it on a step boundary.
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || !(self.max >= self.min) {
            return Vec::new();
        }
        let lo = (self.min / self.step).round() as i64;
        let hi = (self.max / self.step).round() as i64;
        (lo..=hi).map(|i| i as f64 * self.step).collect()
    }
}

/// Per-pixel, per-hypothesis matching cost, stored hypothesis-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub hypotheses: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub cost: Vec<f64>,
    pub sublf_id: Option<SubLfKind>,
}

impl CostVolume {
    pub fn new(hypotheses: Vec<f64>, height: usize, width: usize, cost: Vec<f64>) -> Result<Self, DisparityError> {
        check_hypotheses(&hypotheses)?;
        if cost.len() != hypotheses.len() * height * width {
            return Err(DisparityError::ShapeMismatch(format!(
                "{} costs for {} hypotheses over {height}x{width}",
                cost.len(),
                hypotheses.len()
            )));
        }
        Ok(Self {
            hypotheses,
            height,
            width,
            cost,
            sublf_id: None,
        })
    }

    #[inline]
    pub fn at(&self, h: usize, pixel: usize) -> f64 {
        self.cost[h * self.height * self.width + pixel]
    }
}

/// Per-pixel confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ReliabilityMap {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// A disparity map with its reliability.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub disparity: DisparityMap,
    pub reliability: ReliabilityMap,
}

fn check_hypotheses(h: &[f64]) -> Result<(), DisparityError> {
    if h.is_empty() {
        return Err(DisparityError::EmptyHypotheses);
    }
    if h.iter().any(|v| !v.is_finite()) || h.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DisparityError::UnorderedHypotheses);
    }
    Ok(())
}

/// How raw per-pixel costs are formed and aggregated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Radius of the box window each cost is averaged over; 0 keeps raw costs.
    pub aggregation_radius: usize,
    /// Relative weight of each channel's variance.
    pub channel_weights: [f64; 3],
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            aggregation_radius: 0,
            channel_weights: [1.0; 3],
        }
    }
}

/// Matching cost of one sub-light-field: at every pixel and hypothesis, the
/// mean over channels of the variance of the valid warped samples.
pub fn build_cost_volume(lf: &LightField, sublf: &SubLf, hypotheses: &[f64]) -> Result<CostVolume, DisparityError> {
    let mut volumes = build_cost_volumes(lf, std::slice::from_ref(sublf), hypotheses, &CostParams::default())?;
    Ok(volumes.pop().expect("one volume per sub-light-field"))
}

/// Cost volumes of several sub-light-fields, sharing the warps of views
/// that appear in more than one of them. With non-uniform channel weights
/// the per-channel variances are combined as a weighted mean.
pub fn build_cost_volumes(
    lf: &LightField,
    sublfs: &[SubLf],
    hypotheses: &[f64],
    params: &CostParams,
) -> Result<Vec<CostVolume>, DisparityError> {
    check_hypotheses(hypotheses)?;
    let aggregation_radius = params.aggregation_radius;
    let weight_sum: f64 = params.channel_weights.iter().sum();
    if params.channel_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(weight_sum > 0.0) {
        return Err(DisparityError::InvalidWeights(params.channel_weights));
    }
    let weights = params.channel_weights.map(|w| w / weight_sum);
    let dims = lf.dims();
    for s in sublfs {
        s.check(dims)?;
    }
    let mut unique: Vec<(usize, usize)> = sublfs.iter().flat_map(|s| s.views.iter().copied()).collect();
    unique.sort_unstable();
    unique.dedup();
    let members: Vec<Vec<usize>> = sublfs
        .iter()
        .map(|s| s.views.iter().map(|v| unique.binary_search(v).expect("listed")).collect())
        .collect();
    let views: Vec<Image> = unique.iter().map(|&(v, u)| lf.sai_unchecked(v, u)).collect();
    let offsets: Vec<(f64, f64)> = unique.iter().map(|&(v, u)| dims.offset(v, u)).collect();
    let n = dims.height * dims.width;

    // slices[h][s] = cost of sub-light-field s at hypothesis h
    let slices: Vec<Vec<Vec<f64>>> = hypotheses
        .par_iter()
        .map(|&d| {
            let warped: Vec<(Vec<f64>, Vec<bool>)> = views
                .iter()
                .zip(&offsets)
                .map(|(img, &(dv, du))| shift_view(img, dv * d, du * d))
                .collect();
            members
                .iter()
                .map(|idx| {
                    let raw = variance_cost(&warped, idx, n, &weights);
                    box_mean(&raw, dims.height, dims.width, aggregation_radius)
                })
                .collect()
        })
        .collect();

    Ok(sublfs
        .iter()
        .enumerate()
        .map(|(s, sub)| {
            let mut cost = Vec::with_capacity(hypotheses.len() * n);
            for per_h in &slices {
                cost.extend_from_slice(&per_h[s]);
            }
            CostVolume {
                hypotheses: hypotheses.to_vec(),
                height: dims.height,
                width: dims.width,
                cost,
                sublf_id: Some(sub.id),
            }
        })
        .collect())
}

/// `out(y, x) = img(y + sy, x + sx)`, bilinear; out-of-bounds samples invalid.
fn shift_view(img: &Image, sy: f64, sx: f64) -> (Vec<f64>, Vec<bool>) {
    let n = img.pixel_count();
    let mut out = vec![0.0; n * CHANNELS];
    let mut valid = vec![false; n];
    let w = img.width();
    for y in 0..img.height() {
        for x in 0..w {
            let i = y * w + x;
            valid[i] = img.sample_bilinear(y as f64 + sy, x as f64 + sx, &mut out[i * CHANNELS..(i + 1) * CHANNELS]);
        }
    }
    (out, valid)
}

/// Weighted sum over channels of the population variance across valid samples.
fn variance_cost(warped: &[(Vec<f64>, Vec<bool>)], members: &[usize], n: usize, weights: &[f64; 3]) -> Vec<f64> {
    let mut cost = vec![SENTINEL_COST; n];
    for (i, out) in cost.iter_mut().enumerate() {
        let count = members.iter().filter(|&&m| warped[m].1[i]).count();
        if count < 2 {
            continue;
        }
        let mut total = 0.0;
        for c in 0..CHANNELS {
            let mut sum = 0.0;
            for &m in members {
                if warped[m].1[i] {
                    sum += warped[m].0[i * CHANNELS + c];
                }
            }
            let mean = sum / count as f64;
            let mut sq = 0.0;
            for &m in members {
                if warped[m].1[i] {
                    let e = warped[m].0[i * CHANNELS + c] - mean;
                    sq += e * e;
                }
            }
            total += weights[c] * (sq / count as f64);
        }
        *out = total;
    }
    cost
}

/// Window mean clipped at the borders, computed with a summed-area table.
fn box_mean(values: &[f64], height: usize, width: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return values.to_vec();
    }
    let stride = width + 1;
    let mut table = vec![0.0; (height + 1) * stride];
    for y in 0..height {
        let mut row = 0.0;
        for x in 0..width {
            row += values[y * width + x];
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(height));
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(width));
            let sum = table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0] + table[y0 * stride + x0];
            out[y * width + x] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

/// Index of the winning hypothesis: lowest cost, ties to the hypothesis
/// closest to zero, then to the smaller value.
pub fn wta_index(costs: impl Iterator<Item = f64>, hypotheses: &[f64]) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (h, c) in costs.enumerate() {
        let better = c < best_cost
            || (c == best_cost
                && (hypotheses[h].abs() < hypotheses[best].abs()
                    || (hypotheses[h].abs() == hypotheses[best].abs() && hypotheses[h] < hypotheses[best])));
        if better {
            best = h;
            best_cost = c;
        }
    }
    best
}

/// Parabola through three equally spaced costs; offset of the vertex from
/// the middle sample in units of the spacing, within `[-0.5, 0.5]`.
pub fn parabola_offset(left: f64, mid: f64, right: f64) -> f64 {
    let curvature = left - 2.0 * mid + right;
    if curvature > 0.0 {
        (0.5 * (left - right) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Winner-take-all disparity with sub-hypothesis refinement.
///
/// Reliability is `(second - best) / second`, where `second` is the best
/// cost at least two hypotheses away from the winner (its direct
/// neighbours sit on the same cost valley). Dividing by `second` makes it
/// independent of texture contrast and of the sub-light-field's baseline.
pub fn wta_disparity(cv: &CostVolume) -> Estimate {
    let n = cv.height * cv.width;
    let hyp = &cv.hypotheses;
    let nh = hyp.len();
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut reliability = vec![0.0; n];
    for i in 0..n {
        let best = wta_index((0..nh).map(|h| cv.at(h, i)), hyp);
        let best_cost = cv.at(best, i);
        if best_cost >= SENTINEL_COST {
            continue;
        }
        let mut d = hyp[best];
        if best > 0 && best + 1 < nh {
            let (l, r) = (cv.at(best - 1, i), cv.at(best + 1, i));
            if l < SENTINEL_COST && r < SENTINEL_COST {
                let offset = parabola_offset(l, best_cost, r);
                let spacing = if offset < 0.0 { hyp[best] - hyp[best - 1] } else { hyp[best + 1] - hyp[best] };
                d += offset * spacing;
            }
        }
        let second = (0..nh)
            .filter(|&h| h.abs_diff(best) >= 2)
            .map(|h| cv.at(h, i))
            .fold(f64::INFINITY, f64::min);
        values[i] = d;
        valid[i] = true;
        reliability[i] = if second.is_finite() && second > 0.0 {
            ((second - best_cost) / second).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    Estimate {
        disparity: DisparityMap::new(cv.height, cv.width, values, valid).expect("finite hypotheses"),
        reliability: ReliabilityMap {
            height: cv.height,
            width: cv.width,
            values: reliability,
        },
    }
}

/// Per pixel, keeps the valid estimate with the highest reliability (the
/// earliest one on ties).
pub fn fuse(estimates: &[Estimate]) -> Result<Estimate, DisparityError> {
    let first = estimates.first().ok_or(DisparityError::EmptyInput)?;
    let (h, w) = (first.disparity.height(), first.disparity.width());
    if let Some(e) = estimates
        .iter()
        .find(|e| e.disparity.height() != h || e.disparity.width() != w || e.reliability.values.len() != h * w)
    {
        return Err(DisparityError::ShapeMismatch(format!(
            "{}x{} vs {h}x{w}",
            e.disparity.height(),
            e.disparity.width()
        )));
    }
    let n = h * w;
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut reliability = vec![0.0; n];
    for i in 0..n {
        let mut chosen: Option<usize> = None;
        for (k, e) in estimates.iter().enumerate() {
            if !e.disparity.valid()[i] {
                continue;
            }
            if chosen.is_none_or(|c| e.reliability.values[i] > estimates[c].reliability.values[i]) {
                chosen = Some(k);
            }
        }
        if let Some(k) = chosen {
            values[i] = estimates[k].disparity.values()[i];
            valid[i] = true;
            reliability[i] = estimates[k].reliability.values[i];
        }
    }
    Ok(Estimate {
        disparity: DisparityMap::new(h, w, values, valid).expect("copied finite values"),
        reliability: ReliabilityMap {
            height: h,
            width: w,
            values: reliability,
        },
    })
}

/// Guided weighted-median parameters. Neighbours whose guide colour differs
/// from the centre pixel by more than `edge_threshold` (Euclidean RGB) get
/// zero weight, the rest `exp(-|dg|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub radius: usize,
    pub sigma: f64,
    pub edge_threshold: f64,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self {
            radius: 3,
            sigma: 0.1,
            edge_threshold: 0.3,
        }
    }
}

/// Edge-aware cleanup: guided weighted median over valid neighbours, then
/// any pixel still without a value takes the nearest filtered value.
/// The output is valid everywhere.
pub fn smooth_disparity(disp: &DisparityMap, guide: &Image, config: &SmoothConfig) -> Result<DisparityMap, DisparityError> {
    let (h, w) = (disp.height(), disp.width());
    if guide.height() != h || guide.width() != w {
        return Err(DisparityError::ShapeMismatch(format!(
            "guide {}x{} vs disparity {h}x{w}",
            guide.height(),
            guide.width()
        )));
    }
    if disp.valid_count() == 0 {
        return Err(DisparityError::NoValidPixels);
    }
    let r = config.radius as isize;
    let inv_two_sigma2 = 1.0 / (2.0 * config.sigma * config.sigma);
    let threshold2 = config.edge_threshold * config.edge_threshold;
    let ch = guide.channels();
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row_vals = vec![0.0; w];
            let mut row_ok = vec![false; w];
            let mut samples: Vec<(f64, f64)> = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
            for x in 0..w {
                samples.clear();
                let gp = guide.pixel(y, x);
                for dy in -r..=r {
                    let yy = y as isize + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for dx in -r..=r {
                        let xx = x as isize + dx;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let (yy, xx) = (yy as usize, xx as usize);
                        if !disp.is_valid(yy, xx) {
                            continue;
                        }
                        let gq = guide.pixel(yy, xx);
                        let dist2: f64 = (0..ch).map(|c| (gp[c] - gq[c]).powi(2)).sum();
                        if dist2 > threshold2 {
                            continue;
                        }
                        samples.push((disp.get(yy, xx), (-dist2 * inv_two_sigma2).exp()));
                    }
                }
                if samples.is_empty() {
                    continue;
                }
                samples.sort_by(|a, b| a.0.total_cmp(&b.0));
                let total: f64 = samples.iter().map(|s| s.1).sum();
                let mut acc = 0.0;
                let mut median = samples[samples.len() - 1].0;
                for &(v, wt) in &samples {
                    acc += wt;
                    if acc >= 0.5 * total {
                        median = v;
                        break;
                    }
                }
                row_vals[x] = median;
                row_ok[x] = true;
            }
            (row_vals, row_ok)
        })
        .collect();
    let mut values = Vec::with_capacity(h * w);
    let mut valid = Vec::with_capacity(h * w);
    for (v, ok) in rows {
        values.extend(v);
        valid.extend(ok);
    }
    fill_nearest(&mut values, &valid, h, w).ok_or(DisparityError::NoValidPixels)?;
    Ok(DisparityMap::dense(h, w, values).expect("finite medians"))
}

/// Settings of the full estimation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityConfig {
    pub hypotheses: HypothesisRange,
    /// Radius of the box window the raw costs are averaged over.
    pub aggregation_radius: usize,
    pub channel_weighting: ChannelWeighting,
    pub sublfs: Vec<SubLfKind>,
    /// `None` skips the weighted-median stage.
    pub smoothing: Option<SmoothConfig>,
}

impl Default for DisparityConfig {
    fn default() -> Self {
        Self {
            hypotheses: HypothesisRange::default(),
            aggregation_radius: 2,
            channel_weighting: ChannelWeighting::NoiseNormalized,
            sublfs: SubLfKind::ALL.to_vec(),
            smoothing: Some(SmoothConfig::default()),
        }
    }
}

/// How the channels of the matching cost are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelWeighting {
    /// Plain mean of the channel variances.
    #[default]
    Uniform,
    /// Each channel weighted by the inverse of its estimated noise variance
    /// in the central view, so a channel whose noise was amplified (by an
    /// inversion of strong attenuation, say) does not dominate the cost.
    NoiseNormalized,
}

/// Floor on the estimated noise deviation, keeping weights finite on clean input.
pub const NOISE_FLOOR: f64 = 2e-3;

/// Per-channel noise deviation from the median absolute response to a 3x3
/// second-difference mask; the median keeps textured regions from
/// inflating the estimate.
pub fn estimate_noise(img: &Image) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    if h < 3 || w < 3 {
        return vec![0.0; img.channels()];
    }
    const MASK: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
    // A unit-variance Gaussian has median absolute value 0.6745; the mask's norm is 6.
    const SCALE: f64 = 1.0 / (0.674_489_75 * 6.0);
    (0..img.channels())
        .map(|c| {
            let mut responses = Vec::with_capacity((h - 2) * (w - 2));
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let mut r = 0.0;
                    for (dy, row) in MASK.iter().enumerate() {
                        for (dx, m) in row.iter().enumerate() {
                            r += m * img.get(y + dy - 1, x + dx - 1, c);
                        }
                    }
                    responses.push(r.abs());
                }
            }
            let mid = responses.len() / 2;
            let (_, median, _) = responses.select_nth_unstable_by(mid, f64::total_cmp);
            *median * SCALE
        })
        .collect()
}

/// Channel weights for the matching cost under `weighting`.
pub fn channel_weights(lf: &LightField, weighting: ChannelWeighting) -> [f64; 3] {
    match weighting {
        ChannelWeighting::Uniform => [1.0; 3],
        ChannelWeighting::NoiseNormalized => {
            let sigma = estimate_noise(&lf.center_view());
            let mut w = [0.0; 3];
            for (c, wc) in w.iter_mut().enumerate() {
                *wc = 1.0 / sigma[c].max(NOISE_FLOOR).powi(2);
            }
            w
        }
    }
}

/// Cost volumes per sub-light-field, winner-take-all, fusion, smoothing.
pub fn estimate_disparity(lf: &LightField, config: &DisparityConfig) -> Result<Estimate, DisparityError> {
    let dims = lf.dims();
    let hypotheses = config.hypotheses.values();
    let sublfs: Vec<SubLf> = config.sublfs.iter().map(|&k| SubLf::new(dims, k)).collect();
    let params = CostParams {
        aggregation_radius: config.aggregation_radius,
        channel_weights: channel_weights(lf, config.channel_weighting),
    };
    let volumes = build_cost_volumes(lf, &sublfs, &hypotheses, &params)?;
    let estimates: Vec<Estimate> = volumes.iter().map(|cv| wta_disparity(cv)).collect();
    drop(volumes);
    let fused = fuse(&estimates)?;
    match &config.smoothing {
        None => Ok(fused),
        Some(sc) => {
            let disparity = smooth_disparity(&fused.disparity, &lf.center_view(), sc)?;
            Ok(Estimate {
                disparity,
                reliability: fused.reliability,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(costs_per_h: &[f64], hyps: Vec<f64>) -> CostVolume {
        CostVolume::new(hyps, 1, 1, costs_per_h.to_vec()).unwrap()
    }

    #[test]
    fn default_grid_contains_zero() {
        let h = HypothesisRange::default().values();
        assert_eq!(h.len(), 81);
        assert_eq!(h[40], 0.0);
        assert_eq!(h[0], -4.0);
        assert_eq!(h[80], 4.0);
    }

    #[test]
    fn tie_rule_prefers_zero_then_smaller() {
        let hyps = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
        let flat = volume(&[0.3; 5], hyps.clone());
        let e = wta_disparity(&flat);
        assert_eq!(e.disparity.values()[0], 0.0);
        assert_eq!(e.reliability.values[0], 0.0);
        let no_zero = vec![-1.0, -0.5, 0.5, 1.0];
        assert_eq!(wta_index([0.1, 0.2, 0.2, 0.1].into_iter(), &no_zero), 0);
        assert_eq!(wta_index([0.3, 0.1, 0.1, 0.2].into_iter(), &no_zero), 1);
    }

    #[test]
    fn parabola_recovers_quadratic_minimum() {
        let hyps = HypothesisRange::default().values();
        let costs: Vec<f64> = hyps.iter().map(|h| (h - 1.23).powi(2) + 0.05).collect();
        let e = wta_disparity(&volume(&costs, hyps));
        assert!((e.disparity.values()[0] - 1.23).abs() < 0.01);
        assert!(e.reliability.values[0] > 0.0);
    }

    #[test]
    fn sub_lfs_go_through_center() {
        let dims = LfDims::new(5, 5, 4, 4);
        for k in SubLfKind::ALL {
            let s = SubLf::new(dims, k);
            assert_eq!(s.views.len(), 5);
            assert!(s.views.contains(&(2, 2)));
        }
        assert_eq!(SubLf::new(dims, SubLfKind::AntiDiagonal).views[0], (0, 4));
        let dims = LfDims::new(3, 7, 4, 4);
        assert_eq!(SubLf::new(dims, SubLfKind::MainDiagonal).views, vec![(0, 2), (1, 3), (2, 4)]);
    }

    #[test]
    fn single_view_sublf_is_rejected() {
        let lf = LightField::new(LfDims::new(3, 3, 4, 4), vec![0.5; 9 * 48]).unwrap();
        let s = SubLf {
            id: SubLfKind::HorizontalRow,
            views: vec![(1, 1)],
        };
        assert_eq!(build_cost_volume(&lf, &s, &[0.0, 1.0]), Err(DisparityError::TooFewViews(1)));
        assert_eq!(
            build_cost_volume(&lf, &SubLf::new(lf.dims(), SubLfKind::HorizontalRow), &[]),
            Err(DisparityError::EmptyHypotheses)
        );
    }

    #[test]
    fn textureless_costs_tie() {
        let lf = LightField::new(LfDims::new(3, 3, 8, 8), vec![0.3; 9 * 192]).unwrap();
        let hyps = HypothesisRange::default().values();
        let cv = build_cost_volume(&lf, &SubLf::new(lf.dims(), SubLfKind::HorizontalRow), &hyps).unwrap();
        // interior pixel: every hypothesis keeps at least two samples
        let i = 3 * 8 + 4;
        assert!((0..hyps.len()).all(|h| cv.at(h, i) == 0.0));
        let e = wta_disparity(&cv);
        assert_eq!(e.disparity.values()[i], 0.0);
        assert_eq!(e.reliability.values[i], 0.0);
    }

    #[test]
    fn fusion_selects_by_reliability() {
        let mk = |d: f64, r: f64| Estimate {
            disparity: DisparityMap::constant(1, 2, d),
            reliability: ReliabilityMap {
                height: 1,
                width: 2,
                values: vec![r, r],
            },
        };
        let fused = fuse(&[mk(1.0, 0.0), mk(2.0, 1.0), mk(3.0, 0.0)]).unwrap();
        assert_eq!(fused.disparity.values(), &[2.0, 2.0]);
        let same = fuse(&[mk(1.5, 0.2), mk(1.5, 0.9)]).unwrap();
        assert_eq!(same.disparity.values(), &[1.5, 1.5]);
        assert_eq!(fuse(&[]), Err(DisparityError::EmptyInput));
        let other = Estimate {
            disparity: DisparityMap::constant(2, 2, 0.0),
            reliability: ReliabilityMap {
                height: 2,
                width: 2,
                values: vec![0.0; 4],
            },
        };
        assert!(matches!(fuse(&[mk(1.0, 0.5), other]), Err(DisparityError::ShapeMismatch(_))));
    }

    #[test]
    fn smoothing_keeps_constants_and_removes_outliers() {
        let (h, w) = (32, 32);
        let guide = Image::from_fn(h, w, 3, |_, x, _| if x < 16 { 0.2 } else { 0.8 });
        let flat = DisparityMap::constant(h, w, 1.25);
        let out = smooth_disparity(&flat, &guide, &SmoothConfig::default()).unwrap();
        assert!(out.values().iter().all(|&v| v == 1.25));

        let truth: Vec<f64> = (0..h * w).map(|i| if i % w < 16 { -1.0 } else { 2.0 }).collect();
        let mut noisy = truth.clone();
        for k in 0..10 {
            noisy[(k * 97 + 13) % (h * w)] = 3.7;
        }
        let disp = DisparityMap::dense(h, w, noisy).unwrap();
        let out = smooth_disparity(&disp, &guide, &SmoothConfig::default()).unwrap();
        assert_eq!(out.values(), truth.as_slice());
    }

    #[test]
    fn smoothing_fills_invalid_and_rejects_empty() {
        let guide = Image::filled(4, 4, 3, 0.5);
        let mut valid = vec![false; 16];
        valid[5] = true;
        let disp = DisparityMap::new(4, 4, vec![0.7; 16], valid).unwrap();
        let out = smooth_disparity(&disp, &guide, &SmoothConfig { radius: 1, ..Default::default() }).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.7));
        let none = DisparityMap::new(4, 4, vec![0.0; 16], vec![false; 16]).unwrap();
        assert_eq!(
            smooth_disparity(&none, &guide, &SmoothConfig::default()),
            Err(DisparityError::NoValidPixels)
        );
    }

    #[test]
    fn box_mean_matches_direct_window() {
        let (h, w) = (5, 7);
        let v: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64).collect();
        let out = box_mean(&v, h, w, 2);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                let mut n = 0;
                for yy in y.saturating_sub(2)..(y + 3).min(h) {
                    for xx in x.saturating_sub(2)..(x + 3).min(w) {
                        s += v[yy * w + xx];
                        n += 1;
                    }
                }
                assert!((out[y * w + x] - s / n as f64).abs() < 1e-12);
            }
        }
    }
}
