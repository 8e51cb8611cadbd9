//! Underwater image formation: attenuation with depth plus veiling light.
//!
//! Per channel, `I = T * J + (1 - T) * A` with transmission
//! `T = exp(-beta * D)`. Every view is degraded with its own ground-truth
//! depth, so a scene point seen from several views receives the same
//! attenuation wherever its depth agrees.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash;
use crate::image::Image;
use crate::lightfield::{DepthMap, LightField, CHANNELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DegradeError {
    #[error("attenuation coefficient {0} is negative")]
    NegativeBeta(f64),
    #[error("background light {0} is outside [0, 1]")]
    BackgroundOutOfRange(f64),
    #[error("noise sigma {0} is negative")]
    NegativeNoise(f64),
    #[error("{depths} depth maps supplied for {views} views")]
    ViewCountMismatch { views: usize, depths: usize },
    #[error("depth map {index} has a different size than the views")]
    DepthShapeMismatch { index: usize },
    #[error("unknown water preset {0:?}")]
    UnknownPreset(String),
}

/// Parameters of the formation model. `beta` is per unit scene depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub beta: [f64; 3],
    pub background_light: [f64; 3],
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DegradationParams {
    pub fn validate(&self) -> Result<(), DegradeError> {
        if let Some(&b) = self.beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(DegradeError::NegativeBeta(b));
        }
        if let Some(&a) = self
            .background_light
            .iter()
            .find(|a| !(a.is_finite() && (0.0..=1.0).contains(*a)))
        {
            return Err(DegradeError::BackgroundOutOfRange(a));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(DegradeError::NegativeNoise(self.noise_sigma));
        }
        Ok(())
    }

    /// Same parameters with every attenuation coefficient multiplied by `k`.
    pub fn scale_beta(mut self, k: f64) -> Self {
        for b in &mut self.beta {
            *b *= k;
        }
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }
}

/// Per-channel transmission `exp(-beta_c * D)` as a three-channel image.
pub fn transmission(depth: &DepthMap, beta: [f64; 3]) -> Result<Image, DegradeError> {
    if let Some(&b) = beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(DegradeError::NegativeBeta(b));
    }
    let data = depth
        .values()
        .iter()
        .flat_map(|&d| beta.map(|b| (-b * d).exp()))
        .collect();
    Ok(Image::from_vec(depth.height(), depth.width(), CHANNELS, data).expect("shape"))
}

/// Degrades one view in place of a copy. `view_index` keys the noise stream.
pub fn degrade_view(
    view: &Image,
    depth: &DepthMap,
    params: &DegradationParams,
    view_index: usize,
) -> Result<Image, DegradeError> {
    let t = transmission(depth, params.beta)?;
    let pixels = view.pixel_count() as u64;
    let mut out = view.clone();
    for (i, (o, &tc)) in out.as_mut_slice().iter_mut().zip(t.as_slice()).enumerate() {
        let a = params.background_light[i % CHANNELS];
        let mut value = tc * *o + (1.0 - tc) * a;
        if params.noise_sigma > 0.0 {
            value += params.noise_sigma * hash::gaussian(params.seed, view_index as u64 * pixels * 3 + i as u64);
        }
        *o = value.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Applies the formation model to every view with that view's depth map,
/// adds seeded Gaussian noise and clamps to `[0, 1]`.
pub fn degrade(lf: &LightField, depths: &[DepthMap], params: &DegradationParams) -> Result<LightField, DegradeError> {
    params.validate()?;
    let dims = lf.dims();
    if depths.len() != dims.view_count() {
        return Err(DegradeError::ViewCountMismatch {
            views: dims.view_count(),
            depths: depths.len(),
        });
    }
    if let Some(index) = depths
        .iter()
        .position(|d| d.height() != dims.height || d.width() != dims.width)
    {
        return Err(DegradeError::DepthShapeMismatch { index });
    }
    Ok(lf.map_views(|(v, u), view| {
        let index = v * dims.cols + u;
        degrade_view(view, &depths[index], params, index).expect("validated parameters")
    }))
}

/// Colour-deviation families of underwater imagery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaterPreset {
    Blue,
    Green,
    Yellow,
    OtherColor,
    LowLight,
}

/// Closed intervals a preset draws from: `beta` then `background_light`, per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetRanges {
    pub beta: [(f64, f64); 3],
    pub background_light: [(f64, f64); 3],
}

impl WaterPreset {
    pub const ALL: [WaterPreset; 5] = [
        WaterPreset::Blue,
        WaterPreset::Green,
        WaterPreset::Yellow,
        WaterPreset::OtherColor,
        WaterPreset::LowLight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WaterPreset::Blue => "blue",
            WaterPreset::Green => "green",
            WaterPreset::Yellow => "yellow",
            WaterPreset::OtherColor => "other-color",
            WaterPreset::LowLight => "low-light",
        }
    }

    /// The sampling ranges. All attenuation ranges lie in `[0.02, 0.9]` per
    /// unit depth, and the ranges of different channels never overlap, so
    /// every draw has the preset's channel ordering:
    ///
    /// | preset      | beta ordering | background light |
    /// |-------------|---------------|------------------|
    /// | blue        | R > G > B     | blue dominant    |
    /// | green       | R > B > G     | green dominant   |
    /// | yellow      | B > G > R     | red and green    |
    /// | other-color | R > B > G     | magenta-violet   |
    /// | low-light   | R > G > B     | dim blue         |
    pub fn ranges(self) -> PresetRanges {
        match self {
            WaterPreset::Blue => PresetRanges {
                beta: [(0.40, 0.70), (0.15, 0.30), (0.05, 0.12)],
                background_light: [(0.05, 0.15), (0.35, 0.50), (0.55, 0.75)],
            },
            WaterPreset::Green => PresetRanges {
                beta: [(0.40, 0.70), (0.05, 0.12), (0.15, 0.30)],
                background_light: [(0.05, 0.15), (0.50, 0.70), (0.30, 0.45)],
            },
            WaterPreset::Yellow => PresetRanges {
                beta: [(0.05, 0.12), (0.15, 0.30), (0.40, 0.70)],
                background_light: [(0.45, 0.60), (0.40, 0.55), (0.08, 0.20)],
            },
            WaterPreset::OtherColor => PresetRanges {
                beta: [(0.30, 0.50), (0.08, 0.16), (0.18, 0.28)],
                background_light: [(0.30, 0.45), (0.15, 0.30), (0.40, 0.55)],
            },
            WaterPreset::LowLight => PresetRanges {
                beta: [(0.30, 0.50), (0.12, 0.25), (0.05, 0.10)],
                background_light: [(0.01, 0.05), (0.05, 0.15), (0.10, 0.25)],
            },
        }
    }
}

impl fmt::Display for WaterPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaterPreset {
    type Err = DegradeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WaterPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| DegradeError::UnknownPreset(s.to_string()))
    }
}

/// Draws parameters uniformly from the preset's ranges. Noise is off; use
/// [`DegradationParams::with_noise`] to add it.
pub fn sample_preset(preset: WaterPreset, seed: u64) -> DegradationParams {
    let ranges = preset.ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
    let beta = ranges.beta.map(&mut draw);
    let background_light = ranges.background_light.map(&mut draw);
    DegradationParams {
        beta,
        background_light,
        noise_sigma: 0.0,
        seed,
    }
}

/// Looks a preset up by name and samples it.
pub fn sample_preset_named(name: &str, seed: u64) -> Result<DegradationParams, DegradeError> {
    Ok(sample_preset(name.parse()?, seed))
}
