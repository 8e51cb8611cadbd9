//! The standard evaluation suite: twenty seeded procedural scenes at 5x5
//! views of 256x256 pixels, cycling through the water presets.

use crate::degrade::{degrade, sample_preset, DegradationParams, DegradeError, WaterPreset};
use crate::lightfield::{disparity_from_depth, CameraRig, DisparityMap, LightField};
use crate::scene::{gen_scene, render_lf, textured_mask, RenderedLf, Ruggedness, SceneError, SceneSpec};

pub const SUITE_SIZE: usize = 20;
pub const SUITE_ANGULAR: (usize, usize) = (5, 5);
pub const SUITE_RESOLUTION: usize = 256;
/// Disparity span of the suite rig across the procedural depth range.
pub const SUITE_DISPARITY_SPAN: f64 = 4.0;
/// Sensor noise of the suite's degraded light fields.
pub const SUITE_NOISE: f64 = 0.01;
/// Border excluded from the textured-pixel mask.
pub const SUITE_MASK_MARGIN: usize = 8;

/// Recipe of one suite scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteEntry {
    pub index: usize,
    pub seed: u64,
    pub ruggedness: Ruggedness,
    pub preset: WaterPreset,
}

pub fn suite_entries() -> Vec<SuiteEntry> {
    (0..SUITE_SIZE)
        .map(|index| SuiteEntry {
            index,
            seed: 1000 + index as u64,
            ruggedness: if index % 4 == 3 { Ruggedness::Hard } else { Ruggedness::Standard },
            preset: WaterPreset::ALL[index % WaterPreset::ALL.len()],
        })
        .collect()
}

/// The rig shared by all suite scenes.
pub fn suite_rig() -> CameraRig {
    let (near, far) = SceneSpec::PROCEDURAL_DEPTH_RANGE;
    CameraRig::for_depth_range(near, far, SUITE_RESOLUTION, SUITE_DISPARITY_SPAN).expect("valid range")
}

/// A rendered and degraded suite scene with its ground truth.
#[derive(Debug, Clone)]
pub struct SuiteScene {
    pub entry: SuiteEntry,
    pub spec: SceneSpec,
    pub rig: CameraRig,
    pub rendered: RenderedLf,
    pub params: DegradationParams,
    pub degraded: LightField,
    /// Central disparity relative to the zero-parallax plane.
    pub gt_disparity: DisparityMap,
    /// Central pixels with matching signal.
    pub textured: Vec<bool>,
}

impl SuiteScene {
    pub fn clean(&self) -> &LightField {
        &self.rendered.lf
    }

    /// The same scene degraded with other parameters.
    pub fn degrade_with(&self, params: &DegradationParams) -> Result<LightField, DegradeError> {
        degrade(&self.rendered.lf, &self.rendered.depths, params)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
}

pub fn build_scene(entry: SuiteEntry) -> Result<SuiteScene, SuiteError> {
    build_scene_sized(entry, SUITE_RESOLUTION, SUITE_ANGULAR)
}

/// A suite recipe at another size; used to keep tests fast.
pub fn build_scene_sized(entry: SuiteEntry, resolution: usize, angular: (usize, usize)) -> Result<SuiteScene, SuiteError> {
    let spec = SceneSpec::procedural(entry.seed, resolution, resolution, entry.ruggedness);
    let (near, far) = SceneSpec::PROCEDURAL_DEPTH_RANGE;
    let rig = CameraRig::for_depth_range(near, far, resolution, SUITE_DISPARITY_SPAN)
        .map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
    let rendered = render_lf(&spec, &rig, angular)?;
    let params = sample_preset(entry.preset, entry.seed).with_noise(SUITE_NOISE);
    let degraded = degrade(&rendered.lf, &rendered.depths, &params)?;
    let gt_disparity = disparity_from_depth(&rig, rendered.center_depth()).shifted(-rig.zero_parallax);
    let center = gen_scene(&spec)?;
    let textured = textured_mask(&spec, &center, SUITE_MASK_MARGIN);
    Ok(SuiteScene {
        entry,
        spec,
        rig,
        rendered,
        params,
        degraded,
        gt_disparity,
        textured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_mix_presets_and_layouts() {
        let e = suite_entries();
        assert_eq!(e.len(), SUITE_SIZE);
        for p in WaterPreset::ALL {
            assert_eq!(e.iter().filter(|x| x.preset == p).count(), 4);
        }
        assert!(e.iter().any(|x| x.ruggedness == Ruggedness::Hard));
    }

    #[test]
    fn suite_disparity_stays_in_budget() {
        let rig = suite_rig();
        let (near, far) = SceneSpec::PROCEDURAL_DEPTH_RANGE;
        for d in [near, far] {
            assert!((rig.disparity_at(d) - rig.zero_parallax).abs() <= 3.0);
        }
    }
}
