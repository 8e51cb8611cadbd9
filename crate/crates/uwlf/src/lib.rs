//! Synthetic underwater light fields and depth-guided enhancement.
//!
//! The crate renders layered procedural scenes as 4-D light fields
//! ([`scene`]), degrades them with a per-channel attenuation and
//! backscatter model ([`degrade`]), estimates disparity from the
//! sub-aperture views ([`disparity`]) and inverts the model with depth
//! derived from that disparity, alternating the two in stages
//! ([`enhance`]). [`metrics`] holds full- and no-reference image quality
//! measures, [`io`] the on-disk scene format.
//!
//! ```
//! use uwlf::prelude::*;
//!
//! let spec = SceneSpec::procedural(3, 48, 48, Ruggedness::Standard);
//! let rig = CameraRig::for_depth_range(1.5, 6.0, 48, 2.0).unwrap();
//! let rendered = render_lf(&spec, &rig, (3, 3)).unwrap();
//! let params = sample_preset(WaterPreset::Blue, 3);
//! let murky = degrade(&rendered.lf, &rendered.depths, &params).unwrap();
//! assert!(psnr_lf(&murky, &rendered.lf).unwrap() < 30.0);
//! ```

pub mod degrade;
pub mod disparity;
pub mod enhance;
pub mod hash;
pub mod image;
pub mod io;
pub mod lightfield;
pub mod metrics;
pub mod scene;
pub mod suite;

/// The types and functions most programs need.
pub mod prelude {
    pub use crate::degrade::{degrade, sample_preset, DegradationParams, WaterPreset};
    pub use crate::disparity::{estimate_disparity, DisparityConfig, Estimate, HypothesisRange};
    pub use crate::enhance::{enhance_stage, progressive_enhance, EnhanceConfig, Progressive, Reference};
    pub use crate::image::Image;
    pub use crate::io::{load_scene, save_scene, SceneBundle, SceneMeta};
    pub use crate::lightfield::{
        disparity_from_depth, refocus, CameraRig, DepthMap, DisparityMap, LfDims, LightField,
    };
    pub use crate::metrics::{psnr, psnr_lf, ssim, ssim_lf, uciqe, uiqm, MetricReport};
    pub use crate::scene::{render_lf, Ruggedness, SceneSpec};
    pub use crate::Error;
}

/// Any error raised by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    LightField(#[from] lightfield::LfError),
    #[error(transparent)]
    Scene(#[from] scene::SceneError),
    #[error(transparent)]
    Degrade(#[from] degrade::DegradeError),
    #[error(transparent)]
    Disparity(#[from] disparity::DisparityError),
    #[error(transparent)]
    Enhance(#[from] enhance::EnhanceError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Suite(#[from] suite::SuiteError),
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/lightfields.md")]
    mod lightfields {}
    #[doc = include_str!("../../../book/src/degradation.md")]
    mod degradation {}
    #[doc = include_str!("../../../book/src/disparity.md")]
    mod disparity {}
    #[doc = include_str!("../../../book/src/enhancement.md")]
    mod enhancement {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/dataset.md")]
    mod dataset {}
}
