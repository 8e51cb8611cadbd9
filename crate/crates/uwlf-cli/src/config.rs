//! Configuration files and flag resolution.
//!
//! A config file is TOML with one optional table per subcommand. Every key
//! mirrors a flag; a flag given on the command line wins over the file,
//! which wins over the built-in default.
//!
//! ```toml
//! [generate]
//! seed = 7
//! size = 256
//!
//! [enhance]
//! stages = 3
//! beta_fit = "robust-trimmed"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uwlf::enhance::BetaFit;
use uwlf::scene::Ruggedness;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub generate: GenerateFile,
    #[serde(default)]
    pub degrade: DegradeFile,
    #[serde(default)]
    pub enhance: EnhanceFile,
    #[serde(default)]
    pub refocus: RefocusFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateFile {
    pub spec: Option<PathBuf>,
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub size: Option<usize>,
    pub angular: Option<usize>,
    pub ruggedness: Option<Ruggedness>,
    pub span: Option<f64>,
    pub focal_length: Option<f64>,
    pub baseline: Option<f64>,
    pub sensor_size: Option<f64>,
    pub zero_parallax: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeFile {
    pub preset: Option<String>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceFile {
    pub stages: Option<usize>,
    pub t_min: Option<f64>,
    pub far_percentile: Option<f64>,
    pub beta_fit: Option<BetaFit>,
    pub hypothesis_min: Option<f64>,
    pub hypothesis_max: Option<f64>,
    pub hypothesis_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefocusFile {
    pub slope: Option<f64>,
    pub depth: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        parse_toml(&text, path)
    }
}

/// Parses a TOML document; the error names the file and the offending line.
pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let message = e.message().trim().to_string();
        match line {
            Some(line) => CliError::Config(format!("{}:{line}: {message}", path.display())),
            None => CliError::Config(format!("{}: {message}", path.display())),
        }
    })
}

/// Settings of `generate` after merging flags, file and defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateConfig {
    pub spec: Option<PathBuf>,
    pub name: String,
    pub seed: u64,
    pub size: usize,
    pub angular: usize,
    pub ruggedness: Ruggedness,
    pub span: f64,
    pub focal_length: f64,
    pub baseline: Option<f64>,
    pub sensor_size: f64,
    pub zero_parallax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradeConfig {
    pub preset: String,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhanceSettings {
    pub stages: usize,
    pub t_min: f64,
    pub far_percentile: f64,
    pub beta_fit: BetaFit,
    pub hypothesis_min: f64,
    pub hypothesis_max: f64,
    pub hypothesis_step: f64,
}

impl EnhanceSettings {
    pub fn to_config(&self) -> uwlf::enhance::EnhanceConfig {
        let mut cfg = uwlf::enhance::EnhanceConfig {
            stages: self.stages,
            t_min: self.t_min,
            far_percentile: self.far_percentile,
            beta_fit: self.beta_fit,
            ..Default::default()
        };
        cfg.disparity.hypotheses = uwlf::disparity::HypothesisRange {
            min: self.hypothesis_min,
            max: self.hypothesis_max,
            step: self.hypothesis_step,
        };
        cfg
    }
}
