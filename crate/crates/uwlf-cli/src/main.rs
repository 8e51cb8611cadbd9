//! `uwlf`: generate, degrade, enhance, evaluate and refocus scene bundles.
//!
//! Exit codes: 0 success, 2 bad configuration or arguments, 3 missing or
//! unreadable files, 4 numerical trouble (an attenuation fit fell back to
//! zero; outputs are still written).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use uwlf::degrade::{degrade, sample_preset, DegradeError, WaterPreset};
use uwlf::enhance::{progressive_enhance, BetaFit, EnhanceError, Reference};
use uwlf::io::{self, IoError, SceneBundle, SceneMeta};
use uwlf::lightfield::{disparity_from_depth, refocus, CameraRig, DisparityMap, LightField};
use uwlf::metrics::{MetricReport, MetricsError};
use uwlf::scene::{gen_scene, render_lf, Ruggedness, SceneSpec};

use config::{ConfigFile, DegradeConfig, EnhanceSettings, GenerateConfig};

/// Disparity budget per view that the estimator's default search covers comfortably.
const DISPARITY_BUDGET: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<EnhanceError> for CliError {
    fn from(e: EnhanceError) -> Self {
        match e {
            EnhanceError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DegradeError> for CliError {
    fn from(e: DegradeError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "uwlf", version, about = "Synthetic underwater light fields: generation, degradation, enhancement")]
struct Cli {
    /// TOML file with defaults for every subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a clean light field with per-view depth.
    Generate(GenerateArgs),
    /// Apply the underwater formation model to a clean scene.
    Degrade(DegradeArgs),
    /// Alternate disparity estimation and model inversion.
    Enhance(EnhanceArgs),
    /// Compare a result against a reference scene.
    Eval(EvalArgs),
    /// Shift-and-add refocus to a slope or a depth.
    Refocus(RefocusArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Scene description (TOML); a procedural scene is drawn when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Width and height of the procedural scene.
    #[arg(long)]
    size: Option<usize>,
    /// Views per side (odd).
    #[arg(long)]
    angular: Option<usize>,
    #[arg(long, value_parser = parse_ruggedness)]
    ruggedness: Option<Ruggedness>,
    /// Disparity span in pixels per view between the nearest and farthest point.
    #[arg(long)]
    span: Option<f64>,
    #[arg(long)]
    focal_length: Option<f64>,
    /// Overrides the baseline derived from `--span`.
    #[arg(long)]
    baseline: Option<f64>,
    #[arg(long)]
    sensor_size: Option<f64>,
    /// Absolute disparity refocused to zero; defaults to the rounded middle of the range.
    #[arg(long)]
    zero_parallax: Option<f64>,
}

#[derive(Debug, Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// blue, green, yellow, other-color or low-light.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Defaults to the scene seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    far_percentile: Option<f64>,
    #[arg(long, value_parser = parse_beta_fit)]
    beta_fit: Option<BetaFit>,
    #[arg(long, allow_hyphen_values = true)]
    hypothesis_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hypothesis_max: Option<f64>,
    #[arg(long)]
    hypothesis_step: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Scene whose latest light field is scored.
    #[arg(long)]
    result: PathBuf,
    /// Scene holding the clean light field.
    #[arg(long)]
    reference: PathBuf,
    /// Also write the header and row to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RefocusArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output 16-bit PNG.
    #[arg(long)]
    out: PathBuf,
    /// Relative disparity brought into focus.
    #[arg(long, allow_hyphen_values = true)]
    slope: Option<f64>,
    /// Scene depth brought into focus; wins over `--slope`.
    #[arg(long)]
    depth: Option<f64>,
    /// clean, degraded or enhanced; defaults to the latest present.
    #[arg(long)]
    which: Option<String>,
}

fn parse_ruggedness(s: &str) -> Result<Ruggedness, String> {
    match s {
        "standard" => Ok(Ruggedness::Standard),
        "hard" => Ok(Ruggedness::Hard),
        _ => Err(format!("unknown ruggedness {s:?} (standard or hard)")),
    }
}

fn parse_beta_fit(s: &str) -> Result<BetaFit, String> {
    match s {
        "least-squares" => Ok(BetaFit::LeastSquares),
        "robust-trimmed" => Ok(BetaFit::RobustTrimmed),
        _ => Err(format!("unknown fit {s:?} (least-squares or robust-trimmed)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => cmd_generate(a, &file),
        Command::Degrade(a) => cmd_degrade(a, &file),
        Command::Enhance(a) => cmd_enhance(a, &file),
        Command::Eval(a) => cmd_eval(a),
        Command::Refocus(a) => cmd_refocus(a, &file),
    }
}

fn load(dir: &Path) -> Result<SceneBundle, CliError> {
    io::load_scene(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// Appends `value` under `key` to the configuration recorded in a bundle.
fn record_config(previous: Option<serde_json::Value>, key: &str, value: serde_json::Value) -> serde_json::Value {
    let mut map = match previous {
        Some(serde_json::Value::Object(map)) => map,
        _ => serde_json::Map::new(),
    };
    map.insert(key.to_string(), value);
    serde_json::Value::Object(map)
}

fn resolve_generate(a: &GenerateArgs, f: &config::GenerateFile) -> GenerateConfig {
    let seed = a.seed.or(f.seed).unwrap_or(7);
    GenerateConfig {
        spec: a.spec.clone().or_else(|| f.spec.clone()),
        name: a.name.clone().or_else(|| f.name.clone()).unwrap_or_else(|| format!("scene-{seed}")),
        seed,
        size: a.size.or(f.size).unwrap_or(256),
        angular: a.angular.or(f.angular).unwrap_or(5),
        ruggedness: a.ruggedness.or(f.ruggedness).unwrap_or(Ruggedness::Standard),
        span: a.span.or(f.span).unwrap_or(4.0),
        focal_length: a.focal_length.or(f.focal_length).unwrap_or(35.0),
        baseline: a.baseline.or(f.baseline),
        sensor_size: a.sensor_size.or(f.sensor_size).unwrap_or(32.0),
        zero_parallax: a.zero_parallax.or(f.zero_parallax),
    }
}

fn cmd_generate(a: GenerateArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut cfg = resolve_generate(&a, &file.generate);
    let spec = match &cfg.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read spec {}: {e}", path.display())))?;
            let spec = config::parse_toml::<SceneSpec>(&text, path)?;
            // the file's seed and size are the ones that took effect
            if a.name.is_none() && file.generate.name.is_none() {
                cfg.name = format!("scene-{}", spec.seed);
            }
            cfg.seed = spec.seed;
            cfg.size = spec.width;
            spec
        }
        None => SceneSpec::procedural(cfg.seed, cfg.size, cfg.size, cfg.ruggedness),
    };
    let center = gen_scene(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let (near, far) = center
        .depth
        .values()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));

    let unit_scale = cfg.focal_length * spec.width as f64 / cfg.sensor_size;
    let baseline = match cfg.baseline {
        Some(b) => b,
        None if far > near => cfg.span / (unit_scale * (1.0 / near - 1.0 / far)),
        None => {
            return Err(CliError::Config(
                "the scene has a single depth, so --span cannot set the baseline; pass --baseline".into(),
            ))
        }
    };
    let rig = CameraRig::new(cfg.focal_length, baseline, cfg.sensor_size, spec.width)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut rig = CameraRig { unit: spec.unit, ..rig };
    let (d_near, d_far) = (rig.disparity_at(near), rig.disparity_at(far));
    rig.zero_parallax = cfg.zero_parallax.unwrap_or((0.5 * (d_near + d_far)).round());

    let rendered = render_lf(&spec, &rig, (cfg.angular, cfg.angular)).map_err(|e| CliError::Config(e.to_string()))?;
    let (lo, hi) = (d_far - rig.zero_parallax, d_near - rig.zero_parallax);
    if lo.abs().max(hi.abs()) > DISPARITY_BUDGET {
        eprintln!(
            "warning: disparity range [{lo:.2}, {hi:.2}] exceeds the [-{DISPARITY_BUDGET}, {DISPARITY_BUDGET}] pixel budget"
        );
    }

    let meta = SceneMeta {
        name: cfg.name.clone(),
        seed: cfg.seed,
        preset: None,
    };
    let mut bundle = SceneBundle::clean(rendered.lf, rendered.depths, rig, meta);
    bundle.config = Some(record_config(None, "generate", json!(cfg)));
    io::save_scene(&bundle, &a.out)?;
    println!(
        "{}: {}x{} views of {}x{}, {} layers, depth [{near:.3}, {far:.3}], disparity [{lo:.3}, {hi:.3}] px/view",
        cfg.name,
        cfg.angular,
        cfg.angular,
        spec.height,
        spec.width,
        spec.layers.len()
    );
    Ok(())
}

fn cmd_degrade(a: DegradeArgs, file: &ConfigFile) -> Result<(), CliError> {
    let f = &file.degrade;
    let preset_name = a
        .preset
        .clone()
        .or_else(|| f.preset.clone())
        .ok_or_else(|| CliError::Config("no preset given (--preset)".into()))?;
    let preset: WaterPreset = preset_name.parse()?;
    let sigma = a.sigma.or(f.sigma).unwrap_or(0.01);
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(CliError::Config(format!("noise sigma {sigma} must be non-negative")));
    }
    let bundle = load(&a.input)?;
    let cfg = DegradeConfig {
        preset: preset.name().to_string(),
        sigma,
        seed: a.seed.or(f.seed).unwrap_or(bundle.meta.seed),
    };
    let clean = bundle
        .lf_clean
        .as_ref()
        .ok_or_else(|| CliError::Io(format!("{} holds no clean light field", a.input.display())))?;
    if bundle.depths.is_empty() {
        return Err(CliError::Io(format!("{} holds no depth maps", a.input.display())));
    }
    let params = sample_preset(preset, cfg.seed).with_noise(cfg.sigma);
    let degraded = degrade(clean, &bundle.depths, &params)?;
    let before = clean.center_view().luma();
    let after = degraded.center_view().luma();
    let mean = |img: &uwlf::image::Image| img.as_slice().iter().sum::<f64>() / img.as_slice().len() as f64;

    let out = SceneBundle {
        lf_degraded: Some(degraded),
        lf_enhanced: None,
        params: Some(params),
        meta: SceneMeta {
            preset: Some(cfg.preset.clone()),
            ..bundle.meta.clone()
        },
        config: Some(record_config(bundle.config.clone(), "degrade", json!(cfg))),
        ..bundle
    };
    io::save_scene(&out, &a.out)?;
    println!(
        "{} preset, beta {:.3?}, A {:.3?}, sigma {}: mean luma {:.4} -> {:.4}",
        cfg.preset,
        params.beta,
        params.background_light,
        cfg.sigma,
        mean(&before),
        mean(&after)
    );
    Ok(())
}

fn resolve_enhance(a: &EnhanceArgs, f: &config::EnhanceFile) -> EnhanceSettings {
    let d = uwlf::enhance::EnhanceConfig::default();
    EnhanceSettings {
        stages: a.stages.or(f.stages).unwrap_or(d.stages),
        t_min: a.t_min.or(f.t_min).unwrap_or(d.t_min),
        far_percentile: a.far_percentile.or(f.far_percentile).unwrap_or(d.far_percentile),
        beta_fit: a.beta_fit.or(f.beta_fit).unwrap_or(d.beta_fit),
        hypothesis_min: a.hypothesis_min.or(f.hypothesis_min).unwrap_or(d.disparity.hypotheses.min),
        hypothesis_max: a.hypothesis_max.or(f.hypothesis_max).unwrap_or(d.disparity.hypotheses.max),
        hypothesis_step: a.hypothesis_step.or(f.hypothesis_step).unwrap_or(d.disparity.hypotheses.step),
    }
}

/// Ground-truth central disparity relative to the zero-parallax plane.
fn gt_disparity(bundle: &SceneBundle) -> Option<DisparityMap> {
    let dims = bundle.dims()?;
    let (vc, uc) = dims.center();
    let depth = bundle.depths.get(vc * dims.cols + uc)?;
    Some(disparity_from_depth(&bundle.rig, depth).shifted(-bundle.rig.zero_parallax))
}

/// Invalid pixels become NaN.
fn write_disparity(path: &Path, disp: &DisparityMap) -> Result<(), CliError> {
    let values: Vec<f64> = disp
        .values()
        .iter()
        .zip(disp.valid())
        .map(|(&v, &ok)| if ok { v } else { f64::NAN })
        .collect();
    io::write_pfm(path, disp.height(), disp.width(), &values)?;
    Ok(())
}

fn read_disparity(path: &Path) -> Result<DisparityMap, CliError> {
    let (h, w, values) = io::read_pfm(path)?;
    let valid: Vec<bool> = values.iter().map(|v| v.is_finite()).collect();
    let values = values.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
    DisparityMap::new(h, w, values, valid).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_enhance(a: EnhanceArgs, file: &ConfigFile) -> Result<(), CliError> {
    let settings = resolve_enhance(&a, &file.enhance);
    let config = settings.to_config();
    config.validate()?;
    if config.disparity.hypotheses.values().is_empty() {
        return Err(CliError::Config("the hypothesis range is empty".into()));
    }
    let bundle = load(&a.input)?;
    let input = bundle
        .lf_degraded
        .as_ref()
        .ok_or_else(|| CliError::Io(format!("{} holds no degraded light field", a.input.display())))?;
    let gt = gt_disparity(&bundle);
    let reference = Reference {
        clean: bundle.lf_clean.as_ref(),
        disparity: gt.as_ref(),
    };
    let result = progressive_enhance(input, &bundle.rig, &config, Some(reference))?;

    std::fs::create_dir_all(a.out.join("stages"))
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", a.out.display())))?;
    for (k, disp) in result.stage_disparities.iter().enumerate() {
        write_disparity(&a.out.join("stages").join(format!("disparity_{}.pfm", k + 1)), disp)?;
    }
    write_disparity(&a.out.join("disparity.pfm"), &result.disparity)?;
    io::write_json(&a.out.join("reports.json"), &result.reports)?;

    let out = SceneBundle {
        lf_enhanced: Some(result.lf),
        config: Some(record_config(bundle.config.clone(), "enhance", json!(settings))),
        ..bundle
    };
    io::save_scene(&out, &a.out)?;

    println!("{:<6}{:>26}{:>26}{:>10}{:>10}", "stage", "beta", "A", "mae", "psnr");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    for r in &result.reports {
        println!(
            "{:<6}{:>26}{:>26}{:>10}{:>10}",
            r.stage_index,
            format!("{:.3?}", r.beta),
            format!("{:.3?}", r.background_light),
            opt(r.disparity_mae),
            opt(r.psnr)
        );
    }
    let fallbacks: Vec<usize> = result.reports.iter().filter(|r| r.any_fallback()).map(|r| r.stage_index).collect();
    if !fallbacks.is_empty() {
        return Err(CliError::Numeric(format!(
            "too few samples for the attenuation fit in stage(s) {fallbacks:?}; beta fell back to 0 (outputs written)"
        )));
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let result = load(&a.result)?;
    let reference = load(&a.reference)?;
    let lf = result
        .latest()
        .ok_or_else(|| CliError::Io(format!("{} holds no light field", a.result.display())))?;
    let clean = reference
        .lf_clean
        .as_ref()
        .ok_or_else(|| CliError::Io(format!("{} holds no clean light field", a.reference.display())))?;
    if lf.dims() != clean.dims() {
        return Err(CliError::Config(format!(
            "shape mismatch: result {:?}, reference {:?}",
            lf.dims(),
            clean.dims()
        )));
    }
    let estimate = {
        let path = a.result.join("disparity.pfm");
        path.is_file().then(|| read_disparity(&path)).transpose()?
    };
    let gt = gt_disparity(&reference);
    let pair = match (&estimate, &gt) {
        (Some(e), Some(g)) => Some((e, g)),
        _ => None,
    };
    let report = MetricReport::evaluate(lf, clean, pair)?;
    print!("{report}");
    println!("{}", MetricReport::CSV_HEADER);
    println!("{}", report.csv_row());
    if let Some(path) = &a.csv {
        let text = format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row());
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_refocus(a: RefocusArgs, file: &ConfigFile) -> Result<(), CliError> {
    let f = &file.refocus;
    let (slope, depth) = (a.slope.or(f.slope), a.depth.or(f.depth));
    if slope.is_some() && depth.is_some() {
        eprintln!("warning: both a slope and a depth were given; focusing at the depth");
    }
    let bundle = load(&a.input)?;
    let slope = match (depth, slope) {
        (Some(d), _) if !(d.is_finite() && d > 0.0) => {
            return Err(CliError::Config(format!("depth {d} must be positive")));
        }
        (Some(d), _) => bundle.rig.disparity_at(d) - bundle.rig.zero_parallax,
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::Config("give --slope or --depth".into())),
    };
    let lf: &LightField = match a.which.as_deref() {
        None => bundle.latest(),
        Some("clean") => bundle.lf_clean.as_ref(),
        Some("degraded") => bundle.lf_degraded.as_ref(),
        Some("enhanced") => bundle.lf_enhanced.as_ref(),
        Some(other) => return Err(CliError::Config(format!("unknown light field {other:?}"))),
    }
    .ok_or_else(|| CliError::Io(format!("{} lacks the requested light field", a.input.display())))?;
    let image = refocus(lf, slope);
    io::write_png16(&a.out, &image)?;
    println!("refocused at slope {slope:.4} px/view -> {}", a.out.display());
    Ok(())
}
