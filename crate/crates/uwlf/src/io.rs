//! On-disk scene bundles.
//!
//! A bundle directory holds
//!
//! ```text
//! manifest.json            index, per-file SHA-256 and a checksum over everything
//! camera.json              rig and per-view camera poses
//! degradation.json         formation-model parameters (when known)
//! clean/view_{v}_{u}.png   16-bit RGB, present when the clean light field is
//! degraded/view_{v}_{u}.png
//! enhanced/view_{v}_{u}.png
//! depth_{v}_{u}.pfm        32-bit float depth (or depth_{v}_{u}.png, 16-bit with a scale)
//! ```
//!
//! Views are quantised linearly to 16 bits, so a round trip moves a sample
//! by at most `0.5 / 65535`. PFM depths are stored as `f32`: values that
//! are already single precision come back bit-exact.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::degrade::DegradationParams;
use crate::image::Image;
use crate::lightfield::{CameraRig, DepthMap, LfDims, LfError, LightField, CHANNELS};

/// Bumped whenever the layout or a schema changes.
pub const FORMAT_VERSION: u32 = 1;
pub const FORMAT_NAME: &str = "uwlf-scene";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CAMERA_FILE: &str = "camera.json";
pub const DEGRADATION_FILE: &str = "degradation.json";

const U16_MAX: f64 = 65535.0;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{kind} view ({v}, {u}) is missing")]
    MissingView { kind: ViewKind, v: usize, u: usize },
    #[error("depth map of view ({v}, {u}) is missing")]
    MissingDepth { v: usize, u: usize },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("malformed {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("incomplete bundle: {0}")]
    IncompleteBundle(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    LightField(#[from] LfError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl ToString) -> IoError {
    IoError::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Which light field a view file belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Clean,
    Degraded,
    Enhanced,
}

impl ViewKind {
    pub fn dir(self) -> &'static str {
        match self {
            ViewKind::Clean => "clean",
            ViewKind::Degraded => "degraded",
            ViewKind::Enhanced => "enhanced",
        }
    }
}

impl std::fmt::Display for ViewKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.dir())
    }
}

/// How depth maps are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    #[default]
    Pfm,
    /// 16-bit grey PNG of `depth / scale`, `scale` being the largest depth
    /// in the bundle. Lossy; meant for image viewers.
    Png16,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub name: String,
    pub seed: u64,
    pub preset: Option<String>,
}

/// Everything stored for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub lf_clean: Option<LightField>,
    pub lf_degraded: Option<LightField>,
    /// Output of an enhancement run, kept beside its input.
    pub lf_enhanced: Option<LightField>,
    /// One per view, row-major; may be empty.
    pub depths: Vec<DepthMap>,
    pub rig: CameraRig,
    pub params: Option<DegradationParams>,
    pub meta: SceneMeta,
    /// Free-form record of the configuration that produced the bundle.
    pub config: Option<serde_json::Value>,
}

impl SceneBundle {
    /// A bundle holding only a clean light field.
    pub fn clean(lf: LightField, depths: Vec<DepthMap>, rig: CameraRig, meta: SceneMeta) -> Self {
        Self {
            lf_clean: Some(lf),
            lf_degraded: None,
            lf_enhanced: None,
            depths,
            rig,
            params: None,
            meta,
            config: None,
        }
    }

    fn light_fields(&self) -> [(ViewKind, Option<&LightField>); 3] {
        [
            (ViewKind::Clean, self.lf_clean.as_ref()),
            (ViewKind::Degraded, self.lf_degraded.as_ref()),
            (ViewKind::Enhanced, self.lf_enhanced.as_ref()),
        ]
    }

    pub fn dims(&self) -> Option<LfDims> {
        self.light_fields().into_iter().find_map(|(_, lf)| lf).map(LightField::dims)
    }

    /// The most processed light field: enhanced, else degraded, else clean.
    pub fn latest(&self) -> Option<&LightField> {
        self.lf_enhanced.as_ref().or(self.lf_degraded.as_ref()).or(self.lf_clean.as_ref())
    }

    pub fn validate(&self) -> Result<LfDims, IoError> {
        let dims = self
            .dims()
            .ok_or_else(|| IoError::IncompleteBundle("the bundle holds no light field".into()))?;
        for (kind, lf) in self.light_fields() {
            if let Some(lf) = lf.filter(|lf| lf.dims() != dims) {
                return Err(IoError::IncompleteBundle(format!(
                    "{kind} light field is {:?}, expected {dims:?}",
                    lf.dims()
                )));
            }
        }
        if !self.depths.is_empty() {
            if self.depths.len() != dims.view_count() {
                return Err(IoError::IncompleteBundle(format!(
                    "{} depth maps for {} views",
                    self.depths.len(),
                    dims.view_count()
                )));
            }
            if let Some(d) = self.depths.iter().find(|d| (d.height(), d.width()) != (dims.height, dims.width)) {
                return Err(IoError::IncompleteBundle(format!(
                    "depth map of {}x{} for {}x{} views",
                    d.height(),
                    d.width(),
                    dims.height,
                    dims.width
                )));
            }
        }
        Ok(dims)
    }
}

/// Pose of one camera of the planar rig, in the rig's length unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPose {
    pub v: usize,
    pub u: usize,
    /// `[x, y, z]`: `x` grows with `u`, `y` with `v`, `z` is 0.
    pub location: [f64; 3],
    pub rotation: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    #[serde(flatten)]
    pub rig: CameraRig,
    pub views: Vec<ViewPose>,
}

impl CameraFile {
    pub fn new(rig: CameraRig, dims: LfDims) -> Self {
        const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let views = dims
            .angular_indices()
            .map(|(v, u)| {
                let (dv, du) = dims.offset(v, u);
                ViewPose {
                    v,
                    u,
                    location: [du * rig.baseline, dv * rig.baseline, 0.0],
                    rotation: IDENTITY,
                }
            })
            .collect();
        Self { rig, views }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub meta: SceneMeta,
    pub dims: LfDims,
    pub clean: bool,
    pub degraded: bool,
    pub enhanced: bool,
    pub depth_format: Option<DepthFormat>,
    /// Divisor of 16-bit depth PNGs.
    pub depth_scale: Option<f64>,
    pub config: Option<serde_json::Value>,
    pub files: Vec<FileEntry>,
    /// SHA-256 over this manifest serialised with an empty checksum.
    pub checksum: String,
}

impl Manifest {
    fn compute_checksum(&self) -> String {
        let mut body = self.clone();
        body.checksum.clear();
        let bytes = serde_json::to_vec(&body).expect("manifest serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn view_file(kind: ViewKind, v: usize, u: usize) -> String {
    format!("{}/view_{v}_{u}.png", kind.dir())
}

pub fn depth_file(format: DepthFormat, v: usize, u: usize) -> String {
    match format {
        DepthFormat::Pfm => format!("depth_{v}_{u}.pfm"),
        DepthFormat::Png16 => format!("depth_{v}_{u}.png"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaveOptions {
    pub depth_format: DepthFormat,
}

/// Writes `bundle` under `dir` (created if needed) and returns the manifest.
pub fn save_scene(bundle: &SceneBundle, dir: &Path) -> Result<Manifest, IoError> {
    save_scene_with(bundle, dir, SaveOptions::default())
}

pub fn save_scene_with(bundle: &SceneBundle, dir: &Path, options: SaveOptions) -> Result<Manifest, IoError> {
    let dims = bundle.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    let mut record = |rel: String, bytes: Vec<u8>| -> Result<(), IoError> {
        let path = dir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        files.push(FileEntry {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    };

    for (kind, lf) in bundle.light_fields() {
        if let Some(lf) = lf {
            for (v, u) in dims.angular_indices() {
                let view = lf.sai(v, u)?;
                record(view_file(kind, v, u), encode_png16(&view)?)?;
            }
        }
    }

    let mut depth_scale = None;
    if !bundle.depths.is_empty() {
        if options.depth_format == DepthFormat::Png16 {
            let max = bundle
                .depths
                .iter()
                .flat_map(|d| d.values().iter().copied())
                .fold(0.0, f64::max);
            depth_scale = Some(max);
        }
        for ((v, u), depth) in dims.angular_indices().zip(&bundle.depths) {
            let bytes = match depth_scale {
                None => encode_pfm(depth.height(), depth.width(), depth.values()),
                Some(scale) => encode_depth_png(depth, scale)?,
            };
            record(depth_file(options.depth_format, v, u), bytes)?;
        }
    }

    let camera = CameraFile::new(bundle.rig, dims);
    record(CAMERA_FILE.into(), to_json(&camera))?;
    if let Some(params) = &bundle.params {
        record(DEGRADATION_FILE.into(), to_json(params))?;
    }

    let mut manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        meta: bundle.meta.clone(),
        dims,
        clean: bundle.lf_clean.is_some(),
        degraded: bundle.lf_degraded.is_some(),
        enhanced: bundle.lf_enhanced.is_some(),
        depth_format: (!bundle.depths.is_empty()).then_some(options.depth_format),
        depth_scale,
        config: bundle.config.clone(),
        files,
        checksum: String::new(),
    };
    manifest.checksum = manifest.compute_checksum();
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, to_json(&manifest)).map_err(io_err(&path))?;
    Ok(manifest)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serialises");
    bytes.push(b'\n');
    bytes
}

/// Reads and verifies the manifest of a bundle directory.
pub fn read_manifest(dir: &Path) -> Result<Manifest, IoError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| IoError::MalformedManifest(e.to_string()))?;
    if manifest.format != FORMAT_NAME {
        return Err(IoError::MalformedManifest(format!("unknown format {:?}", manifest.format)));
    }
    if manifest.version != FORMAT_VERSION {
        return Err(IoError::MalformedManifest(format!("unsupported version {}", manifest.version)));
    }
    let d = manifest.dims;
    if d.rows % 2 == 0 || d.cols % 2 == 0 {
        return Err(IoError::MalformedManifest(format!("angular size {}x{} is not odd", d.rows, d.cols)));
    }
    if d.height == 0 || d.width == 0 {
        return Err(IoError::MalformedManifest("empty views".into()));
    }
    if manifest.compute_checksum() != manifest.checksum {
        return Err(IoError::ChecksumMismatch(MANIFEST_FILE.into()));
    }
    Ok(manifest)
}

/// Loads a bundle, checking that the angular grid is complete and that every
/// file matches its recorded digest.
pub fn load_scene(dir: &Path) -> Result<SceneBundle, IoError> {
    let manifest = read_manifest(dir)?;
    let dims = manifest.dims;
    let listed = |rel: &str| manifest.files.iter().find(|f| f.path == rel);

    // completeness before content, so a deleted file is named as such
    let kinds = [
        (ViewKind::Clean, manifest.clean),
        (ViewKind::Degraded, manifest.degraded),
        (ViewKind::Enhanced, manifest.enhanced),
    ];
    for (kind, present) in kinds {
        if !present {
            continue;
        }
        for (v, u) in dims.angular_indices() {
            let rel = view_file(kind, v, u);
            if listed(&rel).is_none() || !dir.join(&rel).is_file() {
                return Err(IoError::MissingView { kind, v, u });
            }
        }
    }
    if let Some(format) = manifest.depth_format {
        for (v, u) in dims.angular_indices() {
            let rel = depth_file(format, v, u);
            if listed(&rel).is_none() || !dir.join(&rel).is_file() {
                return Err(IoError::MissingDepth { v, u });
            }
        }
    }
    if kinds.iter().all(|(_, present)| !present) {
        return Err(IoError::IncompleteBundle("no light field listed".into()));
    }

    let read = |rel: &str| -> Result<Vec<u8>, IoError> {
        let entry = listed(rel).ok_or_else(|| IoError::IncompleteBundle(format!("{rel} is not in the manifest")))?;
        let path = dir.join(rel);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if bytes.len() as u64 != entry.bytes || hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Err(IoError::ChecksumMismatch(rel.to_string()));
        }
        Ok(bytes)
    };

    let load_lf = |kind: ViewKind| -> Result<LightField, IoError> {
        let mut views = Vec::with_capacity(dims.view_count());
        for (v, u) in dims.angular_indices() {
            let rel = view_file(kind, v, u);
            let img = decode_png16(&read(&rel)?, &dir.join(&rel))?;
            if img.shape() != (dims.height, dims.width, CHANNELS) {
                return Err(malformed(&dir.join(&rel), format!("shape {:?}", img.shape())));
            }
            views.push(img);
        }
        Ok(LightField::from_views(dims.rows, dims.cols, &views)?)
    };
    let lf_clean = manifest.clean.then(|| load_lf(ViewKind::Clean)).transpose()?;
    let lf_degraded = manifest.degraded.then(|| load_lf(ViewKind::Degraded)).transpose()?;
    let lf_enhanced = manifest.enhanced.then(|| load_lf(ViewKind::Enhanced)).transpose()?;

    let mut depths = Vec::new();
    if let Some(format) = manifest.depth_format {
        for (v, u) in dims.angular_indices() {
            let rel = depth_file(format, v, u);
            let path = dir.join(&rel);
            let bytes = read(&rel)?;
            let depth = match format {
                DepthFormat::Pfm => {
                    let (h, w, values) = decode_pfm(&bytes, &path)?;
                    DepthMap::new(h, w, values)?
                }
                DepthFormat::Png16 => {
                    let scale = manifest
                        .depth_scale
                        .ok_or_else(|| IoError::MalformedManifest("16-bit depth without a scale".into()))?;
                    decode_depth_png(&bytes, scale, &path)?
                }
            };
            if (depth.height(), depth.width()) != (dims.height, dims.width) {
                return Err(malformed(&path, "depth map size differs from the views"));
            }
            depths.push(depth);
        }
    }

    let camera: CameraFile = serde_json::from_slice(&read(CAMERA_FILE)?)
        .map_err(|e| malformed(&dir.join(CAMERA_FILE), e))?;
    camera.rig.validate()?;
    if camera.views.len() != dims.view_count() {
        return Err(malformed(&dir.join(CAMERA_FILE), "pose count differs from the view count"));
    }
    let params = if listed(DEGRADATION_FILE).is_some() {
        let p: DegradationParams = serde_json::from_slice(&read(DEGRADATION_FILE)?)
            .map_err(|e| malformed(&dir.join(DEGRADATION_FILE), e))?;
        Some(p)
    } else {
        None
    };

    Ok(SceneBundle {
        lf_clean,
        lf_degraded,
        lf_enhanced,
        depths,
        rig: camera.rig,
        params,
        meta: manifest.meta,
        config: manifest.config,
    })
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * U16_MAX).round() as u16
}

/// 16-bit PNG of an RGB or one-channel image with samples in `[0, 1]`.
pub fn encode_png16(img: &Image) -> Result<Vec<u8>, IoError> {
    let color = match img.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(IoError::IncompleteBundle(format!("cannot write a {c}-channel image")));
        }
    };
    let data: Vec<u8> = img.as_slice().iter().flat_map(|&v| quantize(v).to_be_bytes()).collect();
    encode_png_raw(img.width(), img.height(), color, &data)
}

fn encode_png_raw(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    let png_err = |e: png::EncodingError| IoError::IoFailure {
        path: PathBuf::from("<png>"),
        source: std::io::Error::other(e),
    };
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

/// Decodes a 16-bit grey or RGB PNG into samples in `[0, 1]`.
pub fn decode_png16(bytes: &[u8], path: &Path) -> Result<Image, IoError> {
    let (w, h, channels, raw) = decode_png_raw(bytes, path)?;
    let data = raw
        .chunks_exact(2)
        .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])) / U16_MAX)
        .collect();
    Image::from_vec(h, w, channels, data).map_err(|e| malformed(path, e))
}

fn decode_png_raw(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>), IoError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| malformed(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| malformed(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| malformed(path, e))?;
    if info.bit_depth != png::BitDepth::Sixteen {
        return Err(malformed(path, format!("expected 16-bit samples, found {:?}", info.bit_depth)));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(malformed(path, format!("unsupported colour type {other:?}"))),
    };
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, channels, buf))
}

fn encode_depth_png(depth: &DepthMap, scale: f64) -> Result<Vec<u8>, IoError> {
    let data: Vec<u8> = depth
        .values()
        .iter()
        .flat_map(|&d| quantize(d / scale).to_be_bytes())
        .collect();
    encode_png_raw(depth.width(), depth.height(), png::ColorType::Grayscale, &data)
}

fn decode_depth_png(bytes: &[u8], scale: f64, path: &Path) -> Result<DepthMap, IoError> {
    let img = decode_png16(bytes, path)?;
    if img.channels() != 1 {
        return Err(malformed(path, "depth PNG must be greyscale"));
    }
    let (h, w) = (img.height(), img.width());
    // a zero code would decode to a zero depth; it can only come from rounding
    let floor = 0.5 / U16_MAX * scale;
    let values = img.into_vec().into_iter().map(|v| (v * scale).max(floor)).collect();
    Ok(DepthMap::new(h, w, values)?)
}

/// One-channel little-endian PFM (`Pf` header, scale `-1`), rows stored
/// bottom to top as the format requires.
pub fn encode_pfm(height: usize, width: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), height * width, "PFM buffer size");
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for y in (0..height).rev() {
        for &v in &values[y * width..(y + 1) * width] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Parses a PFM of either byte order into row-major top-to-bottom values.
/// Three-channel (`PF`) files are accepted and reduced to their first channel.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>), IoError> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "truncated PFM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| malformed(path, e))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match fields[0] {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(malformed(path, format!("not a PFM header: {other:?}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|e| malformed(path, e));
    let (width, height) = (parse(fields[1])?, parse(fields[2])?);
    let scale: f64 = fields[3].parse().map_err(|e| malformed(path, e))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed(path, "PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    let expected = width * height * channels * 4;
    if raster.len() != expected {
        return Err(malformed(
            path,
            format!("raster holds {} bytes, {}x{}x{channels} needs {expected}", raster.len(), width, height),
        ));
    }
    let mut values = vec![0.0; width * height];
    for (i, chunk) in raster.chunks_exact(4 * channels).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, x) = (i / width, i % width);
        values[(height - 1 - row) * width + x] = f64::from(v);
    }
    Ok((height, width, values))
}

pub fn write_png16(path: &Path, img: &Image) -> Result<(), IoError> {
    write_file(path, &encode_png16(img)?)
}

pub fn read_png16(path: &Path) -> Result<Image, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_png16(&bytes, path)
}

/// Writes a one-channel map as PFM; non-finite values are kept as is.
pub fn write_pfm(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<(), IoError> {
    write_file(path, &encode_pfm(height, width, values))
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>), IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pfm(&bytes, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_file(path, &to_json(value))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Reads a JSON file written by [`write_json`] or by hand.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| malformed(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let bytes = encode_pfm(2, 1, &[1.0, 2.0]);
        let header = b"Pf\n1 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..header.len() + 4], &2.0f32.to_le_bytes());
        let (h, w, v) = decode_pfm(&bytes, Path::new("t")).unwrap();
        assert_eq!((h, w, v), (2, 1, vec![1.0, 2.0]));
    }

    #[test]
    fn big_endian_pfm_is_read() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.5f32.to_be_bytes());
        bytes.extend_from_slice(&3.0f32.to_be_bytes());
        let (_, _, v) = decode_pfm(&bytes, Path::new("t")).unwrap();
        assert_eq!(v, vec![0.5, 3.0]);
    }

    #[test]
    fn color_pfm_keeps_first_channel() {
        let mut bytes = b"PF\n1 2\n-1.0\n".to_vec();
        for v in [1.0f32, 9.0, 9.0, 2.0, 9.0, 9.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let (h, w, v) = decode_pfm(&bytes, Path::new("t")).unwrap();
        assert_eq!((h, w, v), (2, 1, vec![2.0, 1.0]));
    }

    #[test]
    fn truncated_pfm_is_rejected() {
        let bytes = encode_pfm(2, 2, &[1.0; 4]);
        assert!(matches!(
            decode_pfm(&bytes[..bytes.len() - 1], Path::new("t")),
            Err(IoError::MalformedFile { .. })
        ));
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0", Path::new("t")).is_err());
    }

    #[test]
    fn png16_quantisation_bound() {
        let img = Image::from_fn(3, 5, 3, |y, x, c| ((y * 15 + x * 3 + c) as f64 / 44.0).powf(1.3));
        let back = decode_png16(&encode_png16(&img).unwrap(), Path::new("t")).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }

    #[test]
    fn manifest_checksum_covers_fields() {
        let mut m = Manifest {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            meta: SceneMeta::default(),
            dims: LfDims::new(3, 3, 2, 2),
            clean: true,
            degraded: false,
            enhanced: false,
            depth_format: None,
            depth_scale: None,
            config: None,
            files: vec![],
            checksum: String::new(),
        };
        let a = m.compute_checksum();
        m.meta.seed = 1;
        assert_ne!(a, m.compute_checksum());
    }
}
