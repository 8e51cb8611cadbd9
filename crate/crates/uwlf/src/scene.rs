//! Procedural layered scenes and their light-field rendering.
//!
//! A scene is a stack of textured layers described in central-view pixel
//! coordinates. Every layer knows its inverse depth at any point, so a view
//! at angular offset `(dv, du)` can be rendered backwards: for each output
//! pixel `p` we solve `p = q + offset * disparity(q)` for the layer point
//! `q`, then composite the layers back to front. Textures are continuous
//! functions of `q`, so the central view reproduces the scene texture
//! exactly and off-centre views need no resampling.
//!
//! Value noise is lattice noise: each integer lattice corner gets a value
//! `hash::unit(seed, [layer, channel, octave, i, j])`, corners are blended
//! with the smoothstep weight `3t^2 - 2t^3` along each axis, and octave `o`
//! uses lattice spacing `scale / 2^o` with amplitude `2^-o`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash;
use crate::image::Image;
use crate::lightfield::{CameraRig, DepthMap, LengthUnit, LfDims, LightField, CHANNELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene has no layers")]
    EmptySpec,
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("the farthest layer must be a full plane covering the whole view")]
    NoBackground,
    #[error("scene depths are in {scene:?} but the rig baseline is in {rig:?}")]
    DepthUnitMismatch { scene: LengthUnit, rig: LengthUnit },
    #[error("rig resolution {rig} does not match scene width {scene}")]
    ResolutionMismatch { rig: usize, scene: usize },
    #[error("angular size {0}x{1} must be odd in both directions")]
    EvenAngularSize(usize, usize),
    #[error("layer {layer} folds over itself at this baseline (parallax gradient {gradient:.3})")]
    FoldOver { layer: usize, gradient: f64 },
}

/// Axis-aligned rectangle in central-view pixel coordinates, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    fn contains(&self, y: f64, x: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Fronto-parallel plane; unbounded unless a footprint is given.
    Plane {
        depth: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        footprint: Option<Rect>,
    },
    /// Plane whose inverse depth varies linearly along `axis`, from
    /// `1/depth_start` at coordinate 0 to `1/depth_end` at the last pixel.
    Slanted {
        depth_start: f64,
        depth_end: f64,
        axis: Axis,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        footprint: Option<Rect>,
    },
    /// Disc-shaped cap bulging towards the camera. Inverse depth falls off
    /// quadratically from `1/apex_depth` at the centre to `1/rim_depth` on the rim.
    SphereCap {
        center_x: f64,
        center_y: f64,
        radius: f64,
        apex_depth: f64,
        rim_depth: f64,
    },
}

impl Geometry {
    fn min_depth(&self) -> f64 {
        match *self {
            Geometry::Plane { depth, .. } => depth,
            Geometry::Slanted { depth_start, depth_end, .. } => depth_start.min(depth_end),
            Geometry::SphereCap { apex_depth, rim_depth, .. } => apex_depth.min(rim_depth),
        }
    }

    fn is_full_plane(&self) -> bool {
        matches!(
            self,
            Geometry::Plane { footprint: None, .. } | Geometry::Slanted { footprint: None, .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureKind {
    /// Two-colour checkerboard with square cells of `period` pixels.
    Checker { period: f64 },
    /// Fractal lattice value noise, base lattice spacing `scale` pixels.
    ValueNoise { scale: f64, octaves: u32 },
    /// Linear blend between two colours along `angle_deg`. Carries almost no
    /// matching signal, so such layers are flagged untextured.
    Gradient { angle_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub geometry: Geometry,
    pub texture: TextureKind,
}

impl LayerSpec {
    pub fn is_textured(&self) -> bool {
        !matches!(self.texture, TextureKind::Gradient { .. })
    }
}

/// Full description of a procedural scene. The seed determines every colour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    #[serde(default)]
    pub unit: LengthUnit,
    pub layers: Vec<LayerSpec>,
}

/// Difficulty of a procedurally drawn scene layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ruggedness {
    Standard,
    Hard,
}

impl SceneSpec {
    /// Nearest and farthest depth that [`SceneSpec::procedural`] can produce.
    pub const PROCEDURAL_DEPTH_RANGE: (f64, f64) = (1.5, 6.0);

    /// The built-in scene used when no spec file is supplied.
    pub fn default_with_seed(seed: u64) -> Self {
        Self::procedural(seed, 256, 256, Ruggedness::Standard)
    }

    /// Draws a layered scene from `seed`: a far background (plane or slanted
    /// plane), a mid-depth rectangular slab and one or more foreground caps.
    /// The hard layout adds more, smaller occluders and checker textures.
    pub fn procedural(seed: u64, height: usize, width: usize, ruggedness: Ruggedness) -> Self {
        let mut draw_index = 0u64;
        let mut draw = |lo: f64, hi: f64| {
            draw_index += 1;
            lo + (hi - lo) * hash::unit(seed, &[0x5ce7e, draw_index])
        };
        let (w, h) = (width as f64, height as f64);
        let size = w.min(h);
        let noise = |draw: &mut dyn FnMut(f64, f64) -> f64| TextureKind::ValueNoise {
            scale: draw(5.0, 12.0).round(),
            octaves: 3,
        };

        let mut layers = Vec::new();
        let background = if draw(0.0, 1.0) < 0.5 {
            Geometry::Plane {
                depth: draw(4.8, 6.0),
                footprint: None,
            }
        } else {
            let far = draw(5.2, 6.0);
            let near = draw(4.0, 4.8);
            let (depth_start, depth_end) = if draw(0.0, 1.0) < 0.5 { (far, near) } else { (near, far) };
            Geometry::Slanted {
                depth_start,
                depth_end,
                axis: if draw(0.0, 1.0) < 0.5 { Axis::X } else { Axis::Y },
                footprint: None,
            }
        };
        layers.push(LayerSpec {
            geometry: background,
            texture: noise(&mut draw),
        });

        let slab_w = draw(0.3, 0.5) * w;
        let slab_h = draw(0.3, 0.5) * h;
        let x0 = draw(0.05, 0.95) * (w - slab_w);
        let y0 = draw(0.05, 0.95) * (h - slab_h);
        let slab_texture = match ruggedness {
            Ruggedness::Hard => TextureKind::Checker {
                period: draw(4.0, 9.0).round(),
            },
            Ruggedness::Standard => noise(&mut draw),
        };
        layers.push(LayerSpec {
            geometry: Geometry::Plane {
                depth: draw(2.9, 3.8),
                footprint: Some(Rect {
                    x0,
                    y0,
                    x1: x0 + slab_w,
                    y1: y0 + slab_h,
                }),
            },
            texture: slab_texture,
        });

        let caps = match ruggedness {
            Ruggedness::Standard => 1 + (draw(0.0, 1.0) < 0.5) as usize,
            Ruggedness::Hard => 3,
        };
        for _ in 0..caps {
            let radius = match ruggedness {
                Ruggedness::Standard => draw(0.12, 0.2) * size,
                Ruggedness::Hard => draw(0.08, 0.12) * size,
            };
            let apex_depth = draw(1.5, 2.1);
            layers.push(LayerSpec {
                geometry: Geometry::SphereCap {
                    center_x: draw(0.15, 0.85) * w,
                    center_y: draw(0.15, 0.85) * h,
                    radius,
                    apex_depth,
                    rim_depth: apex_depth + draw(0.2, 0.6),
                },
                texture: noise(&mut draw),
            });
        }

        SceneSpec {
            height,
            width,
            seed,
            unit: LengthUnit::Meter,
            layers,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.layers.is_empty() {
            return Err(SceneError::EmptySpec);
        }
        if self.height < 2 || self.width < 2 {
            return Err(SceneError::InvalidSpec(format!(
                "image size {}x{} is too small",
                self.height, self.width
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |what: &str| Err(SceneError::InvalidSpec(format!("layer {i}: {what}")));
            match layer.geometry {
                Geometry::Plane { depth, .. } if !positive(depth) => return bad("depth must be positive"),
                Geometry::Slanted { depth_start, depth_end, axis, .. } => {
                    if !positive(depth_start) || !positive(depth_end) {
                        return bad("depths must be positive");
                    }
                    // the linear inverse-depth ramp must stay positive well
                    // beyond the image so that off-centre views see the plane
                    let extent = match axis {
                        Axis::X => self.width,
                        Axis::Y => self.height,
                    } as f64;
                    let g = Geometry::inverse_depth_slanted(depth_start, depth_end, extent);
                    if g.0 + g.1 * (-extent) <= 0.0 || g.0 + g.1 * (2.0 * extent) <= 0.0 {
                        return bad("slanted plane passes through infinity near the image");
                    }
                }
                Geometry::SphereCap { radius, apex_depth, rim_depth, center_x, center_y } => {
                    if !positive(radius) || !positive(apex_depth) || !positive(rim_depth) {
                        return bad("radius and depths must be positive");
                    }
                    if apex_depth > rim_depth {
                        return bad("apex must not be farther than the rim");
                    }
                    if !center_x.is_finite() || !center_y.is_finite() {
                        return bad("centre must be finite");
                    }
                }
                _ => {}
            }
            match layer.texture {
                TextureKind::Checker { period } if !positive(period) => return bad("checker period must be positive"),
                TextureKind::ValueNoise { scale, octaves } if !positive(scale) || octaves == 0 || octaves > 8 => {
                    return bad("noise needs a positive scale and 1..=8 octaves")
                }
                TextureKind::Gradient { angle_deg } if !angle_deg.is_finite() => return bad("angle must be finite"),
                _ => {}
            }
        }
        Ok(())
    }
}

impl Geometry {
    /// `(a, b)` with inverse depth `a + b * t` along the slant axis.
    fn inverse_depth_slanted(depth_start: f64, depth_end: f64, extent: f64) -> (f64, f64) {
        let a = 1.0 / depth_start;
        (a, (1.0 / depth_end - a) / (extent - 1.0).max(1.0))
    }
}

/// A validated scene ready for rendering, layers sorted back to front.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    order: Vec<usize>,
}

/// Central view of a scene plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterScene {
    pub texture: Image,
    pub depth: DepthMap,
    pub layer_id: Vec<u16>,
}

/// A rendered light field with one ground-truth depth map per view
/// (row-major angular order) and the visible layer of every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedLf {
    pub lf: LightField,
    pub depths: Vec<DepthMap>,
    pub layer_ids: Vec<Vec<u16>>,
}

impl RenderedLf {
    pub fn center_depth(&self) -> &DepthMap {
        let (vc, uc) = self.lf.center_index();
        &self.depths[vc * self.lf.dims().cols + uc]
    }

    pub fn center_layer_ids(&self) -> &[u16] {
        let (vc, uc) = self.lf.center_index();
        &self.layer_ids[vc * self.lf.dims().cols + uc]
    }
}

struct ViewRender {
    colors: Vec<f64>,
    depth: Vec<f64>,
    layer: Vec<u16>,
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self, SceneError> {
        spec.validate()?;
        let mut order: Vec<usize> = (0..spec.layers.len()).collect();
        // farthest first; stable so equal depths keep spec order
        order.sort_by(|&a, &b| {
            spec.layers[b]
                .geometry
                .min_depth()
                .total_cmp(&spec.layers[a].geometry.min_depth())
        });
        if !spec.layers[order[0]].geometry.is_full_plane() {
            return Err(SceneError::NoBackground);
        }
        Ok(Self { spec, order })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    /// Inverse depth of layer `i` at central-view point `(y, x)`, if covered.
    fn inverse_depth(&self, i: usize, y: f64, x: f64) -> Option<f64> {
        match self.spec.layers[i].geometry {
            Geometry::Plane { depth, footprint } => match footprint {
                Some(r) if !r.contains(y, x) => None,
                _ => Some(1.0 / depth),
            },
            Geometry::Slanted { depth_start, depth_end, axis, footprint } => {
                if let Some(r) = footprint {
                    if !r.contains(y, x) {
                        return None;
                    }
                }
                let (a, b, t) = self.slant(depth_start, depth_end, axis, y, x);
                Some(a + b * t)
            }
            Geometry::SphereCap { .. } => {
                let (inv, r2) = self.cap_inverse_depth(i, y, x);
                (r2 <= 1.0).then_some(inv)
            }
        }
    }

    fn slant(&self, depth_start: f64, depth_end: f64, axis: Axis, y: f64, x: f64) -> (f64, f64, f64) {
        let (extent, t) = match axis {
            Axis::X => (self.spec.width as f64, x),
            Axis::Y => (self.spec.height as f64, y),
        };
        let (a, b) = Geometry::inverse_depth_slanted(depth_start, depth_end, extent);
        (a, b, t)
    }

    /// Cap inverse depth continued with the rim value outside the disc, and
    /// the normalised squared radius.
    fn cap_inverse_depth(&self, i: usize, y: f64, x: f64) -> (f64, f64) {
        let Geometry::SphereCap { center_x, center_y, radius, apex_depth, rim_depth } = self.spec.layers[i].geometry
        else {
            unreachable!("cap geometry")
        };
        let r2 = ((x - center_x).powi(2) + (y - center_y).powi(2)) / (radius * radius);
        let rim = 1.0 / rim_depth;
        let apex = 1.0 / apex_depth;
        (rim + (apex - rim) * (1.0 - r2.min(1.0)), r2)
    }

    /// Solves `p = q + offset * (k * inv(q) - z0)` for the layer point `q`.
    fn back_project(&self, i: usize, py: f64, px: f64, offset: (f64, f64), k: f64, z0: f64) -> Option<(f64, f64)> {
        let (dv, du) = offset;
        match self.spec.layers[i].geometry {
            Geometry::Plane { depth, .. } => {
                let d = k / depth - z0;
                Some((py - dv * d, px - du * d))
            }
            Geometry::Slanted { depth_start, depth_end, axis, .. } => {
                let (a, b, _) = self.slant(depth_start, depth_end, axis, 0.0, 0.0);
                match axis {
                    Axis::X => {
                        let qx = (px - du * (k * a - z0)) / (1.0 + du * k * b);
                        let qy = py - dv * (k * (a + b * qx) - z0);
                        Some((qy, qx))
                    }
                    Axis::Y => {
                        let qy = (py - dv * (k * a - z0)) / (1.0 + dv * k * b);
                        let qx = px - du * (k * (a + b * qy) - z0);
                        Some((qy, qx))
                    }
                }
            }
            Geometry::SphereCap { .. } => {
                // contraction: the fold-over check bounds the Lipschitz constant below 1
                let (mut qy, mut qx) = (py, px);
                for _ in 0..100 {
                    let (inv, _) = self.cap_inverse_depth(i, qy, qx);
                    let d = k * inv - z0;
                    let (ny, nx) = (py - dv * d, px - du * d);
                    let moved = (ny - qy).abs() + (nx - qx).abs();
                    qy = ny;
                    qx = nx;
                    if moved < 1e-12 {
                        break;
                    }
                }
                Some((qy, qx))
            }
        }
    }

    fn check_fold_over(&self, rig: &CameraRig, max_offset: (f64, f64)) -> Result<(), SceneError> {
        let k = rig.disparity_scale();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let gradient = match layer.geometry {
                Geometry::Plane { .. } => 0.0,
                Geometry::Slanted { depth_start, depth_end, axis, .. } => {
                    let (_, b, _) = self.slant(depth_start, depth_end, axis, 0.0, 0.0);
                    let off = match axis {
                        Axis::X => max_offset.1,
                        Axis::Y => max_offset.0,
                    };
                    (k * b * off).abs()
                }
                Geometry::SphereCap { radius, apex_depth, rim_depth, .. } => {
                    let slope = 2.0 * (1.0 / apex_depth - 1.0 / rim_depth) / radius;
                    k * slope * max_offset.0.hypot(max_offset.1)
                }
            };
            if gradient >= 0.9 {
                return Err(SceneError::FoldOver { layer: i, gradient });
            }
        }
        Ok(())
    }

    fn texture(&self, i: usize, y: f64, x: f64, out: &mut [f64]) {
        let seed = self.spec.seed;
        let layer = i as u64;
        let color = |tag: u64, c: usize, lo: f64, hi: f64| lo + (hi - lo) * hash::unit(seed, &[0xc010, tag, c as u64]);
        match self.spec.layers[i].texture {
            TextureKind::Checker { period } => {
                let parity = ((x / period).floor() + (y / period).floor()).rem_euclid(2.0) == 0.0;
                for (c, o) in out.iter_mut().enumerate() {
                    *o = if parity { color(1, c, 0.15, 0.45) } else { color(2, c, 0.55, 0.85) };
                }
            }
            TextureKind::ValueNoise { scale, octaves } => {
                for (c, o) in out.iter_mut().enumerate() {
                    let n = fractal_noise(seed, layer, c as u64, y, x, scale, octaves);
                    let stretched = (0.5 + 1.8 * (n - 0.5)).clamp(0.0, 1.0);
                    let lo = color(3, c, 0.05, 0.3);
                    let hi = color(4, c, 0.7, 0.95);
                    *o = lo + (hi - lo) * stretched;
                }
            }
            TextureKind::Gradient { angle_deg } => {
                let (s, co) = angle_deg.to_radians().sin_cos();
                let (cx, cy) = (self.spec.width as f64 / 2.0, self.spec.height as f64 / 2.0);
                let span = (self.spec.width + self.spec.height) as f64;
                let t = (0.5 + ((x - cx) * co + (y - cy) * s) / span).clamp(0.0, 1.0);
                for (c, o) in out.iter_mut().enumerate() {
                    let a = color(1, c, 0.15, 0.45);
                    let b = color(2, c, 0.55, 0.85);
                    *o = a + (b - a) * t;
                }
            }
        }
    }

    fn render_view(&self, offset: (f64, f64), k: f64, z0: f64) -> ViewRender {
        let (h, w) = (self.spec.height, self.spec.width);
        let mut colors = vec![0.0; h * w * CHANNELS];
        let mut depth = vec![0.0; h * w];
        let mut layer = vec![0u16; h * w];
        let mut buf = [0.0; CHANNELS];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                for &i in &self.order {
                    let Some((qy, qx)) = self.back_project(i, y as f64, x as f64, offset, k, z0) else {
                        continue;
                    };
                    let Some(inv) = self.inverse_depth(i, qy, qx) else {
                        continue;
                    };
                    self.texture(i, qy, qx, &mut buf);
                    colors[p * CHANNELS..(p + 1) * CHANNELS].copy_from_slice(&buf);
                    depth[p] = 1.0 / inv;
                    layer[p] = i as u16;
                }
            }
        }
        ViewRender { colors, depth, layer }
    }

    /// Per-layer "textured" flags, indexed like the spec's layers.
    pub fn textured_layers(&self) -> Vec<bool> {
        self.spec.layers.iter().map(LayerSpec::is_textured).collect()
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, layer: u64, channel: u64, octave: u64, y: f64, x: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (smoothstep(x - fx), smoothstep(y - fy));
    let (ix, iy) = (fx as i64, fy as i64);
    let corner = |dx: i64, dy: i64| hash::unit(seed, &[layer, channel, octave, (ix + dx) as u64, (iy + dy) as u64]);
    let top = corner(0, 0) * (1.0 - tx) + corner(1, 0) * tx;
    let bottom = corner(0, 1) * (1.0 - tx) + corner(1, 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

fn fractal_noise(seed: u64, layer: u64, channel: u64, y: f64, x: f64, scale: f64, octaves: u32) -> f64 {
    let mut sum = 0.0;
    let mut norm = 0.0;
    for o in 0..octaves {
        let spacing = scale / f64::from(1u32 << o);
        let amplitude = 1.0 / f64::from(1u32 << o);
        sum += amplitude * value_noise(seed, layer, channel, o as u64, y / spacing, x / spacing);
        norm += amplitude;
    }
    sum / norm
}

/// Central view of the scene: texture, ground-truth depth and layer index.
pub fn gen_scene(spec: &SceneSpec) -> Result<CenterScene, SceneError> {
    let scene = Scene::new(spec.clone())?;
    let view = scene.render_view((0.0, 0.0), 0.0, 0.0);
    Ok(CenterScene {
        texture: Image::from_vec(spec.height, spec.width, CHANNELS, view.colors).expect("shape"),
        depth: DepthMap::new(spec.height, spec.width, view.depth).expect("layer depths are positive"),
        layer_id: view.layer,
    })
}

/// Renders a `rows x cols` light field of the scene with the given rig.
///
/// Views are rendered relative to `rig.zero_parallax`, so a non-zero value
/// produces an already refocused light field without any border loss.
pub fn render_lf(spec: &SceneSpec, rig: &CameraRig, angular: (usize, usize)) -> Result<RenderedLf, SceneError> {
    let (rows, cols) = angular;
    if rows % 2 == 0 || cols % 2 == 0 {
        return Err(SceneError::EvenAngularSize(rows, cols));
    }
    if spec.unit != rig.unit {
        return Err(SceneError::DepthUnitMismatch {
            scene: spec.unit,
            rig: rig.unit,
        });
    }
    if rig.resolution != spec.width {
        return Err(SceneError::ResolutionMismatch {
            rig: rig.resolution,
            scene: spec.width,
        });
    }
    rig.validate().map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
    let scene = Scene::new(spec.clone())?;
    let dims = LfDims::new(rows, cols, spec.height, spec.width);
    let max_offset = ((rows / 2) as f64, (cols / 2) as f64);
    scene.check_fold_over(rig, max_offset)?;

    use rayon::prelude::*;
    let k = rig.disparity_scale();
    let indices: Vec<_> = dims.angular_indices().collect();
    let renders: Vec<ViewRender> = indices
        .par_iter()
        .map(|&(v, u)| scene.render_view(dims.offset(v, u), k, rig.zero_parallax))
        .collect();

    let mut data = Vec::with_capacity(dims.view_count() * dims.view_len());
    let mut depths = Vec::with_capacity(renders.len());
    let mut layer_ids = Vec::with_capacity(renders.len());
    for r in renders {
        data.extend_from_slice(&r.colors);
        depths.push(DepthMap::new(spec.height, spec.width, r.depth).expect("layer depths are positive"));
        layer_ids.push(r.layer);
    }
    Ok(RenderedLf {
        lf: LightField::new(dims, data).expect("textures lie in [0, 1]"),
        depths,
        layer_ids,
    })
}

/// Pixels of the central view that carry matching signal: on a textured
/// layer, at least `margin` pixels from the border, and with local gradient
/// energy above a small floor.
pub fn textured_mask(spec: &SceneSpec, center: &CenterScene, margin: usize) -> Vec<bool> {
    let (h, w) = (spec.height, spec.width);
    let luma = center.texture.luma();
    let mut mask = vec![false; h * w];
    for y in margin.max(2)..h.saturating_sub(margin.max(2)) {
        for x in margin.max(2)..w.saturating_sub(margin.max(2)) {
            let layer = center.layer_id[y * w + x] as usize;
            if !spec.layers[layer].is_textured() {
                continue;
            }
            let mut energy = 0.0;
            for yy in y - 2..=y + 2 {
                for xx in x - 2..=x + 2 {
                    let gx = luma.get(yy, xx + 1, 0) - luma.get(yy, xx - 1, 0);
                    let gy = luma.get(yy + 1, xx, 0) - luma.get(yy - 1, xx, 0);
                    energy += gx * gx + gy * gy;
                }
            }
            mask[y * w + x] = energy / 25.0 > 1e-5;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_spec(depth: f64, texture: TextureKind) -> SceneSpec {
        SceneSpec {
            height: 24,
            width: 32,
            seed: 3,
            unit: LengthUnit::Meter,
            layers: vec![LayerSpec {
                geometry: Geometry::Plane { depth, footprint: None },
                texture,
            }],
        }
    }

    #[test]
    fn single_plane_depth_is_constant() {
        let spec = plane_spec(10.0, TextureKind::Checker { period: 4.0 });
        let center = gen_scene(&spec).unwrap();
        assert!(center.depth.values().iter().all(|&d| d == 10.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec::procedural(11, 40, 48, Ruggedness::Hard);
        assert_eq!(gen_scene(&spec).unwrap(), gen_scene(&spec).unwrap());
    }

    #[test]
    fn empty_and_backgroundless_specs_are_rejected() {
        let mut spec = plane_spec(5.0, TextureKind::Checker { period: 4.0 });
        spec.layers.clear();
        assert_eq!(gen_scene(&spec).unwrap_err(), SceneError::EmptySpec);
        spec.layers.push(LayerSpec {
            geometry: Geometry::SphereCap {
                center_x: 10.0,
                center_y: 10.0,
                radius: 5.0,
                apex_depth: 2.0,
                rim_depth: 3.0,
            },
            texture: TextureKind::ValueNoise { scale: 4.0, octaves: 2 },
        });
        assert_eq!(gen_scene(&spec).unwrap_err(), SceneError::NoBackground);
    }

    #[test]
    fn cap_over_background_gives_bimodal_depth() {
        let mut spec = plane_spec(10.0, TextureKind::ValueNoise { scale: 6.0, octaves: 2 });
        spec.layers.push(LayerSpec {
            geometry: Geometry::SphereCap {
                center_x: 16.0,
                center_y: 12.0,
                radius: 8.0,
                apex_depth: 2.0,
                rim_depth: 3.0,
            },
            texture: TextureKind::ValueNoise { scale: 6.0, octaves: 2 },
        });
        let center = gen_scene(&spec).unwrap();
        let near = center.depth.values().iter().filter(|&&d| (2.0..=3.0).contains(&d)).count();
        let far = center.depth.values().iter().filter(|&&d| d == 10.0).count();
        assert_eq!(near + far, 24 * 32);
        assert!(near > 100 && far > 300, "{near} {far}");
    }

    #[test]
    fn unit_and_resolution_checks() {
        let spec = plane_spec(5.0, TextureKind::Checker { period: 4.0 });
        let mut rig = CameraRig::new(35.0, 0.01, 32.0, 32).unwrap();
        rig.unit = LengthUnit::Millimeter;
        assert!(matches!(render_lf(&spec, &rig, (3, 3)), Err(SceneError::DepthUnitMismatch { .. })));
        let rig = CameraRig::new(35.0, 0.01, 32.0, 64).unwrap();
        assert!(matches!(render_lf(&spec, &rig, (3, 3)), Err(SceneError::ResolutionMismatch { .. })));
        let rig = CameraRig::new(35.0, 0.01, 32.0, 32).unwrap();
        assert!(matches!(render_lf(&spec, &rig, (3, 4)), Err(SceneError::EvenAngularSize(3, 4))));
    }

    #[test]
    fn zero_baseline_views_coincide() {
        let spec = SceneSpec::procedural(5, 32, 32, Ruggedness::Standard);
        let rig = CameraRig::new(35.0, 0.0, 32.0, 32).unwrap();
        let r = render_lf(&spec, &rig, (3, 3)).unwrap();
        let center = r.lf.center_view();
        for view in r.lf.views() {
            assert_eq!(view, center);
        }
    }

    #[test]
    fn center_view_is_scene_texture() {
        let spec = SceneSpec::procedural(9, 40, 40, Ruggedness::Standard);
        let rig = CameraRig::for_depth_range(1.5, 6.0, 40, 4.0).unwrap();
        let r = render_lf(&spec, &rig, (5, 5)).unwrap();
        let center = gen_scene(&spec).unwrap();
        assert_eq!(r.lf.center_view(), center.texture);
        assert_eq!(r.center_depth(), &center.depth);
    }

    #[test]
    fn fold_over_is_detected() {
        let mut spec = plane_spec(10.0, TextureKind::Checker { period: 4.0 });
        spec.layers.push(LayerSpec {
            geometry: Geometry::SphereCap {
                center_x: 16.0,
                center_y: 12.0,
                radius: 3.0,
                apex_depth: 0.5,
                rim_depth: 5.0,
            },
            texture: TextureKind::Checker { period: 2.0 },
        });
        let rig = CameraRig::new(35.0, 0.05, 32.0, 32).unwrap();
        assert!(matches!(render_lf(&spec, &rig, (5, 5)), Err(SceneError::FoldOver { layer: 1, .. })));
    }
}
