//! Thin-lens dual-pixel image formation and the synthetic scene renderer.
//!
//! A point at depth `Z` seen through a thin lens focused at `g` with aperture
//! `L` and focal length `f` blurs to a signed size
//! `b = L*f*(Z - g) / (Z*(g - f))` (positive behind the focal plane). The
//! dual-pixel disparity is `d = alpha * b`, which is affine in inverse depth:
//! `d = A + B/Z`. Because `(A, B)` depend on the unknown lens parameters, two
//! different scenes under two different lenses can produce identical
//! dual-pixel data; [`equivalent_scene_depth`] constructs that counterpart
//! scene explicitly.
//!
//! The renderer models each DP view with a one-dimensional horizontal box
//! point-spread function: the left view's kernel spans 0..d and the right
//! view's spans -d..0 (sign of `d` flips which half each view receives), so
//! the offset between the two views equals the disparity `d` exactly and the
//! average of the pair equals the image blurred by the centered box spanning
//! -|d|..|d|. Each kernel integrates to one, so an in-focus DP view equals
//! the pinhole image.

use crate::camera::{CameraModel, Rig};
use crate::depth::{metric_to_normalized_inverse, ConfidenceMap, DepthRange, NormalizedInverseDepthMap};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{RasterImage, ScalarGrid};
use crate::warp::bilinear_at;
use serde::{Deserialize, Serialize};

/// Thin-lens parameters: aperture diameter and focal length in meters, focus
/// distance in meters, and the disparity gain in pixels per meter of blur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinLensParams {
    pub aperture: f64,
    pub focal_length: f64,
    pub focus_distance: f64,
    pub disparity_gain: f64,
}

impl ThinLensParams {
    pub fn new(aperture: f64, focal_length: f64, focus_distance: f64, disparity_gain: f64) -> Result<Self> {
        let lens = Self { aperture, focal_length, focus_distance, disparity_gain };
        lens.validate()?;
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.aperture > 0.0
            && self.focal_length > 0.0
            && self.focus_distance > self.focal_length
            && self.disparity_gain > 0.0)
        {
            return Err(Error::Domain(format!(
                "thin lens requires L > 0, 0 < f < g, alpha > 0; got L={}, f={}, g={}, alpha={}",
                self.aperture, self.focal_length, self.focus_distance, self.disparity_gain
            )));
        }
        Ok(())
    }
}

/// Signed defocus blur size in meters: `L*f*(Z - g) / (Z*(g - f))`.
///
/// Zero at the focal plane, positive behind it. Agrees with the two-step
/// similar-triangles form `b = L*(g_i - Z_i)/Z_i` where
/// `g_i = (1/f - 1/g)^-1` and `Z_i = (1/f - 1/Z)^-1`.
pub fn signed_blur_size(z: f64, lens: &ThinLensParams) -> Result<f64> {
    lens.validate()?;
    if z <= lens.focal_length {
        return Err(Error::Domain(format!(
            "depth {z} must exceed the focal length {} for an image to form",
            lens.focal_length
        )));
    }
    let (f, g, l) = (lens.focal_length, lens.focus_distance, lens.aperture);
    Ok(l * f * (z - g) / (z * (g - f)))
}

/// Image-wide affine coefficients `(A, B)` of the disparity `d = A + B/Z`,
/// in pixels and pixel-meters.
pub fn affine_coeffs(lens: &ThinLensParams) -> (f64, f64) {
    let (f, g, l, alpha) = (
        lens.focal_length,
        lens.focus_distance,
        lens.aperture,
        lens.disparity_gain,
    );
    let scale = alpha * l * f / (1.0 - f / g);
    (scale / g, -scale)
}

/// Dual-pixel disparity in pixels at depth `z`.
pub fn disparity(lens: &ThinLensParams, z: f64) -> f64 {
    let (a, b) = affine_coeffs(lens);
    a + b / z
}

/// Depth under `lens2` that produces the same disparity `lens1` produces at
/// `z1`: `Z2 = B2 / (A1 + B1/Z1 - A2)`.
pub fn equivalent_depth_scalar(z1: f64, lens1: &ThinLensParams, lens2: &ThinLensParams) -> Result<f64> {
    let (a1, b1) = affine_coeffs(lens1);
    let (a2, b2) = affine_coeffs(lens2);
    let z2 = b2 / (a1 + b1 / z1 - a2);
    if !z2.is_finite() || z2 <= 0.0 {
        return Err(Error::AmbiguityInfeasible { x: 0, y: 0, depth: z2 });
    }
    Ok(z2)
}

/// Per-pixel [`equivalent_depth_scalar`]; reports the first infeasible pixel.
pub fn equivalent_scene_depth(
    z1: &ScalarGrid,
    lens1: &ThinLensParams,
    lens2: &ThinLensParams,
) -> Result<ScalarGrid> {
    let (a1, b1) = affine_coeffs(lens1);
    let (a2, b2) = affine_coeffs(lens2);
    let mut out = Vec::with_capacity(z1.values().len());
    for (i, &z) in z1.values().iter().enumerate() {
        let z2 = b2 / (a1 + b1 / z - a2);
        if !z2.is_finite() || z2 <= 0.0 {
            return Err(Error::AmbiguityInfeasible {
                x: i % z1.width(),
                y: i / z1.width(),
                depth: z2,
            });
        }
        out.push(z2);
    }
    ScalarGrid::new(z1.height(), z1.width(), out)
}

/// One fronto-parallel scene layer: an RGB texture pinned to the reference
/// pixel grid at `depth_m`, with an optional opacity mask (hard, >= 0.5 means
/// covered; `None` means fully opaque).
#[derive(Debug, Clone)]
pub struct Layer {
    pub texture: RasterImage,
    pub depth_m: f64,
    pub mask: Option<ScalarGrid>,
}

/// Fronto-parallel layers ordered front to back (depths strictly increasing)
/// over an opaque background at `z_far`.
#[derive(Debug, Clone)]
pub struct LayeredScene {
    layers: Vec<Layer>,
    background: RasterImage,
    range: DepthRange,
}

impl LayeredScene {
    pub fn new(layers: Vec<Layer>, background: RasterImage, range: DepthRange) -> Result<Self> {
        if background.channels() != 3 {
            return Err(Error::Config("background must be RGB".into()));
        }
        let (h, w) = (background.height(), background.width());
        let mut prev = 0.0;
        for (i, layer) in layers.iter().enumerate() {
            if layer.texture.channels() != 3
                || layer.texture.height() != h
                || layer.texture.width() != w
            {
                return Err(Error::Config(format!("layer {i} texture must be RGB of {h}x{w}")));
            }
            if let Some(m) = &layer.mask {
                if m.height() != h || m.width() != w {
                    return Err(Error::Config(format!("layer {i} mask must be {h}x{w}")));
                }
            }
            if !(layer.depth_m > range.z_near && layer.depth_m < range.z_far) {
                return Err(Error::Config(format!(
                    "layer {i} depth {} outside ({}, {})",
                    layer.depth_m, range.z_near, range.z_far
                )));
            }
            if layer.depth_m <= prev {
                return Err(Error::Config(
                    "layers must be ordered front to back with strictly increasing depth".into(),
                ));
            }
            prev = layer.depth_m;
        }
        Ok(Self { layers, background, range })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn background(&self) -> &RasterImage {
        &self.background
    }

    pub fn range(&self) -> DepthRange {
        self.range
    }

    pub fn height(&self) -> usize {
        self.background.height()
    }

    pub fn width(&self) -> usize {
        self.background.width()
    }

    pub fn layer_depths(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.depth_m).collect()
    }

    /// Same textures and masks with new layer depths (for the ambiguity
    /// construction). Depths must still be strictly increasing and in range.
    pub fn with_layer_depths(&self, depths: &[f64]) -> Result<LayeredScene> {
        if depths.len() != self.layers.len() {
            return Err(Error::Config("depth count must match layer count".into()));
        }
        let layers = self
            .layers
            .iter()
            .zip(depths)
            .map(|(l, &d)| Layer { texture: l.texture.clone(), depth_m: d, mask: l.mask.clone() })
            .collect();
        LayeredScene::new(layers, self.background.clone(), self.range)
    }
}

/// The two single-channel dual-pixel views of the center camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPixelPair {
    pub left: RasterImage,
    pub right: RasterImage,
}

/// Everything one simulated capture provides: the reference RGB view, its DP
/// pair, the four pinhole neighbor views in rig order (top, bottom, left,
/// right), and ground truth.
#[derive(Debug, Clone)]
pub struct Capture {
    pub center_rgb: RasterImage,
    pub dp: DualPixelPair,
    pub neighbors: Vec<RasterImage>,
    pub gt_depth: NormalizedInverseDepthMap,
    pub gt_conf: ConfidenceMap,
    pub rig: Rig,
    pub lens: ThinLensParams,
}

/// Which portion of the aperture a defocus render integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApertureSide {
    Left,
    Right,
    /// Centered box spanning -|d|..|d|; the reference for the energy
    /// conservation invariant (average of left and right).
    Full,
}

const ENERGY_TOL: f64 = 1e-6;

/// Renders a full capture: pinhole center RGB, defocused DP pair, four
/// pinhole neighbors, front-most-layer ground truth, and a confidence map
/// that is zero within one pixel of layer boundaries.
pub fn render_capture(scene: &LayeredScene, rig: &Rig, lens: &ThinLensParams) -> Result<Capture> {
    lens.validate()?;
    let labels = cover_labels(scene);
    let center_rgb = compose_pinhole_rgb(scene, &labels);
    let gt_depth = ground_truth_depth(scene, &labels)?;
    let gt_conf = boundary_confidence(&labels, scene.height(), scene.width());

    let left = render_center_defocus_gray(scene, lens, ApertureSide::Left)?;
    let right = render_center_defocus_gray(scene, lens, ApertureSide::Right)?;
    let full = render_center_defocus_gray(scene, lens, ApertureSide::Full)?;
    let max_dev = left
        .values()
        .iter()
        .zip(right.values())
        .zip(full.values())
        .map(|((l, r), f)| (0.5 * (l + r) - f).abs())
        .fold(0.0f64, f64::max);
    if max_dev > ENERGY_TOL {
        return Err(Error::Config(format!(
            "DP energy conservation violated: max |avg(L,R) - full| = {max_dev}"
        )));
    }

    let neighbors = rig
        .neighbors()
        .iter()
        .map(|cam| render_neighbor_pinhole(scene, rig.reference(), cam))
        .collect::<Result<Vec<_>>>()?;

    Ok(Capture {
        center_rgb,
        dp: DualPixelPair { left, right },
        neighbors,
        gt_depth,
        gt_conf,
        rig: rig.clone(),
        lens: *lens,
    })
}

/// Index of the front-most covering layer per pixel; `layers.len()` means
/// background.
fn cover_labels(scene: &LayeredScene) -> Vec<usize> {
    let (h, w) = (scene.height(), scene.width());
    let bg = scene.layers().len();
    let mut labels = vec![bg; h * w];
    for y in 0..h {
        for x in 0..w {
            for (l, layer) in scene.layers().iter().enumerate() {
                let covered = layer.mask.as_ref().is_none_or(|m| m.get(x, y) >= 0.5);
                if covered {
                    labels[y * w + x] = l;
                    break;
                }
            }
        }
    }
    labels
}

fn compose_pinhole_rgb(scene: &LayeredScene, labels: &[usize]) -> RasterImage {
    let (h, w) = (scene.height(), scene.width());
    RasterImage::from_fn(h, w, 3, |x, y, c| {
        let l = labels[y * w + x];
        if l < scene.layers().len() {
            scene.layers()[l].texture.get(x, y, c)
        } else {
            scene.background().get(x, y, c)
        }
    })
    .expect("composite of [0,1] textures")
}

fn ground_truth_depth(scene: &LayeredScene, labels: &[usize]) -> Result<NormalizedInverseDepthMap> {
    let (h, w) = (scene.height(), scene.width());
    let range = scene.range();
    let z = ScalarGrid::from_fn(h, w, |x, y| {
        let l = labels[y * w + x];
        if l < scene.layers().len() {
            scene.layers()[l].depth_m
        } else {
            range.z_far
        }
    });
    metric_to_normalized_inverse(&z, range)
}

fn boundary_confidence(labels: &[usize], h: usize, w: usize) -> ConfidenceMap {
    let grid = ScalarGrid::from_fn(h, w, |x, y| {
        let own = labels[y * w + x];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let ny = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                if labels[ny * w + nx] != own {
                    return 0.0;
                }
            }
        }
        1.0
    });
    ConfidenceMap::new(grid).expect("0/1 confidence")
}

/// Renders the center view in grayscale with the per-layer defocus kernel of
/// the requested aperture side.
pub fn render_center_defocus_gray(
    scene: &LayeredScene,
    lens: &ThinLensParams,
    side: ApertureSide,
) -> Result<RasterImage> {
    let (h, w) = (scene.height(), scene.width());
    let mut out = vec![0.0f64; h * w];
    let mut transmittance = vec![1.0f64; h * w];

    let mut composite = |gray: &ScalarGrid, alpha: &ScalarGrid, taps: &[(i64, f64)]| {
        let blurred_g = convolve_rows(gray, taps);
        let blurred_a = convolve_rows(alpha, taps);
        for i in 0..h * w {
            out[i] += transmittance[i] * blurred_g.values()[i];
            transmittance[i] *= 1.0 - blurred_a.values()[i];
        }
    };

    for layer in scene.layers() {
        let d = disparity(lens, layer.depth_m);
        let taps = kernel_taps(side, d, w)?;
        let gray_premul = ScalarGrid::from_fn(h, w, |x, y| {
            let covered = layer.mask.as_ref().is_none_or(|m| m.get(x, y) >= 0.5);
            if covered {
                (layer.texture.get(x, y, 0) + layer.texture.get(x, y, 1) + layer.texture.get(x, y, 2)) / 3.0
            } else {
                0.0
            }
        });
        let alpha = ScalarGrid::from_fn(h, w, |x, y| {
            let covered = layer.mask.as_ref().is_none_or(|m| m.get(x, y) >= 0.5);
            if covered {
                1.0
            } else {
                0.0
            }
        });
        composite(&gray_premul, &alpha, &taps);
    }

    let d_bg = disparity(lens, scene.range().z_far);
    let taps_bg = kernel_taps(side, d_bg, w)?;
    let bg_gray = ScalarGrid::from_fn(h, w, |x, y| {
        (scene.background().get(x, y, 0)
            + scene.background().get(x, y, 1)
            + scene.background().get(x, y, 2))
            / 3.0
    });
    let blurred_bg = convolve_rows(&bg_gray, &taps_bg);
    for i in 0..h * w {
        out[i] += transmittance[i] * blurred_bg.values()[i];
    }

    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    RasterImage::new(h, w, 1, out)
}

/// Discrete taps of the defocus kernel for disparity `d` (pixels): a uniform
/// box between 0 and d for the left view, between 0 and -d for the right, and
/// the centered box between -|d| and |d| for the full aperture. Each kernel
/// sums to one.
fn kernel_taps(side: ApertureSide, d: f64, image_width: usize) -> Result<Vec<(i64, f64)>> {
    if 2.0 * d.abs() >= image_width as f64 {
        return Err(Error::Config(format!(
            "blur width {} exceeds image width {image_width}",
            2.0 * d.abs()
        )));
    }
    let (a, b) = match side {
        ApertureSide::Left => (0.0f64.min(d), 0.0f64.max(d)),
        ApertureSide::Right => (0.0f64.min(-d), 0.0f64.max(-d)),
        ApertureSide::Full => (-d.abs(), d.abs()),
    };
    Ok(box_taps(a, b))
}

/// Integrates the uniform density on [a, b] over unit pixel bins.
fn box_taps(a: f64, b: f64) -> Vec<(i64, f64)> {
    let width = b - a;
    if width < 1e-12 {
        return vec![(0, 1.0)];
    }
    let i_min = (a - 0.5).ceil() as i64;
    let i_max = (b + 0.5).floor() as i64;
    let mut taps = Vec::with_capacity((i_max - i_min + 1) as usize);
    let mut total = 0.0;
    for i in i_min..=i_max {
        let lo = (i as f64 - 0.5).max(a);
        let hi = (i as f64 + 0.5).min(b);
        let mass = (hi - lo).max(0.0) / width;
        if mass > 0.0 {
            taps.push((i, mass));
            total += mass;
        }
    }
    for t in &mut taps {
        t.1 /= total;
    }
    taps
}

/// Horizontal convolution with replicate borders: out(x) = sum taps(s) * in(x - s).
fn convolve_rows(grid: &ScalarGrid, taps: &[(i64, f64)]) -> ScalarGrid {
    let (h, w) = (grid.height(), grid.width());
    let mut out = vec![0.0f64; h * w];
    exec::for_each_chunk_mut(&mut out, w, |y, row| {
        let src = grid.row(y);
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(s, t) in taps {
                let xi = (x as i64 - s).clamp(0, w as i64 - 1) as usize;
                acc += t * src[xi];
            }
            *o = acc;
        }
    });
    ScalarGrid::new(h, w, out).expect("finite convolution")
}

/// Renders one neighbor view by intersecting its pixel rays with each layer
/// plane (front to back) and sampling the layer texture through the reference
/// camera. The background extends beyond the reference frustum by edge
/// clamping; layers do not.
fn render_neighbor_pinhole(
    scene: &LayeredScene,
    cam_ref: &CameraModel,
    cam: &CameraModel,
) -> Result<RasterImage> {
    let (h, w) = (scene.height(), scene.width());
    let origin = cam.camera_to_world([0.0, 0.0, 0.0]);
    let rot_t = crate::camera::mat_transpose(cam.rotation());

    let rows: Vec<Vec<f64>> = exec::map_indexed(h, |y| {
        let mut row = vec![0.0f64; w * 3];
        for x in 0..w {
            let dir_cam = [
                (x as f64 - cam.cx()) / cam.fx(),
                (y as f64 - cam.cy()) / cam.fy(),
                1.0,
            ];
            let dir = crate::camera::mat_mul_vec(&rot_t, dir_cam);
            let mut color = [0.0f64; 3];
            let mut transmittance = 1.0f64;

            for layer in scene.layers() {
                if transmittance <= 0.0 {
                    break;
                }
                if dir[2] <= 0.0 {
                    continue;
                }
                let lambda = (layer.depth_m - origin[2]) / dir[2];
                if lambda <= 0.0 {
                    continue;
                }
                let p = [
                    origin[0] + lambda * dir[0],
                    origin[1] + lambda * dir[1],
                    layer.depth_m,
                ];
                let pc = cam_ref.world_to_camera(p);
                if pc[2] <= 0.0 {
                    continue;
                }
                let (sx, sy) = cam_ref.project(pc);
                if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                    continue;
                }
                let alpha = match &layer.mask {
                    Some(m) => sample_grid_bilinear(m, sx, sy),
                    None => 1.0,
                };
                if alpha <= 0.0 {
                    continue;
                }
                for (c, col) in color.iter_mut().enumerate() {
                    *col += transmittance * alpha * bilinear_at(&layer.texture, sx, sy, c);
                }
                transmittance *= 1.0 - alpha;
            }

            // Background at z_far, edge-clamped so neighbors are fully covered.
            if transmittance > 0.0 && dir[2] > 0.0 {
                let lambda = (scene.range().z_far - origin[2]) / dir[2];
                let p = [
                    origin[0] + lambda * dir[0],
                    origin[1] + lambda * dir[1],
                    scene.range().z_far,
                ];
                let pc = cam_ref.world_to_camera(p);
                let (sx, sy) = cam_ref.project(pc);
                let sx = sx.clamp(0.0, (w - 1) as f64);
                let sy = sy.clamp(0.0, (h - 1) as f64);
                for (c, col) in color.iter_mut().enumerate() {
                    *col += transmittance * bilinear_at(scene.background(), sx, sy, c);
                }
            }

            for (c, col) in color.iter().enumerate() {
                row[x * 3 + c] = col.clamp(0.0, 1.0);
            }
        }
        row
    });

    RasterImage::new(h, w, 3, rows.concat())
}

fn sample_grid_bilinear(grid: &ScalarGrid, x: f64, y: f64) -> f64 {
    let (h, w) = (grid.height(), grid.width());
    let x0 = x.floor().clamp(0.0, (w - 1) as f64);
    let y0 = y.floor().clamp(0.0, (h - 1) as f64);
    let x1 = (x0 + 1.0).min((w - 1) as f64);
    let y1 = (y0 + 1.0).min((h - 1) as f64);
    let (fx, fy) = (x - x0, y - y0);
    let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);
    let top = grid.get(x0, y0) * (1.0 - fx) + grid.get(x1, y0) * fx;
    let bot = grid.get(x0, y1) * (1.0 - fx) + grid.get(x1, y1) * fx;
    top * (1.0 - fy) + bot * fy
}
