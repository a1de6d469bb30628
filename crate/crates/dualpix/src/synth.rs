//! Procedural scenes: textures, masks, random layered scenes and dataset
//! generation. This is the data factory behind `simulate` and most tests.

use crate::camera::Rig;
use crate::depth::DepthRange;
use crate::error::{Error, Result};
use crate::grid::{RasterImage, ScalarGrid};
use crate::io;
use crate::optics::{
    equivalent_depth_scalar, render_capture, Capture, Layer, LayeredScene, ThinLensParams,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Band-limited value noise in [0.06, 0.94]: random coarse grids upsampled
/// bilinearly over three octaves.
pub fn noise_texture<R: Rng>(rng: &mut R, height: usize, width: usize, channels: usize) -> RasterImage {
    let octaves = [(6usize, 0.55f64), (12, 0.3), (24, 0.15)];
    let mut per_channel: Vec<Vec<f64>> = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut acc = vec![0.0f64; height * width];
        for &(cells, weight) in &octaves {
            let gw = cells.min(width.max(2));
            let gh = cells.min(height.max(2));
            let coarse: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(0.0..1.0)).collect();
            for y in 0..height {
                for x in 0..width {
                    let gx = x as f64 / width.max(1) as f64 * (gw - 1) as f64;
                    let gy = y as f64 / height.max(1) as f64 * (gh - 1) as f64;
                    let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(gw - 1), (y0 + 1).min(gh - 1));
                    let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
                    let top = coarse[y0 * gw + x0] * (1.0 - fx) + coarse[y0 * gw + x1] * fx;
                    let bot = coarse[y1 * gw + x0] * (1.0 - fx) + coarse[y1 * gw + x1] * fx;
                    acc[y * width + x] += weight * (top * (1.0 - fy) + bot * fy);
                }
            }
        }
        per_channel.push(acc);
    }
    RasterImage::from_fn(height, width, channels, |x, y, c| {
        0.06 + 0.88 * per_channel[c][y * width + x].clamp(0.0, 1.0)
    })
    .expect("noise in range")
}

/// Checkerboard with a random phase and two random tones.
pub fn checker_texture<R: Rng>(rng: &mut R, height: usize, width: usize, cell: usize) -> RasterImage {
    let (px, py) = (rng.random_range(0..cell.max(1)), rng.random_range(0..cell.max(1)));
    let lo = rng.random_range(0.08..0.3);
    let hi = rng.random_range(0.6..0.92);
    let tint: Vec<f64> = (0..3).map(|_| rng.random_range(0.85..1.0)).collect();
    RasterImage::from_fn(height, width, 3, |x, y, c| {
        let q = ((x + px) / cell.max(1) + (y + py) / cell.max(1)) % 2;
        (if q == 0 { lo } else { hi }) * tint[c]
    })
    .expect("checker in range")
}

/// Union of one or two random ellipses as a hard 0/1 mask.
pub fn blob_mask<R: Rng>(rng: &mut R, height: usize, width: usize) -> ScalarGrid {
    let n = rng.random_range(1..=2);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.random_range(0.2..0.8) * width as f64,
                rng.random_range(0.2..0.8) * height as f64,
                rng.random_range(0.15..0.4) * width as f64,
                rng.random_range(0.15..0.4) * height as f64,
            )
        })
        .collect();
    ScalarGrid::from_fn(height, width, |x, y| {
        let inside = blobs.iter().any(|&(cx, cy, rx, ry)| {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            dx * dx + dy * dy <= 1.0
        });
        if inside {
            1.0
        } else {
            0.0
        }
    })
}

/// Knobs for [`random_scene`].
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub depth_range: DepthRange,
    /// Layer depths are drawn from this interval (meters).
    pub depth_min: f64,
    pub depth_max: f64,
    pub min_layers: usize,
    pub max_layers: usize,
    /// Rig baseline interval (meters).
    pub baseline: (f64, f64),
    /// Focus distance interval (meters); varying it across captures is what
    /// makes the DP-to-depth mapping ambiguous dataset-wide.
    pub focus: (f64, f64),
    /// Peak |dual-pixel disparity| over the depth interval (pixels).
    pub dp_disparity: (f64, f64),
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            depth_range: DepthRange::new(0.2, 100.0).expect("static range"),
            depth_min: 0.35,
            depth_max: 4.0,
            min_layers: 1,
            max_layers: 3,
            baseline: (0.015, 0.035),
            focus: (0.45, 1.8),
            dp_disparity: (1.8, 3.2),
        }
    }
}

/// Draws a random layered scene plus a lens and plus-shaped rig sized for it.
pub fn random_scene<R: Rng>(
    rng: &mut R,
    height: usize,
    width: usize,
    params: &SceneParams,
) -> (LayeredScene, ThinLensParams, Rig) {
    let n_layers = rng.random_range(params.min_layers..=params.max_layers);
    let mut depths: Vec<f64> = (0..n_layers)
        .map(|_| rng.random_range(params.depth_min..params.depth_max))
        .collect();
    depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Keep layers separated so plane indices stay distinct.
    for i in 1..depths.len() {
        if depths[i] - depths[i - 1] < 0.05 {
            depths[i] = depths[i - 1] + 0.05;
        }
    }

    let mut layers = Vec::with_capacity(n_layers);
    for (i, &depth_m) in depths.iter().enumerate() {
        let texture = if rng.random_bool(0.3) {
            let cell = rng.random_range(4..9);
            checker_texture(rng, height, width, cell)
        } else {
            noise_texture(rng, height, width, 3)
        };
        // The deepest layer may be full-frame; others are blobs so that both
        // depths stay visible.
        let mask = if i + 1 == n_layers && rng.random_bool(0.35) {
            None
        } else {
            Some(blob_mask(rng, height, width))
        };
        layers.push(Layer { texture, depth_m, mask });
    }
    let background = noise_texture(rng, height, width, 3);
    let scene = LayeredScene::new(layers, background, params.depth_range).expect("valid random scene");

    let focus = rng.random_range(params.focus.0..params.focus.1);
    let base = ThinLensParams::new(rng.random_range(0.0015..0.0035), 0.004, focus, 1.0)
        .expect("valid base lens");
    let unit_peak = [params.depth_min, params.depth_max]
        .iter()
        .map(|&z| crate::optics::signed_blur_size(z, &base).expect("z > f").abs())
        .fold(0.0f64, f64::max);
    let target = rng.random_range(params.dp_disparity.0..params.dp_disparity.1);
    let lens = ThinLensParams::new(base.aperture, base.focal_length, base.focus_distance, target / unit_peak)
        .expect("valid lens");

    let fx = 0.9 * height.min(width) as f64;
    let rig = Rig::plus_shaped(
        fx,
        fx,
        (width - 1) as f64 / 2.0,
        (height - 1) as f64 / 2.0,
        rng.random_range(params.baseline.0..params.baseline.1),
    )
    .expect("valid rig");

    (scene, lens, rig)
}

/// Renders `count` random captures into `dir/capture_NNNN` directories.
pub fn generate_dataset<R: Rng>(
    rng: &mut R,
    dir: &Path,
    count: usize,
    height: usize,
    width: usize,
    params: &SceneParams,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let (scene, lens, rig) = random_scene(rng, height, width, params);
        let capture = render_capture(&scene, &rig, &lens)?;
        let cap_dir = dir.join(format!("capture_{i:04}"));
        io::write_capture(&cap_dir, &capture)?;
        out.push(cap_dir);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scene description files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct LayerSpec {
    pub texture: PathBuf,
    pub depth_m: f64,
    #[serde(default)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RigSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline_m: f64,
}

/// On-disk scene description consumed by `simulate`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub depth_range: DepthRange,
    pub lens: ThinLensParams,
    pub rig: RigSpec,
    pub background: PathBuf,
    pub layers: Vec<LayerSpec>,
}

/// Loads a scene file, resolving texture/mask paths relative to its parent
/// directory.
pub fn load_scene_file(path: &Path) -> Result<(LayeredScene, ThinLensParams, Rig)> {
    let spec: SceneFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

    let range = DepthRange::new(spec.depth_range.z_near, spec.depth_range.z_far)?;
    let lens = ThinLensParams::new(
        spec.lens.aperture,
        spec.lens.focal_length,
        spec.lens.focus_distance,
        spec.lens.disparity_gain,
    )?;
    let background = io::read_png(&resolve(&spec.background))?;
    let background = match background.channels() {
        3 => background,
        1 => RasterImage::from_fn(background.height(), background.width(), 3, |x, y, _| {
            background.get(x, y, 0)
        })?,
        c => return Err(Error::UnsupportedFormat(format!("background has {c} channels"))),
    };
    let mut layers = Vec::with_capacity(spec.layers.len());
    for l in &spec.layers {
        let texture = io::read_png(&resolve(&l.texture))?;
        let texture = match texture.channels() {
            3 => texture,
            1 => RasterImage::from_fn(texture.height(), texture.width(), 3, |x, y, _| {
                texture.get(x, y, 0)
            })?,
            c => return Err(Error::UnsupportedFormat(format!("layer texture has {c} channels"))),
        };
        let mask = match &l.mask {
            Some(p) => Some(io::read_png(&resolve(p))?.to_gray().channel(0)),
            None => None,
        };
        layers.push(Layer { texture, depth_m: l.depth_m, mask });
    }
    let scene = LayeredScene::new(layers, background, range)?;
    let rig = Rig::plus_shaped(spec.rig.fx, spec.rig.fy, spec.rig.cx, spec.rig.cy, spec.rig.baseline_m)?;
    Ok((scene, lens, rig))
}

// ---------------------------------------------------------------------------
// Ambiguity demonstration
// ---------------------------------------------------------------------------

/// Outcome of rendering the same dual-pixel data from two different lens
/// configurations.
#[derive(Debug, Serialize)]
pub struct AmbiguityReport {
    pub focus_1: f64,
    pub focus_2: f64,
    pub layer_depths_1: Vec<f64>,
    pub layer_depths_2: Vec<f64>,
    pub max_dp_difference: f64,
}

/// Builds a layered scene under `lens1`, derives the equivalent scene for a
/// lens with a different focus distance, renders both and reports the largest
/// DP-pair pixel difference (which should vanish).
pub fn run_ambiguity_demo(seed: u64) -> Result<(AmbiguityReport, Capture, Capture)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let params = SceneParams::default();
    let (scene1, base_lens, rig) = random_scene(&mut rng, 96, 96, &params);
    let lens1 = ThinLensParams::new(base_lens.aperture, base_lens.focal_length, 1.0, base_lens.disparity_gain)?;
    let lens2 = ThinLensParams::new(base_lens.aperture, base_lens.focal_length, 0.8, base_lens.disparity_gain)?;

    let depths1 = scene1.layer_depths();
    let depths2 = depths1
        .iter()
        .map(|&z| equivalent_depth_scalar(z, &lens1, &lens2))
        .collect::<Result<Vec<f64>>>()?;
    let scene2 = scene1.with_layer_depths(&depths2)?;

    let cap1 = render_capture(&scene1, &rig, &lens1)?;
    let cap2 = render_capture(&scene2, &rig, &lens2)?;

    let mut max_diff = 0.0f64;
    for (a, b) in cap1.dp.left.values().iter().zip(cap2.dp.left.values()) {
        max_diff = max_diff.max((a - b).abs());
    }
    for (a, b) in cap1.dp.right.values().iter().zip(cap2.dp.right.values()) {
        max_diff = max_diff.max((a - b).abs());
    }

    Ok((
        AmbiguityReport {
            focus_1: lens1.focus_distance,
            focus_2: lens2.focus_distance,
            layer_depths_1: depths1,
            layer_depths_2: depths2,
            max_dp_difference: max_diff,
        },
        cap1,
        cap2,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn textures_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = noise_texture(&mut rng, 20, 30, 3);
        assert!(t.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = checker_texture(&mut rng, 20, 30, 5);
        assert!(c.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn random_scene_is_renderable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (scene, lens, rig) = random_scene(&mut rng, 24, 24, &SceneParams::default());
        let cap = render_capture(&scene, &rig, &lens).unwrap();
        assert_eq!(cap.neighbors.len(), 4);
        assert_eq!(cap.center_rgb.height(), 24);
    }

    #[test]
    fn ambiguity_demo_dp_pairs_match() {
        let (report, cap1, cap2) = run_ambiguity_demo(7).unwrap();
        assert!(report.max_dp_difference < 1e-6, "diff {}", report.max_dp_difference);
        // Different focus distances, genuinely different scenes.
        assert_ne!(report.layer_depths_1, report.layer_depths_2);
        // The ground truth depths differ even though the DP data agrees.
        assert_ne!(cap1.gt_depth.grid(), cap2.gt_depth.grid());
    }
}
