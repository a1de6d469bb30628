//! Photometric penalties and view-supervision training losses.
//!
//! The per-pixel photometric difference is 0.8 * DSSIM + 0.2 * Charbonnier
//! (channel-averaged), DSSIM over a uniform 3x3 window with c1 = 0.01^2 and
//! c2 = 0.03^2 and reflection padding. View supervision warps each neighbor
//! into the reference through the predicted depth, takes the per-pixel
//! minimum over neighbors (a pixel must be visible in at least one other
//! view) and averages over covered pixels, summed over a factor-2 image
//! pyramid.
//!
//! Three invariance levels wrap this loss: none (predictions used as-is),
//! scale (least-squares scale against sparse ground truth, offset fixed at
//! zero) and affine. The affine parameters come either from a closed-form
//! confidence-weighted least-squares solve differentiated implicitly
//! (assisted loss) or from free per-example latents optimized jointly with
//! the model (folded loss, with scale = 1e-5 + softplus(a_hat) to keep it
//! positive).

use crate::camera::CameraModel;
use crate::depth::{AffineMap, ConfidenceMap, DepthRange, NormalizedInverseDepthMap};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{RasterImage, ScalarGrid};
use crate::warp::{bilinear_at, bilinear_grad_at, induced_warp_grid};

/// Weights and constants of the photometric penalty.
#[derive(Debug, Clone, Copy)]
pub struct PhotometricConfig {
    pub dssim_weight: f64,
    pub charbonnier_weight: f64,
    pub ssim_window: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub charbonnier_c: f64,
    /// Pyramid levels for view supervision; losses are summed with equal
    /// weight across levels.
    pub scales: usize,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        Self {
            dssim_weight: 0.8,
            charbonnier_weight: 0.2,
            ssim_window: 3,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
            charbonnier_c: 0.1,
            scales: 3,
        }
    }
}

impl PhotometricConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.dssim_weight + self.charbonnier_weight - 1.0).abs() > 1e-12 {
            return Err(Error::Config("photometric weights must sum to 1".into()));
        }
        if self.ssim_window % 2 == 0 || self.ssim_window == 0 {
            return Err(Error::Config("SSIM window must be odd".into()));
        }
        if self.scales == 0 {
            return Err(Error::Config("need at least one pyramid level".into()));
        }
        Ok(())
    }

    pub fn with_scales(mut self, scales: usize) -> Self {
        self.scales = scales;
        self
    }
}

/// Charbonnier penalty sqrt((x/c)^2 + 1) - 1 and its derivative.
pub fn charbonnier(x: f64, c: f64) -> (f64, f64) {
    let s = (x / c) * (x / c) + 1.0;
    let root = s.sqrt();
    (root - 1.0, x / (c * c * root))
}

fn reflect(i: i64, n: usize) -> usize {
    // Symmetric reflection including the border pixel: -1 -> 0, n -> n-1.
    let n = n as i64;
    let mut i = i;
    if i < 0 {
        i = -i - 1;
    }
    if i >= n {
        i = 2 * n - 1 - i;
    }
    i.clamp(0, n - 1) as usize
}

struct WindowMoments {
    mu_r: f64,
    mu_w: f64,
    e_r2: f64,
    e_w2: f64,
    e_rw: f64,
}

fn window_moments(
    reference: &RasterImage,
    warped: &RasterImage,
    x: usize,
    y: usize,
    c: usize,
    radius: i64,
) -> WindowMoments {
    let (h, w) = (reference.height(), reference.width());
    let mut m = WindowMoments { mu_r: 0.0, mu_w: 0.0, e_r2: 0.0, e_w2: 0.0, e_rw: 0.0 };
    let mut n = 0.0;
    for dy in -radius..=radius {
        let sy = reflect(y as i64 + dy, h);
        for dx in -radius..=radius {
            let sx = reflect(x as i64 + dx, w);
            let r = reference.get(sx, sy, c);
            let v = warped.get(sx, sy, c);
            m.mu_r += r;
            m.mu_w += v;
            m.e_r2 += r * r;
            m.e_w2 += v * v;
            m.e_rw += r * v;
            n += 1.0;
        }
    }
    m.mu_r /= n;
    m.mu_w /= n;
    m.e_r2 /= n;
    m.e_w2 /= n;
    m.e_rw /= n;
    m
}

fn ssim_from_moments(m: &WindowMoments, c1: f64, c2: f64) -> f64 {
    let var_r = m.e_r2 - m.mu_r * m.mu_r;
    let var_w = m.e_w2 - m.mu_w * m.mu_w;
    let cov = m.e_rw - m.mu_r * m.mu_w;
    let a1 = 2.0 * m.mu_r * m.mu_w + c1;
    let a2 = 2.0 * cov + c2;
    let b1 = m.mu_r * m.mu_r + m.mu_w * m.mu_w + c1;
    let b2 = var_r + var_w + c2;
    (a1 * a2) / (b1 * b2)
}

/// Per-pixel structural dissimilarity (1 - SSIM)/2, channel-averaged.
pub fn dssim(reference: &RasterImage, warped: &RasterImage, cfg: &PhotometricConfig) -> Result<ScalarGrid> {
    if !reference.same_shape(warped) {
        return Err(Error::Dimension {
            expected: format!("{}x{}x{}", reference.height(), reference.width(), reference.channels()),
            got: format!("{}x{}x{}", warped.height(), warped.width(), warped.channels()),
        });
    }
    let (h, w, ch) = (reference.height(), reference.width(), reference.channels());
    let radius = (cfg.ssim_window / 2) as i64;
    let mut out = vec![0.0f64; h * w];
    exec::for_each_chunk_mut(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..ch {
                let m = window_moments(reference, warped, x, y, c, radius);
                acc += (1.0 - ssim_from_moments(&m, cfg.ssim_c1, cfg.ssim_c2)) / 2.0;
            }
            *o = acc / ch as f64;
        }
    });
    ScalarGrid::new(h, w, out)
}

/// Adjoint of [`dssim`] with respect to the warped image: accumulates
/// `sum(upstream(x, y) * DSSIM(x, y))` derivatives into an h*w*channels
/// buffer. Reflection multiplicity at borders is handled by accumulating at
/// the reflected source pixel.
fn dssim_backward_warped(
    reference: &RasterImage,
    warped: &RasterImage,
    upstream: &[f64],
    cfg: &PhotometricConfig,
    adj: &mut [f64],
) {
    let (h, w, ch) = (reference.height(), reference.width(), reference.channels());
    let radius = (cfg.ssim_window / 2) as i64;
    let n_win = (cfg.ssim_window * cfg.ssim_window) as f64;
    for y in 0..h {
        for x in 0..w {
            let u = upstream[y * w + x];
            if u == 0.0 {
                continue;
            }
            for c in 0..ch {
                let m = window_moments(reference, warped, x, y, c, radius);
                let var_r = m.e_r2 - m.mu_r * m.mu_r;
                let var_w = m.e_w2 - m.mu_w * m.mu_w;
                let cov = m.e_rw - m.mu_r * m.mu_w;
                let a1 = 2.0 * m.mu_r * m.mu_w + cfg.ssim_c1;
                let a2 = 2.0 * cov + cfg.ssim_c2;
                let b1 = m.mu_r * m.mu_r + m.mu_w * m.mu_w + cfg.ssim_c1;
                let b2 = var_r + var_w + cfg.ssim_c2;
                let s = (a1 * a2) / (b1 * b2);
                let inv = 1.0 / (b1 * b2);
                // Independent moments: mu_w, E[w^2], E[r w].
                let ds_dmu = (2.0 * m.mu_r * (a2 - a1) - 2.0 * m.mu_w * s * (b2 - b1)) * inv;
                let ds_de2 = -s / b2;
                let ds_derw = 2.0 * a1 * inv;
                // DSSIM = (1 - S)/2 averaged over channels.
                let scale = -u / (2.0 * ch as f64);
                for dy in -radius..=radius {
                    let sy = reflect(y as i64 + dy, h);
                    for dx in -radius..=radius {
                        let sx = reflect(x as i64 + dx, w);
                        let wv = warped.get(sx, sy, c);
                        let rv = reference.get(sx, sy, c);
                        adj[(sy * w + sx) * ch + c] += scale
                            * (ds_dmu + ds_de2 * 2.0 * wv + ds_derw * rv)
                            / n_win;
                    }
                }
            }
        }
    }
}

/// Per-pixel photometric difference with validity: invalid pixels hold an
/// infinite sentinel so a min-combination ignores them.
pub struct PhotometricDelta {
    pub delta: Vec<f64>,
    pub coverage: usize,
}

pub fn photometric_delta(
    reference: &RasterImage,
    other: &RasterImage,
    valid: &[bool],
    cfg: &PhotometricConfig,
) -> Result<PhotometricDelta> {
    cfg.validate()?;
    if valid.len() != reference.height() * reference.width() {
        return Err(Error::Dimension {
            expected: format!("{} mask entries", reference.height() * reference.width()),
            got: format!("{}", valid.len()),
        });
    }
    let d = dssim(reference, other, cfg)?;
    let ch = reference.channels();
    let mut delta = vec![f64::INFINITY; valid.len()];
    let mut coverage = 0usize;
    for (i, ok) in valid.iter().enumerate() {
        if !ok {
            continue;
        }
        let (x, y) = (i % reference.width(), i / reference.width());
        let mut charb = 0.0;
        for c in 0..ch {
            charb += charbonnier(reference.get(x, y, c) - other.get(x, y, c), cfg.charbonnier_c).0;
        }
        delta[i] = cfg.dssim_weight * d.get(x, y) + cfg.charbonnier_weight * charb / ch as f64;
        coverage += 1;
    }
    Ok(PhotometricDelta { delta, coverage })
}

/// A neighbor view with its camera and an optional per-pixel validity mask
/// (e.g. borders vacated by translation augmentation).
pub struct NeighborView<'a> {
    pub image: &'a RasterImage,
    pub camera: &'a CameraModel,
    pub valid: Option<&'a [bool]>,
}

/// Reference side of a view-supervision evaluation.
pub struct ReferenceView<'a> {
    pub image: &'a RasterImage,
    pub camera: &'a CameraModel,
    pub valid: Option<&'a [bool]>,
}

#[derive(Debug, Clone)]
pub struct ViewSupervisionOutput {
    pub loss: f64,
    /// d(loss)/d(depth grid), same shape as the prediction.
    pub grad: ScalarGrid,
    /// Fraction of pixels with at least one valid neighbor at the finest level.
    pub coverage: f64,
}

struct Level {
    reference: RasterImage,
    ref_valid: Option<Vec<bool>>,
    ref_cam: CameraModel,
    neighbors: Vec<(RasterImage, CameraModel, Option<Vec<bool>>)>,
    depth: ScalarGrid,
}

fn downsample_mask(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let (oh, ow) = ((h / 2).max(1), (w / 2).max(1));
    let mut out = vec![false; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let (sx, sy) = (2 * x, 2 * y);
            let x1 = (sx + 1).min(w - 1);
            let y1 = (sy + 1).min(h - 1);
            out[y * ow + x] =
                mask[sy * w + sx] && mask[sy * w + x1] && mask[y1 * w + sx] && mask[y1 * w + x1];
        }
    }
    out
}

/// Distributes a coarse mean-downsample gradient back onto the fine grid.
fn upsample_grad_mean(coarse: &ScalarGrid, fine_h: usize, fine_w: usize) -> ScalarGrid {
    let mut out = ScalarGrid::filled(fine_h, fine_w, 0.0);
    for y in 0..coarse.height() {
        for x in 0..coarse.width() {
            let g = 0.25 * coarse.get(x, y);
            let (sx, sy) = (2 * x, 2 * y);
            let x1 = (sx + 1).min(fine_w - 1);
            let y1 = (sy + 1).min(fine_h - 1);
            for (px, py) in [(sx, sy), (x1, sy), (sx, y1), (x1, y1)] {
                out.set(px, py, out.get(px, py) + g);
            }
        }
    }
    out
}

/// View-supervision loss over a factor-2 pyramid with per-pixel minimum over
/// neighbors, plus its analytic gradient with respect to the depth grid.
///
/// `depth` is a raw grid (an affine-remapped prediction may leave [0, 1]);
/// depths that unproject behind either camera simply invalidate the pixel.
pub fn view_supervision_loss(
    depth: &ScalarGrid,
    range: DepthRange,
    reference: &ReferenceView,
    neighbors: &[NeighborView],
    cfg: &PhotometricConfig,
) -> Result<ViewSupervisionOutput> {
    cfg.validate()?;
    if neighbors.is_empty() {
        return Err(Error::NoValidNeighbor);
    }
    let (h0, w0) = (depth.height(), depth.width());
    if reference.image.height() != h0 || reference.image.width() != w0 {
        return Err(Error::Dimension {
            expected: format!("{h0}x{w0}"),
            got: format!("{}x{}", reference.image.height(), reference.image.width()),
        });
    }

    // Build the pyramid: images and depth by 2x2 averages, cameras rescaled.
    let mut levels: Vec<Level> = Vec::with_capacity(cfg.scales);
    levels.push(Level {
        reference: reference.image.clone(),
        ref_valid: reference.valid.map(|m| m.to_vec()),
        ref_cam: reference.camera.clone(),
        neighbors: neighbors
            .iter()
            .map(|n| (n.image.clone(), n.camera.clone(), n.valid.map(|m| m.to_vec())))
            .collect(),
        depth: depth.clone(),
    });
    for s in 1..cfg.scales {
        let prev = &levels[s - 1];
        if prev.depth.height() < 4 || prev.depth.width() < 4 {
            break;
        }
        levels.push(Level {
            reference: prev.reference.downsample_2x2_mean(),
            ref_valid: prev
                .ref_valid
                .as_ref()
                .map(|m| downsample_mask(m, prev.depth.height(), prev.depth.width())),
            ref_cam: prev.ref_cam.downscaled(2),
            neighbors: prev
                .neighbors
                .iter()
                .map(|(img, cam, mask)| {
                    (
                        img.downsample_2x2_mean(),
                        cam.downscaled(2),
                        mask.as_ref()
                            .map(|m| downsample_mask(m, prev.depth.height(), prev.depth.width())),
                    )
                })
                .collect(),
            depth: prev.depth.downsample_2x2_mean(),
        });
    }

    let mut total_loss = 0.0;
    let mut total_grad = ScalarGrid::filled(h0, w0, 0.0);
    let mut finest_coverage = 0.0;
    let mut any_covered = false;

    for (li, level) in levels.iter().enumerate() {
        let (h, w) = (level.depth.height(), level.depth.width());
        let n_px = h * w;

        // Warp every neighbor into the reference.
        let mut warped: Vec<RasterImage> = Vec::with_capacity(level.neighbors.len());
        let mut jacobians = Vec::with_capacity(level.neighbors.len());
        let mut deltas: Vec<Vec<f64>> = Vec::with_capacity(level.neighbors.len());
        for (img, cam, nb_valid) in &level.neighbors {
            let (warp, jac) = induced_warp_grid(&level.depth, range, &level.ref_cam, cam);
            let (sampled, mut valid) = crate::warp::bilinear_sample(img, &warp)?;
            if let Some(mask) = nb_valid {
                // A sample is trustworthy only if every contributing source
                // pixel is valid; bilinear interpolation of the 0/1 mask
                // equals 1 exactly in that case.
                let mask_img = RasterImage::from_fn(h, w, 1, |x, y, _| {
                    if mask[y * w + x] {
                        1.0
                    } else {
                        0.0
                    }
                })?;
                for i in 0..n_px {
                    if valid[i] {
                        let mv = bilinear_at(&mask_img, warp.xs[i], warp.ys[i], 0);
                        valid[i] = mv >= 1.0 - 1e-12;
                    }
                }
            }
            if let Some(ref_mask) = &level.ref_valid {
                for i in 0..n_px {
                    valid[i] = valid[i] && ref_mask[i];
                }
            }
            let delta = photometric_delta(&level.reference, &sampled, &valid, cfg)?;
            deltas.push(delta.delta);
            warped.push(sampled);
            jacobians.push((warp, jac));
        }

        // Per-pixel minimum over valid neighbors; ties to the lowest index.
        let mut argmin = vec![usize::MAX; n_px];
        let mut covered = 0usize;
        for i in 0..n_px {
            let mut best = f64::INFINITY;
            for (j, delta) in deltas.iter().enumerate() {
                if delta[i] < best {
                    best = delta[i];
                    argmin[i] = j;
                }
            }
            if argmin[i] != usize::MAX {
                covered += 1;
            }
        }
        if li == 0 {
            finest_coverage = covered as f64 / n_px as f64;
        }
        if covered == 0 {
            continue;
        }
        any_covered = true;
        let inv_count = 1.0 / covered as f64;

        let mut level_loss = 0.0;
        for i in 0..n_px {
            if argmin[i] != usize::MAX {
                level_loss += deltas[argmin[i]][i];
            }
        }
        level_loss *= inv_count;
        total_loss += level_loss;

        // Backward: upstream 1/covered flows into the argmin branch only.
        let mut level_grad = vec![0.0f64; n_px];
        let ch = level.reference.channels();
        for (j, (img, _, _)) in level.neighbors.iter().enumerate() {
            let mut upstream = vec![0.0f64; n_px];
            let mut used = false;
            for i in 0..n_px {
                if argmin[i] == j {
                    upstream[i] = inv_count;
                    used = true;
                }
            }
            if !used {
                continue;
            }
            // Adjoint with respect to the warped image: DSSIM windows plus
            // the pointwise Charbonnier term.
            let mut adj = vec![0.0f64; n_px * ch];
            let dssim_upstream: Vec<f64> = upstream.iter().map(|u| u * cfg.dssim_weight).collect();
            dssim_backward_warped(&level.reference, &warped[j], &dssim_upstream, cfg, &mut adj);
            for i in 0..n_px {
                if upstream[i] == 0.0 {
                    continue;
                }
                let (x, y) = (i % w, i / w);
                for c in 0..ch {
                    let diff = level.reference.get(x, y, c) - warped[j].get(x, y, c);
                    let (_, dch) = charbonnier(diff, cfg.charbonnier_c);
                    adj[i * ch + c] -= upstream[i] * cfg.charbonnier_weight * dch / ch as f64;
                }
            }
            // Chain through bilinear sampling and the warp into depth. The
            // warped value at i depends only on depth at i.
            let (warp, jac) = &jacobians[j];
            for i in 0..n_px {
                if !warp.valid[i] {
                    continue;
                }
                let mut acc = 0.0;
                for c in 0..ch {
                    let (gx, gy) = bilinear_grad_at(img, warp.xs[i], warp.ys[i], c);
                    acc += adj[i * ch + c] * (gx * jac.dx_dd[i] + gy * jac.dy_dd[i]);
                }
                level_grad[i] += acc;
            }
        }

        // Chain the level gradient back through the mean-downsampling.
        let mut grad = ScalarGrid::new(h, w, level_grad)?;
        for lk in (0..li).rev() {
            let (fh, fw) = (levels[lk].depth.height(), levels[lk].depth.width());
            grad = upsample_grad_mean(&grad, fh, fw);
        }
        for i in 0..h0 * w0 {
            total_grad.values_mut()[i] += grad.values()[i];
        }
    }

    if !any_covered {
        return Err(Error::NoValidNeighbor);
    }

    Ok(ViewSupervisionOutput { loss: total_loss, grad: total_grad, coverage: finest_coverage })
}

// ---------------------------------------------------------------------------
// Affine fitting and invariance wrappers
// ---------------------------------------------------------------------------

const DEGENERACY_TOL: f64 = 1e-12;

/// Closed-form confidence-weighted least squares of gt against
/// `a * pred + b`, with analytic gradients of (a, b) with respect to every
/// prediction pixel via implicit differentiation of the 2x2 normal equations.
pub fn fit_affine_differentiable(
    pred: &ScalarGrid,
    gt: &NormalizedInverseDepthMap,
    conf: &ConfidenceMap,
) -> Result<(AffineMap, ScalarGrid, ScalarGrid)> {
    let (a, b, sums) = solve_affine(pred, gt, conf)?;
    let (h, w) = (pred.height(), pred.width());
    let det = sums.spp * sums.sw - sums.sp * sums.sp;
    let mut da = Vec::with_capacity(h * w);
    let mut db = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let c = conf.get(x, y);
            let p = pred.get(x, y);
            let d = gt.get(x, y);
            let r1 = d - 2.0 * a * p - b;
            da.push(c * (sums.sw * r1 + sums.sp * a) / det);
            db.push(c * (-sums.sp * r1 - sums.spp * a) / det);
        }
    }
    Ok((
        AffineMap { a, b },
        ScalarGrid::new(h, w, da)?,
        ScalarGrid::new(h, w, db)?,
    ))
}

/// Scale-only variant (offset fixed at zero).
pub fn fit_scale_differentiable(
    pred: &ScalarGrid,
    gt: &NormalizedInverseDepthMap,
    conf: &ConfidenceMap,
) -> Result<(AffineMap, ScalarGrid)> {
    check_shapes(pred, gt, conf)?;
    let (h, w) = (pred.height(), pred.width());
    let mut spp = 0.0;
    let mut spd = 0.0;
    for y in 0..h {
        for x in 0..w {
            let c = conf.get(x, y);
            let p = pred.get(x, y);
            spp += c * p * p;
            spd += c * p * gt.get(x, y);
        }
    }
    if spp <= DEGENERACY_TOL {
        return Err(Error::SingularFit { variance: spp });
    }
    let a = spd / spp;
    let mut da = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let c = conf.get(x, y);
            let p = pred.get(x, y);
            da.push(c * (gt.get(x, y) - 2.0 * a * p) / spp);
        }
    }
    Ok((AffineMap { a, b: 0.0 }, ScalarGrid::new(h, w, da)?))
}

struct AffineSums {
    spp: f64,
    sp: f64,
    sw: f64,
}

fn check_shapes(pred: &ScalarGrid, gt: &NormalizedInverseDepthMap, conf: &ConfidenceMap) -> Result<()> {
    if !pred.same_shape(gt.grid()) || !pred.same_shape(conf.grid()) {
        return Err(Error::Dimension {
            expected: format!("{}x{}", pred.height(), pred.width()),
            got: format!(
                "{}x{} / {}x{}",
                gt.height(),
                gt.width(),
                conf.grid().height(),
                conf.grid().width()
            ),
        });
    }
    Ok(())
}

fn solve_affine(
    pred: &ScalarGrid,
    gt: &NormalizedInverseDepthMap,
    conf: &ConfidenceMap,
) -> Result<(f64, f64, AffineSums)> {
    check_shapes(pred, gt, conf)?;
    let (h, w) = (pred.height(), pred.width());
    let (mut spp, mut sp, mut sw, mut spd, mut sd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let c = conf.get(x, y);
            let p = pred.get(x, y);
            let d = gt.get(x, y);
            spp += c * p * p;
            sp += c * p;
            sw += c;
            spd += c * p * d;
            sd += c * d;
        }
    }
    if sw <= 0.0 {
        return Err(Error::ZeroConfidence);
    }
    // Weighted variance of the prediction; the fit is meaningless below this.
    let variance = spp - sp * sp / sw;
    if variance <= DEGENERACY_TOL {
        return Err(Error::SingularFit { variance });
    }
    let det = spp * sw - sp * sp;
    let a = (sw * spd - sp * sd) / det;
    let b = (spp * sd - sp * spd) / det;
    Ok((a, b, AffineSums { spp, sp, sw }))
}

/// Convenience forward-only fit.
pub fn fit_affine(
    pred: &ScalarGrid,
    gt: &NormalizedInverseDepthMap,
    conf: &ConfidenceMap,
) -> Result<AffineMap> {
    let (a, b, _) = solve_affine(pred, gt, conf)?;
    Ok(AffineMap { a, b })
}

/// Invariance level of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariance {
    None,
    Scale,
    Affine,
}

#[derive(Debug, Clone)]
pub struct AssistedOutput {
    pub loss: f64,
    pub grad_pred: ScalarGrid,
    pub fit: AffineMap,
    pub coverage: f64,
}

/// View supervision evaluated at the ground-truth-fitted remap of the
/// prediction; the gradient flows through both the warp and the solve.
pub fn assisted_loss(
    pred: &ScalarGrid,
    gt: &NormalizedInverseDepthMap,
    conf: &ConfidenceMap,
    range: DepthRange,
    reference: &ReferenceView,
    neighbors: &[NeighborView],
    cfg: &PhotometricConfig,
    invariance: Invariance,
) -> Result<AssistedOutput> {
    let (fit, da, db) = match invariance {
        Invariance::None => (AffineMap { a: 1.0, b: 0.0 }, None, None),
        Invariance::Scale => {
            let (fit, da) = fit_scale_differentiable(pred, gt, conf)?;
            (fit, Some(da), None)
        }
        Invariance::Affine => {
            let (fit, da, db) = fit_affine_differentiable(pred, gt, conf)?;
            (fit, Some(da), Some(db))
        }
    };

    let remapped = pred.map(|v| fit.apply(v));
    let vs = view_supervision_loss(&remapped, range, reference, neighbors, cfg)?;

    let (h, w) = (pred.height(), pred.width());
    let mut grad = vs.grad.clone();
    // d(loss)/d(pred_i) = a * g_i + (sum g p) da/dp_i + (sum g) db/dp_i.
    if da.is_some() || db.is_some() {
        let mut g_dot_p = 0.0;
        let mut g_sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                g_dot_p += vs.grad.get(x, y) * pred.get(x, y);
                g_sum += vs.grad.get(x, y);
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut v = fit.a * vs.grad.get(x, y);
                if let Some(da) = &da {
                    v += g_dot_p * da.get(x, y);
                }
                if let Some(db) = &db {
                    v += g_sum * db.get(x, y);
                }
                grad.set(x, y, v);
            }
        }
    }

    Ok(AssistedOutput { loss: vs.loss, grad_pred: grad, fit, coverage: vs.coverage })
}

/// Per-example free affine latents of the folded loss. The realized scale is
/// `EPSILON + softplus(a_hat)`, always positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedLatents {
    pub a_hat: f64,
    pub b: f64,
}

impl FoldedLatents {
    pub const EPSILON: f64 = 1e-5;

    pub fn realized_scale(&self) -> f64 {
        Self::EPSILON + softplus(self.a_hat)
    }
}

/// Numerically stable ln(1 + exp(x)).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct FoldedOutput {
    pub loss: f64,
    pub grad_pred: ScalarGrid,
    pub grad_a_hat: f64,
    pub grad_b: f64,
    pub realized_scale: f64,
    pub coverage: f64,
}

/// View supervision at `a * pred + b` where (a_hat, b) are free per-example
/// variables; returns gradients for the prediction and both latents.
pub fn folded_loss(
    pred: &ScalarGrid,
    latents: FoldedLatents,
    range: DepthRange,
    reference: &ReferenceView,
    neighbors: &[NeighborView],
    cfg: &PhotometricConfig,
) -> Result<FoldedOutput> {
    let a = latents.realized_scale();
    let remapped = pred.map(|v| a * v + latents.b);
    let vs = view_supervision_loss(&remapped, range, reference, neighbors, cfg)?;

    let (h, w) = (pred.height(), pred.width());
    let mut g_dot_p = 0.0;
    let mut g_sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            g_dot_p += vs.grad.get(x, y) * pred.get(x, y);
            g_sum += vs.grad.get(x, y);
        }
    }
    let grad_pred = vs.grad.map(|g| a * g);
    Ok(FoldedOutput {
        loss: vs.loss,
        grad_pred,
        grad_a_hat: g_dot_p * sigmoid(latents.a_hat),
        grad_b: g_sum,
        realized_scale: a,
        coverage: vs.coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Rig;
    use crate::optics::{render_capture, Layer, LayeredScene, ThinLensParams};
    use crate::synth;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg1() -> PhotometricConfig {
        PhotometricConfig::default().with_scales(1)
    }

    fn range() -> DepthRange {
        DepthRange::new(0.2, 100.0).unwrap()
    }

    #[test]
    fn charbonnier_values_and_symmetry() {
        assert_eq!(charbonnier(0.0, 0.1).0, 0.0);
        let (v, d) = charbonnier(0.1, 0.1);
        assert_relative_eq!(v, 2f64.sqrt() - 1.0, max_relative = 1e-12);
        assert_relative_eq!(d, 7.071067811865475, max_relative = 1e-12);
        // Even function, odd derivative; derivative matches finite differences.
        for x in [-0.3, -0.05, 0.02, 0.7] {
            assert_eq!(charbonnier(x, 0.1).0, charbonnier(-x, 0.1).0);
            let h = 1e-6;
            let fd = (charbonnier(x + h, 0.1).0 - charbonnier(x - h, 0.1).0) / (2.0 * h);
            assert_relative_eq!(charbonnier(x, 0.1).1, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn dssim_identical_is_zero_and_constants_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = synth::noise_texture(&mut rng, 10, 10, 3);
        let d = dssim(&img, &img, &cfg1()).unwrap();
        assert!(d.values().iter().all(|&v| v.abs() < 1e-12));

        let zeros = RasterImage::filled(6, 6, 1, 0.0).unwrap();
        let ones = RasterImage::filled(6, 6, 1, 1.0).unwrap();
        let d = dssim(&zeros, &ones, &cfg1()).unwrap();
        let c1 = 1e-4;
        let expected = (1.0 - c1 / (1.0 + c1)) / 2.0;
        for &v in d.values() {
            assert_relative_eq!(v, expected, max_relative = 1e-12);
            assert_relative_eq!(v, 0.49995, max_relative = 1e-4);
        }
    }

    #[test]
    fn dssim_bounded_for_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = synth::noise_texture(&mut rng, 9, 9, 3);
            let b = synth::noise_texture(&mut rng, 9, 9, 3);
            let d = dssim(&a, &b, &cfg1()).unwrap();
            assert!(d.values().iter().all(|&v| (-1e-12..=1.0).contains(&v)));
        }
    }

    #[test]
    fn photometric_delta_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = synth::noise_texture(&mut rng, 8, 8, 3);
        let valid = vec![true; 64];
        let d = photometric_delta(&img, &img, &valid, &cfg1()).unwrap();
        assert_eq!(d.coverage, 64);
        assert!(d.delta.iter().all(|&v| v.abs() < 1e-12));

        // Degenerate all-invalid mask: zero coverage reported.
        let d = photometric_delta(&img, &img, &vec![false; 64], &cfg1()).unwrap();
        assert_eq!(d.coverage, 0);
        assert!(d.delta.iter().all(|v| v.is_infinite()));

        // Constants 0 vs 0.1: the exact DSSIM of constants plus Charbonnier.
        let a = RasterImage::filled(6, 6, 1, 0.0).unwrap();
        let b = RasterImage::filled(6, 6, 1, 0.1).unwrap();
        let d = photometric_delta(&a, &b, &vec![true; 36], &cfg1()).unwrap();
        let ssim = 1e-4 / (0.01 + 1e-4);
        let expected = 0.8 * (1.0 - ssim) / 2.0 + 0.2 * (2f64.sqrt() - 1.0);
        assert_relative_eq!(expected, 0.47888231643501525, max_relative = 1e-12);
        for &v in &d.delta {
            assert_relative_eq!(v, expected, max_relative = 1e-12);
        }
    }

    fn textured_plane_setup(
        seed: u64,
        h: usize,
        w: usize,
    ) -> (crate::optics::Capture, Rig) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tex = synth::noise_texture(&mut rng, h, w, 3);
        let scene = LayeredScene::new(
            vec![Layer { texture: tex.clone(), depth_m: 0.8, mask: None }],
            tex,
            range(),
        )
        .unwrap();
        let rig = Rig::plus_shaped(
            0.9 * w as f64,
            0.9 * w as f64,
            (w - 1) as f64 / 2.0,
            (h - 1) as f64 / 2.0,
            0.012,
        )
        .unwrap();
        let lens = ThinLensParams::new(0.002, 0.004, 0.8, 1.0).unwrap();
        let cap = render_capture(&scene, &rig, &lens).unwrap();
        (cap, rig)
    }

    fn neighbor_views<'a>(cap: &'a crate::optics::Capture, rig: &'a Rig) -> Vec<NeighborView<'a>> {
        cap.neighbors
            .iter()
            .zip(rig.neighbors())
            .map(|(image, camera)| NeighborView { image, camera, valid: None })
            .collect()
    }

    #[test]
    fn view_loss_smaller_at_ground_truth() {
        let (cap, rig) = textured_plane_setup(10, 32, 32);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let neighbors = neighbor_views(&cap, &rig);
        let gt = cap.gt_depth.grid().clone();
        let at_gt =
            view_supervision_loss(&gt, range(), &reference, &neighbors, &cfg1()).unwrap();
        let off = gt.map(|v| v + 0.05);
        let at_off =
            view_supervision_loss(&off, range(), &reference, &neighbors, &cfg1()).unwrap();
        assert!(
            at_gt.loss < at_off.loss,
            "loss at gt {} !< loss off gt {}",
            at_gt.loss,
            at_off.loss
        );
    }

    #[test]
    fn view_loss_min_ignores_invalidated_neighbor() {
        let (cap, rig) = textured_plane_setup(11, 24, 24);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let all = neighbor_views(&cap, &rig);
        let gt = cap.gt_depth.grid().clone();

        // Knocking out one neighbor entirely must equal the loss over the rest.
        let dead = vec![false; 24 * 24];
        let mut with_dead: Vec<NeighborView> = Vec::new();
        for (k, n) in all.iter().enumerate() {
            with_dead.push(NeighborView {
                image: n.image,
                camera: n.camera,
                valid: if k == 0 { Some(&dead) } else { None },
            });
        }
        let rest: Vec<NeighborView> = all
            .iter()
            .skip(1)
            .map(|n| NeighborView { image: n.image, camera: n.camera, valid: None })
            .collect();
        let a = view_supervision_loss(&gt, range(), &reference, &with_dead, &cfg1()).unwrap();
        let b = view_supervision_loss(&gt, range(), &reference, &rest, &cfg1()).unwrap();
        assert_relative_eq!(a.loss, b.loss, max_relative = 1e-12);
    }

    #[test]
    fn view_loss_errors_without_any_valid_neighbor() {
        let (cap, rig) = textured_plane_setup(12, 16, 16);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let dead = vec![false; 16 * 16];
        let neighbors: Vec<NeighborView> = cap
            .neighbors
            .iter()
            .zip(rig.neighbors())
            .map(|(image, camera)| NeighborView { image, camera, valid: Some(&dead) })
            .collect();
        let gt = cap.gt_depth.grid().clone();
        assert!(matches!(
            view_supervision_loss(&gt, range(), &reference, &neighbors, &cfg1()),
            Err(Error::NoValidNeighbor)
        ));
    }

    #[test]
    fn view_loss_gradient_matches_finite_differences() {
        let (cap, rig) = textured_plane_setup(13, 16, 16);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let neighbors = neighbor_views(&cap, &rig);
        let hstep = 1e-4;
        let mut total_checked = 0usize;
        let mut total_passed = 0usize;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let base = ScalarGrid::from_fn(16, 16, |_, _| rng.random_range(0.4..0.8));
            let out = view_supervision_loss(&base, range(), &reference, &neighbors, &cfg1()).unwrap();
            for y in (1..15).step_by(4) {
                for x in (1..15).step_by(4) {
                    let mut plus = base.clone();
                    plus.set(x, y, base.get(x, y) + hstep);
                    let mut minus = base.clone();
                    minus.set(x, y, base.get(x, y) - hstep);
                    let lp = view_supervision_loss(&plus, range(), &reference, &neighbors, &cfg1())
                        .unwrap()
                        .loss;
                    let lm = view_supervision_loss(&minus, range(), &reference, &neighbors, &cfg1())
                        .unwrap()
                        .loss;
                    let fd = (lp - lm) / (2.0 * hstep);
                    let a = out.grad.get(x, y);
                    let denom = fd.abs().max(a.abs()).max(1e-5);
                    total_checked += 1;
                    if (a - fd).abs() / denom < 1e-3 {
                        total_passed += 1;
                    }
                }
            }
        }
        assert!(
            total_passed as f64 >= 0.95 * total_checked as f64,
            "{total_passed}/{total_checked} gradient checks passed"
        );
    }

    #[test]
    fn affine_fit_exact_and_sparse() {
        let pred = ScalarGrid::from_fn(4, 4, |x, y| 0.1 + 0.05 * (x as f64) + 0.02 * (y as f64));
        let gt_grid = pred.map(|v| 2.0 * v + 0.3);
        let gt = NormalizedInverseDepthMap::new(gt_grid, range()).unwrap();
        let conf = ConfidenceMap::full(4, 4);
        let (fit, _, _) = fit_affine_differentiable(&pred, &gt, &conf).unwrap();
        assert_relative_eq!(fit.a, 2.0, max_relative = 1e-12);
        assert_relative_eq!(fit.b, 0.3, max_relative = 1e-12);

        // Two confident points determine the line; the third is ignored.
        let pred = ScalarGrid::new(1, 3, vec![0.0, 1.0, 2.0]).unwrap();
        let gt = NormalizedInverseDepthMap::new(
            ScalarGrid::new(1, 3, vec![0.1, 0.3, 1.0]).unwrap(),
            range(),
        )
        .unwrap();
        let conf = ConfidenceMap::new(ScalarGrid::new(1, 3, vec![1.0, 1.0, 0.0]).unwrap()).unwrap();
        let (fit, _, _) = fit_affine_differentiable(&pred, &gt, &conf).unwrap();
        assert_relative_eq!(fit.a, 0.2, max_relative = 1e-12);
        assert_relative_eq!(fit.b, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn affine_fit_residual_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pred = ScalarGrid::from_fn(6, 6, |_, _| rng.random_range(0.0..1.0));
        let gt = NormalizedInverseDepthMap::new(
            ScalarGrid::from_fn(6, 6, |_, _| rng.random_range(0.0..1.0)),
            range(),
        )
        .unwrap();
        let conf = ConfidenceMap::new(ScalarGrid::from_fn(6, 6, |_, _| rng.random_range(0.1..1.0))).unwrap();
        let (fit, _, _) = fit_affine_differentiable(&pred, &gt, &conf).unwrap();
        let mut dot_p = 0.0;
        let mut dot_1 = 0.0;
        for y in 0..6 {
            for x in 0..6 {
                let r = gt.get(x, y) - fit.apply(pred.get(x, y));
                dot_p += conf.get(x, y) * r * pred.get(x, y);
                dot_1 += conf.get(x, y) * r;
            }
        }
        assert!(dot_p.abs() < 1e-9 && dot_1.abs() < 1e-9);
    }

    #[test]
    fn affine_fit_degenerate_prediction_errors() {
        let pred = ScalarGrid::filled(3, 3, 0.5);
        let gt = NormalizedInverseDepthMap::new(
            ScalarGrid::from_fn(3, 3, |x, _| x as f64 / 4.0),
            range(),
        )
        .unwrap();
        let conf = ConfidenceMap::full(3, 3);
        assert!(matches!(
            fit_affine_differentiable(&pred, &gt, &conf),
            Err(Error::SingularFit { .. })
        ));
    }

    #[test]
    fn affine_fit_gradients_match_finite_differences() {
        let hstep = 1e-6;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let pred = ScalarGrid::from_fn(4, 5, |_, _| rng.random_range(0.0..1.0));
            let gt = NormalizedInverseDepthMap::new(
                ScalarGrid::from_fn(4, 5, |_, _| rng.random_range(0.0..1.0)),
                range(),
            )
            .unwrap();
            let conf =
                ConfidenceMap::new(ScalarGrid::from_fn(4, 5, |_, _| rng.random_range(0.2..1.0))).unwrap();
            let (_, da, db) = fit_affine_differentiable(&pred, &gt, &conf).unwrap();
            for y in 0..4 {
                for x in 0..5 {
                    let mut plus = pred.clone();
                    plus.set(x, y, pred.get(x, y) + hstep);
                    let mut minus = pred.clone();
                    minus.set(x, y, pred.get(x, y) - hstep);
                    let fp = fit_affine(&plus, &gt, &conf).unwrap();
                    let fm = fit_affine(&minus, &gt, &conf).unwrap();
                    let fd_a = (fp.a - fm.a) / (2.0 * hstep);
                    let fd_b = (fp.b - fm.b) / (2.0 * hstep);
                    assert_relative_eq!(da.get(x, y), fd_a, max_relative = 1e-5, epsilon = 1e-7);
                    assert_relative_eq!(db.get(x, y), fd_b, max_relative = 1e-5, epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn assisted_loss_is_affine_invariant() {
        let (cap, rig) = textured_plane_setup(30, 24, 24);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let neighbors = neighbor_views(&cap, &rig);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pred = ScalarGrid::from_fn(24, 24, |_, _| rng.random_range(0.2..0.9));
        let base = assisted_loss(
            &pred,
            &cap.gt_depth,
            &cap.gt_conf,
            range(),
            &reference,
            &neighbors,
            &cfg1(),
            Invariance::Affine,
        )
        .unwrap();
        for (s, t) in [(2.0, 0.1), (0.5, -0.3), (3.7, 0.0)] {
            let remapped = pred.map(|v| s * v + t);
            let out = assisted_loss(
                &remapped,
                &cap.gt_depth,
                &cap.gt_conf,
                range(),
                &reference,
                &neighbors,
                &cfg1(),
                Invariance::Affine,
            )
            .unwrap();
            assert_relative_eq!(out.loss, base.loss, max_relative = 1e-9);
        }
    }

    #[test]
    fn scale_mode_is_scale_invariant() {
        let (cap, rig) = textured_plane_setup(32, 24, 24);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let neighbors = neighbor_views(&cap, &rig);
        let gt = cap.gt_depth.grid().clone();
        let base = assisted_loss(
            &gt,
            &cap.gt_depth,
            &cap.gt_conf,
            range(),
            &reference,
            &neighbors,
            &cfg1(),
            Invariance::Scale,
        )
        .unwrap();
        let doubled = gt.map(|v| 2.0 * v);
        let out = assisted_loss(
            &doubled,
            &cap.gt_depth,
            &cap.gt_conf,
            range(),
            &reference,
            &neighbors,
            &cfg1(),
            Invariance::Scale,
        )
        .unwrap();
        assert_relative_eq!(out.loss, base.loss, max_relative = 1e-9);
    }

    #[test]
    fn assisted_gradient_matches_finite_differences() {
        let (cap, rig) = textured_plane_setup(33, 16, 16);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let neighbors = neighbor_views(&cap, &rig);
        let hstep = 1e-4;
        let mut checked = 0usize;
        let mut passed = 0usize;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let pred = ScalarGrid::from_fn(16, 16, |_, _| rng.random_range(0.3..0.9));
            let eval = |p: &ScalarGrid| {
                assisted_loss(
                    p,
                    &cap.gt_depth,
                    &cap.gt_conf,
                    range(),
                    &reference,
                    &neighbors,
                    &cfg1(),
                    Invariance::Affine,
                )
                .unwrap()
            };
            let out = eval(&pred);
            for y in (1..15).step_by(5) {
                for x in (1..15).step_by(5) {
                    let mut plus = pred.clone();
                    plus.set(x, y, pred.get(x, y) + hstep);
                    let mut minus = pred.clone();
                    minus.set(x, y, pred.get(x, y) - hstep);
                    let fd = (eval(&plus).loss - eval(&minus).loss) / (2.0 * hstep);
                    let a = out.grad_pred.get(x, y);
                    let denom = fd.abs().max(a.abs()).max(1e-5);
                    checked += 1;
                    if (a - fd).abs() / denom < 1e-3 {
                        passed += 1;
                    }
                }
            }
        }
        assert!(passed as f64 >= 0.95 * checked as f64, "{passed}/{checked}");
    }

    #[test]
    fn folded_scale_reparameterization() {
        let l = FoldedLatents { a_hat: 0.0, b: 0.0 };
        assert_relative_eq!(l.realized_scale(), 1e-5 + 2f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(l.realized_scale(), 0.693157, max_relative = 1e-5);
        let tiny = FoldedLatents { a_hat: -40.0, b: 0.0 };
        assert!((tiny.realized_scale() - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn folded_latent_gradients_match_finite_differences() {
        let (cap, rig) = textured_plane_setup(34, 16, 16);
        let reference = ReferenceView { image: &cap.center_rgb, camera: rig.reference(), valid: None };
        let neighbors = neighbor_views(&cap, &rig);
        let hstep = 1e-5;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let pred = ScalarGrid::from_fn(16, 16, |_, _| rng.random_range(0.3..0.9));
            let latents = FoldedLatents {
                a_hat: rng.random_range(-1.0..1.0),
                b: rng.random_range(-0.2..0.2),
            };
            let eval = |l: FoldedLatents| {
                folded_loss(&pred, l, range(), &reference, &neighbors, &cfg1()).unwrap().loss
            };
            let out = folded_loss(&pred, latents, range(), &reference, &neighbors, &cfg1()).unwrap();

            let fd_a = (eval(FoldedLatents { a_hat: latents.a_hat + hstep, ..latents })
                - eval(FoldedLatents { a_hat: latents.a_hat - hstep, ..latents }))
                / (2.0 * hstep);
            let fd_b = (eval(FoldedLatents { b: latents.b + hstep, ..latents })
                - eval(FoldedLatents { b: latents.b - hstep, ..latents }))
                / (2.0 * hstep);
            let denom_a = fd_a.abs().max(out.grad_a_hat.abs()).max(1e-6);
            let denom_b = fd_b.abs().max(out.grad_b.abs()).max(1e-6);
            assert!(
                (out.grad_a_hat - fd_a).abs() / denom_a < 1e-4,
                "seed {seed}: a_hat grad {} vs fd {fd_a}",
                out.grad_a_hat
            );
            assert!(
                (out.grad_b - fd_b).abs() / denom_b < 1e-4,
                "seed {seed}: b grad {} vs fd {fd_b}",
                out.grad_b
            );
        }
    }
}
