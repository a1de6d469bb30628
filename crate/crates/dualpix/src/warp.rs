//! Depth-induced projective warping with bilinear sampling and analytic
//! derivatives with respect to depth.
//!
//! For reference pixel (x, y) with normalized inverse depth D, the warp
//! unprojects at Z(D) with the reference intrinsics, rigidly transforms into
//! the target camera and reprojects. Out-of-bounds or behind-camera targets
//! are clamped and flagged invalid rather than rejected, which keeps the loss
//! surface smooth near borders while the validity mask stops border pixels
//! from fabricating photometric agreement.

use crate::camera::{mat_mul, mat_mul_vec, mat_transpose, CameraModel};
use crate::depth::NormalizedInverseDepthMap;
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{RasterImage, ScalarGrid};

/// Per-pixel target coordinates plus validity.
#[derive(Debug, Clone)]
pub struct WarpField {
    height: usize,
    width: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub valid: Vec<bool>,
}

impl WarpField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// d(target coordinate)/d(normalized inverse depth), per pixel.
#[derive(Debug, Clone)]
pub struct WarpDepthJacobian {
    pub dx_dd: Vec<f64>,
    pub dy_dd: Vec<f64>,
}

pub fn induced_warp(
    depth: &NormalizedInverseDepthMap,
    cam0: &CameraModel,
    cam1: &CameraModel,
) -> WarpField {
    induced_warp_with_jacobian(depth, cam0, cam1).0
}

pub fn induced_warp_with_jacobian(
    depth: &NormalizedInverseDepthMap,
    cam0: &CameraModel,
    cam1: &CameraModel,
) -> (WarpField, WarpDepthJacobian) {
    induced_warp_grid(depth.grid(), depth.range(), cam0, cam1)
}

/// Grid-level warp used by the losses, where affine-remapped depth may leave
/// [0, 1]; out-of-range values simply flag pixels invalid through the Z <= 0
/// and bounds checks.
pub fn induced_warp_grid(
    depth: &ScalarGrid,
    range: crate::depth::DepthRange,
    cam0: &CameraModel,
    cam1: &CameraModel,
) -> (WarpField, WarpDepthJacobian) {
    let (h, w) = (depth.height(), depth.width());
    // X1 = M * (Z * r) + q with M = R1 R0^T, q = t1 - M t0.
    let m = mat_mul(cam1.rotation(), &mat_transpose(cam0.rotation()));
    let mt0 = mat_mul_vec(&m, cam0.translation());
    let q = [
        cam1.translation()[0] - mt0[0],
        cam1.translation()[1] - mt0[1],
        cam1.translation()[2] - mt0[2],
    ];
    let span = range.inv_span();

    let mut xs = vec![0.0f64; h * w];
    let mut ys = vec![0.0f64; h * w];
    let mut valid = vec![false; h * w];
    let mut dx_dd = vec![0.0f64; h * w];
    let mut dy_dd = vec![0.0f64; h * w];

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>)> = exec::map_indexed(h, |y| {
        let mut rx = vec![0.0f64; w];
        let mut ry = vec![0.0f64; w];
        let mut rv = vec![false; w];
        let mut rjx = vec![0.0f64; w];
        let mut rjy = vec![0.0f64; w];
        for x in 0..w {
            let d = depth.get(x, y);
            let z = range.metric_of_normalized(d);
            let r = [
                (x as f64 - cam0.cx()) / cam0.fx(),
                (y as f64 - cam0.cy()) / cam0.fy(),
                1.0,
            ];
            let mr = mat_mul_vec(&m, r);
            let p1 = [z * mr[0] + q[0], z * mr[1] + q[1], z * mr[2] + q[2]];
            if !(z.is_finite() && z > 0.0 && p1[2] > 0.0) {
                continue;
            }
            let (tx, ty) = cam1.project(p1);
            if !(tx.is_finite() && ty.is_finite()) {
                continue;
            }
            let inside =
                tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f64 && ty <= (h - 1) as f64;
            rx[x] = tx.clamp(0.0, (w - 1) as f64);
            ry[x] = ty.clamp(0.0, (h - 1) as f64);
            rv[x] = inside;
            // dZ/dD = -span * Z^2; quotient rule through the projection.
            let dz_dd = -span * z * z;
            let inv_z1 = 1.0 / p1[2];
            let dtx_dz = cam1.fx() * (mr[0] * p1[2] - p1[0] * mr[2]) * inv_z1 * inv_z1;
            let dty_dz = cam1.fy() * (mr[1] * p1[2] - p1[1] * mr[2]) * inv_z1 * inv_z1;
            rjx[x] = dtx_dz * dz_dd;
            rjy[x] = dty_dz * dz_dd;
        }
        (rx, ry, rv, rjx, rjy)
    });

    for (y, (rx, ry, rv, rjx, rjy)) in rows.into_iter().enumerate() {
        xs[y * w..(y + 1) * w].copy_from_slice(&rx);
        ys[y * w..(y + 1) * w].copy_from_slice(&ry);
        valid[y * w..(y + 1) * w].copy_from_slice(&rv);
        dx_dd[y * w..(y + 1) * w].copy_from_slice(&rjx);
        dy_dd[y * w..(y + 1) * w].copy_from_slice(&rjy);
    }

    (
        WarpField { height: h, width: w, xs, ys, valid },
        WarpDepthJacobian { dx_dd, dy_dd },
    )
}

/// Clamped bilinear lookup; integer coordinates hit source pixels exactly.
#[inline]
pub fn bilinear_at(img: &RasterImage, x: f64, y: f64, c: usize) -> f64 {
    let (h, w) = (img.height(), img.width());
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let top = img.get(x0, y0, c) * (1.0 - fx) + img.get(x1, y0, c) * fx;
    let bot = img.get(x0, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Spatial derivative of the clamped bilinear lookup (right-limit weights at
/// integer coordinates).
#[inline]
pub fn bilinear_grad_at(img: &RasterImage, x: f64, y: f64, c: usize) -> (f64, f64) {
    let (h, w) = (img.height(), img.width());
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let dx = (img.get(x1, y0, c) - img.get(x0, y0, c)) * (1.0 - fy)
        + (img.get(x1, y1, c) - img.get(x0, y1, c)) * fy;
    let dy = (img.get(x0, y1, c) - img.get(x0, y0, c)) * (1.0 - fx)
        + (img.get(x1, y1, c) - img.get(x1, y0, c)) * fx;
    (dx, dy)
}

/// Resamples `src` through the warp; output validity equals warp validity.
pub fn bilinear_sample(src: &RasterImage, warp: &WarpField) -> Result<(RasterImage, Vec<bool>)> {
    if src.height() != warp.height || src.width() != warp.width {
        return Err(Error::Dimension {
            expected: format!("{}x{}", warp.height, warp.width),
            got: format!("{}x{}", src.height(), src.width()),
        });
    }
    let (h, w, ch) = (warp.height, warp.width, src.channels());
    let mut out = vec![0.0f64; h * w * ch];
    exec::for_each_chunk_mut(&mut out, w * ch, |y, row| {
        for x in 0..w {
            let i = y * w + x;
            for c in 0..ch {
                row[x * ch + c] = bilinear_at(src, warp.xs[i], warp.ys[i], c);
            }
        }
    });
    Ok((RasterImage::new(h, w, ch, out)?, warp.valid.clone()))
}

/// Analytic gradient of `sum(upstream * bilinear_sample(src, warp(D)))` with
/// respect to D. `upstream` is laid out like the sampled image
/// (h*w*channels). Invalid pixels receive zero gradient.
pub fn warp_depth_gradient(
    src: &RasterImage,
    depth: &NormalizedInverseDepthMap,
    cam0: &CameraModel,
    cam1: &CameraModel,
    upstream: &[f64],
) -> Result<ScalarGrid> {
    let (h, w, ch) = (depth.height(), depth.width(), src.channels());
    if upstream.len() != h * w * ch {
        return Err(Error::Dimension {
            expected: format!("{} upstream values", h * w * ch),
            got: format!("{}", upstream.len()),
        });
    }
    let (warp, jac) = induced_warp_with_jacobian(depth, cam0, cam1);
    let mut out = vec![0.0f64; h * w];
    exec::for_each_chunk_mut(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if !warp.valid[i] {
                continue;
            }
            let mut acc = 0.0;
            for c in 0..ch {
                let (gx, gy) = bilinear_grad_at(src, warp.xs[i], warp.ys[i], c);
                acc += upstream[i * ch + c] * (gx * jac.dx_dd[i] + gy * jac.dy_dd[i]);
            }
            *o = acc;
        }
    });
    ScalarGrid::new(h, w, out)
}
