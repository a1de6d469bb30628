//! Raster file IO: PFM for float grids, 8/16-bit PNG for images, JSON for
//! rig calibration.
//!
//! PFM is the grayscale `Pf` variant with scale -1.0 (little-endian) and the
//! standard bottom-to-top scanline order. Values pass through `f32`, so a
//! write-then-read round trip is exact for `f32`-representable data.

use crate::camera::Rig;
use crate::error::{Error, Result};
use crate::grid::{RasterImage, ScalarGrid};
use image::DynamicImage;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_pfm(path: &Path, grid: &ScalarGrid) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    for y in (0..grid.height()).rev() {
        for &v in grid.row(y) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<ScalarGrid> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = String::new();
    r.read_line(&mut magic)?;
    let magic = magic.trim();
    if magic == "PF" {
        return Err(Error::UnsupportedFormat("color PFM (PF); only grayscale Pf is supported".into()));
    }
    if magic != "Pf" {
        return Err(Error::UnsupportedFormat(format!("not a PFM file (magic {magic:?})")));
    }

    let mut dims = String::new();
    r.read_line(&mut dims)?;
    let mut it = dims.split_whitespace();
    let width: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::UnsupportedFormat("bad PFM dimensions".into()))?;
    let height: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::UnsupportedFormat("bad PFM dimensions".into()))?;

    let mut scale_line = String::new();
    r.read_line(&mut scale_line)?;
    let scale: f64 = scale_line
        .trim()
        .parse()
        .map_err(|_| Error::UnsupportedFormat("bad PFM scale".into()))?;
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw)?;

    let mut values = vec![0.0f64; width * height];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        // PFM rows are stored bottom-to-top.
        let y = height - 1 - i / width;
        let x = i % width;
        values[y * width + x] = v as f64;
    }
    ScalarGrid::new(height, width, values)
}

/// PNG bit depth for [`write_png`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PngDepth {
    Eight,
    Sixteen,
}

/// Writes a 1- or 3-channel raster as a PNG; values quantize to
/// `round(v * (2^bits - 1))`.
pub fn write_png(path: &Path, img: &RasterImage, depth: PngDepth) -> Result<()> {
    let (h, w) = (img.height() as u32, img.width() as u32);
    match (img.channels(), depth) {
        (1, PngDepth::Eight) => {
            let buf = image::GrayImage::from_fn(w, h, |x, y| {
                image::Luma([quant8(img.get(x as usize, y as usize, 0))])
            });
            buf.save(path)?;
        }
        (1, PngDepth::Sixteen) => {
            let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_fn(w, h, |x, y| {
                image::Luma([quant16(img.get(x as usize, y as usize, 0))])
            });
            buf.save(path)?;
        }
        (3, PngDepth::Eight) => {
            let buf = image::RgbImage::from_fn(w, h, |x, y| {
                image::Rgb([
                    quant8(img.get(x as usize, y as usize, 0)),
                    quant8(img.get(x as usize, y as usize, 1)),
                    quant8(img.get(x as usize, y as usize, 2)),
                ])
            });
            buf.save(path)?;
        }
        (3, PngDepth::Sixteen) => {
            let buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_fn(w, h, |x, y| {
                image::Rgb([
                    quant16(img.get(x as usize, y as usize, 0)),
                    quant16(img.get(x as usize, y as usize, 1)),
                    quant16(img.get(x as usize, y as usize, 2)),
                ])
            });
            buf.save(path)?;
        }
        (c, _) => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG supports 1 or 3 channels, raster has {c}"
            )))
        }
    }
    Ok(())
}

fn quant8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn quant16(v: f64) -> u16 {
    (v * 65535.0).round().clamp(0.0, 65535.0) as u16
}

/// Reads an 8/16-bit grayscale or RGB PNG into a [0, 1] raster. Other pixel
/// layouts (gray+alpha, RGBA, ...) are rejected.
pub fn read_png(path: &Path) -> Result<RasterImage> {
    let img = image::open(path)?;
    let (w, h);
    match &img {
        DynamicImage::ImageLuma8(b) => {
            (w, h) = b.dimensions();
            RasterImage::from_fn(h as usize, w as usize, 1, |x, y, _| {
                b.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0
            })
        }
        DynamicImage::ImageLuma16(b) => {
            (w, h) = b.dimensions();
            RasterImage::from_fn(h as usize, w as usize, 1, |x, y, _| {
                b.get_pixel(x as u32, y as u32).0[0] as f64 / 65535.0
            })
        }
        DynamicImage::ImageRgb8(b) => {
            (w, h) = b.dimensions();
            RasterImage::from_fn(h as usize, w as usize, 3, |x, y, c| {
                b.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0
            })
        }
        DynamicImage::ImageRgb16(b) => {
            (w, h) = b.dimensions();
            RasterImage::from_fn(h as usize, w as usize, 3, |x, y, c| {
                b.get_pixel(x as u32, y as u32).0[c] as f64 / 65535.0
            })
        }
        other => Err(Error::UnsupportedFormat(format!(
            "unsupported PNG pixel layout {:?} (need 8/16-bit gray or RGB)",
            other.color()
        ))),
    }
}

pub fn write_rig_json(path: &Path, rig: &Rig) -> Result<()> {
    fs::write(path, rig.to_json_string()?)?;
    Ok(())
}

pub fn read_rig_json(path: &Path) -> Result<Rig> {
    Rig::from_json_str(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Capture directories
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct CaptureMeta {
    depth_range: crate::depth::DepthRange,
    lens: crate::optics::ThinLensParams,
}

/// File names inside a capture directory. The four neighbor views follow the
/// rig camera order.
pub const CAPTURE_NEIGHBOR_FILES: [&str; 4] =
    ["view_top.png", "view_bottom.png", "view_left.png", "view_right.png"];

/// Writes one capture as 16-bit PNGs plus PFM ground truth and JSON metadata.
pub fn write_capture(dir: &Path, cap: &crate::optics::Capture) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_png(&dir.join("center.png"), &cap.center_rgb, PngDepth::Sixteen)?;
    write_png(&dir.join("dp_left.png"), &cap.dp.left, PngDepth::Sixteen)?;
    write_png(&dir.join("dp_right.png"), &cap.dp.right, PngDepth::Sixteen)?;
    for (name, img) in CAPTURE_NEIGHBOR_FILES.iter().zip(&cap.neighbors) {
        write_png(&dir.join(name), img, PngDepth::Sixteen)?;
    }
    write_pfm(&dir.join("gt_depth.pfm"), cap.gt_depth.grid())?;
    write_pfm(&dir.join("gt_conf.pfm"), cap.gt_conf.grid())?;
    write_rig_json(&dir.join("rig.json"), &cap.rig)?;
    let meta = CaptureMeta { depth_range: cap.gt_depth.range(), lens: cap.lens };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_capture(dir: &Path) -> Result<crate::optics::Capture> {
    let meta: CaptureMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let range = crate::depth::DepthRange::new(meta.depth_range.z_near, meta.depth_range.z_far)?;
    let lens = crate::optics::ThinLensParams::new(
        meta.lens.aperture,
        meta.lens.focal_length,
        meta.lens.focus_distance,
        meta.lens.disparity_gain,
    )?;
    let center_rgb = read_png(&dir.join("center.png"))?;
    let left = read_png(&dir.join("dp_left.png"))?;
    let right = read_png(&dir.join("dp_right.png"))?;
    let neighbors = CAPTURE_NEIGHBOR_FILES
        .iter()
        .map(|name| read_png(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    let gt_depth = crate::depth::NormalizedInverseDepthMap::new(read_pfm(&dir.join("gt_depth.pfm"))?, range)?;
    let gt_conf = crate::depth::ConfidenceMap::new(read_pfm(&dir.join("gt_conf.pfm"))?)?;
    let rig = read_rig_json(&dir.join("rig.json"))?;
    Ok(crate::optics::Capture {
        center_rgb,
        dp: crate::optics::DualPixelPair { left, right },
        neighbors,
        gt_depth,
        gt_conf,
        rig,
        lens,
    })
}
