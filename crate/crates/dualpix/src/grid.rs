//! Pixel containers: scalar grids and multi-channel rasters.

use crate::error::{Error, Result};

/// A dense H×W grid of finite `f64` values, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension {
                expected: "height, width >= 1".into(),
                got: format!("{height}x{width}"),
            });
        }
        if values.len() != height * width {
            return Err(Error::Dimension {
                expected: format!("{} values", height * width),
                got: format!("{}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value {v}")));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::new(height, width, vec![value; height * width]).expect("finite fill")
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(height, width, values).expect("finite from_fn")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn same_shape(&self, other: &ScalarGrid) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarGrid {
        ScalarGrid {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// 2x2 box-average downsample; truncates odd trailing row/column.
    pub fn downsample_2x2_mean(&self) -> ScalarGrid {
        let h = (self.height / 2).max(1);
        let w = (self.width / 2).max(1);
        ScalarGrid::from_fn(h, w, |x, y| {
            let (sx, sy) = (2 * x, 2 * y);
            let x1 = (sx + 1).min(self.width - 1);
            let y1 = (sy + 1).min(self.height - 1);
            0.25 * (self.get(sx, sy) + self.get(x1, sy) + self.get(sx, y1) + self.get(x1, y1))
        })
    }

    /// 2x2 min downsample, used for confidence maps so a block touching an
    /// unreliable pixel stays unreliable.
    pub fn downsample_2x2_min(&self) -> ScalarGrid {
        let h = (self.height / 2).max(1);
        let w = (self.width / 2).max(1);
        ScalarGrid::from_fn(h, w, |x, y| {
            let (sx, sy) = (2 * x, 2 * y);
            let x1 = (sx + 1).min(self.width - 1);
            let y1 = (sy + 1).min(self.height - 1);
            self.get(sx, sy)
                .min(self.get(x1, sy))
                .min(self.get(sx, y1))
                .min(self.get(x1, y1))
        })
    }

    pub fn center_crop(&self, crop_h: usize, crop_w: usize) -> Result<ScalarGrid> {
        if crop_h < 2 || crop_w < 2 || crop_h > self.height || crop_w > self.width {
            return Err(Error::Dimension {
                expected: format!("crop within 2..={}x2..={}", self.height, self.width),
                got: format!("{crop_h}x{crop_w}"),
            });
        }
        let y0 = (self.height - crop_h) / 2;
        let x0 = (self.width - crop_w) / 2;
        Ok(ScalarGrid::from_fn(crop_h, crop_w, |x, y| self.get(x0 + x, y0 + y)))
    }
}

/// An H×W×C raster with values in [0, 1], channel-interleaved row-major.
///
/// Channels: 1 = grayscale, 3 = RGB, 5 = RGB + left-DP + right-DP stacked
/// along the channel dimension (the network input convention).
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension {
                expected: "height, width >= 1".into(),
                got: format!("{height}x{width}"),
            });
        }
        if !matches!(channels, 1 | 3 | 5) {
            return Err(Error::UnsupportedFormat(format!(
                "raster must have 1, 3 or 5 channels, got {channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::Dimension {
                expected: format!("{} values", height * width * channels),
                got: format!("{}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Domain(format!("raster value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    values.push(f(x, y, c));
                }
            }
        }
        Self::new(height, width, channels, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.values[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Channel mean as a grayscale image.
    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        RasterImage::from_fn(self.height, self.width, 1, |x, y, _| {
            (0..self.channels).map(|c| self.get(x, y, c)).sum::<f64>() / self.channels as f64
        })
        .expect("mean of [0,1] stays in [0,1]")
    }

    /// Extracts one channel as a ScalarGrid.
    pub fn channel(&self, c: usize) -> ScalarGrid {
        ScalarGrid::from_fn(self.height, self.width, |x, y| self.get(x, y, c))
    }

    /// Stacks RGB with two single-channel DP views into a 5-channel raster.
    pub fn stack_rgb_dp(rgb: &RasterImage, left: &RasterImage, right: &RasterImage) -> Result<RasterImage> {
        if rgb.channels != 3 || left.channels != 1 || right.channels != 1 {
            return Err(Error::UnsupportedFormat(
                "stack_rgb_dp expects RGB + two single-channel views".into(),
            ));
        }
        if !(rgb.height == left.height && rgb.width == left.width && left.same_shape(right)) {
            return Err(Error::Dimension {
                expected: format!("{}x{}", rgb.height, rgb.width),
                got: format!("{}x{} / {}x{}", left.height, left.width, right.height, right.width),
            });
        }
        RasterImage::from_fn(rgb.height, rgb.width, 5, |x, y, c| match c {
            0..=2 => rgb.get(x, y, c),
            3 => left.get(x, y, 0),
            _ => right.get(x, y, 0),
        })
    }

    /// 2x2 box-average downsample per channel.
    pub fn downsample_2x2_mean(&self) -> RasterImage {
        let h = (self.height / 2).max(1);
        let w = (self.width / 2).max(1);
        RasterImage::from_fn(h, w, self.channels, |x, y, c| {
            let (sx, sy) = (2 * x, 2 * y);
            let x1 = (sx + 1).min(self.width - 1);
            let y1 = (sy + 1).min(self.height - 1);
            0.25 * (self.get(sx, sy, c)
                + self.get(x1, sy, c)
                + self.get(sx, y1, c)
                + self.get(x1, y1, c))
        })
        .expect("average of [0,1] stays in [0,1]")
    }
}
