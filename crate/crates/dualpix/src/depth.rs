//! Depth representations and metric <-> normalized inverse-depth conversion.
//!
//! Depth lives internally as normalized inverse depth D* in [0, 1], sampled
//! uniformly in 1/Z between the near and far planes with D* = 1 at z_near and
//! D* = 0 at z_far, so larger values mean closer. Metric depth appears only
//! at module boundaries.

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use serde::{Deserialize, Serialize};

/// Working depth interval in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub z_near: f64,
    pub z_far: f64,
}

impl DepthRange {
    pub fn new(z_near: f64, z_far: f64) -> Result<Self> {
        if !(z_near.is_finite() && z_far.is_finite()) || z_near <= 0.0 || z_near >= z_far {
            return Err(Error::Domain(format!(
                "depth range requires 0 < z_near < z_far, got ({z_near}, {z_far})"
            )));
        }
        Ok(Self { z_near, z_far })
    }

    pub fn inv_near(&self) -> f64 {
        1.0 / self.z_near
    }

    pub fn inv_far(&self) -> f64 {
        1.0 / self.z_far
    }

    /// Span of the inverse-depth interval, 1/z_near - 1/z_far.
    pub fn inv_span(&self) -> f64 {
        self.inv_near() - self.inv_far()
    }

    pub fn normalized_of_metric(&self, z: f64) -> Result<f64> {
        if z <= 0.0 || !z.is_finite() {
            return Err(Error::Domain(format!("metric depth must be positive, got {z}")));
        }
        Ok(((1.0 / z - self.inv_far()) / self.inv_span()).clamp(0.0, 1.0))
    }

    pub fn metric_of_normalized(&self, d: f64) -> f64 {
        1.0 / (self.inv_far() + d * self.inv_span())
    }
}

/// Per-pixel normalized inverse depth with its defining range.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedInverseDepthMap {
    grid: ScalarGrid,
    range: DepthRange,
}

impl NormalizedInverseDepthMap {
    pub fn new(grid: ScalarGrid, range: DepthRange) -> Result<Self> {
        if let Some(v) = grid.values().iter().find(|v| **v < 0.0 || **v > 1.0) {
            return Err(Error::Domain(format!("normalized inverse depth {v} outside [0, 1]")));
        }
        Ok(Self { grid, range })
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn range(&self) -> DepthRange {
        self.range
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }

    pub fn metric_at(&self, x: usize, y: usize) -> f64 {
        self.range.metric_of_normalized(self.grid.get(x, y))
    }
}

/// Per-pixel weights in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    grid: ScalarGrid,
}

impl ConfidenceMap {
    pub fn new(grid: ScalarGrid) -> Result<Self> {
        if let Some(v) = grid.values().iter().find(|v| **v < 0.0 || **v > 1.0) {
            return Err(Error::Domain(format!("confidence {v} outside [0, 1]")));
        }
        Ok(Self { grid })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { grid: ScalarGrid::filled(height, width, 1.0) }
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }
}

/// The (scale, offset) pair relating a prediction to true inverse depth.
///
/// `a` is positive when produced by the softplus reparameterization in the
/// folded loss; the least-squares fit leaves it unrestricted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
}

impl AffineMap {
    pub fn apply(&self, v: f64) -> f64 {
        self.a * v + self.b
    }
}

/// Converts a metric depth grid (meters) to normalized inverse depth,
/// clamped to [0, 1]; z_near maps to 1 and z_far to 0.
pub fn metric_to_normalized_inverse(
    z: &ScalarGrid,
    range: DepthRange,
) -> Result<NormalizedInverseDepthMap> {
    let mut values = Vec::with_capacity(z.values().len());
    for &v in z.values() {
        values.push(range.normalized_of_metric(v)?);
    }
    NormalizedInverseDepthMap::new(ScalarGrid::new(z.height(), z.width(), values)?, range)
}

/// Exact inverse of [`metric_to_normalized_inverse`] for depths inside the range.
pub fn normalized_inverse_to_metric(d: &NormalizedInverseDepthMap) -> ScalarGrid {
    let range = d.range();
    d.grid().map(|v| range.metric_of_normalized(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn range() -> DepthRange {
        DepthRange::new(0.2, 100.0).unwrap()
    }

    #[test]
    fn endpoints_map_to_unit_interval() {
        assert_eq!(range().normalized_of_metric(0.2).unwrap(), 1.0);
        assert_eq!(range().normalized_of_metric(100.0).unwrap(), 0.0);
    }

    #[test]
    fn plane_127_of_256_matches_conversion() {
        // Depth of the inverse-perspective plane k=127 of n=256 over [0.2, 100]:
        // 1/Z = 5 - (127/255) * 4.99. Its normalized inverse depth must equal
        // 1 - 127/255 = 128/255.
        let z = 1.0 / (5.0 - (127.0 / 255.0) * 4.99);
        assert_relative_eq!(z, 0.397_648_522_167_487_7, max_relative = 1e-12);
        let d = range().normalized_of_metric(z).unwrap();
        assert_relative_eq!(d, 128.0 / 255.0, max_relative = 1e-12);
        assert_relative_eq!(d, 0.501_96, max_relative = 1e-4);
    }

    #[test]
    fn midpoint_inverse() {
        // 1/Z = 0.01 + 0.5 * 4.99
        let z = range().metric_of_normalized(0.5);
        assert_relative_eq!(z, 1.0 / 2.505, max_relative = 1e-12);
        assert_relative_eq!(z, 0.399_20, max_relative = 1e-4);
    }

    #[test]
    fn nonpositive_depth_is_domain_error() {
        let g = ScalarGrid::new(1, 2, vec![1.0, -0.5]).unwrap();
        assert!(matches!(metric_to_normalized_inverse(&g, range()), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn round_trip_identity(z in 0.2f64..100.0) {
            let r = range();
            let d = r.normalized_of_metric(z).unwrap();
            let back = r.metric_of_normalized(d);
            prop_assert!((back - z).abs() / z < 1e-9);
        }

        #[test]
        fn strictly_monotone_decreasing(z1 in 0.2f64..100.0, z2 in 0.2f64..100.0) {
            prop_assume!((z1 - z2).abs() > 1e-9);
            let r = range();
            let (lo, hi) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
            prop_assert!(r.normalized_of_metric(lo).unwrap() > r.normalized_of_metric(hi).unwrap());
        }
    }
}
