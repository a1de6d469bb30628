//! Pinhole cameras and the 5-view plus-shaped capture rig.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
/// Row-major 3x3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub fn mat_mul_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn vec_sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn vec_add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Pinhole intrinsics plus a world-to-camera rigid pose.
///
/// Camera frame: x right, y down, z forward. A world point `P` maps to
/// `X = R * P + t` in the camera frame and projects to
/// `(fx * X.x / X.z + cx, fy * X.y / X.z + cy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: Mat3,
    translation: Vec3,
}

const ORTHONORMALITY_TOL: f64 = 1e-9;

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Domain(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        let rt_r = mat_mul(&mat_transpose(&rotation), &rotation);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (rt_r[i][j] - expect).abs() > ORTHONORMALITY_TOL {
                    return Err(Error::Domain(format!(
                        "rotation is not orthonormal: (R^T R)[{i}][{j}] = {}",
                        rt_r[i][j]
                    )));
                }
            }
        }
        Ok(Self { fx, fy, cx, cy, rotation, translation })
    }

    /// Axis-aligned camera (identity rotation) with the given world-to-camera
    /// translation.
    pub fn axis_aligned(fx: f64, fy: f64, cx: f64, cy: f64, translation: Vec3) -> Self {
        Self::new(fx, fy, cx, cy, IDENTITY, translation).expect("identity is orthonormal")
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Back-projects pixel (x, y) at camera-frame depth z.
    pub fn unproject(&self, x: f64, y: f64, z: f64) -> Vec3 {
        [(x - self.cx) / self.fx * z, (y - self.cy) / self.fy * z, z]
    }

    /// Projects a camera-frame point; caller checks `p[2] > 0`.
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }

    pub fn world_to_camera(&self, p_world: Vec3) -> Vec3 {
        vec_add(mat_mul_vec(&self.rotation, p_world), self.translation)
    }

    pub fn camera_to_world(&self, p_cam: Vec3) -> Vec3 {
        mat_mul_vec(&mat_transpose(&self.rotation), vec_sub(p_cam, self.translation))
    }

    /// Intrinsics for an image box-downsampled by an integer factor, with the
    /// half-pixel shift that keeps pixel centers aligned.
    pub fn downscaled(&self, factor: usize) -> CameraModel {
        let f = factor as f64;
        let shift = (f - 1.0) / 2.0;
        CameraModel {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: (self.cx - shift) / f,
            cy: (self.cy - shift) / f,
            rotation: self.rotation,
            translation: self.translation,
        }
    }
}

/// Five cameras in a plus shape: center (the reference, index 0), then top,
/// bottom, left, right.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    cameras: Vec<CameraModel>,
}

pub const RIG_VIEW_NAMES: [&str; 5] = ["center", "top", "bottom", "left", "right"];

impl Rig {
    pub fn new(cameras: Vec<CameraModel>) -> Result<Self> {
        if cameras.len() != 5 {
            return Err(Error::Config(format!("rig requires exactly 5 cameras, got {}", cameras.len())));
        }
        Ok(Self { cameras })
    }

    /// All cameras share intrinsics and face +z; the four neighbors sit at
    /// `baseline` meters above/below/left/right of the center camera.
    pub fn plus_shaped(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64) -> Result<Self> {
        if baseline <= 0.0 {
            return Err(Error::Config(format!("baseline must be positive, got {baseline}")));
        }
        // World-to-camera translation is -C for a camera centered at C with
        // identity rotation. y points down, so "top" has center (0, -b, 0).
        let centers = [
            [0.0, 0.0, 0.0],
            [0.0, -baseline, 0.0],
            [0.0, baseline, 0.0],
            [-baseline, 0.0, 0.0],
            [baseline, 0.0, 0.0],
        ];
        let cameras = centers
            .iter()
            .map(|c| CameraModel::axis_aligned(fx, fy, cx, cy, [-c[0], -c[1], -c[2]]))
            .collect();
        Self::new(cameras)
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.cameras
    }

    pub fn reference(&self) -> &CameraModel {
        &self.cameras[0]
    }

    pub fn neighbors(&self) -> &[CameraModel] {
        &self.cameras[1..]
    }

    pub fn downscaled(&self, factor: usize) -> Rig {
        Rig { cameras: self.cameras.iter().map(|c| c.downscaled(factor)).collect() }
    }
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct RigJson {
    cameras: Vec<CameraJson>,
}

impl Rig {
    pub fn to_json_string(&self) -> Result<String> {
        let json = RigJson {
            cameras: self
                .cameras
                .iter()
                .map(|c| CameraJson {
                    fx: c.fx,
                    fy: c.fy,
                    cx: c.cx,
                    cy: c.cy,
                    rotation: [
                        c.rotation[0][0], c.rotation[0][1], c.rotation[0][2],
                        c.rotation[1][0], c.rotation[1][1], c.rotation[1][2],
                        c.rotation[2][0], c.rotation[2][1], c.rotation[2][2],
                    ],
                    translation: c.translation,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let json: RigJson = serde_json::from_str(s)?;
        let cameras = json
            .cameras
            .into_iter()
            .map(|c| {
                let r = c.rotation;
                CameraModel::new(
                    c.fx,
                    c.fy,
                    c.cx,
                    c.cy,
                    [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
                    c.translation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cameras)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonorthonormal_rotation() {
        let mut r = IDENTITY;
        r[0][0] = 1.1;
        assert!(CameraModel::new(100.0, 100.0, 32.0, 32.0, r, [0.0; 3]).is_err());
    }

    #[test]
    fn project_unproject_round_trip() {
        let cam = CameraModel::axis_aligned(120.0, 110.0, 31.5, 30.0, [0.0; 3]);
        let p = cam.unproject(10.0, 20.0, 2.5);
        let (x, y) = cam.project(p);
        assert!((x - 10.0).abs() < 1e-12 && (y - 20.0).abs() < 1e-12);
    }

    #[test]
    fn rig_json_round_trip_preserves_orthonormality() {
        let rig = Rig::plus_shaped(100.0, 100.0, 32.0, 32.0, 0.02).unwrap();
        let s = rig.to_json_string().unwrap();
        let back = Rig::from_json_str(&s).unwrap();
        assert_eq!(rig, back);
        assert_eq!(back.cameras().len(), 5);
    }

    #[test]
    fn rig_requires_five_cameras() {
        assert!(Rig::new(vec![CameraModel::axis_aligned(1.0, 1.0, 0.0, 0.0, [0.0; 3])]).is_err());
    }

    #[test]
    fn downscaled_keeps_pixel_centers_aligned() {
        let cam = CameraModel::axis_aligned(100.0, 100.0, 31.5, 31.5, [0.0; 3]);
        let half = cam.downscaled(2);
        // Fine pixel x=1 center maps to coarse coordinate (1 - 0.5)/2 = 0.25.
        let p = cam.unproject(1.0, 1.0, 2.0);
        let (x, y) = half.project(p);
        assert!((x - 0.25).abs() < 1e-12 && (y - 0.25).abs() < 1e-12);
    }
}
