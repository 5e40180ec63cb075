//! Pinhole camera model and rigid camera-to-world poses.
//!
//! Pixel coordinates are `(u, v) = (column, row)` with the origin at the top
//! left and integer coordinates at pixel centers. Camera space is x right,
//! y down, z forward.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Squared Euclidean distance. Every nearest-neighbor comparison in the crate
/// goes through this function so that independent searches agree bit for bit.
#[inline]
pub fn dist2(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Pinhole intrinsics together with the image size they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy)
    }

    /// Camera-space point on the ray through pixel `(u, v)` at depth `z`.
    #[inline]
    pub fn unproject(&self, u: u32, v: u32, z: f64) -> Vec3 {
        [
            (u as f64 - self.cx) / self.fx * z,
            (v as f64 - self.cy) / self.fy * z,
            z,
        ]
    }

    /// Continuous image coordinates of a camera-space point, `None` behind the camera.
    #[inline]
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        if p[2] <= 0.0 {
            return None;
        }
        Some((self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy))
    }

    /// Pixel hit by a camera-space point (nearest pixel center), if inside the image.
    pub fn project_to_pixel(&self, p: Vec3) -> Option<(u32, u32)> {
        let (u, v) = self.project(p)?;
        let (ui, vi) = ((u + 0.5).floor(), (v + 0.5).floor());
        if ui < 0.0 || vi < 0.0 || ui >= self.width as f64 || vi >= self.height as f64 {
            return None;
        }
        Some((ui as u32, vi as u32))
    }
}

/// Rigid camera-to-world transform: `world = rotation * camera + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Reads a 4x4 row-major homogeneous matrix. Returns `None` when the
    /// bottom row is not `[0, 0, 0, 1]`.
    pub fn from_row_major(m: &[f64; 16]) -> Option<Self> {
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return None;
        }
        Some(Self {
            rotation: [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            translation: [m[3], m[7], m[11]],
        })
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], //
            r[1][0], r[1][1], r[1][2], t[1], //
            r[2][0], r[2][1], r[2][2], t[2], //
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Largest deviation of `R Rᵀ` from identity, or infinity for reflections.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(r[i], r[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        if dot(cross(r[0], r[1]), r[2]) <= 0.0 {
            return f64::INFINITY;
        }
        worst
    }

    #[inline]
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// World point expressed in camera coordinates (`Rᵀ (w - t)`).
    #[inline]
    pub fn inverse_transform_point(&self, w: Vec3) -> Vec3 {
        let r = &self.rotation;
        let d = sub(w, self.translation);
        [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ]
    }

    /// Camera at `eye` looking at `target`. `up` is the world up direction;
    /// camera y points opposite to it in the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let z = normalize(sub(target, eye));
        let x = normalize(cross(z, up));
        let y = cross(z, x);
        // Columns of the rotation are the camera axes in world coordinates.
        Self {
            rotation: [[x[0], y[0], z[0]], [x[1], y[1], z[1]], [x[2], y[2], z[2]]],
            translation: eye,
        }
    }
}
