//! Fisheye camera intrinsics plus the world→camera rigid transform.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Point3;

const ROTATION_TOL: f64 = 1e-9;

/// World→camera rigid transform: `p_cam = R · p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsic {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsic {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::InvalidConfig(format!(
                "extrinsic rotation is not in SO(3) (orthogonality error {ortho:e}, det {det})"
            )));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite extrinsic translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform(&self, p: &Point3) -> Point3 {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Left-composes a small camera-frame motion: `R' = exp(ω)·R`,
    /// `t' = exp(ω)·t + δ`.
    pub fn perturbed(&self, rotation_vector: &Vector3<f64>, translation: &Vector3<f64>) -> Self {
        let dr = Rotation3::from_scaled_axis(*rotation_vector).into_inner();
        Self {
            rotation: dr * self.rotation,
            translation: dr * self.translation + translation,
        }
    }

    /// Exact inverse of [`Extrinsic::perturbed`] with the same arguments.
    pub fn unperturbed(&self, rotation_vector: &Vector3<f64>, translation: &Vector3<f64>) -> Self {
        let dr_inv = Rotation3::from_scaled_axis(*rotation_vector).into_inner().transpose();
        Self {
            rotation: dr_inv * self.rotation,
            translation: dr_inv * (self.translation - translation),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtrinsicRepr {
    /// Row-major 3×3 rotation.
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl Serialize for Extrinsic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.rotation;
        ExtrinsicRepr {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Extrinsic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ExtrinsicRepr::deserialize(d)?;
        let rotation = Matrix3::from_row_slice(&repr.rotation);
        Extrinsic::new(rotation, Vector3::from(repr.translation)).map_err(serde::de::Error::custom)
    }
}

/// Unified (fisheye) camera: intrinsics, ξ, two radial coefficients and the
/// world→camera extrinsic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr", into = "CameraRepr")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub xi: f64,
    pub k1: f64,
    pub k2: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsic: Extrinsic,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    xi: f64,
    k1: f64,
    k2: f64,
    width: u32,
    height: u32,
    extrinsic: Extrinsic,
}

impl TryFrom<CameraRepr> for CameraModel {
    type Error = Error;

    fn try_from(r: CameraRepr) -> Result<Self> {
        CameraModel {
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            xi: r.xi,
            k1: r.k1,
            k2: r.k2,
            width: r.width,
            height: r.height,
            extrinsic: r.extrinsic,
        }
        .validated()
    }
}

impl From<CameraModel> for CameraRepr {
    fn from(c: CameraModel) -> Self {
        CameraRepr {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            xi: c.xi,
            k1: c.k1,
            k2: c.k2,
            width: c.width,
            height: c.height,
            extrinsic: c.extrinsic,
        }
    }
}

impl CameraModel {
    /// Intrinsics-only camera with an identity extrinsic and no distortion.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            xi: 0.0,
            k1: 0.0,
            k2: 0.0,
            width,
            height,
            extrinsic: Extrinsic::identity(),
        }
    }

    pub fn with_unified(mut self, xi: f64, k1: f64, k2: f64) -> Self {
        self.xi = xi;
        self.k1 = k1;
        self.k2 = k2;
        self
    }

    pub fn with_extrinsic(mut self, extrinsic: Extrinsic) -> Self {
        self.extrinsic = extrinsic;
        self
    }

    pub fn validated(self) -> Result<Self> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.xi, self.k1, self.k2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("non-finite camera parameter".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.xi < 0.0 {
            return Err(Error::InvalidConfig(format!("xi must be >= 0, got {}", self.xi)));
        }
        // re-run the SO(3) check in case the extrinsic was assembled by hand
        Extrinsic::new(self.extrinsic.rotation, self.extrinsic.translation)?;
        Ok(self)
    }

    pub fn world_to_camera(&self, p: &Point3) -> Point3 {
        self.extrinsic.transform(p)
    }

    pub fn camera_to_world(&self, p: &Point3) -> Point3 {
        self.extrinsic.inverse_transform(p)
    }

    /// Rotates a world-frame direction (velocity, acceleration) into the camera frame.
    pub fn rotate_to_camera(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsic.rotation * v
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}
