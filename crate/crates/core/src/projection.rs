//! Unified fisheye projection and its first-order kinematics.
//!
//! The chain is: `m = p_xy / (z + ξ‖p‖)`, `δ = 1 + k1 r² + k2 r⁴` with
//! `r² = ‖m‖²`, `u = f ⊙ (m δ) + c`. Image velocity is `J·V`; image
//! acceleration is `J·α + J̇·V`, with `J̇` taken by a central difference
//! of the analytic Jacobian along the velocity.

use nalgebra::{Matrix2, Matrix2x3, RowVector3, Vector2, Vector3};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::types::{ImageMotionState2, KinematicState3, Point3};

/// Smallest admissible `z + ξ‖p‖`.
pub const PROJECTION_EPS: f64 = 1e-9;

/// Time step (s) of the central difference used for `J̇`.
pub const JDOT_STEP: f64 = 1e-5;

/// `∂(u, v)/∂(x, y, z)` in pixels per meter.
pub type Jacobian2x3 = Matrix2x3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    /// False when the pixel falls outside `[0, width) × [0, height)`.
    pub in_image: bool,
}

fn denominator(camera: &CameraModel, p: &Point3) -> Result<(f64, f64)> {
    let rho = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
    let denom = p.z + camera.xi * rho;
    if !(denom > PROJECTION_EPS) {
        return Err(Error::BehindCamera { denominator: denom });
    }
    Ok((denom, rho))
}

/// Projects a camera-frame point to pixel coordinates.
pub fn project(camera: &CameraModel, p: &Point3) -> Result<Projection> {
    let (denom, _) = denominator(camera, p)?;
    let xp = p.x / denom;
    let yp = p.y / denom;
    let r2 = xp * xp + yp * yp;
    let delta = 1.0 + camera.k1 * r2 + camera.k2 * r2 * r2;
    let u = camera.fx * (xp * delta) + camera.cx;
    let v = camera.fy * (yp * delta) + camera.cy;
    Ok(Projection {
        pixel: Vector2::new(u, v),
        in_image: camera.in_image(u, v),
    })
}

/// World-frame convenience wrapper around [`project`].
pub fn project_world(camera: &CameraModel, p_world: &Point3) -> Result<Projection> {
    project(camera, &camera.world_to_camera(p_world))
}

/// Analytic Jacobian of [`project`] with respect to the camera-frame point.
pub fn projection_jacobian(camera: &CameraModel, p: &Point3) -> Result<Jacobian2x3> {
    let (denom, rho) = denominator(camera, p)?;
    let xi = camera.xi;

    // ∂d/∂p; rho > 0 whenever the denominator is positive
    let grad_d = RowVector3::new(xi * p.x / rho, xi * p.y / rho, 1.0 + xi * p.z / rho);
    let inv_d = 1.0 / denom;
    let xp = p.x * inv_d;
    let yp = p.y * inv_d;

    // ∂m/∂p = (e_i − m_i ∇d) / d
    let dm_dp = Matrix2x3::from_rows(&[
        (RowVector3::new(1.0, 0.0, 0.0) - grad_d * xp) * inv_d,
        (RowVector3::new(0.0, 1.0, 0.0) - grad_d * yp) * inv_d,
    ]);

    let r2 = xp * xp + yp * yp;
    let delta = 1.0 + camera.k1 * r2 + camera.k2 * r2 * r2;
    let ddelta_dr2 = camera.k1 + 2.0 * camera.k2 * r2;
    let m = Vector2::new(xp, yp);
    // ∂(m δ)/∂m = δ I + m (∂δ/∂m)ᵀ, ∂δ/∂m = 2 δ'(r²) m
    let dmt_dm = Matrix2::identity() * delta + m * (m.transpose() * (2.0 * ddelta_dr2));
    let focal = Matrix2::new(camera.fx, 0.0, 0.0, camera.fy);

    Ok(focal * dmt_dm * dm_dp)
}

/// `dJ/dt` along `velocity`, by central difference of the analytic Jacobian.
pub fn jacobian_time_derivative(camera: &CameraModel, p: &Point3, velocity: &Vector3<f64>) -> Result<Jacobian2x3> {
    jacobian_time_derivative_with_step(camera, p, velocity, JDOT_STEP)
}

pub fn jacobian_time_derivative_with_step(
    camera: &CameraModel,
    p: &Point3,
    velocity: &Vector3<f64>,
    h: f64,
) -> Result<Jacobian2x3> {
    let ahead = projection_jacobian(camera, &(p + velocity * h))?;
    let behind = projection_jacobian(camera, &(p - velocity * h))?;
    Ok((ahead - behind) / (2.0 * h))
}

/// Propagates a world-frame kinematic state to its image motion state.
pub fn project_state(camera: &CameraModel, state: &KinematicState3) -> Result<ImageMotionState2> {
    let p = camera.world_to_camera(&state.position);
    let v = camera.rotate_to_camera(&state.velocity);
    let a = camera.rotate_to_camera(&state.acceleration);

    let pixel = project(camera, &p)?.pixel;
    let j = projection_jacobian(camera, &p)?;
    let j_dot = jacobian_time_derivative(camera, &p, &v)?;
    Ok(ImageMotionState2::new(pixel, j * v, j * a + j_dot * v))
}
