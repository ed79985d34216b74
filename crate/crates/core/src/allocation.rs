//! Turns a commanded acceleration into thrust, desired attitude and body rate
//! while keeping the target out of the camera dead-zone cones around `±z_B`.
//!
//! The dead-zone constraint is `−cos φ ≤ bᵀz_B ≤ cos φ`. Yaw is chosen so the
//! body x-axis lies in the vertical plane containing the bearing, and the
//! thrust axis is tilted about the resulting y-axis when it would otherwise put
//! the target inside a cone.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{VehicleParams, E3};
use crate::so3::{project_orthogonal, rodrigues, unskew_unchecked, Rotation3, UnitVector3};

const THRUST_DEGENERATE: f64 = 1e-9;
/// `|z* × b|` below `sin(1e-6 rad)` leaves the yaw undefined.
const YAW_DEGENERATE: f64 = 1e-6;
const ORTHOGONALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AllocationError {
    #[error("commanded acceleration equals gravity; thrust direction undefined")]
    DegenerateThrust,
    #[error("bearing is aligned with the thrust axis; yaw undefined")]
    DegenerateYaw,
    #[error("desired y and z axes are not orthogonal (|y·z| = {0:e})")]
    NonOrthogonal(f64),
}

/// Dead-zone cone half-angle `φ`, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityConfig {
    pub varphi: f64,
}

impl VisibilityConfig {
    pub fn is_valid(&self) -> bool {
        (0.0..std::f64::consts::FRAC_PI_2).contains(&self.varphi)
    }

    /// Visibility slack `cos φ − |bᵀz|`; negative inside a dead-zone cone.
    pub fn margin(&self, b: &Vector3<f64>, z_body: &Vector3<f64>) -> f64 {
        self.varphi.cos() - b.dot(z_body).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    pub r_des: Rotation3,
    /// N, clamped to `[0, T_max]`.
    pub thrust: f64,
    /// rad/s, body frame.
    pub omega: Vector3<f64>,
    /// Magnitude of the visibility tilt, rad.
    pub psi: f64,
}

/// Thrust direction demanded by `u`: `z* = −(u − g e3) / |u − g e3|`.
pub fn desired_z_star(u: &Vector3<f64>, g: f64) -> Result<UnitVector3, AllocationError> {
    let f = u - E3 * g;
    let n = f.norm();
    if !(n > THRUST_DEGENERATE) {
        return Err(AllocationError::DegenerateThrust);
    }
    Ok(UnitVector3::new_unchecked(-f / n))
}

/// `y = (z* × b) / |z* × b|`.
pub fn desired_y(z_star: &UnitVector3, b: &UnitVector3) -> Result<UnitVector3, AllocationError> {
    let c = z_star.cross(b);
    let n = c.norm();
    if !(n > YAW_DEGENERATE) {
        return Err(AllocationError::DegenerateYaw);
    }
    Ok(UnitVector3::new_unchecked(c / n))
}

/// Keeps the last valid desired y-axis to bridge yaw singularities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct YawReference {
    previous: Option<UnitVector3>,
}

impl YawReference {
    pub fn new() -> Self {
        Self::default()
    }

    /// [`desired_y`], falling back to the previous y (or body-y, then body-x)
    /// projected off `z*` when the bearing is aligned with the thrust axis.
    pub fn resolve(&mut self, z_star: &UnitVector3, b: &UnitVector3) -> UnitVector3 {
        let y = desired_y(z_star, b).unwrap_or_else(|_| {
            let candidates = self
                .previous
                .iter()
                .map(|p| p.into_inner())
                .chain([Vector3::y(), Vector3::x()]);
            candidates
                .map(|c| project_orthogonal(z_star, &c))
                .find(|c| c.norm() > 1e-3)
                .map(|c| UnitVector3::new_unchecked(c.normalize()))
                .expect("e1 and e2 cannot both be parallel to a unit vector")
        });
        self.previous = Some(y);
        y
    }
}

/// Tilts `z*` about `y_des` just enough to satisfy the visibility band.
/// Returns the tilt magnitude `ψ ≥ 0` and the corrected axis; `ψ = 0` and
/// `z_des = z*` whenever `z*` already satisfies the band.
pub fn visibility_correction(
    z_star: &UnitVector3,
    b: &UnitVector3,
    y_des: &UnitVector3,
    cfg: &VisibilityConfig,
) -> (f64, UnitVector3) {
    let cos_phi = cfg.varphi.cos();
    let c = b.dot(z_star);
    if c.abs() <= cos_phi {
        return (0.0, *z_star);
    }
    // Rotating about y only moves z* inside the plane orthogonal to y, so work
    // with the bearing's in-plane part. |b_p·z*| ≥ |b·z*| keeps the branch.
    let b_p = project_orthogonal(y_des, b);
    let b_p = if b_p.norm() > 1e-12 {
        b_p.normalize()
    } else {
        z_star.into_inner()
    };
    let c_p = b_p.dot(z_star).clamp(-1.0, 1.0);

    // A positive rotation about y moves z* towards y × z*.
    let towards = y_des.cross(z_star);
    let side = if b_p.dot(&towards) < 0.0 { -1.0 } else { 1.0 };

    let (psi, signed) = if c_p >= 0.0 {
        // Target inside the cone around +z*: tilt away from it.
        let psi = (cfg.varphi - c_p.acos()).max(0.0);
        (psi, -side * psi)
    } else {
        // Target inside the cone around −z*: tilt z* towards it.
        let psi = (cfg.varphi - (-c_p).acos()).max(0.0);
        (psi, side * psi)
    };
    let z_des = rodrigues(signed, y_des).rotate(z_star);
    (
        psi,
        UnitVector3::new_normalize(z_des).expect("rotation preserves norm"),
    )
}

/// `R_des = [y × z, y, z]`.
pub fn build_attitude(
    z_des: &UnitVector3,
    y_des: &UnitVector3,
) -> Result<Rotation3, AllocationError> {
    let dot = y_des.dot(z_des);
    if dot.abs() > ORTHOGONALITY_TOL {
        return Err(AllocationError::NonOrthogonal(dot.abs()));
    }
    let z = z_des.into_inner();
    let y = project_orthogonal(z_des, y_des).normalize();
    let x = y.cross(&z);
    Ok(Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[
        x, y, z,
    ])))
}

/// `T = −z_Bᵀ m (u − g e3)`, clamped to `[0, T_max]`.
pub fn thrust_from_accel(u: &Vector3<f64>, z_body: &UnitVector3, params: &VehicleParams) -> f64 {
    let force = (u - E3 * params.gravity) * params.mass;
    params.clamp_thrust(-z_body.dot(&force))
}

/// Attitude error `e_R = ½ (R_desᵀR − RᵀR_des)^∨`.
pub fn attitude_error(r: &Rotation3, r_des: &Rotation3) -> Vector3<f64> {
    let a = r_des.matrix().tr_mul(r.matrix());
    unskew_unchecked(&(a - a.transpose())) * 0.5
}

/// `ω = −K_R e_R`.
pub fn attitude_rate_command(r: &Rotation3, r_des: &Rotation3, k_r: &Matrix3<f64>) -> Vector3<f64> {
    -(k_r * attitude_error(r, r_des))
}

/// Full allocation step for a commanded acceleration `u` and inertial bearing
/// `b`, given the current attitude.
pub fn allocate(
    u: &Vector3<f64>,
    b: &UnitVector3,
    attitude: &Rotation3,
    params: &VehicleParams,
    visibility: &VisibilityConfig,
    k_att: &Matrix3<f64>,
    yaw: &mut YawReference,
) -> AttitudeCommand {
    let z_body = attitude.z_axis();
    let z_star = desired_z_star(u, params.gravity).unwrap_or(z_body);
    let y_des = yaw.resolve(&z_star, b);
    let (psi, z_des) = visibility_correction(&z_star, b, &y_des, visibility);
    let r_des = build_attitude(&z_des, &y_des).expect("rotation about y keeps y orthogonal to z");
    AttitudeCommand {
        r_des,
        thrust: thrust_from_accel(u, &z_body, params),
        omega: attitude_rate_command(attitude, &r_des, k_att),
        psi,
    }
}
