//! Adaptive backstepping servo law in bearing-angle coordinates.
//!
//! State is the inertial bearing `b ∈ S²`, the scale `x = sin θ ∈ [0, 1)` and
//! the scaled relative velocity `w = (v_T − v_B) / r`, whose dynamics are
//!
//! ```text
//! ḃ = x Π_b w,   ẋ = −x² bᵀw,   ẇ = (a_T − u) / r
//! ```
//!
//! Errors are `δ1 = b − b*`, `δ2 = x − x*`, `δ3 = w − w_d` with the desired
//! scaled velocity
//!
//! ```text
//! w_d = (k1 / x) Π_b b* + (k2 / x²) δ2 b
//! ```
//!
//! and the control/adaptation laws
//!
//! ```text
//! u0 = ρ̂ − ẇ_d − x Π_b b* − x² δ2 b + K3 δ3,   u = r̂ u0
//! ṙ̂ = k_r δ3ᵀ u0,   ρ̂̇ = K_ρ δ3
//! ```
//!
//! `r̂` and `ρ̂` are adaptation states, not estimates that converge to the true
//! radius or scaled target acceleration.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::so3::{project_orthogonal, projector, UnitVector3};

/// `w_d` is evaluated at `max(x, X_MIN)`.
pub const X_MIN: f64 = 1e-3;
/// Floor applied to the radius adaptation state after each update.
pub const R_HAT_MIN: f64 = 1e-3;
const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("x = {0} is below the minimum {X_MIN}")]
    SingularX(f64),
    #[error("gain matrix K_rho is not invertible")]
    SingularGain,
    #[error("invalid gain {name}: {reason}")]
    InvalidGain { name: &'static str, reason: String },
    #[error("invalid reference: {0}")]
    InvalidReference(String),
}

/// Constant bearing/size set-point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSpec {
    pub b_star: UnitVector3,
    pub theta_star: f64,
    pub x_star: f64,
}

impl ReferenceSpec {
    /// Normalizes `b_star`; `x* = sin θ*`.
    pub fn new(b_star: Vector3<f64>, theta_star: f64) -> Result<Self, ControllerError> {
        let b_star = UnitVector3::new_normalize(b_star)
            .map_err(|e| ControllerError::InvalidReference(e.to_string()))?;
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta_star) {
            return Err(ControllerError::InvalidReference(format!(
                "theta_star = {theta_star} outside [0, pi/2)"
            )));
        }
        Ok(Self {
            b_star,
            theta_star,
            x_star: theta_star.sin(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: Matrix3<f64>,
    pub k_r: f64,
    pub k_rho: Matrix3<f64>,
    pub include_wd_dot: bool,
}

impl GainConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        for (name, value) in [("k1", self.k1), ("k2", self.k2), ("k_r", self.k_r)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ControllerError::InvalidGain {
                    name,
                    reason: format!("must be positive, got {value}"),
                });
            }
        }
        check_psd("K3", &self.k3)?;
        check_psd("K_rho", &self.k_rho)
    }
}

/// Symmetric positive semi-definite check used for all gain matrices.
pub fn check_psd(name: &'static str, m: &Matrix3<f64>) -> Result<(), ControllerError> {
    if m.iter().any(|c| !c.is_finite()) {
        return Err(ControllerError::InvalidGain {
            name,
            reason: "non-finite entry".into(),
        });
    }
    let asym = (m - m.transpose()).amax();
    if asym > PSD_TOL * (1.0 + m.amax()) {
        return Err(ControllerError::InvalidGain {
            name,
            reason: "not symmetric".into(),
        });
    }
    let min_eig = m.symmetric_eigenvalues().min();
    if min_eig < -PSD_TOL * (1.0 + m.amax()) {
        return Err(ControllerError::InvalidGain {
            name,
            reason: format!("not positive semi-definite (min eigenvalue {min_eig})"),
        });
    }
    Ok(())
}

/// Adaptation states carried between control steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerMemory {
    pub r_hat: f64,
    pub rho_hat: Vector3<f64>,
    pub previous_w_d: Option<Vector3<f64>>,
}

impl ControllerMemory {
    pub fn new(r_hat: f64, rho_hat: Vector3<f64>) -> Self {
        Self {
            r_hat: r_hat.max(R_HAT_MIN),
            rho_hat,
            previous_w_d: None,
        }
    }

    pub fn remember_w_d(&mut self, w_d: Vector3<f64>) {
        self.previous_w_d = Some(w_d);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTriple {
    /// `b − b*`
    pub delta1: Vector3<f64>,
    /// `x − x*`
    pub delta2: f64,
    /// `w − w_d`
    pub delta3: Vector3<f64>,
}

pub fn compute_errors(
    b: &UnitVector3,
    x: f64,
    w: &Vector3<f64>,
    reference: &ReferenceSpec,
    w_d: &Vector3<f64>,
) -> ErrorTriple {
    ErrorTriple {
        delta1: b.into_inner() - reference.b_star.into_inner(),
        delta2: x - reference.x_star,
        delta3: w - w_d,
    }
}

/// Desired scaled velocity. Fails for `x < X_MIN`.
pub fn desired_velocity(
    b: &UnitVector3,
    x: f64,
    delta2: f64,
    reference: &ReferenceSpec,
    gains: &GainConfig,
) -> Result<Vector3<f64>, ControllerError> {
    if !(x >= X_MIN) {
        return Err(ControllerError::SingularX(x));
    }
    Ok(desired_velocity_unchecked(b, x, delta2, reference, gains))
}

/// Same as [`desired_velocity`] but saturates `x` at [`X_MIN`].
pub fn desired_velocity_saturated(
    b: &UnitVector3,
    x: f64,
    delta2: f64,
    reference: &ReferenceSpec,
    gains: &GainConfig,
) -> Vector3<f64> {
    desired_velocity_unchecked(b, x.max(X_MIN), delta2, reference, gains)
}

fn desired_velocity_unchecked(
    b: &UnitVector3,
    x: f64,
    delta2: f64,
    reference: &ReferenceSpec,
    gains: &GainConfig,
) -> Vector3<f64> {
    project_orthogonal(b, &reference.b_star) * (gains.k1 / x)
        + b.into_inner() * (gains.k2 / (x * x) * delta2)
}

/// Time derivative of `w_d` along the transformed dynamics, given the true
/// scaled velocity `w`. Differentiates the expression in
/// [`desired_velocity`] using `ḃ = x Π_b w` and `ẋ = −x² bᵀw`.
pub fn desired_velocity_rate(
    b: &UnitVector3,
    x: f64,
    w: &Vector3<f64>,
    reference: &ReferenceSpec,
    gains: &GainConfig,
) -> Vector3<f64> {
    let bv = b.into_inner();
    let bs = reference.b_star.into_inner();
    let delta2 = x - reference.x_star;
    let b_dot = project_orthogonal(b, w) * x;
    let x_dot = -x * x * bv.dot(w);
    let proj_bs = project_orthogonal(b, &bs);
    let proj_bs_dot = -(b_dot * bv.dot(&bs) + bv * b_dot.dot(&bs));
    let radial = gains.k2 * delta2 / (x * x);
    let radial_dot = gains.k2 * x_dot * (1.0 / (x * x) - 2.0 * delta2 / (x * x * x));
    proj_bs * (-gains.k1 * x_dot / (x * x))
        + proj_bs_dot * (gains.k1 / x)
        + bv * radial_dot
        + b_dot * radial
}

/// Backward difference of `w_d`; zero when no previous value is stored.
pub fn wd_dot_estimate(mem: &ControllerMemory, w_d_now: &Vector3<f64>, dt: f64) -> Vector3<f64> {
    match mem.previous_w_d {
        Some(prev) => (w_d_now - prev) / dt,
        None => Vector3::zeros(),
    }
}

/// Feed-forward term actually handed to the control law: the estimate when
/// `include_wd_dot` is set, zero otherwise.
pub fn wd_dot_feedforward(
    mem: &ControllerMemory,
    w_d_now: &Vector3<f64>,
    gains: &GainConfig,
    dt: f64,
) -> Vector3<f64> {
    if gains.include_wd_dot {
        wd_dot_estimate(mem, w_d_now, dt)
    } else {
        Vector3::zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Virtual input, 1/s².
    pub u0: Vector3<f64>,
    /// Commanded vehicle acceleration `r̂ u0`, m/s².
    pub u: Vector3<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn control_law(
    err: &ErrorTriple,
    b: &UnitVector3,
    x: f64,
    reference: &ReferenceSpec,
    mem: &ControllerMemory,
    gains: &GainConfig,
    wd_dot: &Vector3<f64>,
) -> ControlOutput {
    let u0 = mem.rho_hat
        - wd_dot
        - project_orthogonal(b, &reference.b_star) * x
        - b.into_inner() * (x * x * err.delta2)
        + gains.k3 * err.delta3;
    ControlOutput {
        u0,
        u: u0 * mem.r_hat,
    }
}

/// Forward-Euler step of the adaptation laws. `r̂` is floored at [`R_HAT_MIN`].
pub fn update_observers(
    mem: &ControllerMemory,
    err: &ErrorTriple,
    u0: &Vector3<f64>,
    gains: &GainConfig,
    dt: f64,
) -> ControllerMemory {
    ControllerMemory {
        r_hat: (mem.r_hat + dt * gains.k_r * err.delta3.dot(u0)).max(R_HAT_MIN),
        rho_hat: mem.rho_hat + gains.k_rho * err.delta3 * dt,
        previous_w_d: mem.previous_w_d,
    }
}

/// Simulation-only quantities needed by the full Lyapunov function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub r_true: f64,
    pub target_acceleration: Vector3<f64>,
}

impl GroundTruth {
    /// `ρ = a_T / r`.
    pub fn rho(&self) -> Vector3<f64> {
        self.target_acceleration / self.r_true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovValues {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    /// `k1 δ1ᵀ Π_b δ1 + k2 δ2²`
    pub w: f64,
}

pub fn lyapunov_diagnostics(
    err: &ErrorTriple,
    b: &UnitVector3,
    mem: &ControllerMemory,
    truth: &GroundTruth,
    gains: &GainConfig,
) -> Result<LyapunovValues, ControllerError> {
    let k_rho_inv = gains
        .k_rho
        .try_inverse()
        .ok_or(ControllerError::SingularGain)?;
    let v1 = 0.5 * err.delta1.norm_squared() + 0.5 * err.delta2 * err.delta2;
    let v2 = v1 + 0.5 * err.delta3.norm_squared();
    let r_tilde = truth.r_true - mem.r_hat;
    let rho_tilde = truth.rho() - mem.rho_hat;
    let v3 = v2
        + r_tilde * r_tilde / (2.0 * gains.k_r * truth.r_true)
        + 0.5 * rho_tilde.dot(&(k_rho_inv * rho_tilde));
    let w = gains.k1 * err.delta1.dot(&(projector(b) * err.delta1))
        + gains.k2 * err.delta2 * err.delta2;
    Ok(LyapunovValues { v1, v2, v3, w })
}

/// Closed-loop rate of the full Lyapunov function predicted by the design:
/// `−k1 δ1ᵀΠ_bδ1 − k2 δ2² − δ3ᵀK3δ3`.
pub fn predicted_v3_rate(err: &ErrorTriple, b: &UnitVector3, gains: &GainConfig) -> f64 {
    -gains.k1 * err.delta1.dot(&(projector(b) * err.delta1))
        - gains.k2 * err.delta2 * err.delta2
        - err.delta3.dot(&(gains.k3 * err.delta3))
}

/// Right-hand side of the transformed dynamics `(ḃ, ẋ, ẇ)`.
pub fn transformed_dynamics(
    b: &UnitVector3,
    x: f64,
    w: &Vector3<f64>,
    rho: &Vector3<f64>,
    u_over_r: &Vector3<f64>,
) -> (Vector3<f64>, f64, Vector3<f64>) {
    (
        project_orthogonal(b, w) * x,
        -x * x * b.dot(w),
        rho - u_over_r,
    )
}

/// `θ̇ = −(sin² θ / cos θ) bᵀw`.
pub fn theta_rate(b: &UnitVector3, theta: f64, w: &Vector3<f64>) -> f64 {
    let (s, c) = theta.sin_cos();
    -(s * s / c) * b.dot(w)
}
