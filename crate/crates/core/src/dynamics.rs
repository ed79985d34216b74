//! Ground-truth motion of the multirotor and the target.
//!
//! Inertial frame is z-down: gravity acts along `+e3`, so a vehicle flying
//! above the ground has a negative z coordinate.
//!
//! ```text
//! vehicle:  ṗ = v,  v̇ = g e3 − (T/m) R e3,  Ṙ = R S(ω)
//! target:   ṗ = v,  v̇ = a,                  ȧ = 0
//! ```
//!
//! Both bodies are advanced together with a classical fixed-step RK4 scheme.
//! Inputs are held constant over a step.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::so3::{renormalize, skew, Rotation3};

pub const E3: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DynamicsError {
    #[error("state became non-finite during integration")]
    NonFiniteState,
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// m/s²
    pub gravity: f64,
    /// N
    pub max_thrust: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: 9.8,
            max_thrust: 34.0,
        }
    }
}

impl VehicleParams {
    pub fn is_valid(&self) -> bool {
        self.mass > 0.0
            && self.gravity > 0.0
            && self.max_thrust > 0.0
            && self.mass.is_finite()
            && self.gravity.is_finite()
            && self.max_thrust.is_finite()
    }

    pub fn clamp_thrust(&self, thrust: f64) -> f64 {
        thrust.clamp(0.0, self.max_thrust)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Body-to-inertial rotation.
    pub attitude: Rotation3,
}

impl RigidBodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Rotation3::identity(),
        }
    }

    fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.velocity.iter().all(|c| c.is_finite())
            && self.attitude.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl TargetState {
    /// Closed-form position after `t` seconds of constant acceleration.
    pub fn position_at(&self, t: f64) -> Vector3<f64> {
        self.position + self.velocity * t + self.acceleration * (0.5 * t * t)
    }

    fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite()) && self.velocity.iter().all(|c| c.is_finite())
    }
}

/// Total thrust and body angular velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuationInput {
    /// N
    pub thrust: f64,
    /// rad/s, body frame
    pub omega: Vector3<f64>,
}

impl ActuationInput {
    pub fn clamped(&self, params: &VehicleParams) -> Self {
        Self {
            thrust: params.clamp_thrust(self.thrust),
            omega: self.omega,
        }
    }
}

/// How the translational acceleration of the vehicle is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VehicleDrive {
    /// Physical multirotor: thrust along `−R e3` plus gravity.
    Thrust(ActuationInput),
    /// Point-mass idealization: the commanded acceleration is applied exactly.
    /// The attitude still follows `omega` so logs stay comparable.
    Acceleration {
        acceleration: Vector3<f64>,
        omega: Vector3<f64>,
    },
}

impl VehicleDrive {
    fn omega(&self) -> Vector3<f64> {
        match self {
            VehicleDrive::Thrust(a) => a.omega,
            VehicleDrive::Acceleration { omega, .. } => *omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleDerivative {
    pub position_rate: Vector3<f64>,
    pub velocity_rate: Vector3<f64>,
    pub attitude_rate: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDerivative {
    pub position_rate: Vector3<f64>,
    pub velocity_rate: Vector3<f64>,
    pub acceleration_rate: Vector3<f64>,
}

pub fn vehicle_derivative(
    state: &RigidBodyState,
    input: &ActuationInput,
    params: &VehicleParams,
) -> VehicleDerivative {
    derivative_raw(
        &state.velocity,
        state.attitude.matrix(),
        &VehicleDrive::Thrust(*input),
        params,
    )
}

pub fn target_derivative(target: &TargetState) -> TargetDerivative {
    TargetDerivative {
        position_rate: target.velocity,
        velocity_rate: target.acceleration,
        acceleration_rate: Vector3::zeros(),
    }
}

fn derivative_raw(
    velocity: &Vector3<f64>,
    attitude: &Matrix3<f64>,
    drive: &VehicleDrive,
    params: &VehicleParams,
) -> VehicleDerivative {
    let velocity_rate = match drive {
        VehicleDrive::Thrust(input) => {
            E3 * params.gravity - attitude.column(2) * (input.thrust / params.mass)
        }
        VehicleDrive::Acceleration { acceleration, .. } => *acceleration,
    };
    VehicleDerivative {
        position_rate: *velocity,
        velocity_rate,
        attitude_rate: attitude * skew(&drive.omega()),
    }
}

/// Vehicle and target together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct World {
    pub vehicle: RigidBodyState,
    pub target: TargetState,
}

/// One RK4 step with thrust clamped to `[0, T_max]` beforehand.
pub fn step(
    world: &World,
    input: &ActuationInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<World, DynamicsError> {
    step_drive(world, &VehicleDrive::Thrust(*input), params, dt)
}

pub fn step_drive(
    world: &World,
    drive: &VehicleDrive,
    params: &VehicleParams,
    dt: f64,
) -> Result<World, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let drive = match drive {
        VehicleDrive::Thrust(input) => VehicleDrive::Thrust(input.clamped(params)),
        other => *other,
    };

    let v0 = &world.vehicle;
    let (p, v, r) = (v0.position, v0.velocity, *v0.attitude.matrix());
    let k1 = derivative_raw(&v, &r, &drive, params);
    let k2 = derivative_raw(
        &(v + k1.velocity_rate * (0.5 * dt)),
        &(r + k1.attitude_rate * (0.5 * dt)),
        &drive,
        params,
    );
    let k3 = derivative_raw(
        &(v + k2.velocity_rate * (0.5 * dt)),
        &(r + k2.attitude_rate * (0.5 * dt)),
        &drive,
        params,
    );
    let k4 = derivative_raw(
        &(v + k3.velocity_rate * dt),
        &(r + k3.attitude_rate * dt),
        &drive,
        params,
    );
    let sixth = dt / 6.0;
    let position = p
        + (k1.position_rate + k2.position_rate * 2.0 + k3.position_rate * 2.0 + k4.position_rate)
            * sixth;
    let velocity = v
        + (k1.velocity_rate + k2.velocity_rate * 2.0 + k3.velocity_rate * 2.0 + k4.velocity_rate)
            * sixth;
    let attitude_raw = r
        + (k1.attitude_rate + k2.attitude_rate * 2.0 + k3.attitude_rate * 2.0 + k4.attitude_rate)
            * sixth;
    if attitude_raw.iter().any(|c| !c.is_finite()) {
        return Err(DynamicsError::NonFiniteState);
    }
    let attitude = renormalize(&attitude_raw).map_err(|_| DynamicsError::NonFiniteState)?;

    let vehicle = RigidBodyState {
        position,
        velocity,
        attitude,
    };
    let target = step_target(&world.target, dt);
    if !vehicle.is_finite() || !target.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    Ok(World { vehicle, target })
}

/// RK4 on the target double integrator. The stages are written out instead of
/// using the closed form so the integrator itself can be order-checked.
fn step_target(t: &TargetState, dt: f64) -> TargetState {
    let eval = |v: &Vector3<f64>| {
        target_derivative(&TargetState {
            position: Vector3::zeros(),
            velocity: *v,
            acceleration: t.acceleration,
        })
    };
    let k1 = eval(&t.velocity);
    let k2 = eval(&(t.velocity + k1.velocity_rate * (0.5 * dt)));
    let k3 = eval(&(t.velocity + k2.velocity_rate * (0.5 * dt)));
    let k4 = eval(&(t.velocity + k3.velocity_rate * dt));
    let sixth = dt / 6.0;
    TargetState {
        position: t.position
            + (k1.position_rate
                + k2.position_rate * 2.0
                + k3.position_rate * 2.0
                + k4.position_rate)
                * sixth,
        velocity: t.velocity
            + (k1.velocity_rate
                + k2.velocity_rate * 2.0
                + k3.velocity_rate * 2.0
                + k4.velocity_rate)
                * sixth,
        acceleration: t.acceleration,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{is_rotation, rodrigues, UnitVector3};
    use approx::assert_relative_eq;

    fn paper_target() -> TargetState {
        TargetState {
            position: Vector3::new(3.0, 0.1, -1.0),
            velocity: Vector3::zeros(),
            acceleration: Vector3::new(-0.01, 0.01, 0.0),
        }
    }

    #[test]
    fn hover_has_zero_acceleration() {
        let p = VehicleParams::default();
        let s = RigidBodyState::at_rest(Vector3::zeros());
        let d = vehicle_derivative(
            &s,
            &ActuationInput {
                thrust: p.mass * p.gravity,
                omega: Vector3::zeros(),
            },
            &p,
        );
        assert_eq!(d.velocity_rate, Vector3::zeros());
    }

    #[test]
    fn free_fall_accelerates_along_e3() {
        let p = VehicleParams::default();
        let s = RigidBodyState::at_rest(Vector3::zeros());
        let d = vehicle_derivative(
            &s,
            &ActuationInput {
                thrust: 0.0,
                omega: Vector3::zeros(),
            },
            &p,
        );
        assert_eq!(d.velocity_rate, Vector3::new(0.0, 0.0, 9.8));
    }

    #[test]
    fn yaw_rate_gives_skew_attitude_rate() {
        let p = VehicleParams::default();
        let s = RigidBodyState::at_rest(Vector3::zeros());
        let d = vehicle_derivative(
            &s,
            &ActuationInput {
                thrust: 0.0,
                omega: Vector3::z(),
            },
            &p,
        );
        assert_eq!(d.attitude_rate, skew(&Vector3::z()));
    }

    #[test]
    fn target_derivative_examples() {
        let still = TargetState {
            position: Vector3::new(1.0, 2.0, 3.0),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
        };
        let d = target_derivative(&still);
        assert_eq!(d.position_rate, Vector3::zeros());
        assert_eq!(d.velocity_rate, Vector3::zeros());
        assert_eq!(d.acceleration_rate, Vector3::zeros());

        let d = target_derivative(&paper_target());
        assert_eq!(d.velocity_rate, Vector3::new(-0.01, 0.01, 0.0));
    }

    #[test]
    fn target_matches_closed_form_after_two_seconds() {
        let mut world = World {
            vehicle: RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -1.8)),
            target: paper_target(),
        };
        let p = VehicleParams::default();
        let hover = ActuationInput {
            thrust: 9.8,
            omega: Vector3::zeros(),
        };
        for _ in 0..2000 {
            world = step(&world, &hover, &p, 1e-3).unwrap();
        }
        assert_relative_eq!(
            world.target.position,
            Vector3::new(2.98, 0.12, -1.0),
            epsilon = 1e-12
        );
        assert_eq!(world.target.acceleration, paper_target().acceleration);
    }

    #[test]
    fn zero_thrust_world_only_falls() {
        let p = VehicleParams::default();
        let world = World {
            vehicle: RigidBodyState::at_rest(Vector3::zeros()),
            target: TargetState {
                position: Vector3::x(),
                velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
            },
        };
        let next = step(
            &world,
            &ActuationInput {
                thrust: 0.0,
                omega: Vector3::zeros(),
            },
            &p,
            0.1,
        )
        .unwrap();
        assert_eq!(next.target, world.target);
        assert_eq!(*next.vehicle.attitude, Matrix3::identity());
        assert_relative_eq!(
            next.vehicle.velocity,
            Vector3::new(0.0, 0.0, 0.98),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            next.vehicle.position,
            Vector3::new(0.0, 0.0, 0.049),
            epsilon = 1e-15
        );
    }

    #[test]
    fn thrust_is_clamped_not_rejected() {
        let p = VehicleParams::default();
        let world = World {
            vehicle: RigidBodyState::at_rest(Vector3::zeros()),
            target: paper_target(),
        };
        let huge = ActuationInput {
            thrust: 1e6,
            omega: Vector3::zeros(),
        };
        let next = step(&world, &huge, &p, 0.01).unwrap();
        assert_relative_eq!(
            next.vehicle.velocity.z,
            (9.8 - 34.0) * 0.01,
            epsilon = 1e-12
        );
        let negative = ActuationInput {
            thrust: -5.0,
            omega: Vector3::zeros(),
        };
        let next = step(&world, &negative, &p, 0.01).unwrap();
        assert_relative_eq!(next.vehicle.velocity.z, 9.8 * 0.01, epsilon = 1e-12);
    }

    #[test]
    fn bad_step_and_non_finite_are_errors() {
        let p = VehicleParams::default();
        let world = World {
            vehicle: RigidBodyState::at_rest(Vector3::zeros()),
            target: paper_target(),
        };
        let input = ActuationInput {
            thrust: 9.8,
            omega: Vector3::zeros(),
        };
        assert_eq!(
            step(&world, &input, &p, 0.0),
            Err(DynamicsError::InvalidStep(0.0))
        );
        let nan = ActuationInput {
            thrust: 9.8,
            omega: Vector3::new(f64::NAN, 0.0, 0.0),
        };
        assert_eq!(
            step(&world, &nan, &p, 1e-3),
            Err(DynamicsError::NonFiniteState)
        );
    }

    #[test]
    fn constant_rate_rotation_matches_exponential() {
        let p = VehicleParams::default();
        let omega = Vector3::new(0.3, -0.2, 0.5);
        let mut world = World {
            vehicle: RigidBodyState::at_rest(Vector3::zeros()),
            target: paper_target(),
        };
        let input = ActuationInput { thrust: 9.8, omega };
        for _ in 0..1000 {
            world = step(&world, &input, &p, 1e-3).unwrap();
        }
        let exact = rodrigues(omega.norm(), &UnitVector3::new_normalize(omega).unwrap());
        assert!(is_rotation(world.vehicle.attitude.matrix(), 1e-12));
        assert_relative_eq!(*world.vehicle.attitude, *exact, epsilon = 1e-12);
    }

    #[test]
    fn ideal_drive_applies_acceleration_exactly() {
        let p = VehicleParams::default();
        let world = World {
            vehicle: RigidBodyState::at_rest(Vector3::zeros()),
            target: paper_target(),
        };
        let a = Vector3::new(1.0, -2.0, 0.5);
        let next = step_drive(
            &world,
            &VehicleDrive::Acceleration {
                acceleration: a,
                omega: Vector3::zeros(),
            },
            &p,
            0.5,
        )
        .unwrap();
        assert_relative_eq!(next.vehicle.velocity, a * 0.5, epsilon = 1e-15);
        assert_relative_eq!(next.vehicle.position, a * 0.125, epsilon = 1e-15);
    }
}
