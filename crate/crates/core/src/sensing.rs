//! Bearing-angle measurements of a spherical target.
//!
//! The camera reports the central bearing `b` towards the sphere centre and a
//! tangent bearing `b_t` grazing its surface. The angle between them, `θ`,
//! encodes range through `d = r / sin θ`. Bearings are synthesized directly on
//! the unit sphere from ground truth; no image plane is modelled.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{RigidBodyState, TargetState};
use crate::so3::{project_orthogonal, rodrigues, Rotation3, UnitVector3};

/// Smallest angle accepted by the velocity reconstruction (1/sin θ, 1/sin² θ).
pub const THETA_MIN: f64 = 1e-4;
/// Noisy angles are clamped to `[THETA_MIN, π/2 − THETA_EDGE]`.
const THETA_EDGE: f64 = 1e-9;
/// Below this the projection of body-z off `b` is treated as degenerate.
const PERP_DEGENERATE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SensingError {
    #[error("vehicle is inside the target sphere (distance {distance} <= radius {radius})")]
    InsideTarget { distance: f64, radius: f64 },
    #[error("angle {0} rad is below the differentiation floor")]
    SingularAngle(f64),
    #[error("sample time {now} does not advance past {previous}")]
    NonMonotonicTime { previous: f64, now: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingAngleObservation {
    /// Central bearing, body frame.
    pub b_body: UnitVector3,
    /// Tangent bearing, body frame.
    pub b_tangent_body: UnitVector3,
    /// Half-angle subtended by the target, rad.
    pub theta: f64,
    /// Central bearing rotated to the inertial frame.
    pub b_inertial: UnitVector3,
    /// `sin θ`.
    pub x: f64,
}

impl BearingAngleObservation {
    /// Fills in the derived fields from a body-frame bearing, an angle and
    /// the vehicle attitude.
    pub fn from_body(b_body: UnitVector3, theta: f64, attitude: &Rotation3) -> Self {
        let n = tangent_plane_direction(&b_body);
        let b_tangent_body =
            UnitVector3::new_unchecked(b_body.into_inner() * theta.cos() + n * theta.sin());
        let b_inertial = UnitVector3::new_unchecked(attitude.rotate(&b_body));
        Self {
            b_body,
            b_tangent_body,
            theta,
            b_inertial,
            x: theta.sin(),
        }
    }

    /// Range implied by the angle for a sphere of radius `r`.
    pub fn range(&self, r: f64) -> f64 {
        r / self.theta.sin()
    }
}

/// Unit vector orthogonal to `b` used to place the tangent bearing: body-z
/// projected off `b`, or body-y when the two are nearly parallel.
fn tangent_plane_direction(b: &UnitVector3) -> Vector3<f64> {
    let n = project_orthogonal(b, &Vector3::z());
    if n.norm() > PERP_DEGENERATE {
        n.normalize()
    } else {
        project_orthogonal(b, &Vector3::y()).normalize()
    }
}

/// Noiseless bearing-angle pair for the current geometry.
pub fn observe(
    vehicle: &RigidBodyState,
    target: &TargetState,
    r_true: f64,
) -> Result<BearingAngleObservation, SensingError> {
    let rel = target.position - vehicle.position;
    let d = rel.norm();
    if !(d > r_true) {
        return Err(SensingError::InsideTarget {
            distance: d,
            radius: r_true,
        });
    }
    let b_body = UnitVector3::new_normalize(vehicle.attitude.inverse_rotate(&rel))
        .expect("distance exceeds a positive radius");
    let theta = (r_true / d).asin();
    Ok(BearingAngleObservation::from_body(
        b_body,
        theta,
        &vehicle.attitude,
    ))
}

/// Measurement noise. Standard deviations are in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub bearing_angle_std_deg: f64,
    pub theta_std_deg: f64,
    pub rng_seed: u64,
}

impl NoiseConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            bearing_angle_std_deg: 0.0,
            theta_std_deg: 0.0,
            rng_seed: 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.bearing_angle_std_deg >= 0.0
            && self.theta_std_deg >= 0.0
            && self.bearing_angle_std_deg.is_finite()
            && self.theta_std_deg.is_finite()
    }

    fn active(&self) -> bool {
        self.enabled && (self.bearing_angle_std_deg > 0.0 || self.theta_std_deg > 0.0)
    }
}

/// Rotates the central bearing by a small random rotation about an axis drawn
/// uniformly in its tangent plane, and perturbs `θ` additively.
pub fn add_noise<R: Rng + ?Sized>(
    obs: &BearingAngleObservation,
    cfg: &NoiseConfig,
    attitude: &Rotation3,
    rng: &mut R,
) -> BearingAngleObservation {
    if !cfg.active() {
        return *obs;
    }
    let bearing_std = cfg.bearing_angle_std_deg.to_radians();
    let theta_std = cfg.theta_std_deg.to_radians();

    let n1 = tangent_plane_direction(&obs.b_body);
    let n2 = obs.b_body.cross(&n1);
    let azimuth: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let axis = UnitVector3::new_unchecked(n1 * azimuth.cos() + n2 * azimuth.sin());
    let angle = sample_normal(rng, bearing_std);
    let b_body = UnitVector3::new_normalize(rodrigues(angle, &axis).rotate(&obs.b_body))
        .expect("rotation preserves norm");

    let theta =
        (obs.theta + sample_normal(rng, theta_std)).clamp(THETA_MIN, FRAC_PI_2 - THETA_EDGE);
    BearingAngleObservation::from_body(b_body, theta, attitude)
}

fn sample_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std)
            .expect("finite non-negative std")
            .sample(rng)
    } else {
        0.0
    }
}

/// First-order low-pass on the differentiated signals.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LowPass {
    cutoff_hz: f64,
    b_dot: Vector3<f64>,
    theta_dot: f64,
}

impl LowPass {
    fn filter(&mut self, b_dot: Vector3<f64>, theta_dot: f64, h: f64) -> (Vector3<f64>, f64) {
        let tau = 1.0 / (std::f64::consts::TAU * self.cutoff_hz);
        let alpha = h / (tau + h);
        self.b_dot += (b_dot - self.b_dot) * alpha;
        self.theta_dot += (theta_dot - self.theta_dot) * alpha;
        (self.b_dot, self.theta_dot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    b: Vector3<f64>,
    theta: f64,
    t: f64,
}

/// Backward-difference estimator of the scaled relative velocity `w = v / r`:
///
/// ```text
/// w = ḃ / sin θ − b cos θ / sin² θ · θ̇
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Differentiator {
    previous: Option<Sample>,
    lowpass: Option<LowPass>,
}

impl Differentiator {
    pub fn new() -> Self {
        Self::default()
    }

    /// `cutoff_hz` must be positive.
    pub fn with_lowpass(cutoff_hz: f64) -> Self {
        Self {
            previous: None,
            lowpass: Some(LowPass {
                cutoff_hz,
                b_dot: Vector3::zeros(),
                theta_dot: 0.0,
            }),
        }
    }

    /// Feeds the observation taken at time `t`. Returns `None` for the first
    /// sample, which only primes the memory.
    pub fn measure_scaled_velocity(
        &mut self,
        obs: &BearingAngleObservation,
        t: f64,
    ) -> Result<Option<Vector3<f64>>, SensingError> {
        if obs.theta < THETA_MIN {
            return Err(SensingError::SingularAngle(obs.theta));
        }
        let now = Sample {
            b: obs.b_inertial.into_inner(),
            theta: obs.theta,
            t,
        };
        let Some(prev) = self.previous else {
            self.previous = Some(now);
            return Ok(None);
        };
        if !(t > prev.t) {
            return Err(SensingError::NonMonotonicTime {
                previous: prev.t,
                now: t,
            });
        }
        let h = t - prev.t;
        let mut b_dot = (now.b - prev.b) / h;
        let mut theta_dot = (now.theta - prev.theta) / h;
        if let Some(lp) = self.lowpass.as_mut() {
            (b_dot, theta_dot) = lp.filter(b_dot, theta_dot, h);
        }
        self.previous = Some(now);

        let (s, c) = obs.theta.sin_cos();
        Ok(Some(b_dot / s - now.b * (c / (s * s) * theta_dot)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::rodrigues;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_6;

    fn at(p: [f64; 3]) -> TargetState {
        TargetState {
            position: Vector3::from(p),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
        }
    }

    fn check_invariants(o: &BearingAngleObservation, r: &Rotation3) {
        assert_relative_eq!(
            o.b_body.dot(&o.b_tangent_body).acos(),
            o.theta,
            epsilon = 1e-9
        );
        assert_relative_eq!(o.x, o.theta.sin(), epsilon = 1e-12);
        assert_relative_eq!(
            o.b_inertial.into_inner(),
            r.rotate(&o.b_body),
            epsilon = 1e-12
        );
    }

    #[test]
    fn initial_geometry_of_tracking_scenario() {
        let vehicle = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -1.8));
        let o = observe(&vehicle, &at([3.0, 0.1, -1.0]), 0.25).unwrap();
        let d = (9.0f64 + 0.01 + 0.64).sqrt();
        assert_relative_eq!(d, 3.1064, epsilon = 1e-4);
        assert_relative_eq!(o.theta, (0.25 / d).asin(), epsilon = 1e-15);
        assert_relative_eq!(o.theta, 0.080565, epsilon = 1e-6);
        assert_relative_eq!(o.range(0.25) * o.theta.sin(), 0.25, epsilon = 1e-12);
        check_invariants(&o, &vehicle.attitude);
    }

    #[test]
    fn target_at_twice_radius_gives_thirty_degrees() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([2.0, 0.0, 0.0]), 1.0).unwrap();
        assert_relative_eq!(o.theta, FRAC_PI_6, epsilon = 1e-15);
    }

    #[test]
    fn far_target_has_vanishing_angle() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([1e9, 0.0, 0.0]), 1.0).unwrap();
        assert!(o.theta < 1e-8 && o.x < 1e-8);
    }

    #[test]
    fn inside_target_is_rejected() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        assert!(matches!(
            observe(&vehicle, &at([0.2, 0.0, 0.0]), 0.25),
            Err(SensingError::InsideTarget { .. })
        ));
        assert!(observe(&vehicle, &at([0.25, 0.0, 0.0]), 0.25).is_err());
    }

    #[test]
    fn tangent_bearing_falls_back_when_bearing_is_vertical() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([0.0, 0.0, 3.0]), 1.0).unwrap();
        check_invariants(&o, &vehicle.attitude);
    }

    #[test]
    fn rotated_vehicle_keeps_invariants() {
        let mut vehicle = RigidBodyState::at_rest(Vector3::new(0.5, -1.0, 2.0));
        vehicle.attitude = rodrigues(
            1.1,
            &UnitVector3::new_normalize(Vector3::new(1.0, 2.0, -1.0)).unwrap(),
        );
        let o = observe(&vehicle, &at([3.0, 0.1, -1.0]), 0.4).unwrap();
        check_invariants(&o, &vehicle.attitude);
        let rel = Vector3::new(2.5, 1.1, -3.0);
        assert_relative_eq!(o.b_inertial.into_inner(), rel.normalize(), epsilon = 1e-12);
    }

    #[test]
    fn zero_noise_is_identity() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([3.0, 1.0, 0.0]), 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = NoiseConfig {
            enabled: true,
            bearing_angle_std_deg: 0.0,
            theta_std_deg: 0.0,
            rng_seed: 1,
        };
        assert_eq!(add_noise(&o, &cfg, &vehicle.attitude, &mut rng), o);
        let off = NoiseConfig {
            enabled: false,
            bearing_angle_std_deg: 1.0,
            theta_std_deg: 1.0,
            rng_seed: 1,
        };
        assert_eq!(add_noise(&o, &off, &vehicle.attitude, &mut rng), o);
    }

    #[test]
    fn noise_is_reproducible_for_a_seed() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([3.0, 1.0, 0.0]), 0.5).unwrap();
        let cfg = NoiseConfig {
            enabled: true,
            bearing_angle_std_deg: 1.0,
            theta_std_deg: 1e-4,
            rng_seed: 42,
        };
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| add_noise(&o, &cfg, &vehicle.attitude, &mut rng))
                .collect::<Vec<_>>()
        };
        let a = draw(42);
        assert_eq!(a, draw(42));
        assert_ne!(a, draw(43));
        for n in &a {
            check_invariants(n, &vehicle.attitude);
        }
    }

    #[test]
    fn bearing_noise_has_half_normal_mean_deviation() {
        // E|N(0, σ)| = σ √(2/π)
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([2.0, -1.0, 0.5]), 0.5).unwrap();
        let cfg = NoiseConfig {
            enabled: true,
            bearing_angle_std_deg: 1.0,
            theta_std_deg: 0.0,
            rng_seed: 7,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let noisy = add_noise(&o, &cfg, &vehicle.attitude, &mut rng);
                noisy.b_body.dot(&o.b_body).clamp(-1.0, 1.0).acos()
            })
            .sum::<f64>()
            / n as f64;
        let expected = 1f64.to_radians() * (2.0 / std::f64::consts::PI).sqrt();
        // Standard error of the mean is ~σ·0.6/√n ≈ 3e-5 rad.
        assert!((mean - expected).abs() < 2e-4, "mean {mean} vs {expected}");
    }

    #[test]
    fn static_scene_gives_zero_velocity() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([3.0, 1.0, 0.0]), 0.5).unwrap();
        let mut diff = Differentiator::new();
        assert_eq!(diff.measure_scaled_velocity(&o, 0.0).unwrap(), None);
        assert_eq!(
            diff.measure_scaled_velocity(&o, 1e-3).unwrap(),
            Some(Vector3::zeros())
        );
    }

    #[test]
    fn time_must_advance() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([3.0, 1.0, 0.0]), 0.5).unwrap();
        let mut diff = Differentiator::new();
        diff.measure_scaled_velocity(&o, 1.0).unwrap();
        assert!(matches!(
            diff.measure_scaled_velocity(&o, 1.0),
            Err(SensingError::NonMonotonicTime { .. })
        ));
    }

    #[test]
    fn tiny_angle_is_singular() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let o = observe(&vehicle, &at([1e5, 0.0, 0.0]), 1.0).unwrap();
        let mut diff = Differentiator::new();
        assert!(matches!(
            diff.measure_scaled_velocity(&o, 0.0),
            Err(SensingError::SingularAngle(_))
        ));
    }

    /// Noiseless relative motion with constant velocity, sampled at step `h`;
    /// returns the reconstructed w and the true one.
    fn closing_run(rel_velocity: Vector3<f64>, h: f64) -> (Vector3<f64>, Vector3<f64>) {
        let r = 0.5;
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let start = Vector3::new(4.0, 0.0, 0.0);
        let mut diff = Differentiator::new();
        let mut last = None;
        for k in 0..3 {
            let t = k as f64 * h;
            let target = at((start + rel_velocity * t).into());
            let o = observe(&vehicle, &target, r).unwrap();
            last = diff.measure_scaled_velocity(&o, t).unwrap();
        }
        (last.unwrap(), rel_velocity / r)
    }

    #[test]
    fn radial_closure_is_antiparallel_to_bearing() {
        let (w, truth) = closing_run(Vector3::new(-1.0, 0.0, 0.0), 1e-3);
        // b = e1 throughout, so w lies along −b with magnitude cos θ/sin² θ · θ̇.
        assert!(w.y.abs() < 1e-12 && w.z.abs() < 1e-12);
        assert!(w.x < 0.0);
        let err = (w - truth).norm();
        let (w2, _) = closing_run(Vector3::new(-1.0, 0.0, 0.0), 5e-4);
        let err2 = (w2 - truth).norm();
        assert!(err < 1e-2, "error {err}");
        assert!((err / err2 - 2.0).abs() < 0.2, "ratio {}", err / err2);
    }

    #[test]
    fn tangential_motion_is_orthogonal_to_bearing() {
        let h = 1e-3;
        let (w, truth) = closing_run(Vector3::new(0.0, 1.0, 0.0), h);
        // θ barely changes; w must be (nearly) orthogonal to b ≈ e1.
        assert!(w.x.abs() < 10.0 * h, "b·w = {}", w.x);
        assert!((w - truth).norm() < 10.0 * h);
    }

    #[test]
    fn lowpass_attenuates_step_changes() {
        let vehicle = RigidBodyState::at_rest(Vector3::zeros());
        let mut diff = Differentiator::with_lowpass(20.0);
        let mut raw = Differentiator::new();
        let h = 1e-3;
        let mut last = (None, None);
        for k in 0..3 {
            let target = at([4.0 - k as f64 * 1e-3, 0.0, 0.0]);
            let o = observe(&vehicle, &target, 0.5).unwrap();
            last = (
                diff.measure_scaled_velocity(&o, k as f64 * h).unwrap(),
                raw.measure_scaled_velocity(&o, k as f64 * h).unwrap(),
            );
        }
        let (filtered, unfiltered) = (last.0.unwrap(), last.1.unwrap());
        assert!(filtered.norm() < unfiltered.norm());
        assert!(filtered.norm() > 0.0);
    }
}
