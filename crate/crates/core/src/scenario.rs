//! Scenario files: the JSON shape users edit and its validated runtime form.
//!
//! Vectors are 3-element arrays and matrices 9-element row-major arrays.
//! Angles are radians except the noise standard deviations, which are degrees.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::VisibilityConfig;
use crate::controller::{check_psd, ControllerError, GainConfig, GroundTruth, ReferenceSpec};
use crate::dynamics::{RigidBodyState, TargetState, VehicleParams, World};
use crate::sensing::NoiseConfig;
use crate::so3::{is_rotation, Rotation3};

/// Default bearing-rate filter cutoff when noise is enabled.
pub const DEFAULT_NOISY_CUTOFF_HZ: f64 = 20.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleInit {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Body-to-inertial rotation, row-major.
    pub attitude: [f64; 9],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetInit {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    /// Normalized when the scenario is loaded.
    pub b_star: [f64; 3],
    pub theta_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFile {
    pub k1: f64,
    pub k2: f64,
    pub k3: [f64; 9],
    pub k_r: f64,
    pub k_rho: [f64; 9],
    /// Attitude gain `K_R` of the rate command.
    pub k_attitude: [f64; 9],
    #[serde(default)]
    pub include_wd_dot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverInit {
    pub r_hat: f64,
    pub rho_hat: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParamsFile {
    pub mass: f64,
    pub gravity: f64,
    pub max_thrust: f64,
}

/// Low-pass applied to the differentiated bearing and angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LowPassSetting {
    /// Off for noiseless runs, [`DEFAULT_NOISY_CUTOFF_HZ`] when noise is on.
    #[default]
    Auto,
    Off,
    CutoffHz(f64),
}

/// Where the controller's scaled velocity comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    /// Backward differences of the measured bearing and angle.
    #[default]
    Differentiated,
    /// `(v_T − v_B) / r` from the simulator state.
    GroundTruth,
}

/// How the commanded acceleration reaches the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActuationModel {
    /// Thrust along the current body z-axis, attitude driven by the rate command.
    #[default]
    Multirotor,
    /// The commanded acceleration is applied exactly.
    IdealAcceleration,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_duration() -> f64 {
    120.0
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub vehicle: VehicleInit,
    pub target: TargetInit,
    pub r_true: f64,
    pub reference: ReferenceFile,
    pub gains: GainFile,
    pub observer_init: ObserverInit,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub lowpass: LowPassSetting,
    pub visibility: VisibilityConfig,
    pub vehicle_params: VehicleParamsFile,
    #[serde(default = "default_dt")]
    pub dt_physics: f64,
    #[serde(default = "default_dt")]
    pub dt_control: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub velocity_source: VelocitySource,
    #[serde(default)]
    pub actuation: ActuationModel,
}

fn diag(v: f64) -> [f64; 9] {
    [v, 0.0, 0.0, 0.0, v, 0.0, 0.0, 0.0, v]
}

/// The built-in tracking scenario: an accelerating target of radius 0.25 m
/// observed from a fixed bearing and apparent size.
pub fn paper_scenario() -> ScenarioConfig {
    ScenarioConfig {
        vehicle: VehicleInit {
            position: [0.0, 0.0, -1.8],
            velocity: [0.0; 3],
            attitude: diag(1.0),
        },
        target: TargetInit {
            position: [3.0, 0.1, -1.0],
            velocity: [0.0; 3],
            acceleration: [-0.01, 0.01, 0.0],
        },
        r_true: 0.25,
        reference: ReferenceFile {
            b_star: [-1.0, 0.001, 0.0],
            theta_star: 0.125,
        },
        gains: GainFile {
            k1: 0.4,
            k2: 1.2,
            k3: diag(0.7),
            k_r: 0.1,
            k_rho: diag(1e-4),
            k_attitude: diag(5.0),
            include_wd_dot: false,
        },
        observer_init: ObserverInit {
            r_hat: 1.0,
            rho_hat: [0.0; 3],
        },
        noise: NoiseConfig {
            enabled: true,
            bearing_angle_std_deg: 1.0,
            theta_std_deg: 1e-4,
            rng_seed: 1,
        },
        lowpass: LowPassSetting::Auto,
        visibility: VisibilityConfig {
            varphi: 75f64.to_radians(),
        },
        vehicle_params: VehicleParamsFile {
            mass: 1.0,
            gravity: 9.8,
            max_thrust: 34.0,
        },
        dt_physics: default_dt(),
        dt_control: default_dt(),
        duration: default_duration(),
        velocity_source: VelocitySource::Differentiated,
        actuation: ActuationModel::Multirotor,
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// Number of physics substeps per control step.
    pub fn substeps(&self) -> Result<usize, ConfigError> {
        let ratio = self.dt_control / self.dt_physics;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ConfigError::invalid(
                "dt_control",
                format!(
                    "must be an integer multiple of dt_physics ({} / {} = {ratio})",
                    self.dt_control, self.dt_physics
                ),
            ));
        }
        Ok(n as usize)
    }

    /// Number of control steps covering `duration`.
    pub fn control_steps(&self) -> usize {
        (self.duration / self.dt_control + 1e-9).floor() as usize
    }

    /// Cutoff actually used by the differentiator.
    pub fn effective_cutoff_hz(&self) -> Option<f64> {
        match self.lowpass {
            LowPassSetting::Auto if self.noise.enabled => Some(DEFAULT_NOISY_CUTOFF_HZ),
            LowPassSetting::Auto | LowPassSetting::Off => None,
            LowPassSetting::CutoffHz(hz) => Some(hz),
        }
    }

    /// Checks every invariant and builds the runtime scenario.
    pub fn resolve(&self) -> Result<Scenario, ConfigError> {
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(
                    path,
                    format!("must be positive, got {v}"),
                ))
            }
        };
        let finite = |path: &str, vals: &[f64]| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(ConfigError::invalid(path, "contains a non-finite value"))
            }
        };

        positive("dt_physics", self.dt_physics)?;
        positive("dt_control", self.dt_control)?;
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(ConfigError::invalid(
                "duration",
                "must be finite and non-negative",
            ));
        }
        let substeps = self.substeps()?;
        positive("r_true", self.r_true)?;
        positive("vehicle_params.mass", self.vehicle_params.mass)?;
        positive("vehicle_params.gravity", self.vehicle_params.gravity)?;
        positive("vehicle_params.max_thrust", self.vehicle_params.max_thrust)?;
        positive("observer_init.r_hat", self.observer_init.r_hat)?;
        finite("observer_init.rho_hat", &self.observer_init.rho_hat)?;
        finite("vehicle.position", &self.vehicle.position)?;
        finite("vehicle.velocity", &self.vehicle.velocity)?;
        finite("target.position", &self.target.position)?;
        finite("target.velocity", &self.target.velocity)?;
        finite("target.acceleration", &self.target.acceleration)?;

        let attitude = Matrix3::from_row_slice(&self.vehicle.attitude);
        if !is_rotation(&attitude, 1e-6) {
            return Err(ConfigError::invalid(
                "vehicle.attitude",
                "must be a rotation matrix (row-major)",
            ));
        }
        let attitude = Rotation3::from_matrix(attitude)
            .map_err(|e| ConfigError::invalid("vehicle.attitude", e.to_string()))?;

        let reference = ReferenceSpec::new(
            Vector3::from(self.reference.b_star),
            self.reference.theta_star,
        )
        .map_err(|e| ConfigError::invalid("reference", e.to_string()))?;

        let g = &self.gains;
        let gains = GainConfig {
            k1: g.k1,
            k2: g.k2,
            k3: Matrix3::from_row_slice(&g.k3),
            k_r: g.k_r,
            k_rho: Matrix3::from_row_slice(&g.k_rho),
            include_wd_dot: g.include_wd_dot,
        };
        gains.validate().map_err(|e| match e {
            ControllerError::InvalidGain { name, reason } => {
                ConfigError::invalid(format!("gains.{}", name.to_lowercase()), reason)
            }
            other => ConfigError::invalid("gains", other.to_string()),
        })?;
        let k_attitude = Matrix3::from_row_slice(&g.k_attitude);
        check_psd("K_R", &k_attitude)
            .map_err(|e| ConfigError::invalid("gains.k_attitude", e.to_string()))?;

        if !self.noise.is_valid() {
            return Err(ConfigError::invalid(
                "noise",
                "standard deviations must be finite and non-negative",
            ));
        }
        if let LowPassSetting::CutoffHz(hz) = self.lowpass {
            positive("lowpass.cutoff_hz", hz)?;
        }
        if !self.visibility.is_valid() {
            return Err(ConfigError::invalid(
                "visibility.varphi",
                format!("must lie in [0, pi/2), got {}", self.visibility.varphi),
            ));
        }

        let params = VehicleParams {
            mass: self.vehicle_params.mass,
            gravity: self.vehicle_params.gravity,
            max_thrust: self.vehicle_params.max_thrust,
        };
        let world = World {
            vehicle: RigidBodyState {
                position: Vector3::from(self.vehicle.position),
                velocity: Vector3::from(self.vehicle.velocity),
                attitude,
            },
            target: TargetState {
                position: Vector3::from(self.target.position),
                velocity: Vector3::from(self.target.velocity),
                acceleration: Vector3::from(self.target.acceleration),
            },
        };
        Ok(Scenario {
            world,
            truth: GroundTruth {
                r_true: self.r_true,
                target_acceleration: world.target.acceleration,
            },
            reference,
            gains,
            k_attitude,
            r_hat0: self.observer_init.r_hat,
            rho_hat0: Vector3::from(self.observer_init.rho_hat),
            noise: self.noise,
            cutoff_hz: self.effective_cutoff_hz(),
            visibility: self.visibility,
            params,
            dt_control: self.dt_control,
            dt_physics: self.dt_control / substeps as f64,
            substeps,
            steps: self.control_steps(),
            velocity_source: self.velocity_source,
            actuation: self.actuation,
        })
    }
}

/// Validated scenario in runtime types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub world: World,
    pub truth: GroundTruth,
    pub reference: ReferenceSpec,
    pub gains: GainConfig,
    pub k_attitude: Matrix3<f64>,
    pub r_hat0: f64,
    pub rho_hat0: Vector3<f64>,
    pub noise: NoiseConfig,
    pub cutoff_hz: Option<f64>,
    pub visibility: VisibilityConfig,
    pub params: VehicleParams,
    pub dt_control: f64,
    pub dt_physics: f64,
    pub substeps: usize,
    pub steps: usize,
    pub velocity_source: VelocitySource,
    pub actuation: ActuationModel,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_scenario_values() {
        let c = paper_scenario();
        assert_eq!(c.r_true, 0.25);
        assert_eq!(c.gains.k1, 0.4);
        assert_eq!(c.gains.k2, 1.2);
        assert_eq!(c.observer_init.r_hat, 1.0);
        assert_eq!(c.observer_init.rho_hat, [0.0; 3]);
        assert_eq!(c.vehicle_params.max_thrust, 34.0);
        assert_eq!(c.noise.bearing_angle_std_deg, 1.0);
        assert_eq!(c.noise.theta_std_deg, 1e-4);
        let s = c.resolve().unwrap();
        assert!((s.reference.b_star.norm() - 1.0).abs() < 1e-15);
        assert_eq!(s.reference.x_star, 0.125f64.sin());
        assert_eq!(s.substeps, 1);
        assert_eq!(s.steps, 120_000);
        assert_eq!(s.cutoff_hz, Some(DEFAULT_NOISY_CUTOFF_HZ));
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let c = paper_scenario();
        let text = c.to_json_pretty();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), c);

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = v.as_object_mut().unwrap();
        for key in [
            "dt_physics",
            "dt_control",
            "duration",
            "lowpass",
            "velocity_source",
            "actuation",
        ] {
            obj.remove(key);
        }
        let parsed: ScenarioConfig = serde_json::from_value(v).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(paper_scenario()).unwrap();
        v.as_object_mut().unwrap().insert("bogus".into(), 1.into());
        assert!(serde_json::from_value::<ScenarioConfig>(v).is_err());
    }

    #[test]
    fn lowpass_setting_spellings() {
        let mut c = paper_scenario();
        c.lowpass = LowPassSetting::CutoffHz(5.0);
        let text = serde_json::to_string(&c.lowpass).unwrap();
        assert_eq!(text, r#"{"cutoff_hz":5.0}"#);
        assert_eq!(
            serde_json::to_string(&LowPassSetting::Auto).unwrap(),
            r#""auto""#
        );
        c.noise.enabled = false;
        c.lowpass = LowPassSetting::Auto;
        assert_eq!(c.effective_cutoff_hz(), None);
    }

    fn invalid_path(c: &ScenarioConfig) -> String {
        match c.resolve() {
            Err(ConfigError::Invalid { path, .. }) => path,
            other => panic!("expected invalid config, got {other:?}"),
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = paper_scenario();
        c.dt_control = 1.5e-3;
        assert_eq!(invalid_path(&c), "dt_control");

        let mut c = paper_scenario();
        c.gains.k3 = [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(invalid_path(&c), "gains.k3");

        let mut c = paper_scenario();
        c.gains.k_rho = [1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(invalid_path(&c), "gains.k_rho");

        let mut c = paper_scenario();
        c.r_true = 0.0;
        assert_eq!(invalid_path(&c), "r_true");

        let mut c = paper_scenario();
        c.visibility.varphi = 2.0;
        assert_eq!(invalid_path(&c), "visibility.varphi");

        let mut c = paper_scenario();
        c.vehicle.attitude = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0];
        assert_eq!(invalid_path(&c), "vehicle.attitude");

        let mut c = paper_scenario();
        c.noise.bearing_angle_std_deg = -1.0;
        assert_eq!(invalid_path(&c), "noise");

        let mut c = paper_scenario();
        c.reference.theta_star = 2.0;
        assert_eq!(invalid_path(&c), "reference");
    }

    #[test]
    fn coarser_control_rate_gives_substeps() {
        let mut c = paper_scenario();
        c.dt_physics = 1e-4;
        c.dt_control = 1e-3;
        c.duration = 1.0;
        let s = c.resolve().unwrap();
        assert_eq!(s.substeps, 10);
        assert_eq!(s.steps, 1000);
    }
}
