//! Closed-loop simulation.
//!
//! Each control step `k` runs, in this order:
//!
//! 1. observe the state at `t_k` (bearing, angle; noise if enabled),
//! 2. reconstruct the scaled velocity (or read it from ground truth),
//! 3. evaluate errors, `w_d` and the control law with the memory at `k`,
//! 4. allocate thrust, desired attitude and body rate,
//! 5. log, update the adaptation states,
//! 6. hold thrust and rate constant while integrating to `t_k + dt_control`.
//!
//! Faults (target penetration, singular angle, non-finite state) end the run
//! and are reported in [`RunOutcome`]; they never panic or abort a batch.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::VisibilityConfig;
use crate::allocation::{allocate, YawReference};
use crate::controller::{
    compute_errors, control_law, desired_velocity_saturated, lyapunov_diagnostics,
    update_observers, wd_dot_feedforward, ControllerMemory, GroundTruth,
};
use crate::dynamics::{step_drive, ActuationInput, VehicleDrive, World};
use crate::log::LogRecord;
use crate::scenario::{ActuationModel, ConfigError, Scenario, ScenarioConfig, VelocitySource};
use crate::sensing::{add_noise, observe, Differentiator, SensingError};

/// Error-norm threshold used for the `converged` flag of a run summary.
pub const CONVERGENCE_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FaultReason {
    InsideTarget,
    SingularAngle,
    NonFiniteState,
}

impl std::fmt::Display for FaultReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FaultReason::InsideTarget => "InsideTarget",
            FaultReason::SingularAngle => "SingularAngle",
            FaultReason::NonFiniteState => "NonFiniteState",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    Faulted {
        t: f64,
        reason: FaultReason,
        detail: String,
    },
}

impl RunOutcome {
    pub fn fault(&self) -> Option<FaultReason> {
        match self {
            RunOutcome::Completed => None,
            RunOutcome::Faulted { reason, .. } => Some(*reason),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<LogRecord>,
    pub outcome: RunOutcome,
    /// Smallest `cos φ − |bᵀz_des|` over the run, using the commanded
    /// (post-correction) thrust axis. `+inf` for an empty run.
    pub min_commanded_margin: f64,
}

/// Stepwise closed loop over a validated [`Scenario`].
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    world: World,
    memory: ControllerMemory,
    differentiator: Differentiator,
    yaw: YawReference,
    rng: ChaCha8Rng,
    step: usize,
    min_commanded_margin: f64,
}

/// Fault raised inside one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub t: f64,
    pub reason: FaultReason,
    pub detail: String,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Self {
        let differentiator = match scenario.cutoff_hz {
            Some(hz) => Differentiator::with_lowpass(hz),
            None => Differentiator::new(),
        };
        Self {
            world: scenario.world,
            memory: ControllerMemory::new(scenario.r_hat0, scenario.rho_hat0),
            differentiator,
            yaw: YawReference::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.noise.rng_seed),
            step: 0,
            min_commanded_margin: f64::INFINITY,
            scenario,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn memory(&self) -> &ControllerMemory {
        &self.memory
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.scenario.dt_control
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.scenario.steps
    }

    /// Runs one control step and returns its log record.
    pub fn advance(&mut self) -> Result<LogRecord, Fault> {
        let s = &self.scenario;
        let t = self.time();
        let fault = |reason, detail: String| Fault { t, reason, detail };
        let sensing_fault = |e: SensingError| {
            let reason = match e {
                SensingError::InsideTarget { .. } => FaultReason::InsideTarget,
                _ => FaultReason::SingularAngle,
            };
            fault(reason, e.to_string())
        };

        let vehicle = self.world.vehicle;
        let target = self.world.target;
        let truth_obs = observe(&vehicle, &target, s.truth.r_true).map_err(sensing_fault)?;
        let obs = add_noise(&truth_obs, &s.noise, &vehicle.attitude, &mut self.rng);

        let w = match s.velocity_source {
            VelocitySource::Differentiated => self
                .differentiator
                .measure_scaled_velocity(&obs, t)
                .map_err(sensing_fault)?
                .unwrap_or_else(Vector3::zeros),
            VelocitySource::GroundTruth => (target.velocity - vehicle.velocity) / s.truth.r_true,
        };

        let b = obs.b_inertial;
        let x = obs.x;
        let delta2 = x - s.reference.x_star;
        let w_d = desired_velocity_saturated(&b, x, delta2, &s.reference, &s.gains);
        let err = compute_errors(&b, x, &w, &s.reference, &w_d);
        let wd_dot = wd_dot_feedforward(&self.memory, &w_d, &s.gains, s.dt_control);
        let out = control_law(&err, &b, x, &s.reference, &self.memory, &s.gains, &wd_dot);
        let lyap = lyapunov_diagnostics(&err, &b, &self.memory, &s.truth, &s.gains).ok();

        let cmd = allocate(
            &out.u,
            &b,
            &vehicle.attitude,
            &s.params,
            &s.visibility,
            &s.k_attitude,
            &mut self.yaw,
        );
        self.min_commanded_margin = self
            .min_commanded_margin
            .min(s.visibility.margin(&b, &cmd.r_des.z_axis()));

        let record = LogRecord {
            t,
            p_b: vehicle.position,
            v_b: vehicle.velocity,
            attitude: *vehicle.attitude.matrix(),
            p_t: target.position,
            v_t: target.velocity,
            b: b.into_inner(),
            theta: obs.theta,
            x,
            delta1: err.delta1,
            delta2: err.delta2,
            delta3: err.delta3,
            w_d,
            u: out.u,
            u0: out.u0,
            thrust: cmd.thrust,
            psi: cmd.psi,
            r_hat: self.memory.r_hat,
            rho_hat: self.memory.rho_hat,
            v1: lyap.map_or(f64::NAN, |l| l.v1),
            v2: lyap.map_or(f64::NAN, |l| l.v2),
            v3: lyap.map_or(f64::NAN, |l| l.v3),
            noisy: s.noise.enabled,
        };

        let mut next = update_observers(&self.memory, &err, &out.u0, &s.gains, s.dt_control);
        next.remember_w_d(w_d);
        self.memory = next;

        let drive = match s.actuation {
            ActuationModel::Multirotor => VehicleDrive::Thrust(ActuationInput {
                thrust: cmd.thrust,
                omega: cmd.omega,
            }),
            ActuationModel::IdealAcceleration => VehicleDrive::Acceleration {
                acceleration: out.u,
                omega: cmd.omega,
            },
        };
        for _ in 0..s.substeps {
            self.world = step_drive(&self.world, &drive, &s.params, s.dt_physics)
                .map_err(|e| fault(FaultReason::NonFiniteState, e.to_string()))?;
        }
        self.step += 1;
        Ok(record)
    }

    pub fn run_to_end(mut self) -> RunOutput {
        let mut records = Vec::with_capacity(self.scenario.steps);
        let mut outcome = RunOutcome::Completed;
        while !self.is_finished() {
            match self.advance() {
                Ok(r) => records.push(r),
                Err(f) => {
                    outcome = RunOutcome::Faulted {
                        t: f.t,
                        reason: f.reason,
                        detail: f.detail,
                    };
                    break;
                }
            }
        }
        RunOutput {
            records,
            outcome,
            min_commanded_margin: self.min_commanded_margin,
        }
    }
}

/// Validates `cfg` and runs it to completion or to the first fault.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    Ok(Simulation::new(cfg.resolve()?).run_to_end())
}

/// Runs independent scenarios in parallel. Results keep the input order.
pub fn run_batch(cfgs: &[ScenarioConfig]) -> Vec<Result<RunOutput, ConfigError>> {
    cfgs.par_iter().map(run).collect()
}

/// Derived per-step series that need ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `r − r̂`
    pub r_tilde: Vec<f64>,
    /// `a_T / r − ρ̂`
    pub rho_tilde: Vec<Vector3<f64>>,
    /// Forward difference of `V3`, one entry per consecutive record pair.
    pub v3_rate: Vec<f64>,
    /// `cos φ − |bᵀz_B|` with the actual body z-axis.
    pub margin: Vec<f64>,
    pub min_margin: f64,
}

pub fn diagnostics(
    records: &[LogRecord],
    truth: &GroundTruth,
    visibility: &VisibilityConfig,
) -> Diagnostics {
    let margin: Vec<f64> = records
        .iter()
        .map(|r| visibility.margin(&r.b, &r.z_body()))
        .collect();
    Diagnostics {
        r_tilde: records.iter().map(|r| truth.r_true - r.r_hat).collect(),
        rho_tilde: records.iter().map(|r| truth.rho() - r.rho_hat).collect(),
        v3_rate: records
            .windows(2)
            .map(|p| (p[1].v3 - p[0].v3) / (p[1].t - p[0].t))
            .collect(),
        min_margin: margin.iter().copied().fold(f64::INFINITY, f64::min),
        margin,
    }
}

/// Final-state summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_t: f64,
    pub delta1_norm: f64,
    pub delta2_abs: f64,
    pub delta3_norm: f64,
    pub r_hat: f64,
    pub rho_hat: [f64; 3],
    pub min_commanded_margin: f64,
    pub min_body_margin: f64,
    pub converged: bool,
    pub fault: Option<FaultReason>,
}

impl RunSummary {
    pub fn new(output: &RunOutput, visibility: &VisibilityConfig) -> Self {
        let last = output.records.last();
        let min_body_margin = output
            .records
            .iter()
            .map(|r| visibility.margin(&r.b, &r.z_body()))
            .fold(f64::INFINITY, f64::min);
        let (d1, d2, d3) = last.map_or((f64::NAN, f64::NAN, f64::NAN), |r| {
            (r.delta1.norm(), r.delta2.abs(), r.delta3.norm())
        });
        let fault = output.outcome.fault();
        Self {
            steps: output.records.len(),
            final_t: last.map_or(0.0, |r| r.t),
            delta1_norm: d1,
            delta2_abs: d2,
            delta3_norm: d3,
            r_hat: last.map_or(f64::NAN, |r| r.r_hat),
            rho_hat: last.map_or([f64::NAN; 3], |r| r.rho_hat.into()),
            min_commanded_margin: output.min_commanded_margin,
            min_body_margin,
            converged: fault.is_none()
                && d1 < CONVERGENCE_TOL
                && d2 < CONVERGENCE_TOL
                && d3 < CONVERGENCE_TOL,
            fault,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::paper_scenario;

    fn short(duration: f64) -> ScenarioConfig {
        let mut c = paper_scenario();
        c.duration = duration;
        c
    }

    #[test]
    fn zero_duration_gives_empty_log() {
        let out = run(&short(0.0)).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.outcome, RunOutcome::Completed);
    }

    #[test]
    fn one_record_per_control_step_with_monotone_time() {
        let mut c = short(0.05);
        c.dt_physics = 1e-4;
        c.dt_control = 1e-3;
        let out = run(&c).unwrap();
        assert_eq!(out.records.len(), 50);
        assert!(out.records.windows(2).all(|p| p[1].t > p[0].t));
        assert_eq!(out.records[0].t, 0.0);
    }

    #[test]
    fn starting_inside_target_faults_at_step_zero() {
        let mut c = short(1.0);
        c.vehicle.position = [3.0, 0.1, -1.1];
        let out = run(&c).unwrap();
        assert!(out.records.is_empty());
        assert!(matches!(
            out.outcome,
            RunOutcome::Faulted { t, reason: FaultReason::InsideTarget, .. } if t == 0.0
        ));
    }

    #[test]
    fn invalid_config_is_reported_not_run() {
        let mut c = short(1.0);
        c.gains.k2 = -1.0;
        assert!(
            matches!(run(&c), Err(ConfigError::Invalid { path, .. }) if path == "k2" || path == "gains.k2")
        );
    }

    #[test]
    fn first_record_matches_initial_geometry() {
        let mut c = short(0.002);
        c.noise.enabled = false;
        let out = run(&c).unwrap();
        let r0 = &out.records[0];
        let expected = Vector3::new(3.0, 0.1, 0.8).normalize();
        assert!((r0.b - expected).norm() < 1e-15);
        assert_eq!(r0.r_hat, 1.0);
        assert_eq!(r0.w_used(), Vector3::zeros());
        assert!(!r0.noisy);
    }

    #[test]
    fn batch_preserves_order_and_isolation() {
        let mut a = short(0.1);
        a.noise.rng_seed = 3;
        let mut b = short(0.1);
        b.noise.rng_seed = 4;
        let mut bad = short(0.1);
        bad.r_true = -1.0;
        let results = run_batch(&[a.clone(), bad, b.clone()]);
        assert!(results[1].is_err());
        let ra = results[0].as_ref().unwrap();
        let rb = results[2].as_ref().unwrap();
        assert_eq!(ra.records, run(&a).unwrap().records);
        assert_ne!(ra.records, rb.records);
    }

    #[test]
    fn diagnostics_with_perfect_estimates_are_zero() {
        let mut c = short(0.01);
        c.noise.enabled = false;
        c.observer_init.r_hat = c.r_true;
        c.observer_init.rho_hat = [-0.04, 0.04, 0.0];
        c.gains.k_r = 1e-300;
        c.gains.k_rho = [0.0; 9];
        let s = c.resolve().unwrap();
        let out = Simulation::new(s).run_to_end();
        let d = diagnostics(&out.records, &s.truth, &s.visibility);
        assert!(d.r_tilde.iter().all(|r| r.abs() < 1e-15));
        assert!(d.rho_tilde.iter().all(|r| r.norm() < 1e-15));
        assert_eq!(d.v3_rate.len(), out.records.len() - 1);
    }
}
