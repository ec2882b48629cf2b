//! Run configuration: one TOML file, every dimensional key carries its unit.

use std::path::Path;

use lpv_core::lmi::{vertical_strip_region, SynthesisMode, SynthesisOptions};
use lpv_core::sdp::SolverOptions;
use lpv_core::sim::{ClosedLoopSettings, ManeuverPlan, SteeringProfile, SweepGrid};
use lpv_core::tire::TireParams;
use lpv_core::vehicle::{Vehicle, VehicleParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub mass_kg: f64,
    pub yaw_inertia_kg_m2: f64,
    pub wheel_inertia_kg_m2: f64,
    pub ell_f_m: f64,
    pub ell_r_m: f64,
    pub cg_height_m: f64,
    pub wheel_radius_m: f64,
    pub c_kappa_n: f64,
    pub c_alpha_n_per_rad: f64,
    pub friction_coefficient: f64,
    pub rho_cda_kg_per_m: f64,
    pub rolling_coefficient: f64,
    pub gravity_m_per_s2: f64,
    pub v_min_m_per_s: f64,
    pub max_steer_rad: f64,
    pub wheel_load_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteeringKind {
    Sine,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverConfig {
    pub initial_speed_m_per_s: f64,
    pub steering: SteeringKind,
    pub sine_period_s: f64,
    /// Used as given when no lateral target is set.
    pub sine_amplitude_rad: f64,
    /// Calibrates the sine amplitude to this final displacement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lateral_target_m: Option<f64>,
    pub tau_f_n_m: f64,
    pub tau_r_n_m: f64,
    pub duration_s: f64,
    pub time_step_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizationConfig {
    /// Entries of the five-state block promoted to polytope parameters.
    pub parameter_count: usize,
    pub fd_relative_step: f64,
    pub loop_tolerance_n: f64,
    pub loop_max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Contractivity,
    Dstab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub mode: ModeKind,
    pub beta_per_s: f64,
    pub strip_max_per_s: f64,
    pub strip_min_per_s: f64,
    /// After feasibility, minimize the gain measured against the actuator limits.
    pub minimize_gain: bool,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub max_steer_rad: f64,
    pub max_torque_n_m: f64,
    pub blowup_bound: f64,
    pub position_threshold_m: f64,
    pub speed_threshold_m_per_s: f64,
    /// `(dv, du)` initial offsets, m/s.
    pub offsets_m_per_s: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dv_min_m_per_s: f64,
    pub dv_max_m_per_s: f64,
    pub du_min_m_per_s: f64,
    pub du_max_m_per_s: f64,
    pub step_m_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: String,
    pub vehicle: VehicleConfig,
    pub maneuver: ManeuverConfig,
    pub linearization: LinearizationConfig,
    pub synthesis: SynthesisConfig,
    pub simulation: SimulationConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = VehicleParams::default();
        let m = ManeuverPlan::default();
        let period = match m.steering {
            SteeringProfile::Sine { period, .. } => period,
            SteeringProfile::Zero => 4.0,
        };
        let cl = ClosedLoopSettings::default();
        Self {
            output_dir: "out".into(),
            vehicle: VehicleConfig {
                mass_kg: p.mass,
                yaw_inertia_kg_m2: p.yaw_inertia,
                wheel_inertia_kg_m2: p.wheel_inertia,
                ell_f_m: p.ell_f,
                ell_r_m: p.ell_r,
                cg_height_m: p.cg_height,
                wheel_radius_m: p.tire.r_e,
                c_kappa_n: p.tire.c_kappa,
                c_alpha_n_per_rad: p.tire.c_alpha,
                friction_coefficient: p.tire.mu,
                rho_cda_kg_per_m: p.rho_cda,
                rolling_coefficient: p.rolling_coeff,
                gravity_m_per_s2: p.gravity,
                v_min_m_per_s: p.v_min,
                max_steer_rad: p.max_steer,
                wheel_load_share: p.wheel_load_share,
            },
            maneuver: ManeuverConfig {
                initial_speed_m_per_s: m.initial_speed,
                steering: SteeringKind::Sine,
                sine_period_s: period,
                sine_amplitude_rad: 0.0,
                lateral_target_m: m.lateral_target,
                tau_f_n_m: m.tau_f,
                tau_r_n_m: m.tau_r,
                duration_s: m.duration,
                time_step_s: 1e-3,
            },
            linearization: LinearizationConfig {
                parameter_count: 6,
                fd_relative_step: lpv_core::linearize::FD_STEP,
                loop_tolerance_n: 1e-10,
                loop_max_iterations: 100,
            },
            synthesis: SynthesisConfig {
                mode: ModeKind::Dstab,
                beta_per_s: 2.0,
                strip_max_per_s: -2.0,
                strip_min_per_s: -40.0,
                minimize_gain: true,
                max_iterations: SolverOptions::default().max_iterations,
            },
            simulation: SimulationConfig {
                max_steer_rad: cl.max_steer,
                max_torque_n_m: cl.max_torque,
                blowup_bound: cl.blowup_bound,
                position_threshold_m: cl.position_threshold,
                speed_threshold_m_per_s: cl.speed_threshold,
                offsets_m_per_s: vec![[0.3, 0.3]],
            },
            sweep: SweepConfig {
                dv_min_m_per_s: -0.8,
                dv_max_m_per_s: 0.8,
                du_min_m_per_s: -0.8,
                du_max_m_per_s: 0.8,
                step_m_per_s: 0.05,
            },
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form: fixed key order, every key present.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.vehicle_params()?;
        let m = &self.maneuver;
        check(
            m.initial_speed_m_per_s > 0.0,
            "maneuver.initial_speed_m_per_s must be positive",
        )?;
        check(m.sine_period_s > 0.0, "maneuver.sine_period_s must be positive")?;
        check(m.duration_s > 0.0, "maneuver.duration_s must be positive")?;
        check(
            m.time_step_s > 0.0 && m.time_step_s <= 0.01,
            "maneuver.time_step_s must lie in (0, 0.01]",
        )?;
        check(
            m.sine_amplitude_rad.is_finite(),
            "maneuver.sine_amplitude_rad must be finite",
        )?;
        check(
            m.lateral_target_m.is_none_or(|t| t.is_finite()),
            "maneuver.lateral_target_m must be finite",
        )?;
        let l = &self.linearization;
        check(
            l.parameter_count <= lpv_core::linearize::MAX_PARAMETERS - 2,
            "linearization.parameter_count must be at most 10",
        )?;
        check(
            l.fd_relative_step > 0.0 && l.fd_relative_step < 1e-2,
            "linearization.fd_relative_step must lie in (0, 0.01)",
        )?;
        check(
            l.loop_tolerance_n > 0.0,
            "linearization.loop_tolerance_n must be positive",
        )?;
        check(
            l.loop_max_iterations > 0,
            "linearization.loop_max_iterations must be positive",
        )?;
        let s = &self.synthesis;
        check(s.beta_per_s > 0.0, "synthesis.beta_per_s must be positive")?;
        check(
            s.strip_min_per_s < s.strip_max_per_s && s.strip_max_per_s < 0.0,
            "synthesis strip needs strip_min_per_s < strip_max_per_s < 0",
        )?;
        check(s.max_iterations > 0, "synthesis.max_iterations must be positive")?;
        let c = &self.simulation;
        check(c.max_steer_rad > 0.0, "simulation.max_steer_rad must be positive")?;
        check(c.max_torque_n_m > 0.0, "simulation.max_torque_n_m must be positive")?;
        check(c.blowup_bound > 0.0, "simulation.blowup_bound must be positive")?;
        check(
            c.position_threshold_m > 0.0,
            "simulation.position_threshold_m must be positive",
        )?;
        check(
            c.speed_threshold_m_per_s > 0.0,
            "simulation.speed_threshold_m_per_s must be positive",
        )?;
        check(
            c.offsets_m_per_s.iter().flatten().all(|x| x.is_finite()),
            "simulation.offsets_m_per_s must be finite",
        )?;
        let w = &self.sweep;
        check(w.step_m_per_s > 0.0, "sweep.step_m_per_s must be positive")?;
        check(
            w.dv_min_m_per_s <= w.dv_max_m_per_s && w.du_min_m_per_s <= w.du_max_m_per_s,
            "sweep ranges must have min <= max",
        )?;
        let (nv, nu) = self.sweep_grid().shape();
        check(nv * nu <= 1_000_000, "sweep grid exceeds one million points")?;
        Ok(())
    }

    pub fn vehicle_params(&self) -> Result<VehicleParams, CliError> {
        let v = &self.vehicle;
        let p = VehicleParams {
            mass: v.mass_kg,
            yaw_inertia: v.yaw_inertia_kg_m2,
            wheel_inertia: v.wheel_inertia_kg_m2,
            ell_f: v.ell_f_m,
            ell_r: v.ell_r_m,
            cg_height: v.cg_height_m,
            tire: TireParams {
                c_kappa: v.c_kappa_n,
                c_alpha: v.c_alpha_n_per_rad,
                mu: v.friction_coefficient,
                r_e: v.wheel_radius_m,
            },
            rho_cda: v.rho_cda_kg_per_m,
            rolling_coeff: v.rolling_coefficient,
            gravity: v.gravity_m_per_s2,
            v_min: v.v_min_m_per_s,
            max_steer: v.max_steer_rad,
            wheel_load_share: v.wheel_load_share,
        };
        p.validate().map_err(|e| CliError::Config(format!("vehicle: {e}")))?;
        Ok(p)
    }

    pub fn vehicle(&self) -> Result<Vehicle, CliError> {
        let mut vehicle = Vehicle::new(self.vehicle_params()?);
        vehicle.options.loop_tolerance = self.linearization.loop_tolerance_n;
        vehicle.options.loop_max_iterations = self.linearization.loop_max_iterations;
        Ok(vehicle)
    }

    pub fn maneuver(&self) -> ManeuverPlan {
        let m = &self.maneuver;
        ManeuverPlan {
            initial_speed: m.initial_speed_m_per_s,
            steering: match m.steering {
                SteeringKind::Zero => SteeringProfile::Zero,
                SteeringKind::Sine => SteeringProfile::Sine {
                    amplitude: m.sine_amplitude_rad,
                    period: m.sine_period_s,
                },
            },
            tau_f: m.tau_f_n_m,
            tau_r: m.tau_r_n_m,
            duration: m.duration_s,
            lateral_target: match m.steering {
                SteeringKind::Zero => None,
                SteeringKind::Sine => m.lateral_target_m,
            },
        }
    }

    pub fn synthesis_mode(&self) -> Result<SynthesisMode, CliError> {
        let s = &self.synthesis;
        Ok(match s.mode {
            ModeKind::Contractivity => SynthesisMode::Contractivity { beta: s.beta_per_s },
            ModeKind::Dstab => SynthesisMode::DStability(
                vertical_strip_region(s.strip_max_per_s, s.strip_min_per_s)
                    .map_err(|e| CliError::Config(format!("synthesis: {e}")))?,
            ),
        })
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        let c = &self.simulation;
        SynthesisOptions {
            solver: SolverOptions {
                max_iterations: self.synthesis.max_iterations,
                ..SolverOptions::default()
            },
            gain_scale: self
                .synthesis
                .minimize_gain
                .then(|| vec![c.max_steer_rad, c.max_torque_n_m, c.max_torque_n_m]),
        }
    }

    pub fn closed_loop(&self) -> ClosedLoopSettings {
        let c = &self.simulation;
        ClosedLoopSettings {
            max_steer: c.max_steer_rad,
            max_torque: c.max_torque_n_m,
            blowup_bound: c.blowup_bound,
            position_threshold: c.position_threshold_m,
            speed_threshold: c.speed_threshold_m_per_s,
        }
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        let w = &self.sweep;
        SweepGrid {
            dv_min: w.dv_min_m_per_s,
            dv_max: w.dv_max_m_per_s,
            du_min: w.du_min_m_per_s,
            du_max: w.du_max_m_per_s,
            step: w.step_m_per_s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHIPPED: &str = include_str!("../../../configs/default.toml");

    #[test]
    fn shipped_file_is_the_default() {
        assert_eq!(RunConfig::parse(SHIPPED).unwrap(), RunConfig::default());
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = RunConfig::default().to_canonical();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, RunConfig::default());
        assert_eq!(back.to_canonical(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SHIPPED.replace("mass_kg", "mass");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = RunConfig::default();
        c.synthesis.strip_max_per_s = -50.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.vehicle.mass_kg = -1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.linearization.parameter_count = 11;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_steering_drops_the_target() {
        let mut c = RunConfig::default();
        c.maneuver.steering = SteeringKind::Zero;
        assert_eq!(c.maneuver().lateral_target, None);
    }
}
