//! Eight-state nonlinear single-track model.
//!
//! The five dynamic states `(v, u, r, omega_f, omega_r)` obey
//! `xdot = g(x, u) + B_sigma(u) sigma(h)`, where `sigma` collects the saturated axle
//! loads and tire forces and `h = h(xdot, x, u, sigma)` their unsaturated inputs. The
//! loads depend on the longitudinal acceleration, so `sigma` is only defined implicitly
//! and is resolved by fixed-point iteration. Inertial position and heading follow from
//! the planar kinematics.

use nalgebra::{SMatrix, SVector, Vector3, Vector5, Vector6};

use crate::error::{Error, Result};
use crate::tire::{self, Centering, TireParams};

pub type Vector8 = SVector<f64, 8>;
/// `B_sigma`: maps the six saturated channels into the dynamic-state derivative.
pub type SigmaMatrix = SMatrix<f64, 5, 6>;

/// Saturated channels ordered `(N_f, N_r, F_xf, F_xr, F_yf, F_yr)`; loads per axle,
/// forces per lumped wheel.
pub type SigmaVector = Vector6<f64>;

/// Number of saturated channels.
pub const SIGMA_CHANNELS: usize = 6;
pub const CHANNEL_NAMES: [&str; SIGMA_CHANNELS] = ["N_f", "N_r", "F_xf", "F_xr", "F_yf", "F_yr"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Yaw inertia, kg m^2.
    pub yaw_inertia: f64,
    /// Spin inertia of one lumped wheel, kg m^2.
    pub wheel_inertia: f64,
    /// CG to front axle, m.
    pub ell_f: f64,
    /// CG to rear axle, m.
    pub ell_r: f64,
    /// CG height, m.
    pub cg_height: f64,
    pub tire: TireParams,
    /// Lumped drag coefficient `rho C_d A / 2`, kg/m; drag is `rho_cda v |v|`.
    pub rho_cda: f64,
    /// Rolling-resistance coefficient.
    pub rolling_coeff: f64,
    /// m/s^2
    pub gravity: f64,
    /// Speed below which slip quantities are not evaluated, m/s.
    pub v_min: f64,
    /// Physical steering stop, rad.
    pub max_steer: f64,
    /// Fraction of the axle load carried by the lumped wheel of that axle in the tire,
    /// friction-circle and rolling-resistance formulas; 1 treats the regrouped wheel as
    /// carrying the whole axle load.
    pub wheel_load_share: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1600.0,
            yaw_inertia: 2500.0,
            wheel_inertia: 1.2,
            ell_f: 1.2,
            ell_r: 1.4,
            cg_height: 0.55,
            tire: TireParams::default(),
            rho_cda: 0.40,
            rolling_coeff: 0.012,
            gravity: 9.81,
            v_min: 0.5,
            max_steer: 0.6,
            wheel_load_share: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        self.tire.validate()?;
        let positive = [
            (self.mass, "mass must be positive"),
            (self.yaw_inertia, "yaw inertia must be positive"),
            (self.wheel_inertia, "wheel inertia must be positive"),
            (self.ell_f, "ell_f must be positive"),
            (self.ell_r, "ell_r must be positive"),
            (self.cg_height, "cg height must be positive"),
            (self.rho_cda, "drag coefficient must be positive"),
            (self.rolling_coeff, "rolling coefficient must be positive"),
            (self.gravity, "gravity must be positive"),
            (self.v_min, "v_min must be positive"),
            (self.max_steer, "steering stop must be positive"),
        ];
        for (value, msg) in positive {
            if !(value > 0.0) {
                return Err(Error::InvalidParameter(msg));
            }
        }
        if !(self.wheel_load_share > 0.0 && self.wheel_load_share <= 1.0) {
            return Err(Error::InvalidParameter("wheel load share must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn wheelbase(&self) -> f64 {
        self.ell_f + self.ell_r
    }

    /// Axle loads at rest, `(m g l_r / L, m g l_f / L)`.
    pub fn static_loads(&self) -> (f64, f64) {
        let l = self.wheelbase();
        (self.weight() * self.ell_r / l, self.weight() * self.ell_f / l)
    }
}

/// The five states governed by the rigid-body and wheel-spin equations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DynamicState {
    /// Longitudinal speed, m/s.
    pub v: f64,
    /// Lateral speed, m/s.
    pub u: f64,
    /// Yaw rate, rad/s.
    pub r: f64,
    pub omega_f: f64,
    pub omega_r: f64,
}

impl DynamicState {
    pub fn to_vector(&self) -> Vector5<f64> {
        Vector5::new(self.v, self.u, self.r, self.omega_f, self.omega_r)
    }

    pub fn from_vector(x: &Vector5<f64>) -> Self {
        Self {
            v: x[0],
            u: x[1],
            r: x[2],
            omega_f: x[3],
            omega_r: x[4],
        }
    }
}

/// Full model state, in the order `(v, u, r, omega_f, omega_r, x, y, psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub v: f64,
    pub u: f64,
    pub r: f64,
    pub omega_f: f64,
    pub omega_r: f64,
    /// Inertial position, m.
    pub x: f64,
    pub y: f64,
    /// Yaw angle, rad.
    pub psi: f64,
}

impl VehicleState {
    /// Straight-line rolling at speed `v` with wheels at the pure-rolling speed.
    pub fn rolling(v: f64, r_e: f64) -> Self {
        Self {
            v,
            omega_f: v / r_e,
            omega_r: v / r_e,
            ..Self::default()
        }
    }

    pub fn dynamic(&self) -> DynamicState {
        DynamicState {
            v: self.v,
            u: self.u,
            r: self.r,
            omega_f: self.omega_f,
            omega_r: self.omega_r,
        }
    }

    pub fn to_vector(&self) -> Vector8 {
        Vector8::from_column_slice(&[
            self.v,
            self.u,
            self.r,
            self.omega_f,
            self.omega_r,
            self.x,
            self.y,
            self.psi,
        ])
    }

    pub fn from_vector(s: &Vector8) -> Self {
        Self {
            v: s[0],
            u: s[1],
            r: s[2],
            omega_f: s[3],
            omega_r: s[4],
            x: s[5],
            y: s[6],
            psi: s[7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleInput {
    /// Front steering angle, rad.
    pub delta_f: f64,
    /// Front axle torque, N m.
    pub tau_f: f64,
    /// Rear axle torque, N m.
    pub tau_r: f64,
}

impl VehicleInput {
    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.delta_f, self.tau_f, self.tau_r)
    }

    pub fn from_vector(u: &Vector3<f64>) -> Self {
        Self {
            delta_f: u[0],
            tau_f: u[1],
            tau_r: u[2],
        }
    }
}

/// Aerodynamic drag and per-wheel rolling resistance, N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistiveForces {
    pub aero: f64,
    pub rolling_f: f64,
    pub rolling_r: f64,
}

/// How the six channels are saturated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Saturation {
    #[default]
    Logistic,
    /// `sigma(h) = h`: the smoothed model used for Jacobian cross-checks.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TireLaw {
    #[default]
    Dugoff,
    /// `F_x = c_kappa kappa`, `F_y = c_alpha alpha`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub saturation: Saturation,
    pub centering: Centering,
    pub tire_law: TireLaw,
    /// Absolute sup-norm tolerance on successive sigma iterates, N.
    pub loop_tolerance: f64,
    pub loop_max_iterations: usize,
    /// Relaxation applied to the sigma update whenever the residual grows.
    pub loop_damping: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            saturation: Saturation::Logistic,
            centering: Centering::Midpoint,
            tire_law: TireLaw::Dugoff,
            loop_tolerance: 1e-10,
            loop_max_iterations: 100,
            loop_damping: 0.8,
        }
    }
}

impl ModelOptions {
    /// Identity saturation with linear tires.
    pub fn smoothed() -> Self {
        Self {
            saturation: Saturation::Identity,
            tire_law: TireLaw::Linear,
            ..Self::default()
        }
    }
}

/// Converged solution of the algebraic loop at one `(x, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSolution {
    pub xdot: Vector5<f64>,
    pub sigma: SigmaVector,
    pub h: SigmaVector,
    pub iterations: usize,
    /// `|sigma(h(xdot, x, u, sigma)) - sigma|_inf` of the returned triple.
    pub residual: f64,
}

/// Model parameters plus the variant switches; all evaluations are pure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vehicle {
    pub params: VehicleParams,
    pub options: ModelOptions,
}

impl Vehicle {
    pub fn new(params: VehicleParams) -> Self {
        Self {
            params,
            options: ModelOptions::default(),
        }
    }

    pub fn with_options(params: VehicleParams, options: ModelOptions) -> Self {
        Self { params, options }
    }

    /// Drag `rho_cda v |v|` and per-wheel rolling resistance `f_r s N` from axle loads,
    /// `s` the wheel load share.
    pub fn resistive_forces(&self, v: f64, load_f: f64, load_r: f64) -> ResistiveForces {
        let p = &self.params;
        ResistiveForces {
            aero: p.rho_cda * v * v.abs(),
            rolling_f: p.rolling_coeff * p.wheel_load_share * load_f,
            rolling_r: p.rolling_coeff * p.wheel_load_share * load_r,
        }
    }

    /// Unsaturated axle loads from the quasi-static heave and pitch balances, with the
    /// tire forces eliminated through the longitudinal equation of motion. The loads
    /// sum to the vehicle weight exactly.
    pub fn normal_forces(&self, state: &DynamicState, vdot: f64, input: &VehicleInput) -> Result<(f64, f64)> {
        let p = &self.params;
        let wheelbase = p.wheelbase();
        if !(wheelbase.abs() > f64::EPSILON) {
            return Err(Error::SingularGeometry(wheelbase));
        }
        let rr = p.tire.r_e * p.rolling_coeff;
        let cos_d = libm::cos(input.delta_f);
        let det = p.ell_f + rr * cos_d + p.ell_r - rr;
        if !(det.abs() > f64::EPSILON) {
            return Err(Error::SingularGeometry(det));
        }
        let drag = self.resistive_forces(state.v, 0.0, 0.0).aero;
        let pitch = -p.cg_height * (p.mass * (vdot - state.r * state.u) + drag);
        let load_f = (pitch + p.weight() * (p.ell_r - rr)) / det;
        Ok((load_f, p.weight() - load_f))
    }

    /// Explicit part `g(x, u)` of the dynamic-state derivative.
    pub fn explicit_part(&self, state: &DynamicState, input: &VehicleInput) -> Vector5<f64> {
        let p = &self.params;
        let drag = self.resistive_forces(state.v, 0.0, 0.0).aero;
        Vector5::new(
            state.r * state.u - drag / p.mass,
            -state.r * state.v,
            0.0,
            input.tau_f / p.wheel_inertia,
            input.tau_r / p.wheel_inertia,
        )
    }

    /// `B_sigma(u)`. Front-tire forces and rolling resistance rotate with the steering
    /// angle; both axles carry two tires.
    pub fn sigma_matrix(&self, input: &VehicleInput) -> SigmaMatrix {
        let p = &self.params;
        let (s, c) = libm::sincos(input.delta_f);
        let m = p.mass;
        let iz = p.yaw_inertia;
        let fr = p.rolling_coeff;
        let spin = -2.0 * p.tire.r_e / p.wheel_inertia;
        #[rustfmt::skip]
        let b = SigmaMatrix::from_row_slice(&[
            -fr * c / m,            -fr / m, 2.0 * c / m,            2.0 / m, -2.0 * s / m,           0.0,
            -fr * s / m,            0.0,     2.0 * s / m,            0.0,     2.0 * c / m,            2.0 / m,
            -fr * s * p.ell_f / iz, 0.0,     2.0 * s * p.ell_f / iz, 0.0,     2.0 * c * p.ell_f / iz, -2.0 * p.ell_r / iz,
            0.0,                    0.0,     spin,                   0.0,     0.0,                    0.0,
            0.0,                    0.0,     0.0,                    spin,    0.0,                    0.0,
        ]);
        b
    }

    /// Unsaturated per-wheel forces for the given wheel loads.
    pub fn tire_forces(
        &self,
        state: &DynamicState,
        input: &VehicleInput,
        wheel_load_f: f64,
        wheel_load_r: f64,
    ) -> Result<tire::PlanarForces> {
        let slip = tire::slip_quantities(state, input, &self.params)?;
        let t = &self.params.tire;
        let ((fx_f, fy_f), (fx_r, fy_r)) = match self.options.tire_law {
            TireLaw::Dugoff => (
                tire::dugoff_forces(t, wheel_load_f, slip.kappa_f, slip.alpha_f)?,
                tire::dugoff_forces(t, wheel_load_r, slip.kappa_r, slip.alpha_r)?,
            ),
            TireLaw::Linear => (
                (t.c_kappa * slip.kappa_f, t.c_alpha * slip.alpha_f),
                (t.c_kappa * slip.kappa_r, t.c_alpha * slip.alpha_r),
            ),
        };
        Ok(tire::PlanarForces { fx_f, fx_r, fy_f, fy_r })
    }

    /// Saturation inputs `h(xdot, x, u, sigma)`: unsaturated axle loads, then the
    /// unsaturated tire forces evaluated on the saturated loads carried in `sigma`.
    pub fn sigma_inputs(
        &self,
        xdot: &Vector5<f64>,
        state: &DynamicState,
        input: &VehicleInput,
        sigma: &SigmaVector,
    ) -> Result<SigmaVector> {
        let (load_f, load_r) = self.normal_forces(state, xdot[0], input)?;
        let share = self.params.wheel_load_share;
        let f = self.tire_forces(state, input, share * sigma[0], share * sigma[1])?;
        Ok(SigmaVector::new(load_f, load_r, f.fx_f, f.fx_r, f.fy_f, f.fy_r))
    }

    /// `sigma(h)`: loads saturated to `[0, m g]`, then each tire through its friction circle.
    pub fn saturate(&self, h: &SigmaVector) -> SigmaVector {
        match self.options.saturation {
            Saturation::Identity => *h,
            Saturation::Logistic => {
                let c = self.options.centering;
                let weight = self.params.weight();
                let load_f = tire::logistic_with(h[0], weight, 0.0, c).unwrap_or(0.0);
                let load_r = tire::logistic_with(h[1], weight, 0.0, c).unwrap_or(0.0);
                let mu = self.params.tire.mu;
                let share = self.params.wheel_load_share;
                let (fx_f, fy_f) = tire::saturate_wheel(h[2], h[4], mu, share * load_f, c);
                let (fx_r, fy_r) = tire::saturate_wheel(h[3], h[5], mu, share * load_r, c);
                SigmaVector::new(load_f, load_r, fx_f, fx_r, fy_f, fy_r)
            }
        }
    }

    /// Sector centre of each channel: half the weight for the loads, zero for forces.
    pub fn channel_centres(&self) -> SigmaVector {
        match self.options.saturation {
            Saturation::Identity => SigmaVector::zeros(),
            Saturation::Logistic => {
                let half = 0.5 * self.params.weight();
                SigmaVector::new(half, half, 0.0, 0.0, 0.0, 0.0)
            }
        }
    }

    /// Fixed point `sigma = sigma(h(g + B_sigma sigma, x, u, sigma))` by successive
    /// substitution, starting from the static loads and zero forces.
    pub fn resolve_algebraic_loop(&self, state: &DynamicState, input: &VehicleInput) -> Result<LoopSolution> {
        let opts = &self.options;
        let g = self.explicit_part(state, input);
        let b_sigma = self.sigma_matrix(input);
        let (nf, nr) = self.params.static_loads();
        let mut sigma = SigmaVector::new(nf, nr, 0.0, 0.0, 0.0, 0.0);
        let mut previous = f64::INFINITY;
        let mut residual = f64::INFINITY;

        for iteration in 1..=opts.loop_max_iterations {
            let xdot = g + b_sigma * sigma;
            let h = self.sigma_inputs(&xdot, state, input, &sigma)?;
            let next = self.saturate(&h);
            residual = (next - sigma).amax();
            if !residual.is_finite() {
                break;
            }
            if residual < opts.loop_tolerance {
                let sigma = next;
                let xdot = g + b_sigma * sigma;
                let h = self.sigma_inputs(&xdot, state, input, &sigma)?;
                let residual = (self.saturate(&h) - sigma).amax();
                return Ok(LoopSolution {
                    xdot,
                    sigma,
                    h,
                    iterations: iteration,
                    residual,
                });
            }
            if residual > previous {
                sigma += opts.loop_damping * (next - sigma);
            } else {
                sigma = next;
            }
            previous = residual;
        }
        Err(Error::LoopDiverged {
            iterations: opts.loop_max_iterations,
            residual,
        })
    }

    /// Planar kinematics: inertial velocity is `(v, u)` rotated by `psi`.
    pub fn pose_rates(state: &VehicleState) -> Vector3<f64> {
        let (s, c) = libm::sincos(state.psi);
        Vector3::new(state.v * c - state.u * s, state.u * c + state.v * s, state.r)
    }

    /// Full eight-state derivative, returned with the loop solution it used.
    pub fn evaluate(&self, state: &VehicleState, input: &VehicleInput) -> Result<(Vector8, LoopSolution)> {
        let sol = self.resolve_algebraic_loop(&state.dynamic(), input)?;
        let pose = Self::pose_rates(state);
        let mut d = Vector8::zeros();
        d.fixed_rows_mut::<5>(0).copy_from(&sol.xdot);
        d.fixed_rows_mut::<3>(5).copy_from(&pose);
        Ok((d, sol))
    }

    pub fn state_derivative(&self, state: &VehicleState, input: &VehicleInput) -> Result<Vector8> {
        self.evaluate(state, input).map(|(d, _)| d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vehicle() -> Vehicle {
        Vehicle::new(VehicleParams::default())
    }

    #[test]
    fn loads_sum_to_weight() {
        let veh = vehicle();
        let s = DynamicState {
            v: 19.0,
            u: 0.4,
            r: 0.2,
            omega_f: 60.0,
            omega_r: 61.0,
        };
        for vdot in [-6.0, -1.0, 0.0, 2.5] {
            let (nf, nr) = veh.normal_forces(&s, vdot, &VehicleInput::default()).unwrap();
            let w = veh.params.weight();
            assert!(((nf + nr) - w).abs() <= 1e-9 * w);
        }
    }

    #[test]
    fn static_split_without_resistance() {
        let p = VehicleParams {
            rolling_coeff: 1e-300,
            ..VehicleParams::default()
        };
        let veh = Vehicle::new(p);
        let s = DynamicState::default();
        let (nf, nr) = veh.normal_forces(&s, 0.0, &VehicleInput::default()).unwrap();
        let (ef, er) = p.static_loads();
        assert!((nf - ef).abs() < 1e-9 && (nr - er).abs() < 1e-9);
    }

    #[test]
    fn braking_moves_load_forward() {
        let veh = vehicle();
        let s = DynamicState {
            v: 20.0,
            ..DynamicState::default()
        };
        let (coast, _) = veh.normal_forces(&s, 0.0, &VehicleInput::default()).unwrap();
        let (brake, _) = veh.normal_forces(&s, -3.0, &VehicleInput::default()).unwrap();
        assert!(brake > coast);
    }

    #[test]
    fn resistive_forces_vanish_at_rest() {
        let veh = vehicle();
        let r = veh.resistive_forces(0.0, 5000.0, 5000.0);
        assert_eq!(r.aero, 0.0);
        let r = veh.resistive_forces(19.44, 0.0, 0.0);
        assert_eq!((r.rolling_f, r.rolling_r), (0.0, 0.0));
        assert!(r.aero > 0.0);
    }

    #[test]
    fn straight_rolling_only_decelerates() {
        let veh = vehicle();
        let st = VehicleState::rolling(20.0, veh.params.tire.r_e);
        let (d, sol) = veh.evaluate(&st, &VehicleInput::default()).unwrap();
        assert!(d[0] < 0.0);
        assert!(d[1].abs() < 1e-12 && d[2].abs() < 1e-12);
        assert!(sol.sigma[4].abs() < 1e-12 && sol.sigma[5].abs() < 1e-12);
        assert!(sol.residual < 1e-10);
        let (nf, nr) = veh.params.static_loads();
        assert!((sol.sigma[0] - nf).abs() < 5e-3 * nf);
        assert!((sol.sigma[1] - nr).abs() < 5e-3 * nr);
    }

    #[test]
    fn kinematics_rotate_with_heading() {
        let mut st = VehicleState::rolling(20.0, 0.3);
        st.u = 0.7;
        let p = Vehicle::pose_rates(&st);
        assert!((p[0] - 20.0).abs() < 1e-12 && (p[1] - 0.7).abs() < 1e-12);
        st.psi = core::f64::consts::FRAC_PI_2;
        let p = Vehicle::pose_rates(&st);
        assert!((p[0] + 0.7).abs() < 1e-12 && (p[1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn zero_steer_decouples_axes_in_b_sigma() {
        let b = vehicle().sigma_matrix(&VehicleInput::default());
        // longitudinal row takes no lateral force and lateral rows take no longitudinal force
        assert_eq!(b[(0, 4)], 0.0);
        assert_eq!(b[(1, 2)], 0.0);
        assert_eq!(b[(2, 2)], 0.0);
        assert_eq!(b[(1, 0)], 0.0);
    }

    #[test]
    fn degenerate_speed_is_reported() {
        let veh = vehicle();
        let st = VehicleState::rolling(0.1, 0.3);
        assert!(matches!(
            veh.evaluate(&st, &VehicleInput::default()),
            Err(Error::DegenerateSpeed { .. })
        ));
    }
}
