//! Reference maneuver generation, fixed-step integration and closed-loop tracking.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{SMatrix, Vector3, Vector5};

use crate::error::{Error, Result};
use crate::vehicle::{SigmaVector, Vector8, Vehicle, VehicleInput, VehicleState};

/// Static state-feedback gain acting on the eight error states.
pub type Gain = SMatrix<f64, 3, 8>;

/// Error coordinates are ordered `(dv, du, dr, d omega_f, d omega_r, x_L, y_L, d psi)`.
pub const ERROR_NAMES: [&str; 8] = ["dv", "du", "dr", "domega_f", "domega_r", "x_L", "y_L", "dpsi"];

/// Steering command as a function of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteeringProfile {
    Zero,
    /// One full period `A sin(2 pi t / T)` on `[0, T]`, zero afterwards: left then right.
    Sine {
        amplitude: f64,
        period: f64,
    },
}

impl SteeringProfile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            SteeringProfile::Zero => 0.0,
            SteeringProfile::Sine { amplitude, period } => {
                if (0.0..=period).contains(&t) {
                    amplitude * libm::sin(2.0 * PI * t / period)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            SteeringProfile::Zero => SteeringProfile::Zero,
            SteeringProfile::Sine { amplitude, period } => SteeringProfile::Sine {
                amplitude: amplitude * factor,
                period,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverPlan {
    /// m/s
    pub initial_speed: f64,
    pub steering: SteeringProfile,
    /// Constant axle torques, N m.
    pub tau_f: f64,
    pub tau_r: f64,
    /// s
    pub duration: f64,
    /// Required final lateral displacement, m; accepted within +-10 %.
    pub lateral_target: Option<f64>,
}

impl Default for ManeuverPlan {
    fn default() -> Self {
        Self {
            initial_speed: 70.0 / 3.6,
            steering: SteeringProfile::Sine {
                amplitude: 0.0,
                period: 4.0,
            },
            tau_f: 0.0,
            tau_r: 0.0,
            duration: 6.0,
            lateral_target: Some(6.0),
        }
    }
}

impl ManeuverPlan {
    pub fn input_at(&self, t: f64) -> VehicleInput {
        VehicleInput {
            delta_f: self.steering.at(t),
            tau_f: self.tau_f,
            tau_r: self.tau_r,
        }
    }

    pub fn steps(&self, dt: f64) -> usize {
        libm::round(self.duration / dt) as usize
    }
}

/// One sample of the reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    pub state: VehicleState,
    pub input: VehicleInput,
    /// Full eight-state derivative.
    pub xdot: Vector8,
    pub sigma: SigmaVector,
    pub h: SigmaVector,
    pub loop_iterations: usize,
    pub loop_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub dt: f64,
    pub plan: ManeuverPlan,
    pub samples: Vec<ReferenceSample>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn final_lateral_displacement(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.state.y)
    }

    pub fn peak_abs_heading(&self) -> f64 {
        self.samples.iter().map(|s| s.state.psi.abs()).fold(0.0, f64::max)
    }
}

/// Classical four-stage Runge-Kutta step with the input held over the step.
pub fn integrate_step(vehicle: &Vehicle, state: &Vector8, input: &VehicleInput, dt: f64) -> Result<Vector8> {
    integrate_step_with(vehicle, state, 0.0, dt, |_| *input)
}

/// Runge-Kutta step with a time-varying input evaluated at the stage times.
pub fn integrate_step_with<F>(vehicle: &Vehicle, state: &Vector8, t: f64, dt: f64, input: F) -> Result<Vector8>
where
    F: Fn(f64) -> VehicleInput,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("time step must be positive"));
    }
    let f = |s: &Vector8, time: f64| vehicle.state_derivative(&VehicleState::from_vector(s), &input(time));
    let k1 = f(state, t)?;
    let k2 = f(&(state + 0.5 * dt * k1), t + 0.5 * dt)?;
    let k3 = f(&(state + 0.5 * dt * k2), t + 0.5 * dt)?;
    let k4 = f(&(state + dt * k3), t + dt)?;
    Ok(state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

fn initial_state(vehicle: &Vehicle, plan: &ManeuverPlan) -> VehicleState {
    VehicleState::rolling(plan.initial_speed, vehicle.params.tire.r_e)
}

/// Open-loop lateral displacement at the end of the maneuver.
pub fn open_loop_displacement(vehicle: &Vehicle, plan: &ManeuverPlan, dt: f64) -> Result<f64> {
    let mut s = initial_state(vehicle, plan).to_vector();
    for k in 0..plan.steps(dt) {
        s = integrate_step_with(vehicle, &s, k as f64 * dt, dt, |t| plan.input_at(t))?;
    }
    Ok(s[6])
}

/// Sine amplitude giving `target` metres of final lateral displacement, by bisection.
pub fn calibrate_sine_amplitude(vehicle: &Vehicle, plan: &ManeuverPlan, target: f64, dt: f64) -> Result<f64> {
    let period = match plan.steering {
        SteeringProfile::Sine { period, .. } => period,
        SteeringProfile::Zero => return Err(Error::ManeuverInfeasible("cannot calibrate a zero steering profile")),
    };
    let with = |a: f64| ManeuverPlan {
        steering: SteeringProfile::Sine { amplitude: a, period },
        ..*plan
    };
    let displacement = |a: f64| {
        open_loop_displacement(vehicle, &with(a), dt)
            .map_err(|_| Error::ManeuverInfeasible("open-loop integration failed during calibration"))
    };
    let mut lo = 0.0;
    let mut hi = 0.01;
    while displacement(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > vehicle.params.max_steer {
            return Err(Error::ManeuverInfeasible(
                "target displacement needs more than the steering stop",
            ));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let d = displacement(mid)?;
        if (d - target).abs() <= 1e-6 * target.abs().max(1.0) {
            return Ok(mid);
        }
        if d < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Integrates the nonlinear model open loop under `plan` and stores every sample
/// together with its resolved algebraic loop.
pub fn generate_reference(vehicle: &Vehicle, plan: &ManeuverPlan, dt: f64) -> Result<ReferenceTrajectory> {
    let steps = plan.steps(dt);
    let mut samples = Vec::with_capacity(steps + 1);
    let mut s = initial_state(vehicle, plan).to_vector();
    let infeasible = |_| Error::ManeuverInfeasible("algebraic loop failed along the maneuver");
    for k in 0..=steps {
        let t = k as f64 * dt;
        let state = VehicleState::from_vector(&s);
        let input = plan.input_at(t);
        let (xdot, sol) = vehicle.evaluate(&state, &input).map_err(infeasible)?;
        samples.push(ReferenceSample {
            t,
            state,
            input,
            xdot,
            sigma: sol.sigma,
            h: sol.h,
            loop_iterations: sol.iterations,
            loop_residual: sol.residual,
        });
        if k < steps {
            s = integrate_step_with(vehicle, &s, t, dt, |tt| plan.input_at(tt)).map_err(infeasible)?;
        }
    }
    let reference = ReferenceTrajectory {
        dt,
        plan: *plan,
        samples,
    };
    if reference.peak_abs_heading() >= PI / 4.0 {
        return Err(Error::ManeuverInfeasible("heading leaves the small-angle regime"));
    }
    if let Some(target) = plan.lateral_target {
        let y = reference.final_lateral_displacement();
        if (y - target).abs() > 0.1 * target.abs() {
            return Err(Error::ManeuverInfeasible(
                "final lateral displacement misses the target band",
            ));
        }
    }
    Ok(reference)
}

/// Actuator limits and divergence/convergence thresholds for closed-loop runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopSettings {
    pub max_steer: f64,
    pub max_torque: f64,
    /// Any error coordinate beyond this magnitude counts as divergence.
    pub blowup_bound: f64,
    /// Terminal bound on `|(x_L, y_L)|_inf`, m.
    pub position_threshold: f64,
    /// Terminal bound on `|(dv, du)|_inf`, m/s.
    pub speed_threshold: f64,
}

impl Default for ClosedLoopSettings {
    fn default() -> Self {
        Self {
            max_steer: 0.6,
            max_torque: 3000.0,
            blowup_bound: 50.0,
            position_threshold: 0.1,
            speed_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimStatus {
    Converged,
    /// Ran to the end without meeting the terminal thresholds.
    NotConverged,
    Diverged {
        time: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub states: Vec<VehicleState>,
    /// Inputs actually applied (after clamping).
    pub inputs: Vec<VehicleInput>,
    pub errors: Vec<Vector8>,
    pub loop_residuals: Vec<f64>,
    /// Largest unclamped command magnitudes `(delta_f, tau_f, tau_r)`.
    pub peak_command: Vector3<f64>,
    pub status: SimStatus,
}

impl SimTrace {
    pub fn terminal_error(&self) -> Option<&Vector8> {
        self.errors.last()
    }

    /// `|(x_L, y_L, dv, du)|_inf` at the last recorded sample.
    pub fn terminal_error_norm(&self) -> f64 {
        self.terminal_error().map_or(f64::INFINITY, |e| {
            e[5].abs().max(e[6].abs()).max(e[0].abs()).max(e[1].abs())
        })
    }

    /// Largest applied `|delta_f|`, `|tau_f|`, `|tau_r|` over the run.
    pub fn peak_command(&self) -> VehicleInput {
        self.inputs.iter().fold(VehicleInput::default(), |m, u| VehicleInput {
            delta_f: m.delta_f.max(u.delta_f.abs()),
            tau_f: m.tau_f.max(u.tau_f.abs()),
            tau_r: m.tau_r.max(u.tau_r.abs()),
        })
    }

    pub fn converged(&self) -> bool {
        self.status == SimStatus::Converged
    }

    pub fn into_result(self) -> Result<SimTrace> {
        match self.status {
            SimStatus::Diverged { time } => Err(Error::Diverged { time }),
            _ => Ok(self),
        }
    }
}

/// Error coordinates of `state` relative to a reference sample.
pub fn error_state(state: &VehicleState, reference: &VehicleState) -> Vector8 {
    Vector8::from_column_slice(&[
        state.v - reference.v,
        state.u - reference.u,
        state.r - reference.r,
        state.omega_f - reference.omega_f,
        state.omega_r - reference.omega_r,
        state.x - reference.x,
        state.y - reference.y,
        state.psi - reference.psi,
    ])
}

/// Reference state displaced by an offset given in error coordinates.
pub fn offset_state(reference: &VehicleState, offset: &Vector8) -> VehicleState {
    VehicleState {
        v: reference.v + offset[0],
        u: reference.u + offset[1],
        r: reference.r + offset[2],
        omega_f: reference.omega_f + offset[3],
        omega_r: reference.omega_r + offset[4],
        x: reference.x + offset[5],
        y: reference.y + offset[6],
        psi: reference.psi + offset[7],
    }
}

/// Offset of `(dv, du)` with both wheels rolling at the perturbed speed.
pub fn speed_offset(vehicle: &Vehicle, dv: f64, du: f64) -> Vector8 {
    let mut offset = Vector8::zeros();
    offset[0] = dv;
    offset[1] = du;
    offset[3] = dv / vehicle.params.tire.r_e;
    offset[4] = offset[3];
    offset
}

/// Tracks the reference with `u = u_0(t) + K dx`, the command held over each step and
/// clamped to the actuator limits.
pub fn simulate_closed_loop(
    vehicle: &Vehicle,
    gain: &Gain,
    reference: &ReferenceTrajectory,
    offset: &Vector8,
    settings: &ClosedLoopSettings,
) -> SimTrace {
    let n = reference.samples.len();
    let mut trace = SimTrace {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        errors: Vec::with_capacity(n),
        loop_residuals: Vec::with_capacity(n),
        peak_command: Vector3::zeros(),
        status: SimStatus::NotConverged,
    };
    let Some(first) = reference.samples.first() else {
        return trace;
    };
    if !gain.iter().all(|k| k.is_finite()) {
        trace.status = SimStatus::Diverged { time: first.t };
        return trace;
    }
    let mut state = offset_state(&first.state, offset);
    for (k, sample) in reference.samples.iter().enumerate() {
        let err = error_state(&state, &sample.state);
        if err.iter().any(|e| !e.is_finite() || e.abs() > settings.blowup_bound) {
            trace.status = SimStatus::Diverged { time: sample.t };
            return trace;
        }
        let command = sample.input.to_vector() + gain * err;
        trace.peak_command = trace.peak_command.zip_map(&command, |p, c| p.max(c.abs()));
        let applied = VehicleInput {
            delta_f: command[0].clamp(-settings.max_steer, settings.max_steer),
            tau_f: command[1].clamp(-settings.max_torque, settings.max_torque),
            tau_r: command[2].clamp(-settings.max_torque, settings.max_torque),
        };
        let residual = match vehicle.resolve_algebraic_loop(&state.dynamic(), &applied) {
            Ok(sol) => sol.residual,
            Err(_) => {
                trace.status = SimStatus::Diverged { time: sample.t };
                return trace;
            }
        };
        trace.times.push(sample.t);
        trace.states.push(state);
        trace.inputs.push(applied);
        trace.errors.push(err);
        trace.loop_residuals.push(residual);
        if k + 1 < n {
            match integrate_step(vehicle, &state.to_vector(), &applied, reference.dt) {
                Ok(next) => state = VehicleState::from_vector(&next),
                Err(_) => {
                    trace.status = SimStatus::Diverged { time: sample.t };
                    return trace;
                }
            }
        }
    }
    let e = trace.errors.last().copied().unwrap_or_else(Vector8::zeros);
    let position = e[5].abs().max(e[6].abs());
    let speed = e[0].abs().max(e[1].abs());
    if position < settings.position_threshold && speed < settings.speed_threshold {
        trace.status = SimStatus::Converged;
    }
    trace
}

/// Rectangular grid of initial `(dv, du)` offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub dv_min: f64,
    pub dv_max: f64,
    pub du_min: f64,
    pub du_max: f64,
    pub step: f64,
}

impl SweepGrid {
    fn count(lo: f64, hi: f64, step: f64) -> usize {
        if hi <= lo || step <= 0.0 {
            1
        } else {
            libm::round((hi - lo) / step) as usize + 1
        }
    }

    /// Number of `(dv, du)` grid values.
    pub fn shape(&self) -> (usize, usize) {
        (
            Self::count(self.dv_min, self.dv_max, self.step),
            Self::count(self.du_min, self.du_max, self.step),
        )
    }

    /// Grid points in row-major order (`dv` outer, `du` inner).
    pub fn points(&self) -> Vec<(f64, f64)> {
        let (nv, nu) = self.shape();
        let mut out = Vec::with_capacity(nv * nu);
        for i in 0..nv {
            for j in 0..nu {
                out.push((self.dv_min + i as f64 * self.step, self.du_min + j as f64 * self.step));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub dv0: f64,
    pub du0: f64,
    pub converged: bool,
    pub terminal_error: f64,
}

/// Runs one sweep point.
pub fn classify_offset(
    vehicle: &Vehicle,
    gain: &Gain,
    reference: &ReferenceTrajectory,
    dv0: f64,
    du0: f64,
    settings: &ClosedLoopSettings,
) -> SweepPoint {
    let offset = speed_offset(vehicle, dv0, du0);
    let trace = simulate_closed_loop(vehicle, gain, reference, &offset, settings);
    let terminal_error = match trace.status {
        SimStatus::Diverged { .. } => f64::INFINITY,
        _ => trace.terminal_error_norm(),
    };
    SweepPoint {
        dv0,
        du0,
        converged: trace.converged(),
        terminal_error,
    }
}

/// Sequential sweep over `grid`; results follow the order of [`SweepGrid::points`].
pub fn region_of_attraction_sweep(
    vehicle: &Vehicle,
    gain: &Gain,
    reference: &ReferenceTrajectory,
    grid: &SweepGrid,
    settings: &ClosedLoopSettings,
) -> Vec<SweepPoint> {
    grid.points()
        .into_iter()
        .map(|(dv, du)| classify_offset(vehicle, gain, reference, dv, du, settings))
        .collect()
}

/// Shape summary of a classified sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSummary {
    pub contains_origin: bool,
    /// Converged cells form one 4-connected component and enclose no diverged cell.
    pub simply_connected: bool,
    pub max_abs_dv: f64,
    pub max_abs_du: f64,
    pub converged_count: usize,
}

pub fn summarize_region(grid: &SweepGrid, points: &[SweepPoint]) -> RegionSummary {
    let (nv, nu) = grid.shape();
    assert_eq!(points.len(), nv * nu, "sweep result does not match grid");
    let ok = |i: usize, j: usize| points[i * nu + j].converged;
    let converged_count = points.iter().filter(|p| p.converged).count();
    let origin = points
        .iter()
        .enumerate()
        .find(|(_, p)| p.dv0.abs() < 0.5 * grid.step && p.du0.abs() < 0.5 * grid.step)
        .map(|(k, _)| k);
    let contains_origin = origin.is_some_and(|k| points[k].converged);

    // 4-connected component of converged cells reachable from the first converged cell
    let mut seen = alloc::vec![false; nv * nu];
    let mut component = 0usize;
    if let Some(start) = origin
        .filter(|_| contains_origin)
        .or_else(|| points.iter().position(|p| p.converged))
    {
        let mut stack = alloc::vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            component += 1;
            let (i, j) = (k / nu, k % nu);
            let mut push = |a: usize, b: usize| {
                let idx = a * nu + b;
                if !seen[idx] && ok(a, b) {
                    seen[idx] = true;
                    stack.push(idx);
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < nv {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < nu {
                push(i, j + 1);
            }
        }
    }
    let connected = component == converged_count;

    // Holes: non-converged cells not 8-connected to the border through non-converged cells.
    let (pv, pu) = (nv + 2, nu + 2);
    let outside = |a: usize, b: usize| a == 0 || b == 0 || a == pv - 1 || b == pu - 1 || !ok(a - 1, b - 1);
    let mut reach = alloc::vec![false; pv * pu];
    let mut stack = alloc::vec![0usize];
    reach[0] = true;
    while let Some(k) = stack.pop() {
        let (a, b) = (k / pu, k % pu);
        for da in -1i64..=1 {
            for db in -1i64..=1 {
                let (na, nb) = (a as i64 + da, b as i64 + db);
                if na < 0 || nb < 0 || na >= pv as i64 || nb >= pu as i64 {
                    continue;
                }
                let (na, nb) = (na as usize, nb as usize);
                let idx = na * pu + nb;
                if !reach[idx] && outside(na, nb) {
                    reach[idx] = true;
                    stack.push(idx);
                }
            }
        }
    }
    let holes = (0..nv).any(|i| (0..nu).any(|j| !ok(i, j) && !reach[(i + 1) * pu + j + 1]));

    let (mut max_abs_dv, mut max_abs_du) = (0.0f64, 0.0f64);
    for p in points.iter().filter(|p| p.converged) {
        max_abs_dv = max_abs_dv.max(p.dv0.abs());
        max_abs_du = max_abs_du.max(p.du0.abs());
    }
    RegionSummary {
        contains_origin,
        simply_connected: converged_count > 0 && connected && !holes,
        max_abs_dv,
        max_abs_du,
        converged_count,
    }
}

/// Dynamic part of an error vector.
pub fn dynamic_error(e: &Vector8) -> Vector5<f64> {
    e.fixed_rows::<5>(0).into_owned()
}
