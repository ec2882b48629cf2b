//! Combined-slip tire forces: slip quantities, the modified Dugoff stiffness
//! coefficients and the friction-circle saturation built on a logistic curve.

use crate::error::{Error, Result};
use crate::vehicle::{DynamicState, VehicleInput, VehicleParams};

/// Physical constants of one tire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireParams {
    /// Longitudinal stiffness, N per unit slip ratio.
    pub c_kappa: f64,
    /// Lateral (cornering) stiffness, N/rad.
    pub c_alpha: f64,
    /// Road/tire friction coefficient.
    pub mu: f64,
    /// Effective rolling radius, m.
    pub r_e: f64,
}

impl TireParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_kappa > 0.0) {
            return Err(Error::InvalidParameter("c_kappa must be positive"));
        }
        if !(self.c_alpha > 0.0) {
            return Err(Error::InvalidParameter("c_alpha must be positive"));
        }
        if !(self.mu > 0.0 && self.mu <= 1.5) {
            return Err(Error::InvalidParameter("mu must lie in (0, 1.5]"));
        }
        if !(self.r_e > 0.0) {
            return Err(Error::InvalidParameter("r_e must be positive"));
        }
        Ok(())
    }
}

impl Default for TireParams {
    fn default() -> Self {
        Self {
            c_kappa: 80_000.0,
            c_alpha: 60_000.0,
            mu: 1.0,
            r_e: 0.30,
        }
    }
}

/// Slip ratios and slip angles of the front and rear (lumped) wheels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlipState {
    pub kappa_f: f64,
    pub kappa_r: f64,
    pub alpha_f: f64,
    pub alpha_r: f64,
}

/// Longitudinal and lateral force of the front and rear tire, N.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarForces {
    pub fx_f: f64,
    pub fx_r: f64,
    pub fy_f: f64,
    pub fy_r: f64,
}

/// Saturated tire forces together with the unsaturated values they came from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TireForceSet {
    pub saturated: PlanarForces,
    pub unsaturated: PlanarForces,
}

/// Where the logistic curve is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Centre at `(upper + lower) / 2`, so the midpoint is a fixed point.
    #[default]
    Midpoint,
    /// Centre at `(upper - lower) / 2`, the half-width form. Kept for comparison only:
    /// with symmetric bounds it does not map zero to zero.
    HalfWidth,
}

/// Slip ratios and slip angles of both wheels.
///
/// The front wheel-plane speed `v cos(delta) + (u + l_f r) sin(delta)` and the
/// longitudinal speed both appear as divisors and must stay above `v_min`.
pub fn slip_quantities(state: &DynamicState, input: &VehicleInput, params: &VehicleParams) -> Result<SlipState> {
    let v = state.v;
    if !(v >= params.v_min) {
        return Err(Error::DegenerateSpeed {
            speed: v,
            v_min: params.v_min,
        });
    }
    let (sin_d, cos_d) = libm::sincos(input.delta_f);
    let lateral_front = state.u + params.ell_f * state.r;
    let wheel_speed_f = v * cos_d + lateral_front * sin_d;
    if !(wheel_speed_f >= params.v_min) {
        return Err(Error::DegenerateSpeed {
            speed: wheel_speed_f,
            v_min: params.v_min,
        });
    }
    let r_e = params.tire.r_e;
    Ok(SlipState {
        kappa_f: -(wheel_speed_f - state.omega_f * r_e) / wheel_speed_f,
        kappa_r: -(v - state.omega_r * r_e) / v,
        alpha_f: input.delta_f - libm::atan(lateral_front / v),
        alpha_r: -libm::atan((state.u - params.ell_r * state.r) / v),
    })
}

/// Characteristic slips `(kappa*, alpha*)` of a tire under normal load `load`.
pub fn star_coefficients(tire: &TireParams, load: f64) -> Result<(f64, f64)> {
    if !(load > 0.0) {
        return Err(Error::NonpositiveLoad(load));
    }
    let grip = load * tire.mu;
    let ck = tire.c_kappa;
    let kappa_star = grip * (4.0 * ck + libm::sqrt(grip * grip + 8.0 * ck * grip) + grip) / (8.0 * ck * ck);
    let alpha_star = grip / (2.0 * tire.c_alpha);
    Ok((kappa_star, alpha_star))
}

/// Combined-slip stiffness coefficients `(c*_kappa, c*_alpha)`.
///
/// `c*_kappa` depends on the slip angle, `c*_alpha` on the slip ratio; both reduce to
/// the nominal stiffnesses under pure slip.
pub fn effective_stiffness(tire: &TireParams, load: f64, kappa: f64, alpha: f64) -> Result<(f64, f64)> {
    let (kappa_star, alpha_star) = star_coefficients(tire, load)?;
    let grip = load * tire.mu;
    let (ck, ca) = (tire.c_kappa, tire.c_alpha);

    let tan_a = libm::tan(alpha);
    let lat = ca * ca * tan_a * tan_a;
    let lon_star = ck * ck * kappa_star * kappa_star;
    let den_k = 4.0 * lat + 4.0 * lon_star;

    let lat_star = alpha_star * alpha_star * ca * ca;
    let lon = ck * ck * kappa * kappa;
    let den_a = 4.0 * lat_star + 4.0 * lon;

    if !(den_k > 0.0) || !(den_a > 0.0) {
        return Err(Error::SingularDenominator);
    }
    let c_kappa_eff = load * ck * tire.mu * (4.0 * libm::sqrt(lat + lon_star) + grip * (kappa_star - 1.0)) / den_k;
    let c_alpha_eff = load * ca * tire.mu * (4.0 * libm::sqrt(lat_star + lon) + grip * (kappa - 1.0)) / den_a;
    Ok((c_kappa_eff, c_alpha_eff))
}

/// Logistic saturation between `lower` and `upper`, centred at the bound midpoint.
/// The slope at the midpoint is exactly one.
pub fn logistic(x: f64, upper: f64, lower: f64) -> Result<f64> {
    logistic_with(x, upper, lower, Centering::Midpoint)
}

pub fn logistic_with(x: f64, upper: f64, lower: f64, centering: Centering) -> Result<f64> {
    if !(upper > lower) {
        return Err(Error::InvalidBounds { upper, lower });
    }
    let width = upper - lower;
    Ok(match centering {
        Centering::Midpoint => {
            // (u - l) / (1 + exp(-4 (x - c) / (u - l))) + l, written through tanh so that
            // the curve is exactly odd about its centre.
            let half = 0.5 * width;
            let centre = lower + half;
            // rounding can step one ulp past a bound at the asymptotes
            (centre + half * libm::tanh((x - centre) / half)).clamp(lower, upper)
        }
        Centering::HalfWidth => {
            (width / (1.0 + libm::exp(-4.0 / width * (x - 0.5 * width))) + lower).clamp(lower, upper)
        }
    })
}

/// Saturates one wheel: `fx` to `+-mu N`, then `fy` to the circle remainder.
pub fn saturate_wheel(fx_hat: f64, fy_hat: f64, mu: f64, load: f64, centering: Centering) -> (f64, f64) {
    let f_max = mu * load;
    if !(f_max > 0.0) {
        return (0.0, 0.0);
    }
    let fx = logistic_with(fx_hat, f_max, -f_max, centering).unwrap_or(0.0);
    let remainder = f_max * f_max - fx * fx;
    if !(remainder > 0.0) {
        return (fx, 0.0);
    }
    let bound = libm::sqrt(remainder);
    let fy = logistic_with(fy_hat, bound, -bound, centering).unwrap_or(0.0);
    (fx, fy)
}

/// Applies the friction-circle saturation to both wheels.
///
/// `load_f`/`load_r` are the normal loads carried by one front and one rear tire.
pub fn saturate_forces(unsat: &PlanarForces, mu: f64, load_f: f64, load_r: f64) -> TireForceSet {
    saturate_forces_with(unsat, mu, load_f, load_r, Centering::Midpoint)
}

pub fn saturate_forces_with(
    unsat: &PlanarForces,
    mu: f64,
    load_f: f64,
    load_r: f64,
    centering: Centering,
) -> TireForceSet {
    let (fx_f, fy_f) = saturate_wheel(unsat.fx_f, unsat.fy_f, mu, load_f, centering);
    let (fx_r, fy_r) = saturate_wheel(unsat.fx_r, unsat.fy_r, mu, load_r, centering);
    TireForceSet {
        saturated: PlanarForces { fx_f, fx_r, fy_f, fy_r },
        unsaturated: *unsat,
    }
}

/// Unsaturated forces of the modified Dugoff model, `F_x = c*_kappa kappa`, `F_y = c*_alpha alpha`.
/// A non-positive load carries no force.
pub fn dugoff_forces(tire: &TireParams, load: f64, kappa: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(load > 0.0) {
        return Ok((0.0, 0.0));
    }
    let (ck, ca) = effective_stiffness(tire, load, kappa, alpha)?;
    Ok((ck * kappa, ca * alpha))
}
