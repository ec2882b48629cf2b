//! Fixtures shared by the Jacobian tests and the acceptance suite.

use lpv_core::nalgebra::{Matrix5, Matrix6, SMatrix};
use lpv_core::vehicle::{DynamicState, SigmaVector, Vehicle, VehicleInput, VehicleParams};

pub type M6x5 = SMatrix<f64, 6, 5>;
pub type M6x3 = SMatrix<f64, 6, 3>;
pub type M5x3 = SMatrix<f64, 5, 3>;

pub fn points() -> Vec<(DynamicState, VehicleInput)> {
    let r_e = VehicleParams::default().tire.r_e;
    let mut out = Vec::new();
    for k in 0..20 {
        let s = k as f64;
        let v = 12.0 + 0.6 * s;
        let state = DynamicState {
            v,
            u: 0.3 * (0.7 * s).sin(),
            r: 0.15 * (1.3 * s).cos(),
            omega_f: v / r_e * (1.0 + 0.01 * (0.5 * s).sin()),
            omega_r: v / r_e * (1.0 - 0.008 * (0.9 * s).cos()),
        };
        let input = VehicleInput {
            delta_f: 0.05 * (1.1 * s).sin(),
            tau_f: 200.0 * (0.4 * s).cos(),
            tau_r: -150.0 * (0.8 * s).sin(),
        };
        out.push((state, input));
    }
    out
}

/// Hand-derived `(A, B, C, D, D_sigma)` of the identity-saturation, linear-tire model.
pub fn analytic(
    vehicle: &Vehicle,
    x: &DynamicState,
    inp: &VehicleInput,
    sigma: &SigmaVector,
    vdot: f64,
) -> (Matrix5<f64>, M5x3, M6x5, M6x3, Matrix6<f64>) {
    let p = &vehicle.params;
    let (m, iw, rho, hcg) = (p.mass, p.wheel_inertia, p.rho_cda, p.cg_height);
    let (ck, ca, re) = (p.tire.c_kappa, p.tire.c_alpha, p.tire.r_e);
    let (v, u, r, wf, wr) = (x.v, x.u, x.r, x.omega_f, x.omega_r);
    let d = inp.delta_f;
    let (sd, cd) = d.sin_cos();

    let mut a = Matrix5::zeros();
    a[(0, 0)] = -2.0 * rho * v.abs() / m;
    a[(0, 1)] = r;
    a[(0, 2)] = u;
    a[(1, 0)] = -r;
    a[(1, 2)] = -v;

    // dB_sigma/d delta applied to sigma
    let fr = p.rolling_coeff;
    let db = SMatrix::<f64, 5, 6>::from_row_slice(&[
        fr * sd / m,
        0.0,
        -2.0 * sd / m,
        0.0,
        -2.0 * cd / m,
        0.0,
        -fr * cd / m,
        0.0,
        2.0 * cd / m,
        0.0,
        -2.0 * sd / m,
        0.0,
        -fr * cd * p.ell_f / p.yaw_inertia,
        0.0,
        2.0 * cd * p.ell_f / p.yaw_inertia,
        0.0,
        -2.0 * sd * p.ell_f / p.yaw_inertia,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ]);
    let mut b = M5x3::zeros();
    b.set_column(0, &(db * sigma));
    b[(3, 1)] = 1.0 / iw;
    b[(4, 2)] = 1.0 / iw;

    // loads
    let rr = re * fr;
    let det = p.ell_f + rr * cd + p.ell_r - rr;
    let pitch = -hcg * (m * (vdot - r * u) + rho * v * v.abs());
    let numer = pitch + p.mass * p.gravity * (p.ell_r - rr);
    let mut hx = M6x5::zeros();
    let mut hu = M6x3::zeros();
    let mut hxdot = M6x5::zeros();
    hxdot[(0, 0)] = -hcg * m / det;
    hxdot[(1, 0)] = hcg * m / det;
    hx[(0, 0)] = -hcg * 2.0 * rho * v.abs() / det;
    hx[(0, 1)] = hcg * m * r / det;
    hx[(0, 2)] = hcg * m * u / det;
    hu[(0, 0)] = numer * rr * sd / (det * det);
    for j in 0..5 {
        hx[(1, j)] = -hx[(0, j)];
    }
    hu[(1, 0)] = -hu[(0, 0)];

    // front slip ratio
    let q = u + p.ell_f * r;
    let ws = v * cd + q * sd;
    let dk_dws = -wf * re / (ws * ws);
    hx[(2, 0)] = ck * dk_dws * cd;
    hx[(2, 1)] = ck * dk_dws * sd;
    hx[(2, 2)] = ck * dk_dws * p.ell_f * sd;
    hx[(2, 3)] = ck * re / ws;
    hu[(2, 0)] = ck * dk_dws * (-v * sd + q * cd);
    // rear slip ratio
    hx[(3, 0)] = -ck * wr * re / (v * v);
    hx[(3, 4)] = ck * re / v;
    // front slip angle
    let nq = v * v + q * q;
    hx[(4, 0)] = ca * q / nq;
    hx[(4, 1)] = -ca * v / nq;
    hx[(4, 2)] = -ca * v * p.ell_f / nq;
    hu[(4, 0)] = ca;
    // rear slip angle
    let pr = u - p.ell_r * r;
    let np = v * v + pr * pr;
    hx[(5, 0)] = ca * pr / np;
    hx[(5, 1)] = -ca * v / np;
    hx[(5, 2)] = ca * v * p.ell_r / np;

    let b_sigma = vehicle.sigma_matrix(inp);
    (a, b, hxdot * a + hx, hxdot * b + hu, hxdot * b_sigma)
}
