//! Linearization along the reference trajectory, sector-bounded closure of the
//! saturations, error-state augmentation and the polytopic LPV model.

use alloc::vec::Vec;

use nalgebra::{Matrix5, Matrix6, SMatrix, SVector, Vector3, Vector5};

use crate::error::{Error, Result};
use crate::sim::ReferenceTrajectory;
use crate::vehicle::{DynamicState, SigmaMatrix, SigmaVector, Vehicle, VehicleInput};

pub type Matrix5x3 = SMatrix<f64, 5, 3>;
pub type Matrix6x5 = SMatrix<f64, 6, 5>;
pub type Matrix6x3 = SMatrix<f64, 6, 3>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Matrix8x3 = SMatrix<f64, 8, 3>;

/// Default relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Jacobians of the implicit model at one trajectory sample:
/// `dx' = A dx + B du + B_sigma dsigma`, `dh = C dx + D du + D_sigma dsigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedSystem {
    pub t: f64,
    pub a: Matrix5<f64>,
    pub b: Matrix5x3,
    pub b_sigma: SigmaMatrix,
    pub c: Matrix6x5,
    pub d: Matrix6x3,
    pub d_sigma: Matrix6<f64>,
}

/// Central-difference Jacobian of `f` at `x`, step `scale * max(1, |x_j|)` per coordinate.
pub fn central_jacobian<const M: usize, const N: usize, F>(
    x: &SVector<f64, N>,
    scale: f64,
    mut f: F,
) -> Result<SMatrix<f64, M, N>>
where
    F: FnMut(&SVector<f64, N>) -> Result<SVector<f64, M>>,
{
    let mut jac = SMatrix::<f64, M, N>::zeros();
    for j in 0..N {
        let step = scale * x[j].abs().max(1.0);
        let mut plus = *x;
        let mut minus = *x;
        plus[j] += step;
        minus[j] -= step;
        let df = (f(&plus)? - f(&minus)?) / (plus[j] - minus[j]);
        jac.set_column(j, &df);
    }
    Ok(jac)
}

/// Evaluates the six linearization matrices at a point `(x, u, xdot, sigma)` that solves
/// the algebraic loop, with relative finite-difference step `step`.
pub fn jacobians_at(
    vehicle: &Vehicle,
    t: f64,
    state: &DynamicState,
    input: &VehicleInput,
    xdot: &Vector5<f64>,
    sigma: &SigmaVector,
    step: f64,
) -> Result<LinearizedSystem> {
    let b_sigma = vehicle.sigma_matrix(input);
    let implied = vehicle.explicit_part(state, input) + b_sigma * sigma;
    let h0 = vehicle.sigma_inputs(xdot, state, input, sigma)?;
    let loop_gap = (vehicle.saturate(&h0) - sigma).amax() / (1.0 + sigma.amax());
    let rate_gap = (implied - xdot).amax() / (1.0 + xdot.amax());
    if !(loop_gap < 1e-8 && rate_gap < 1e-8) {
        return Err(Error::InvalidParameter(
            "linearization point does not satisfy the algebraic loop",
        ));
    }

    let x0 = state.to_vector();
    let u0 = input.to_vector();
    let g_x = |x: &Vector5<f64>| Ok(vehicle.explicit_part(&DynamicState::from_vector(x), input));
    let a = central_jacobian::<5, 5, _>(&x0, step, g_x)?;
    let g_u = |u: &Vector3<f64>| {
        let inp = VehicleInput::from_vector(u);
        Ok(vehicle.explicit_part(state, &inp) + vehicle.sigma_matrix(&inp) * sigma)
    };
    let b = central_jacobian::<5, 3, _>(&u0, step, g_u)?;

    let h_xdot = central_jacobian::<6, 5, _>(xdot, step, |xd| vehicle.sigma_inputs(xd, state, input, sigma))?;
    let h_x = central_jacobian::<6, 5, _>(&x0, step, |x| {
        vehicle.sigma_inputs(xdot, &DynamicState::from_vector(x), input, sigma)
    })?;
    let h_u = central_jacobian::<6, 3, _>(&u0, step, |u| {
        vehicle.sigma_inputs(xdot, state, &VehicleInput::from_vector(u), sigma)
    })?;
    let h_sigma = central_jacobian::<6, 6, _>(sigma, step, |s| vehicle.sigma_inputs(xdot, state, input, s))?;

    Ok(LinearizedSystem {
        t,
        a,
        b,
        b_sigma,
        c: h_xdot * a + h_x,
        d: h_xdot * b + h_u,
        d_sigma: h_xdot * b_sigma + h_sigma,
    })
}

/// Linearizes every sample of the reference.
pub fn linearize_reference(
    vehicle: &Vehicle,
    reference: &ReferenceTrajectory,
    step: f64,
) -> Result<Vec<LinearizedSystem>> {
    reference
        .samples
        .iter()
        .map(|s| {
            let xdot = s.xdot.fixed_rows::<5>(0).into_owned();
            jacobians_at(vehicle, s.t, &s.state.dynamic(), &s.input, &xdot, &s.sigma, step)
        })
        .collect()
}

/// Slope interval of every saturation channel along the trajectory, and the chosen
/// diagonal `K_sigma` (interval midpoints).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorBounds {
    pub k_min: SigmaVector,
    pub k_max: SigmaVector,
    pub k_sigma: Matrix6<f64>,
}

/// Below this distance from the channel centre the slope is taken as one, N.
pub const SLOPE_TOLERANCE: f64 = 1e-3;

/// Secant slope through the sector centre of each channel at one sample.
pub fn secant_slopes(vehicle: &Vehicle, h: &SigmaVector, sigma: &SigmaVector) -> SigmaVector {
    let centres = vehicle.channel_centres();
    SigmaVector::from_fn(|i, _| {
        let dh = h[i] - centres[i];
        if dh.abs() < SLOPE_TOLERANCE {
            1.0
        } else {
            (sigma[i] - centres[i]) / dh
        }
    })
}

/// Per-sample secant slopes along the reference.
pub fn slope_series(vehicle: &Vehicle, reference: &ReferenceTrajectory) -> Vec<SigmaVector> {
    reference
        .samples
        .iter()
        .map(|s| secant_slopes(vehicle, &s.h, &s.sigma))
        .collect()
}

pub fn sector_slopes(vehicle: &Vehicle, reference: &ReferenceTrajectory) -> SectorBounds {
    let mut k_min = SigmaVector::repeat(f64::INFINITY);
    let mut k_max = SigmaVector::repeat(f64::NEG_INFINITY);
    for s in slope_series(vehicle, reference) {
        k_min = k_min.inf(&s);
        k_max = k_max.sup(&s);
    }
    if reference.is_empty() {
        k_min = SigmaVector::repeat(1.0);
        k_max = SigmaVector::repeat(1.0);
    }
    let mid = 0.5 * (k_min + k_max);
    SectorBounds {
        k_min,
        k_max,
        k_sigma: Matrix6::from_diagonal(&mid),
    }
}

/// Closes the sector approximation `sigma ~ K_sigma h` into the state equation,
/// returning `(A~, B~)`.
pub fn sector_closed_matrices(lin: &LinearizedSystem, k_sigma: &Matrix6<f64>) -> Result<(Matrix5<f64>, Matrix5x3)> {
    let loop_matrix = Matrix6::identity() - lin.d_sigma * k_sigma;
    let sv = loop_matrix.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < 1e8) {
        return Err(Error::SingularLoop(cond));
    }
    let inv = loop_matrix.try_inverse().ok_or(Error::SingularLoop(f64::INFINITY))?;
    let gain = lin.b_sigma * k_sigma * inv;
    Ok((lin.a + gain * lin.c, lin.b + gain * lin.d))
}

/// Appends the position/heading error rows `x_L' = dv`,
/// `y_L' = psi_0 dv + v_0 cos(psi_0) dpsi`, `dpsi' = dr`. Assumes `|psi_0| < pi/4`.
pub fn augment_error_dynamics(a: &Matrix5<f64>, b: &Matrix5x3, psi0: f64, v0: f64) -> (Matrix8, Matrix8x3) {
    let mut a_aug = Matrix8::zeros();
    a_aug.fixed_view_mut::<5, 5>(0, 0).copy_from(a);
    a_aug[(5, 0)] = 1.0;
    a_aug[(6, 0)] = psi0;
    a_aug[(6, 7)] = v0 * libm::cos(psi0);
    a_aug[(7, 2)] = 1.0;
    let mut b_aug = Matrix8x3::zeros();
    b_aug.fixed_view_mut::<5, 3>(0, 0).copy_from(b);
    (a_aug, b_aug)
}

/// One member `(A(t), B(t))` of the eight-state LPV family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpvSample {
    pub t: f64,
    pub a: Matrix8,
    pub b: Matrix8x3,
}

/// Sector-closed, error-augmented matrices at every reference sample.
pub fn lpv_family(
    reference: &ReferenceTrajectory,
    linearized: &[LinearizedSystem],
    k_sigma: &Matrix6<f64>,
) -> Result<Vec<LpvSample>> {
    reference
        .samples
        .iter()
        .zip(linearized)
        .map(|(s, lin)| {
            let (at, bt) = sector_closed_matrices(lin, k_sigma)?;
            let (a, b) = augment_error_dynamics(&at, &bt, s.state.psi, s.state.v);
            Ok(LpvSample { t: s.t, a, b })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatrixId {
    A,
    B,
}

/// A time-varying matrix entry promoted to a polytope parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterDescriptor {
    pub matrix: MatrixId,
    pub row: usize,
    pub col: usize,
    pub min: f64,
    pub max: f64,
}

impl ParameterDescriptor {
    fn read(&self, s: &LpvSample) -> f64 {
        match self.matrix {
            MatrixId::A => s.a[(self.row, self.col)],
            MatrixId::B => s.b[(self.row, self.col)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSelection {
    pub descriptors: Vec<ParameterDescriptor>,
    /// Entries of `(A~, B~)` whose normalized range exceeds [`VARIATION_THRESHOLD`].
    pub varying_entries: usize,
}

/// Normalized range below which an entry is considered constant.
pub const VARIATION_THRESHOLD: f64 = 1e-6;

/// Picks the `count` entries of the five-state blocks `(A~, B~)` with the largest range
/// normalized by their largest magnitude, then appends the heading entries
/// `psi_0` (`A[6][0]`) and `v_0 cos(psi_0)` (`A[6][7]`).
pub fn select_varying_parameters(family: &[LpvSample], count: usize) -> Result<ParameterSelection> {
    if family.len() < 2 {
        return Err(Error::DegenerateFamily);
    }
    let mut candidates: Vec<(f64, ParameterDescriptor)> = Vec::new();
    let mut consider = |matrix: MatrixId, row: usize, col: usize| {
        let mut d = ParameterDescriptor {
            matrix,
            row,
            col,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        let mut peak = 0.0f64;
        for s in family {
            let v = d.read(s);
            d.min = d.min.min(v);
            d.max = d.max.max(v);
            peak = peak.max(v.abs());
        }
        let spread = if peak > 0.0 { (d.max - d.min) / peak } else { 0.0 };
        candidates.push((spread, d));
    };
    for row in 0..5 {
        for col in 0..5 {
            consider(MatrixId::A, row, col);
        }
        for col in 0..3 {
            consider(MatrixId::B, row, col);
        }
    }
    let varying_entries = candidates.iter().filter(|(s, _)| *s > VARIATION_THRESHOLD).count();
    if varying_entries == 0 {
        return Err(Error::DegenerateFamily);
    }
    // stable sort keeps the (A before B, row, col) order among ties
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut descriptors: Vec<ParameterDescriptor> = candidates
        .iter()
        .filter(|(s, _)| *s > VARIATION_THRESHOLD)
        .take(count)
        .map(|(_, d)| *d)
        .collect();
    for (row, col) in [(6, 0), (6, 7)] {
        let mut d = ParameterDescriptor {
            matrix: MatrixId::A,
            row,
            col,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        for s in family {
            let v = d.read(s);
            d.min = d.min.min(v);
            d.max = d.max.max(v);
        }
        descriptors.push(d);
    }
    Ok(ParameterSelection {
        descriptors,
        varying_entries,
    })
}

/// Largest number of polytope parameters accepted.
pub const MAX_PARAMETERS: usize = 12;

/// Box-shaped LPV model: trajectory-mean base matrices with `q` entries ranging over
/// `[min, max]`. Vertices are generated on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopicModel {
    pub descriptors: Vec<ParameterDescriptor>,
    pub base_a: Matrix8,
    pub base_b: Matrix8x3,
}

impl PolytopicModel {
    pub fn parameter_count(&self) -> usize {
        self.descriptors.len()
    }

    pub fn vertex_count(&self) -> usize {
        1 << self.descriptors.len()
    }

    /// Vertex `j`: parameter `i` sits at its maximum when bit `i` of `j` is set.
    pub fn vertex(&self, j: usize) -> (Matrix8, Matrix8x3) {
        let mut a = self.base_a;
        let mut b = self.base_b;
        for (i, d) in self.descriptors.iter().enumerate() {
            let value = if (j >> i) & 1 == 1 { d.max } else { d.min };
            match d.matrix {
                MatrixId::A => a[(d.row, d.col)] = value,
                MatrixId::B => b[(d.row, d.col)] = value,
            }
        }
        (a, b)
    }

    pub fn vertices(&self) -> Vec<(Matrix8, Matrix8x3)> {
        (0..self.vertex_count()).map(|j| self.vertex(j)).collect()
    }
}

pub fn build_polytope(family: &[LpvSample], descriptors: &[ParameterDescriptor]) -> Result<PolytopicModel> {
    if descriptors.len() > MAX_PARAMETERS {
        return Err(Error::TooManyParameters(descriptors.len()));
    }
    if family.is_empty() {
        return Err(Error::DegenerateFamily);
    }
    let n = family.len() as f64;
    let mut base_a = Matrix8::zeros();
    let mut base_b = Matrix8x3::zeros();
    for s in family {
        base_a += s.a;
        base_b += s.b;
    }
    Ok(PolytopicModel {
        descriptors: descriptors.to_vec(),
        base_a: base_a / n,
        base_b: base_b / n,
    })
}

/// Index of the channel in the sigma vector, for reporting.
pub fn channel_index(name: &str) -> Option<usize> {
    crate::vehicle::CHANNEL_NAMES.iter().position(|c| *c == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::VehicleParams;

    fn family_with(values: &[f64]) -> Vec<LpvSample> {
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let mut a = Matrix8::identity();
                a[(1, 2)] = v;
                a[(6, 7)] = 19.0;
                LpvSample {
                    t: k as f64,
                    a,
                    b: Matrix8x3::zeros(),
                }
            })
            .collect()
    }

    #[test]
    fn constant_family_is_degenerate() {
        let fam = family_with(&[2.0, 2.0, 2.0]);
        assert_eq!(select_varying_parameters(&fam, 6), Err(Error::DegenerateFamily));
        assert_eq!(select_varying_parameters(&fam[..1], 6), Err(Error::DegenerateFamily));
    }

    #[test]
    fn single_varying_entry_is_selected() {
        let fam = family_with(&[1.0, -3.0, 2.0]);
        let sel = select_varying_parameters(&fam, 6).unwrap();
        assert_eq!(sel.varying_entries, 1);
        assert_eq!(sel.descriptors.len(), 3);
        let d = sel.descriptors[0];
        assert_eq!((d.matrix, d.row, d.col, d.min, d.max), (MatrixId::A, 1, 2, -3.0, 2.0));
        assert_eq!((sel.descriptors[1].row, sel.descriptors[1].col), (6, 0));
        assert_eq!((sel.descriptors[2].row, sel.descriptors[2].col), (6, 7));
    }

    #[test]
    fn vertices_take_endpoints() {
        let fam = family_with(&[1.0, -3.0, 2.0]);
        let sel = select_varying_parameters(&fam, 1).unwrap();
        let poly = build_polytope(&fam, &sel.descriptors[..1]).unwrap();
        assert_eq!(poly.vertex_count(), 2);
        assert_eq!(poly.vertex(0).0[(1, 2)], -3.0);
        assert_eq!(poly.vertex(1).0[(1, 2)], 2.0);
        assert!(matches!(
            build_polytope(&fam, &[sel.descriptors[0]; 13]),
            Err(Error::TooManyParameters(13))
        ));
    }

    #[test]
    fn zero_sector_gain_keeps_open_matrices() {
        let lin = LinearizedSystem {
            t: 0.0,
            a: Matrix5::from_fn(|i, j| (i * 5 + j) as f64),
            b: Matrix5x3::from_fn(|i, j| (i + j) as f64),
            b_sigma: SigmaMatrix::from_element(1.0),
            c: Matrix6x5::from_element(2.0),
            d: Matrix6x3::from_element(3.0),
            d_sigma: Matrix6::from_element(0.1),
        };
        let (a, b) = sector_closed_matrices(&lin, &Matrix6::zeros()).unwrap();
        assert_eq!(a, lin.a);
        assert_eq!(b, lin.b);
        let mut no_feedthrough = lin;
        no_feedthrough.d_sigma = Matrix6::zeros();
        let k = Matrix6::from_diagonal_element(0.5);
        let (a, _) = sector_closed_matrices(&no_feedthrough, &k).unwrap();
        let expected = lin.a + lin.b_sigma * k * lin.c;
        assert!((a - expected).amax() < 1e-12);
    }

    #[test]
    fn ill_conditioned_loop_is_rejected() {
        let lin = LinearizedSystem {
            t: 0.0,
            a: Matrix5::zeros(),
            b: Matrix5x3::zeros(),
            b_sigma: SigmaMatrix::zeros(),
            c: Matrix6x5::zeros(),
            d: Matrix6x3::zeros(),
            d_sigma: Matrix6::identity(),
        };
        assert!(matches!(
            sector_closed_matrices(&lin, &Matrix6::identity()),
            Err(Error::SingularLoop(_))
        ));
    }

    #[test]
    fn error_rows_follow_kinematics() {
        let (a, b) = augment_error_dynamics(&Matrix5::zeros(), &Matrix5x3::zeros(), 0.0, 19.0);
        assert_eq!(a[(5, 0)], 1.0);
        assert_eq!(a[(6, 0)], 0.0);
        assert_eq!(a[(6, 7)], 19.0);
        assert_eq!(a[(7, 2)], 1.0);
        assert_eq!(b.fixed_rows::<3>(5).amax(), 0.0);
        let (a, _) = augment_error_dynamics(&Matrix5::zeros(), &Matrix5x3::zeros(), 0.1, 19.0);
        assert_eq!(a[(6, 0)], 0.1);
        assert!((a[(6, 7)] - 19.0 * 0.1f64.cos()).abs() < 1e-15);
        assert_eq!(a[(5, 0)], 1.0);
    }

    #[test]
    fn straight_rolling_decouples_lateral_rows() {
        let veh = Vehicle::new(VehicleParams::default());
        let st = crate::vehicle::VehicleState::rolling(20.0, 0.3);
        let input = VehicleInput::default();
        let sol = veh.resolve_algebraic_loop(&st.dynamic(), &input).unwrap();
        let lin = jacobians_at(&veh, 0.0, &st.dynamic(), &input, &sol.xdot, &sol.sigma, FD_STEP).unwrap();
        let (a, _) = sector_closed_matrices(&lin, &Matrix6::identity()).unwrap();
        // lateral states (u, r) do not drive the longitudinal/wheel rows and vice versa
        for lat in [1, 2] {
            for lon in [0, 3, 4] {
                assert!(a[(lon, lat)].abs() < 1e-6, "A[{lon}][{lat}] = {}", a[(lon, lat)]);
                assert!(a[(lat, lon)].abs() < 1e-6, "A[{lat}][{lon}] = {}", a[(lat, lon)]);
            }
        }
    }
}
