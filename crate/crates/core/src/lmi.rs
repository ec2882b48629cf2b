//! Robust state-feedback synthesis over a polytope of `(A_i, B_i)` pairs.
//!
//! Two formulations are offered. Quadratic contractivity asks for
//! `A_i Q + Q A_i^T + B_i R + R^T B_i^T + 2 beta Q < 0`; D-stabilization asks for
//! `L (x) Q + M (x) (A_i Q + B_i R) + M^T (x) (A_i Q + B_i R)^T < 0` for an LMI region
//! `{z : L + z M + conj(z) M^T < 0}`. Both add `Q > eps I` and recover `K = R Q^-1`.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linearize::{Matrix8, Matrix8x3};
use crate::sdp::{max_symmetric_eigenvalue, minimize_gain, solve_feasibility, Feasibility, SdpProblem, SolverOptions};

/// Base strictness margin; each vertex constraint uses `BASE_MARGIN (1 + ||A_i||)`.
pub const BASE_MARGIN: f64 = 1e-7;

/// One polytope vertex, `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Vertex {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        Self { a, b }
    }

    /// Scalar system `x' = a x + b u`.
    pub fn scalar(a: f64, b: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
        }
    }

    pub fn margin(&self) -> f64 {
        BASE_MARGIN * (1.0 + self.a.norm())
    }
}

impl From<&(Matrix8, Matrix8x3)> for Vertex {
    fn from(v: &(Matrix8, Matrix8x3)) -> Self {
        Self {
            a: DMatrix::from_column_slice(8, 8, v.0.as_slice()),
            b: DMatrix::from_column_slice(8, 3, v.1.as_slice()),
        }
    }
}

/// `{z : L + z M + conj(z) M^T < 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiRegion {
    pub l: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl LmiRegion {
    pub fn new(l: DMatrix<f64>, m: DMatrix<f64>) -> Result<Self> {
        let s = l.nrows();
        if s == 0 || l.ncols() != s || m.nrows() != s || m.ncols() != s {
            return Err(Error::InvalidParameter(
                "region matrices must be square and of equal order",
            ));
        }
        if (&l - l.transpose()).amax() > 1e-12 * (1.0 + l.amax()) {
            return Err(Error::InvalidParameter("region matrix L must be symmetric"));
        }
        let region = Self { l, m };
        if !region.sampled_nonempty() {
            return Err(Error::InvalidParameter("region contains no sampled point"));
        }
        Ok(region)
    }

    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    /// Largest eigenvalue of the Hermitian `L + z M + conj(z) M^T`; negative inside.
    pub fn characteristic(&self, z: Complex<f64>) -> f64 {
        let s = self.order();
        let x = &self.l + (&self.m + self.m.transpose()) * z.re;
        let y = (&self.m - self.m.transpose()) * z.im;
        // real symmetric embedding [[X, -Y], [Y, X]] of X + iY
        let mut emb = DMatrix::zeros(2 * s, 2 * s);
        emb.view_mut((0, 0), (s, s)).copy_from(&x);
        emb.view_mut((s, s), (s, s)).copy_from(&x);
        emb.view_mut((0, s), (s, s)).copy_from(&(-&y));
        emb.view_mut((s, 0), (s, s)).copy_from(&y);
        max_symmetric_eigenvalue(&emb)
    }

    pub fn contains(&self, z: Complex<f64>) -> bool {
        self.characteristic(z) < 0.0
    }

    /// The whole open left half-plane.
    pub fn left_half_plane() -> Self {
        Self {
            l: DMatrix::zeros(1, 1),
            m: DMatrix::from_element(1, 1, 1.0),
        }
    }

    fn sampled_nonempty(&self) -> bool {
        // log-spaced radii from 1e-3 to 1e4, eight per decade
        let angles = 32;
        (0..=56).any(|i| {
            let rad = libm::pow(10.0, -3.0 + i as f64 / 8.0);
            (0..angles).any(|k| {
                let th = 2.0 * core::f64::consts::PI * k as f64 / angles as f64;
                self.contains(Complex::new(rad * libm::cos(th), rad * libm::sin(th)))
            })
        })
    }
}

/// `{z : Re z < lambda_max}`, the region certified by contractivity at `beta = -lambda_max`.
pub fn half_plane_region(lambda_max: f64) -> LmiRegion {
    LmiRegion {
        l: DMatrix::from_element(1, 1, -2.0 * lambda_max),
        m: DMatrix::from_element(1, 1, 1.0),
    }
}

/// `{z : lambda_min < Re z < lambda_max}` as an order-2 region.
pub fn vertical_strip_region(lambda_max: f64, lambda_min: f64) -> Result<LmiRegion> {
    if !(lambda_min < lambda_max && lambda_max < 0.0) {
        return Err(Error::InvalidStrip { lambda_min, lambda_max });
    }
    // 2 Re z - 2 lambda_max < 0 and 2 lambda_min - 2 Re z < 0
    let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![
        -2.0 * lambda_max,
        2.0 * lambda_min
    ]));
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![1.0, -1.0]));
    LmiRegion::new(l, m)
}

fn check_vertices(vertices: &[Vertex]) -> Result<(usize, usize)> {
    let first = vertices.first().ok_or(Error::DegenerateFamily)?;
    let (n, m) = (first.a.nrows(), first.b.ncols());
    for v in vertices {
        if v.a.nrows() != n || v.a.ncols() != n || v.b.nrows() != n || v.b.ncols() != m {
            return Err(Error::InvalidParameter("vertex dimensions differ"));
        }
    }
    Ok((n, m))
}

fn add_positivity(problem: &mut SdpProblem, margin: f64) {
    problem.add_constraint(margin, |q, _| -q);
}

/// One contractivity constraint per vertex plus `Q > eps I`.
pub fn contractivity_lmi(vertices: &[Vertex], beta: f64) -> Result<SdpProblem> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("contractivity level must be positive"));
    }
    let (n, m) = check_vertices(vertices)?;
    let mut problem = SdpProblem::new(n, m);
    for v in vertices {
        let (a, b) = (v.a.clone(), v.b.clone());
        problem.add_constraint(v.margin(), move |q, r| {
            let aq = &a * q + &b * r;
            &aq + aq.transpose() + q * (2.0 * beta)
        });
    }
    add_positivity(&mut problem, BASE_MARGIN);
    Ok(problem)
}

/// `L (x) Q + M (x) W + M^T (x) W^T` with `W = A Q + B R`.
pub fn dstab_matrix(
    region: &LmiRegion,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let w = a * q + b * r;
    region.l.kronecker(q) + region.m.kronecker(&w) + region.m.transpose().kronecker(&w.transpose())
}

/// One Kronecker-structured constraint per vertex plus `Q > eps I`.
pub fn dstab_lmi(vertices: &[Vertex], region: &LmiRegion) -> Result<SdpProblem> {
    let (n, m) = check_vertices(vertices)?;
    let mut problem = SdpProblem::new(n, m);
    for v in vertices {
        let (a, b, reg) = (v.a.clone(), v.b.clone(), region.clone());
        problem.add_constraint(v.margin(), move |q, r| dstab_matrix(&reg, &a, &b, q, r));
    }
    add_positivity(&mut problem, BASE_MARGIN);
    Ok(problem)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthesisMode {
    Contractivity { beta: f64 },
    DStability(LmiRegion),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Largest `lambda_max(F_j) + margin_j` over all constraints; negative.
    pub worst_residual: f64,
    pub iterations: usize,
    pub mode: SynthesisMode,
}

/// Outcome of a synthesis attempt.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Synthesis {
    Feasible(SynthesisResult),
    Infeasible { best_residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthesisOptions {
    pub solver: SolverOptions,
    /// After feasibility, minimize a bound on `||diag(1/s) K||` over the feasible set, with
    /// `s` the per-input scale. `None` returns the first feasible point.
    pub gain_scale: Option<Vec<f64>>,
}

pub fn synthesize(vertices: &[Vertex], mode: &SynthesisMode, options: &SynthesisOptions) -> Result<Synthesis> {
    let problem = match mode {
        SynthesisMode::Contractivity { beta } => contractivity_lmi(vertices, *beta)?,
        SynthesisMode::DStability(region) => dstab_lmi(vertices, region)?,
    };
    match solve_feasibility(&problem, &options.solver)? {
        Feasibility::NotFound(p) => Ok(Synthesis::Infeasible {
            best_residual: p.worst_violation,
        }),
        Feasibility::Feasible(p) => {
            let p = match &options.gain_scale {
                Some(scale) => minimize_gain(&problem, &p, scale, &options.solver)?,
                None => p,
            };
            let q_inv =
                p.q.clone()
                    .cholesky()
                    .ok_or(Error::InvalidParameter("Lyapunov matrix is not positive definite"))?
                    .inverse();
            let k = &p.r * q_inv;
            Ok(Synthesis::Feasible(SynthesisResult {
                q: p.q,
                r: p.r,
                k,
                worst_residual: p.worst_violation,
                iterations: p.iterations,
                mode: mode.clone(),
            }))
        }
    }
}

/// Closed-loop spectrum of one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCertificate {
    pub index: usize,
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_abscissa: f64,
    /// Smallest real part.
    pub min_real: f64,
    /// Largest region characteristic over the eigenvalues; negative inside.
    pub region_value: f64,
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub vertices: Vec<VertexCertificate>,
    pub offending: Vec<usize>,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.offending.is_empty()
    }

    pub fn max_real(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.spectral_abscissa)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_real(&self) -> f64 {
        self.vertices.iter().map(|v| v.min_real).fold(f64::INFINITY, f64::min)
    }
}

/// Eigenvalues of `A_i + B_i K` at every vertex, checked against `region`.
pub fn certify_gain(k: &DMatrix<f64>, vertices: &[Vertex], region: &LmiRegion) -> CertificationReport {
    let mut report = CertificationReport {
        vertices: Vec::with_capacity(vertices.len()),
        offending: Vec::new(),
    };
    for (index, v) in vertices.iter().enumerate() {
        let closed = &v.a + &v.b * k;
        let eigenvalues: Vec<Complex<f64>> = closed.complex_eigenvalues().iter().copied().collect();
        let spectral_abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let min_real = eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let region_value = eigenvalues
            .iter()
            .map(|z| region.characteristic(*z))
            .fold(f64::NEG_INFINITY, f64::max);
        let in_region = region_value < 0.0;
        if !in_region {
            report.offending.push(index);
        }
        report.vertices.push(VertexCertificate {
            index,
            eigenvalues,
            spectral_abscissa,
            min_real,
            region_value,
            in_region,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> LmiRegion {
        vertical_strip_region(-2.0, -40.0).unwrap()
    }

    fn solve(problem: &SdpProblem) -> Feasibility {
        solve_feasibility(problem, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn strip_membership() {
        let s = strip();
        assert!(s.contains(Complex::new(-21.0, 0.0)));
        assert!(s.contains(Complex::new(-21.0, 50.0)));
        assert!(!s.contains(Complex::new(-1.0, 0.0)));
        assert!(!s.contains(Complex::new(-41.0, 0.0)));
        assert!(!s.contains(Complex::new(-2.0, 0.0)));
        assert!(!s.contains(Complex::new(-40.0, 3.0)));
    }

    #[test]
    fn invalid_strips_rejected() {
        assert!(matches!(
            vertical_strip_region(-40.0, -2.0),
            Err(Error::InvalidStrip { .. })
        ));
        assert!(matches!(
            vertical_strip_region(1.0, -2.0),
            Err(Error::InvalidStrip { .. })
        ));
    }

    #[test]
    fn empty_region_rejected() {
        // 1 + 0 z < 0 never holds
        let r = LmiRegion::new(DMatrix::from_element(1, 1, 1.0), DMatrix::zeros(1, 1));
        assert!(r.is_err());
    }

    #[test]
    fn disk_region_characteristic() {
        // |z + 5| < 2: [[-2, z + 5], [conj(z) + 5, -2]] < 0
        let l = DMatrix::from_row_slice(2, 2, &[-2.0, 5.0, 5.0, -2.0]);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let disk = LmiRegion::new(l, m).unwrap();
        assert!(disk.contains(Complex::new(-5.0, 1.5)));
        assert!(!disk.contains(Complex::new(-5.0, 2.5)));
        assert!(!disk.contains(Complex::new(-2.0, 0.0)));
    }

    #[test]
    fn contractivity_scalar_cases() {
        let p = contractivity_lmi(&[Vertex::scalar(-1.0, 0.0)], 0.5).unwrap();
        assert!(solve(&p).is_feasible());
        let q = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::zeros(1, 1);
        assert_eq!(p.evaluate(&q, &r)[0][(0, 0)], -1.0);

        let p = contractivity_lmi(&[Vertex::scalar(1.0, 0.0)], 0.5).unwrap();
        assert!(!solve(&p).is_feasible());

        let p = contractivity_lmi(&[Vertex::scalar(1.0, 1.0)], 0.5).unwrap();
        assert!(solve(&p).is_feasible());
        let r = DMatrix::from_element(1, 1, -3.0);
        assert_eq!(p.evaluate(&q, &r)[0][(0, 0)], -3.0);
    }

    #[test]
    fn strip_scalar_cases() {
        let p = dstab_lmi(&[Vertex::scalar(-10.0, 0.0)], &strip()).unwrap();
        assert!(solve(&p).is_feasible());
        let p = dstab_lmi(&[Vertex::scalar(-1.0, 0.0)], &strip()).unwrap();
        assert!(!solve(&p).is_feasible());

        let p = dstab_lmi(&[Vertex::scalar(0.0, 1.0)], &strip()).unwrap();
        let q = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, -21.0);
        let f = &p.evaluate(&q, &r)[0];
        assert_eq!(f[(0, 0)], 4.0 - 42.0);
        assert_eq!(f[(1, 1)], -80.0 + 42.0);
        assert!(solve(&p).is_feasible());
    }

    #[test]
    fn common_lyapunov_pair() {
        let p = contractivity_lmi(&[Vertex::scalar(-1.0, 0.0), Vertex::scalar(-2.0, 0.0)], 0.5).unwrap();
        assert!(solve(&p).is_feasible());
    }

    #[test]
    fn zero_gain_fails_on_unstable_vertices() {
        let vs = [
            Vertex::scalar(-10.0, 1.0),
            Vertex::scalar(3.0, 1.0),
            Vertex::scalar(-1.0, 1.0),
        ];
        let rep = certify_gain(&DMatrix::zeros(1, 1), &vs, &strip());
        assert!(!rep.passed());
        assert_eq!(rep.offending, alloc::vec![1, 2]);
        let lhp = certify_gain(&DMatrix::from_element(1, 1, -4.0), &vs, &LmiRegion::left_half_plane());
        assert!(lhp.passed());
    }

    #[test]
    fn synthesized_gain_certifies() {
        let vs = [Vertex::scalar(0.5, 1.0), Vertex::scalar(-0.5, 2.0)];
        let Synthesis::Feasible(res) =
            synthesize(&vs, &SynthesisMode::DStability(strip()), &SynthesisOptions::default()).unwrap()
        else {
            panic!("expected a feasible synthesis")
        };
        assert!(res.worst_residual < 0.0);
        assert!(certify_gain(&res.k, &vs, &strip()).passed());
    }
}
