//! Feasibility solver for affine matrix inequalities in a symmetric matrix `Q` and a
//! rectangular matrix `R`.
//!
//! Every constraint is `F_j(Q, R) = F_j0 + sum_k x_k F_jk` with `x = (svec Q, vec R)`
//! and must satisfy `F_j + eps_j I < 0`. The solver minimizes a common slack `t`
//! subject to `F_j + eps_j I < t I` with a primal-dual interior-point method; the problem
//! is feasible when the optimal slack is negative. `Q` is confined to
//! `[q_bound / condition_bound, q_bound]` and `||R|| < rho`, which bounds the otherwise
//! homogeneous search space.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// One affine constraint `F0 + sum_k x_k F_k` required to be `< -margin I`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLmi {
    pub constant: DMatrix<f64>,
    pub basis: Vec<DMatrix<f64>>,
    pub margin: f64,
}

impl AffineLmi {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate_vec(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (k, b) in self.basis.iter().enumerate() {
            if x[k] != 0.0 {
                f += b * x[k];
            }
        }
        f
    }
}

/// Decision variables `Q` (n x n, symmetric) and `R` (m x n) and the constraint list.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub n: usize,
    pub m: usize,
    pub constraints: Vec<AffineLmi>,
}

impl SdpProblem {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            constraints: Vec::new(),
        }
    }

    pub fn variable_count(&self) -> usize {
        self.n * (self.n + 1) / 2 + self.m * self.n
    }

    /// Packs `(Q, R)` into the variable vector: upper triangle of `Q` row by row, then
    /// `R` row-major.
    pub fn pack(&self, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.variable_count());
        let mut k = 0;
        for i in 0..self.n {
            for j in i..self.n {
                x[k] = q[(i, j)];
                k += 1;
            }
        }
        for i in 0..self.m {
            for j in 0..self.n {
                x[k] = r[(i, j)];
                k += 1;
            }
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut q = DMatrix::zeros(self.n, self.n);
        let mut r = DMatrix::zeros(self.m, self.n);
        let mut k = 0;
        for i in 0..self.n {
            for j in i..self.n {
                q[(i, j)] = x[k];
                q[(j, i)] = x[k];
                k += 1;
            }
        }
        for i in 0..self.m {
            for j in 0..self.n {
                r[(i, j)] = x[k];
                k += 1;
            }
        }
        (q, r)
    }

    /// Adds the constraint `map(Q, R) < -margin I`; `map` must be affine and return a
    /// symmetric matrix.
    pub fn add_constraint<F>(&mut self, margin: f64, map: F)
    where
        F: Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
    {
        let nv = self.variable_count();
        let zero_q = DMatrix::zeros(self.n, self.n);
        let zero_r = DMatrix::zeros(self.m, self.n);
        let constant = map(&zero_q, &zero_r);
        let mut basis = Vec::with_capacity(nv);
        for k in 0..nv {
            let mut unit = DVector::zeros(nv);
            unit[k] = 1.0;
            let (q, r) = self.unpack(&unit);
            basis.push(map(&q, &r) - &constant);
        }
        self.constraints.push(AffineLmi {
            constant,
            basis,
            margin,
        });
    }

    /// Constraint values at `(Q, R)`.
    pub fn evaluate(&self, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let x = self.pack(q, r);
        self.constraints.iter().map(|c| c.evaluate_vec(&x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Upper bound imposed on `Q`.
    pub q_bound: f64,
    /// Largest admitted condition number of `Q`. Keeps the search space bounded.
    pub condition_bound: f64,
    /// Bound on the spectral norm of `R`.
    pub r_bound: f64,
    /// Residual and duality-gap tolerance.
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Stop as soon as the slack falls below this value instead of maximizing the margin.
    pub stop_slack: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            q_bound: 1.0,
            condition_bound: 1e4,
            r_bound: 1e6,
            gap_tolerance: 1e-8,
            max_iterations: 400,
            step_fraction: 0.95,
            stop_slack: None,
        }
    }
}

/// Point returned by the solver with its verification data.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpPoint {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Largest eigenvalue of every constraint matrix, in problem order.
    pub max_eigenvalues: Vec<f64>,
    /// Largest value of `lambda_max(F_j) + margin_j`; negative iff every constraint holds.
    pub worst_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(SdpPoint),
    /// No strictly feasible point was found; the best point is attached. This is not a
    /// proof of infeasibility.
    NotFound(SdpPoint),
}

impl Feasibility {
    pub fn point(&self) -> &SdpPoint {
        match self {
            Feasibility::Feasible(p) | Feasibility::NotFound(p) => p,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    SymmetricEigen::new(sym).eigenvalues.max()
}

/// Splits the index set of a constraint into the blocks of its common sparsity pattern.
fn block_partition(c: &AffineLmi) -> Vec<Vec<usize>> {
    let n = c.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for m in core::iter::once(&c.constant).chain(c.basis.iter()) {
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)] != 0.0 || m[(j, i)] != 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut root_of_block: Vec<usize> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match root_of_block.iter().position(|&r| r == root) {
            Some(b) => blocks[b].push(i),
            None => {
                root_of_block.push(root);
                blocks.push(alloc::vec![i]);
            }
        }
    }
    blocks
}

/// A cone block `S(z) = S0 + sum_k z_k S_k > 0` over `z = (x, t)`; only the
/// nonzero directions are stored.
struct ConeBlock {
    constant: DMatrix<f64>,
    directions: Vec<(usize, DMatrix<f64>)>,
}

impl ConeBlock {
    fn value(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (k, d) in &self.directions {
            s += d * z[*k];
        }
        s
    }
}

fn sub_matrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Blocks `-F_j - scale eps_j I (+ t I)` of every constraint, split by sparsity.
fn constraint_blocks(problem: &SdpProblem, slack: Option<usize>, margin_scale: f64) -> Vec<ConeBlock> {
    let mut blocks = Vec::new();
    for c in &problem.constraints {
        for idx in block_partition(c) {
            let dim = idx.len();
            let constant = -sub_matrix(&c.constant, &idx) - DMatrix::identity(dim, dim) * (c.margin * margin_scale);
            let mut directions = Vec::new();
            for (k, b) in c.basis.iter().enumerate() {
                let sb = -sub_matrix(b, &idx);
                if sb.iter().any(|v| *v != 0.0) {
                    directions.push((k, sb));
                }
            }
            if let Some(t) = slack {
                directions.push((t, DMatrix::identity(dim, dim)));
            }
            blocks.push(ConeBlock { constant, directions });
        }
    }
    blocks
}

/// `sign (Q - offset I) > 0`.
fn q_bound_block(n: usize, offset: f64, sign: f64) -> ConeBlock {
    let mut directions = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let mut d = DMatrix::zeros(n, n);
            d[(i, j)] = sign;
            d[(j, i)] = sign;
            directions.push((k, d));
            k += 1;
        }
    }
    ConeBlock {
        constant: DMatrix::identity(n, n) * (-sign * offset),
        directions,
    }
}

/// `[s I_m, W R; R^T W, X] > 0` with `s` either the fixed `bound` (and `X = bound I`) or
/// the variable at `slack` (and `X = Q`). `W` is diagonal with entries `row_weights`.
fn r_block(problem: &SdpProblem, bound: f64, slack: Option<usize>, row_weights: &[f64]) -> ConeBlock {
    let (n, m) = (problem.n, problem.m);
    let size = m + n;
    let mut directions = Vec::new();
    let mut constant = DMatrix::zeros(size, size);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            if slack.is_some() {
                let mut d = DMatrix::zeros(size, size);
                d[(m + i, m + j)] = 1.0;
                d[(m + j, m + i)] = 1.0;
                directions.push((k, d));
            }
            k += 1;
        }
    }
    for i in 0..m {
        for j in 0..n {
            let mut d = DMatrix::zeros(size, size);
            d[(i, m + j)] = row_weights[i];
            d[(m + j, i)] = row_weights[i];
            directions.push((k, d));
            k += 1;
        }
    }
    match slack {
        Some(t) => {
            let mut d = DMatrix::zeros(size, size);
            for i in 0..m {
                d[(i, i)] = 1.0;
            }
            directions.push((t, d));
        }
        None => constant = DMatrix::identity(size, size) * bound,
    }
    ConeBlock { constant, directions }
}

fn build_blocks(problem: &SdpProblem, options: &SolverOptions) -> Vec<ConeBlock> {
    let t_index = problem.variable_count();
    let mut blocks = constraint_blocks(problem, Some(t_index), 1.0);
    blocks.push(q_bound_block(problem.n, options.q_bound, -1.0));
    blocks.push(q_bound_block(problem.n, options.q_bound / options.condition_bound, 1.0));
    if problem.m > 0 {
        let ones = alloc::vec![1.0; problem.m];
        blocks.push(r_block(problem, options.r_bound, None, &ones));
    }
    blocks
}

/// Solves `H dz = rhs` after symmetric Jacobi scaling, with a growing diagonal shift if
/// the scaled matrix is numerically singular.
fn solve_newton(hess: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = hess.nrows();
    let d: DVector<f64> = hess.diagonal().map(|h| if h > 0.0 { 1.0 / libm::sqrt(h) } else { 1.0 });
    let scaled = DMatrix::from_fn(n, n, |i, j| hess[(i, j)] * d[i] * d[j]);
    let scaled_rhs = rhs.component_mul(&d);
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut reg = scaled.clone();
        for i in 0..n {
            reg[(i, i)] += shift;
        }
        if let Some(ch) = Cholesky::new(reg) {
            return Some(ch.solve(&scaled_rhs).component_mul(&d));
        }
        shift = if shift == 0.0 { 1e-12 } else { shift * 100.0 };
    }
    None
}

fn make_point(problem: &SdpProblem, x: &DVector<f64>, iterations: usize) -> SdpPoint {
    let (q, r) = problem.unpack(x);
    let max_eigenvalues: Vec<f64> = problem
        .constraints
        .iter()
        .map(|c| max_symmetric_eigenvalue(&c.evaluate_vec(x)))
        .collect();
    let worst_violation = problem
        .constraints
        .iter()
        .zip(&max_eigenvalues)
        .map(|(c, e)| e + c.margin)
        .fold(f64::NEG_INFINITY, f64::max);
    SdpPoint {
        q,
        r,
        max_eigenvalues,
        worst_violation,
        iterations,
    }
}

/// Largest `a <= 1` keeping `x + a dx` positive definite, or `None` if `x` is not.
fn step_to_boundary(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let left = l.solve_lower_triangular(dx)?;
    let m = l.solve_lower_triangular(&left.transpose())?;
    let lo = SymmetricEigen::new((&m + m.transpose()) * 0.5).eigenvalues.min();
    Some(if lo < -1.0 { -1.0 / lo } else { 1.0 })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `sum_k v_k D_k` over the directions of one block.
fn block_combination(block: &ConeBlock, v: &DVector<f64>) -> DMatrix<f64> {
    let dim = block.constant.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for (k, d) in &block.directions {
        out += d * v[*k];
    }
    out
}

/// `(<D_k, Z>)_k` accumulated into `out`.
fn add_adjoint(block: &ConeBlock, z: &DMatrix<f64>, out: &mut DVector<f64>) {
    for (k, d) in &block.directions {
        out[*k] += d.dot(z);
    }
}

/// Per-block state of the primal-dual iteration: `x` is the multiplier of the block and
/// `s` its slack.
struct PdState {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
}

/// Newton step `(dz, dX, dS)`.
type Step = (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Minimizes the last coordinate of `z` subject to every block `C + sum_k z_k D_k` being
/// positive semidefinite. Infeasible-start primal-dual path following with the HKM
/// direction and a Mehrotra predictor-corrector. `stop` is polled after every iteration;
/// returning true ends the run. Returns whether the run ended by convergence or `stop`.
fn primal_dual<F>(
    blocks: &[ConeBlock],
    z: &mut DVector<f64>,
    options: &SolverOptions,
    iterations: &mut usize,
    mut stop: F,
) -> bool
where
    F: FnMut(&DVector<f64>) -> bool,
{
    let nz = z.len();
    let mut c = DVector::zeros(nz);
    c[nz - 1] = 1.0;
    let total_dim: usize = blocks.iter().map(|b| b.constant.nrows()).sum();
    let mut st = PdState {
        x: blocks
            .iter()
            .map(|b| DMatrix::identity(b.constant.nrows(), b.constant.nrows()))
            .collect(),
        s: blocks
            .iter()
            .map(|b| {
                let v = b.value(z);
                let dim = v.nrows();
                if Cholesky::new(v.clone()).is_some() {
                    v
                } else {
                    DMatrix::identity(dim, dim)
                }
            })
            .collect(),
    };
    loop {
        // residuals of A(X) = c and S = C + sum z_k D_k
        let mut rp = -&c;
        let mut rd = Vec::with_capacity(blocks.len());
        let mut complementarity = 0.0;
        for (i, b) in blocks.iter().enumerate() {
            add_adjoint(b, &st.x[i], &mut rp);
            rd.push(b.value(z) - &st.s[i]);
            complementarity += st.x[i].dot(&st.s[i]);
        }
        let mu = complementarity / total_dim as f64;
        let dual_residual = rd.iter().map(|r| r.amax()).fold(0.0, f64::max);
        let objective = z[nz - 1];
        if rp.amax() < options.gap_tolerance
            && dual_residual < options.gap_tolerance * (1.0 + objective.abs())
            && complementarity < options.gap_tolerance * (1.0 + objective.abs())
        {
            return true;
        }
        if stop(z) {
            return true;
        }
        if *iterations >= options.max_iterations {
            return false;
        }
        *iterations += 1;

        // Schur complement M_kl = <D_l, X D_k S^-1>
        let mut s_inv = Vec::with_capacity(blocks.len());
        let mut schur = DMatrix::zeros(nz, nz);
        for (i, b) in blocks.iter().enumerate() {
            let Some(chol) = Cholesky::new(st.s[i].clone()) else {
                return false;
            };
            let si = chol.inverse();
            let dim = si.nrows();
            let p = b.directions.len();
            let mut va = DMatrix::zeros(dim * dim, p);
            let mut vp = DMatrix::zeros(dim * dim, p);
            for (col, (_, d)) in b.directions.iter().enumerate() {
                va.column_mut(col).copy_from_slice(d.as_slice());
                let prod = &st.x[i] * d * &si;
                vp.column_mut(col).copy_from_slice(prod.as_slice());
            }
            let local = va.transpose() * vp;
            for (a, (ka, _)) in b.directions.iter().enumerate() {
                for (e, (ke, _)) in b.directions.iter().enumerate() {
                    schur[(*ka, *ke)] += local[(a, e)];
                }
            }
            s_inv.push(si);
        }
        let schur = symmetrize(&schur);

        // Search direction for target sigma mu and second-order correction `cor`.
        let direction = |sigma_mu: f64, cor: Option<&[DMatrix<f64>]>| -> Option<Step> {
            let mut rhs = rp.clone();
            let mut h = Vec::with_capacity(blocks.len());
            for (i, b) in blocks.iter().enumerate() {
                let dim = st.x[i].nrows();
                let mut target = DMatrix::identity(dim, dim) * sigma_mu;
                if let Some(cor) = cor {
                    target -= &cor[i];
                }
                let hi = &target * &s_inv[i] - &st.x[i];
                // rhs = rp - A(H) + A(X Rd S^-1), with A(Z)_k = -<D_k, Z>
                add_adjoint(b, &hi, &mut rhs);
                let xr = &st.x[i] * &rd[i] * &s_inv[i];
                let mut tmp = DVector::zeros(nz);
                add_adjoint(b, &xr, &mut tmp);
                rhs -= tmp;
                h.push(hi);
            }
            // A(X A^T(dy) S^-1) = -sum <D_k, X (-sum dy_l D_l) S^-1> = M dy
            let dy = solve_newton(&schur, &rhs)?;
            let mut ds = Vec::with_capacity(blocks.len());
            let mut dx = Vec::with_capacity(blocks.len());
            for (i, b) in blocks.iter().enumerate() {
                let dsi = &rd[i] + block_combination(b, &dy);
                let dxi = symmetrize(&(&h[i] - &st.x[i] * &dsi * &s_inv[i]));
                ds.push(dsi);
                dx.push(dxi);
            }
            Some((dy, dx, ds))
        };
        let step_lengths = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| -> Option<(f64, f64)> {
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for i in 0..blocks.len() {
                ap = ap.min(step_to_boundary(&st.x[i], &dx[i])?);
                ad = ad.min(step_to_boundary(&st.s[i], &ds[i])?);
            }
            Some((ap, ad))
        };

        let Some((_, dx_aff, ds_aff)) = direction(0.0, None) else {
            return false;
        };
        let Some((ap, ad)) = step_lengths(&dx_aff, &ds_aff) else {
            return false;
        };
        let mut predicted = 0.0;
        for i in 0..blocks.len() {
            predicted += (&st.x[i] + &dx_aff[i] * ap).dot(&(&st.s[i] + &ds_aff[i] * ad));
        }
        let ratio = (predicted / complementarity).clamp(0.0, 1.0);
        let sigma = ratio * ratio * ratio;
        let cor: Vec<DMatrix<f64>> = dx_aff.iter().zip(&ds_aff).map(|(x, s)| x * s).collect();
        let Some((dy, dx, ds)) = direction(sigma * mu, Some(&cor)) else {
            return false;
        };
        let Some((ap, ad)) = step_lengths(&dx, &ds) else {
            return false;
        };
        let ap = (options.step_fraction * ap).min(1.0);
        let ad = (options.step_fraction * ad).min(1.0);
        for i in 0..blocks.len() {
            st.x[i] += &dx[i] * ap;
            st.s[i] += &ds[i] * ad;
        }
        *z += dy * ad;
    }
}

/// Minimizes the common slack. Deterministic: the starting point is `Q = q_bound/2 I`, `R = 0`.
pub fn solve_feasibility(problem: &SdpProblem, options: &SolverOptions) -> Result<Feasibility> {
    let nv = problem.variable_count();
    let blocks = build_blocks(problem, options);

    if !(options.condition_bound > 2.0) {
        return Err(Error::InvalidParameter("condition bound must exceed 2"));
    }
    let q0 = DMatrix::identity(problem.n, problem.n) * (0.5 * options.q_bound);
    let r0 = DMatrix::zeros(problem.m, problem.n);
    let x0 = problem.pack(&q0, &r0);
    let start = make_point(problem, &x0, 0);
    let mut z = DVector::zeros(nv + 1);
    z.rows_mut(0, nv).copy_from(&x0);
    z[nv] = start.worst_violation.max(0.0) + 1.0;

    let mut steps = 0usize;
    let finished = primal_dual(&blocks, &mut z, options, &mut steps, |zz| {
        options.stop_slack.is_some_and(|s| zz[nv] < s)
            && make_point(problem, &zz.rows(0, nv).into_owned(), 0).worst_violation < 0.0
    });
    let point = make_point(problem, &z.rows(0, nv).into_owned(), steps);
    if point.worst_violation < 0.0 {
        Ok(Feasibility::Feasible(point))
    } else if finished {
        Ok(Feasibility::NotFound(point))
    } else {
        Err(Error::SolverStalled {
            iterations: steps,
            best: point.worst_violation,
        })
    }
}

/// From a strictly feasible point, minimizes `s` subject to every constraint,
/// `Q >= I` and `W R Q^-1 R^T W < s I` with `W = diag(1 / input_scale)`; this bounds
/// `||W K||^2` by `s`. The constraints must be homogeneous in `(Q, R)` so that the start
/// can be rescaled.
pub fn minimize_gain(
    problem: &SdpProblem,
    start: &SdpPoint,
    input_scale: &[f64],
    options: &SolverOptions,
) -> Result<SdpPoint> {
    let nv = problem.variable_count();
    if input_scale.len() != problem.m || input_scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("input scales must be positive, one per input"));
    }
    let weights: Vec<f64> = input_scale.iter().map(|s| 1.0 / s).collect();
    if problem.constraints.iter().any(|c| c.constant.amax() != 0.0) {
        return Err(Error::InvalidParameter(
            "gain minimization needs homogeneous constraints",
        ));
    }
    let q_min = SymmetricEigen::new(start.q.clone()).eigenvalues.min();
    if !(q_min > 0.0) || !(start.worst_violation < 0.0) {
        return Err(Error::InvalidParameter(
            "gain minimization needs a strictly feasible start",
        ));
    }
    // scaling by gamma >= 1 keeps every constraint strictly feasible
    let gamma = (2.0 / q_min).max(1.0);
    let q = &start.q * gamma;
    let r = &start.r * gamma;
    let q_inv = Cholesky::new(q.clone())
        .ok_or(Error::InvalidParameter("Lyapunov matrix is not positive definite"))?
        .inverse();
    let wr = DMatrix::from_fn(problem.m, problem.n, |i, j| weights[i] * r[(i, j)]);
    let t0 = max_symmetric_eigenvalue(&(&wr * q_inv * wr.transpose())) * 2.0 + 1.0;

    // the optimum sits on the constraint boundary; doubled margins keep it strictly inside
    let mut blocks = constraint_blocks(problem, None, 2.0);
    blocks.push(q_bound_block(problem.n, 1.0, 1.0));
    // the rescaled start has cond(Q) <= condition_bound, so it lies strictly inside
    let ceiling = 4.0
        * options
            .condition_bound
            .max(SymmetricEigen::new(q.clone()).eigenvalues.max());
    blocks.push(q_bound_block(problem.n, ceiling, -1.0));
    if problem.m > 0 {
        blocks.push(r_block(problem, 0.0, Some(nv), &weights));
    }
    let mut z = DVector::zeros(nv + 1);
    z.rows_mut(0, nv).copy_from(&problem.pack(&q, &r));
    z[nv] = t0;
    let mut steps = 0usize;
    primal_dual(&blocks, &mut z, options, &mut steps, |_| false);
    let point = make_point(problem, &z.rows(0, nv).into_owned(), start.iterations + steps);
    if point.worst_violation < 0.0 {
        Ok(point)
    } else {
        Err(Error::SolverStalled {
            iterations: steps,
            best: point.worst_violation,
        })
    }
}
