//! Linear algebra for the nonvariational system: the matrix-free block
//! operator, restarted GMRES and conjugate gradients, the Dirichlet lift,
//! a dense Schur-complement oracle, finite element Hessian extraction and
//! condition-number estimation.
//!
//! The block operator never forms the full system. Its unknown vector
//! stacks the d^2 Hessian coefficient blocks (length N each, in row-major
//! (alpha, beta) order) followed by the interior solution block (length
//! N_int). Block row (alpha, beta) applies M h_ab - C_ab u and the last
//! row applies sum_ab B^ab h_ab; Dirichlet data enters the right-hand side
//! through the boundary coupling blocks.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{NvSystem, DIM};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Size guard for dense fallback paths (Schur oracle, condition numbers,
/// direct mass solves).
pub const DENSE_GUARD: usize = 5000;

/// A square linear operator given by its action.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

/// Krylov solver configuration.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative residual tolerance.
    pub tol: f64,
    /// GMRES restart length.
    pub restart: usize,
    /// Total inner-iteration cap; defaults to 20 x operator dimension.
    pub maxiter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            restart: 50,
            maxiter: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }

    fn iteration_cap(&self, dim: usize) -> usize {
        self.maxiter.unwrap_or(20 * dim)
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    /// True relative residual of the returned iterate.
    pub residual: f64,
    pub converged: bool,
    pub seconds: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Restarted GMRES with optional initial guess and optional left
/// preconditioner. Convergence is always verified against the true
/// (unpreconditioned) residual before reporting success.
pub fn gmres(
    op: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: Option<&dyn LinearOperator>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let maxiter = opts.iteration_cap(n);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
                seconds: start.elapsed().as_secs_f64(),
            },
        ));
    }
    let apply_precond = |r: &[f64], z: &mut [f64]| match precond {
        Some(p) => p.apply(r, z),
        None => z.copy_from_slice(r),
    };

    let mut x = match x0 {
        Some(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            v.to_vec()
        }
        None => vec![0.0; n],
    };
    let restart = opts.restart.max(1).min(n);
    let mut total_iters = 0usize;
    let mut work = vec![0.0; n];

    loop {
        // True residual r = b - A x and its preconditioned image.
        op.apply(&x, &mut work);
        let r: Vec<f64> = b.iter().zip(&work).map(|(bi, ai)| bi - ai).collect();
        let residual = norm(&r) / b_norm;
        if residual <= opts.tol {
            return Ok((
                x,
                SolveStats {
                    iterations: total_iters,
                    residual,
                    converged: true,
                    seconds: start.elapsed().as_secs_f64(),
                },
            ));
        }
        if total_iters >= maxiter {
            return Err(Error::NonConvergence {
                iterations: total_iters,
                residual,
                best: x,
            });
        }

        let mut z = vec![0.0; n];
        apply_precond(&r, &mut z);
        let beta = norm(&z);
        if beta == 0.0 {
            // Preconditioned residual vanished but the true one did not.
            return Err(Error::NonConvergence {
                iterations: total_iters,
                residual,
                best: x,
            });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(z.iter().map(|v| v / beta).collect());
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;

        let mut k = 0;
        while k < restart && total_iters < maxiter {
            total_iters += 1;
            op.apply(&basis[k], &mut work);
            let mut w = vec![0.0; n];
            apply_precond(&work, &mut w);

            // Modified Gram-Schmidt.
            let mut h = vec![0.0; k + 2];
            for (j, vj) in basis.iter().enumerate().take(k + 1) {
                let hj = dot(vj, &w);
                h[j] = hj;
                for (wi, vji) in w.iter_mut().zip(vj) {
                    *wi -= hj * vji;
                }
            }
            let w_norm = norm(&w);
            h[k + 1] = w_norm;

            // Previous Givens rotations.
            for j in 0..k {
                let t = cs[j] * h[j] + sn[j] * h[j + 1];
                h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
                h[j] = t;
            }
            // New rotation to annihilate h[k+1].
            let denom = (h[k] * h[k] + h[k + 1] * h[k + 1]).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (h[k] / denom, h[k + 1] / denom)
            };
            cs[k] = c;
            sn[k] = s;
            h[k] = c * h[k] + s * h[k + 1];
            h[k + 1] = 0.0;
            let t = c * g[k];
            g[k + 1] = -s * g[k];
            g[k] = t;
            hess.push(h);
            k += 1;

            let lucky_breakdown = w_norm <= 1e-14 * beta;
            if !lucky_breakdown {
                basis.push(w.iter().map(|v| v / w_norm).collect());
            }
            if lucky_breakdown || g[k].abs() / b_norm <= opts.tol {
                break;
            }
        }

        // Solve the triangular least-squares system and update x.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut sum = g[i];
            for (j, yj) in y.iter().enumerate().take(k).skip(i + 1) {
                sum -= hess[j][i] * yj;
            }
            y[i] = if hess[i][i] != 0.0 { sum / hess[i][i] } else { 0.0 };
        }
        for (i, yi) in y.iter().enumerate() {
            for (xj, vji) in x.iter_mut().zip(&basis[i]) {
                *xj += yi * vji;
            }
        }
    }
}

/// Conjugate gradients for symmetric positive definite operators.
pub fn cg(
    op: &dyn LinearOperator,
    b: &[f64],
    tol: f64,
    maxiter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
                seconds: start.elapsed().as_secs_f64(),
            },
        ));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..maxiter {
        op.apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= tol * b_norm {
            return Ok((
                x,
                SolveStats {
                    iterations: it + 1,
                    residual: rs_new.sqrt() / b_norm,
                    converged: true,
                    seconds: start.elapsed().as_secs_f64(),
                },
            ));
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::NonConvergence {
        iterations: maxiter,
        residual: rs.sqrt() / b_norm,
        best: x,
    })
}

/// Matrix-free application of the block system.
pub struct BlockOperator<'a> {
    sys: &'a NvSystem,
}

impl<'a> BlockOperator<'a> {
    pub fn new(sys: &'a NvSystem) -> Self {
        BlockOperator { sys }
    }

    /// Right-hand side with the Dirichlet lift already applied: the
    /// Hessian block rows receive the boundary couplings applied to the
    /// interpolated boundary data, the last row receives the load.
    pub fn rhs(&self) -> Vec<f64> {
        let n = self.sys.ndofs();
        let mut b = vec![0.0; self.sys.block_dim()];
        for alpha in 0..DIM {
            for beta in 0..DIM {
                let k = alpha * DIM + beta;
                self.sys.c_boundary[alpha][beta]
                    .matvec(&self.sys.boundary_values, &mut b[k * n..(k + 1) * n]);
            }
        }
        b[DIM * DIM * n..].copy_from_slice(&self.sys.load);
        b
    }
}

impl LinearOperator for BlockOperator<'_> {
    fn dim(&self) -> usize {
        self.sys.block_dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.sys.ndofs();
        let d2 = DIM * DIM;
        assert_eq!(x.len(), self.sys.block_dim());
        assert_eq!(y.len(), self.sys.block_dim());
        let u = &x[d2 * n..];
        for alpha in 0..DIM {
            for beta in 0..DIM {
                let k = alpha * DIM + beta;
                let h = &x[k * n..(k + 1) * n];
                let out = &mut y[k * n..(k + 1) * n];
                self.sys.mass.matvec(h, out);
                self.sys.c[alpha][beta].matvec_add(u, -1.0, out);
            }
        }
        let out = &mut y[d2 * n..];
        out.fill(0.0);
        for alpha in 0..DIM {
            for beta in 0..DIM {
                let k = alpha * DIM + beta;
                self.sys.b[alpha][beta].matvec_add(&x[k * n..(k + 1) * n], 1.0, out);
            }
        }
    }
}

/// Block-diagonal left preconditioner: the inverse lumped-mass diagonal on
/// the d^2 Hessian blocks, identity on the solution block. Only valid for
/// degree-1 spaces, where lumping keeps the diagonal positive.
pub struct LumpedMassPreconditioner {
    inv_diag: Vec<f64>,
    n_interior: usize,
}

impl LumpedMassPreconditioner {
    pub fn new(sys: &NvSystem) -> Result<LumpedMassPreconditioner> {
        let sums = sys.mass.row_sums();
        let max = sums.iter().cloned().fold(0.0_f64, f64::max);
        // Quadratic vertex rows sum to zero up to rounding; lumping is a
        // degree-1 device.
        if sums.iter().any(|&s| s <= 1e-8 * max) {
            return Err(Error::UnsupportedOption(
                "lumped-mass preconditioning needs positive row sums (degree-1 spaces only)"
                    .into(),
            ));
        }
        Ok(LumpedMassPreconditioner {
            inv_diag: sums.iter().map(|s| 1.0 / s).collect(),
            n_interior: sys.n_interior(),
        })
    }
}

impl LinearOperator for LumpedMassPreconditioner {
    fn dim(&self) -> usize {
        DIM * DIM * self.inv_diag.len() + self.n_interior
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.inv_diag.len();
        for k in 0..DIM * DIM {
            for i in 0..n {
                y[k * n + i] = x[k * n + i] * self.inv_diag[i];
            }
        }
        y[DIM * DIM * n..].copy_from_slice(&x[DIM * DIM * n..]);
    }
}

/// Solution of the nonvariational system: interior and boundary solution
/// coefficients together with the finite element Hessian blocks extracted
/// from the block unknown vector.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u_interior: Vec<f64>,
    pub u_boundary: Vec<f64>,
    /// Hessian coefficients, each of length N, indexed [alpha][beta].
    pub hessian: [[Vec<f64>; 2]; 2],
    pub stats: SolveStats,
}

impl Solution {
    /// Full coefficient vector of the solution (interior then boundary).
    pub fn full_coefficients(&self) -> Vec<f64> {
        let mut full = self.u_interior.clone();
        full.extend_from_slice(&self.u_boundary);
        full
    }

    /// Re-stack into the block unknown layout, e.g. to warm start another
    /// solve.
    pub fn stacked(&self) -> Vec<f64> {
        let n = self.hessian[0][0].len();
        let mut v = Vec::with_capacity(DIM * DIM * n + self.u_interior.len());
        for alpha in 0..DIM {
            for beta in 0..DIM {
                v.extend_from_slice(&self.hessian[alpha][beta]);
            }
        }
        v.extend_from_slice(&self.u_interior);
        v
    }
}

/// Solve the assembled system matrix-free with restarted GMRES.
pub fn nvfem_solve(sys: &NvSystem, opts: &SolverOptions) -> Result<Solution> {
    nvfem_solve_from(sys, opts, None, None)
}

/// As [`nvfem_solve`], with an optional initial guess in stacked block
/// layout and an optional left preconditioner.
pub fn nvfem_solve_from(
    sys: &NvSystem,
    opts: &SolverOptions,
    x0: Option<&[f64]>,
    precond: Option<&dyn LinearOperator>,
) -> Result<Solution> {
    if sys.n_interior() == 0 {
        return Err(Error::DegenerateSystem(
            "no interior degrees of freedom".into(),
        ));
    }
    let op = BlockOperator::new(sys);
    let b = op.rhs();
    let (v, stats) = gmres(&op, &b, x0, precond, opts)?;
    Ok(unpack_solution(sys, &v, stats))
}

fn unpack_solution(sys: &NvSystem, v: &[f64], stats: SolveStats) -> Solution {
    let n = sys.ndofs();
    let take = |k: usize| v[k * n..(k + 1) * n].to_vec();
    Solution {
        u_interior: v[DIM * DIM * n..].to_vec(),
        u_boundary: sys.boundary_values.clone(),
        hessian: [[take(0), take(1)], [take(2), take(3)]],
        stats,
    }
}

/// Direct dense solve of the eliminated system: forms the reduced operator
/// sum_ab B^ab M^-1 C_ab densely, folds the Dirichlet lift into the
/// right-hand side and solves with LU. Serves as the equivalence oracle
/// for the matrix-free block solve.
pub fn dense_schur_solve(sys: &NvSystem) -> Result<Vec<f64>> {
    let n = sys.ndofs();
    let ni = sys.n_interior();
    if n > DENSE_GUARD {
        return Err(Error::DenseGuardExceeded {
            size: n,
            limit: DENSE_GUARD,
        });
    }
    if ni == 0 {
        return Err(Error::DegenerateSystem(
            "no interior degrees of freedom".into(),
        ));
    }
    let mass_lu = sys.mass.to_dense().lu();
    let g = DVector::from_column_slice(&sys.boundary_values);
    let mut schur = DMatrix::<f64>::zeros(ni, ni);
    let mut rhs = DVector::from_column_slice(&sys.load);
    for alpha in 0..DIM {
        for beta in 0..DIM {
            let b_dense = sys.b[alpha][beta].to_dense();
            let x = mass_lu
                .solve(&sys.c[alpha][beta].to_dense())
                .ok_or_else(|| Error::DegenerateSystem("mass matrix is singular".into()))?;
            schur += &b_dense * x;
            let lift = mass_lu
                .solve(&(sys.c_boundary[alpha][beta].to_dense() * &g))
                .ok_or_else(|| Error::DegenerateSystem("mass matrix is singular".into()))?;
            rhs -= b_dense * lift;
        }
    }
    let u = schur
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateSystem("reduced operator is singular".into()))?;
    Ok(u.as_slice().to_vec())
}

/// Finite element Hessian of the FE function with the given interior and
/// boundary coefficients: for each (alpha, beta) solves
/// M h = C_ab u_int + C^bdry_ab u_bdry. Small systems use a dense
/// factorization, large ones an inner conjugate-gradient solve.
pub fn fe_hessian(
    sys: &NvSystem,
    u_interior: &[f64],
    u_boundary: &[f64],
) -> Result<[[Vec<f64>; 2]; 2]> {
    let n = sys.ndofs();
    if u_interior.len() != sys.n_interior() {
        return Err(Error::DimensionMismatch {
            expected: sys.n_interior(),
            got: u_interior.len(),
        });
    }
    if u_boundary.len() != sys.n_boundary() {
        return Err(Error::DimensionMismatch {
            expected: sys.n_boundary(),
            got: u_boundary.len(),
        });
    }
    let dense_factor = if n <= DENSE_GUARD {
        Some(sys.mass.to_dense().lu())
    } else {
        None
    };
    let mut out: [[Vec<f64>; 2]; 2] = Default::default();
    for alpha in 0..DIM {
        for beta in 0..DIM {
            let mut rhs = vec![0.0; n];
            sys.c[alpha][beta].matvec(u_interior, &mut rhs);
            sys.c_boundary[alpha][beta].matvec_add(u_boundary, 1.0, &mut rhs);
            let h = match &dense_factor {
                Some(lu) => lu
                    .solve(&DVector::from_column_slice(&rhs))
                    .ok_or_else(|| Error::DegenerateSystem("mass matrix is singular".into()))?
                    .as_slice()
                    .to_vec(),
                None => cg(&sys.mass, &rhs, 1e-12, 10 * n)?.0,
            };
            out[alpha][beta] = h;
        }
    }
    Ok(out)
}

/// Assemble the block matrix densely (for oracles and conditioning).
pub fn dense_block_matrix(sys: &NvSystem) -> DMatrix<f64> {
    let n = sys.ndofs();
    let d2 = DIM * DIM;
    let dim = sys.block_dim();
    let mut e = DMatrix::zeros(dim, dim);
    for alpha in 0..DIM {
        for beta in 0..DIM {
            let k = alpha * DIM + beta;
            for (i, j, v) in sys.mass.iter() {
                e[(k * n + i, k * n + j)] += v;
            }
            for (i, j, v) in sys.c[alpha][beta].iter() {
                e[(k * n + i, d2 * n + j)] -= v;
            }
            for (i, j, v) in sys.b[alpha][beta].iter() {
                e[(d2 * n + i, k * n + j)] += v;
            }
        }
    }
    e
}

/// 2-norm condition number sigma_max / sigma_min of a dense matrix.
pub fn dense_condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(f64::MIN, f64::max);
    let min = sv.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

/// Condition number of the block matrix, computed from its extreme
/// singular values (the operator is nonsymmetric, so the singular-value
/// ratio is the standard 2-norm condition number).
pub fn condition_estimate(sys: &NvSystem) -> Result<f64> {
    let dim = sys.block_dim();
    if dim > DENSE_GUARD {
        return Err(Error::DenseGuardExceeded {
            size: dim,
            limit: DENSE_GUARD,
        });
    }
    Ok(dense_condition(&dense_block_matrix(sys)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::identity_coefficient;
    use crate::fespace::FeSpace;
    use crate::mesh::Mesh;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    struct Diag(Vec<f64>);

    impl LinearOperator for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.0.len() {
                y[i] = self.0[i] * x[i];
            }
        }
    }

    fn poisson_system(n: usize, p: usize) -> (FeSpace, NvSystem) {
        let space = FeSpace::new(Mesh::uniform_square(n).unwrap(), p).unwrap();
        let pi = std::f64::consts::PI;
        let ident = identity_coefficient();
        let sys = NvSystem::assemble(
            &space,
            &ident,
            move |q| -2.0 * pi * pi * (pi * q[0]).sin() * (pi * q[1]).sin(),
            |_| 0.0,
        );
        (space, sys)
    }

    #[test]
    fn gmres_identity_converges_in_one_iteration() {
        let op = Diag(vec![1.0; 7]);
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let (x, stats) = gmres(&op, &b, None, None, &SolverOptions::default()).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(stats.converged);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_diagonal_system() {
        let k = 12;
        let op = Diag((1..=k).map(|i| i as f64).collect());
        let b = vec![1.0; k];
        let (x, stats) = gmres(&op, &b, None, None, &SolverOptions::default()).unwrap();
        assert!(stats.converged && stats.residual <= 1e-10);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i as f64 + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn gmres_zero_rhs() {
        let op = Diag(vec![2.0; 5]);
        let (x, stats) = gmres(&op, &[0.0; 5], None, None, &SolverOptions::default()).unwrap();
        assert!(stats.converged);
        assert_eq!(stats.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmres_reports_nonconvergence_with_best_iterate() {
        let op = Diag((1..=40).map(|i| i as f64).collect());
        let opts = SolverOptions {
            tol: 1e-14,
            restart: 3,
            maxiter: Some(4),
        };
        match gmres(&op, &vec![1.0; 40], None, None, &opts) {
            Err(Error::NonConvergence {
                iterations, best, ..
            }) => {
                assert_eq!(iterations, 4);
                assert_eq!(best.len(), 40);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn cg_solves_spd_system() {
        let space = FeSpace::new(Mesh::uniform_square(4).unwrap(), 1).unwrap();
        let mass = crate::assembly::assemble_mass(&space, false).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        let xref: Vec<f64> = (0..space.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; space.ndofs()];
        mass.matvec(&xref, &mut b);
        let (x, stats) = cg(&mass, &b, 1e-13, 1000).unwrap();
        assert!(stats.converged);
        for (xi, ri) in x.iter().zip(&xref) {
            assert!((xi - ri).abs() < 1e-10);
        }
    }

    #[test]
    fn block_apply_matches_dense_matrix() {
        let (_, sys) = poisson_system(2, 1);
        let op = BlockOperator::new(&sys);
        let e = dense_block_matrix(&sys);
        let mut rng = StdRng::seed_from_u64(42);
        let v: Vec<f64> = (0..sys.block_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; sys.block_dim()];
        op.apply(&v, &mut y);
        let dense_y = &e * DVector::from_column_slice(&v);
        for i in 0..sys.block_dim() {
            assert!((y[i] - dense_y[i]).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn block_apply_is_linear() {
        let (_, sys) = poisson_system(3, 1);
        let op = BlockOperator::new(&sys);
        let dim = sys.block_dim();
        let mut rng = StdRng::seed_from_u64(3);
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = v.iter().zip(&w).map(|(vi, wi)| a * vi + b * wi).collect();
        let mut y_combo = vec![0.0; dim];
        let mut y_v = vec![0.0; dim];
        let mut y_w = vec![0.0; dim];
        op.apply(&combo, &mut y_combo);
        op.apply(&v, &mut y_v);
        op.apply(&w, &mut y_w);
        for i in 0..dim {
            assert!((y_combo[i] - a * y_v[i] - b * y_w[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn block_apply_rejects_wrong_length() {
        let (_, sys) = poisson_system(2, 1);
        let op = BlockOperator::new(&sys);
        let b = op.rhs();
        let bad = vec![0.0; sys.block_dim() - 1];
        assert!(gmres(&op, &bad[..], None, None, &SolverOptions::default()).is_err());
        assert_eq!(b.len(), sys.block_dim());
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let space = FeSpace::new(Mesh::uniform_square(3).unwrap(), 1).unwrap();
        let ident = identity_coefficient();
        let sys = NvSystem::assemble(&space, &ident, |_| 0.0, |_| 0.0);
        let sol = nvfem_solve(&sys, &SolverOptions::default()).unwrap();
        assert!(sol.u_interior.iter().all(|&v| v.abs() < 1e-12));
        for alpha in 0..2 {
            for beta in 0..2 {
                assert!(sol.hessian[alpha][beta].iter().all(|&v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn degenerate_system_is_rejected() {
        let space = FeSpace::new(Mesh::uniform_square(1).unwrap(), 1).unwrap();
        let ident = identity_coefficient();
        let sys = NvSystem::assemble(&space, &ident, |_| 1.0, |_| 0.0);
        assert!(matches!(
            nvfem_solve(&sys, &SolverOptions::default()),
            Err(Error::DegenerateSystem(_))
        ));
    }

    #[test]
    fn solved_system_round_trips_through_block_apply() {
        let (_, sys) = poisson_system(4, 1);
        let opts = SolverOptions::default();
        let sol = nvfem_solve(&sys, &opts).unwrap();
        let op = BlockOperator::new(&sys);
        let b = op.rhs();
        let v = sol.stacked();
        let mut av = vec![0.0; v.len()];
        op.apply(&v, &mut av);
        let b_norm = norm(&b);
        let err: f64 = av
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 10.0 * opts.tol * b_norm, "residual {err}");
    }

    #[test]
    fn scalar_schur_system_matches_block_solve() {
        // n=2, p=1 has a single interior dof, so the reduced operator is
        // 1x1 and the solve is u = f / D.
        let (_, sys) = poisson_system(2, 1);
        let u_dense = dense_schur_solve(&sys).unwrap();
        assert_eq!(u_dense.len(), 1);
        let sol = nvfem_solve(&sys, &SolverOptions::with_tol(1e-12)).unwrap();
        assert!((u_dense[0] - sol.u_interior[0]).abs() < 1e-10);
    }

    #[test]
    fn hessian_solve_of_zero_function_is_zero() {
        let (space, sys) = poisson_system(2, 1);
        let h = fe_hessian(
            &sys,
            &vec![0.0; space.n_interior()],
            &vec![0.0; space.n_boundary()],
        )
        .unwrap();
        for alpha in 0..2 {
            for beta in 0..2 {
                assert!(h[alpha][beta].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn hessian_of_quadratic_integrates_by_divergence_theorem() {
        // V = x^2 interpolated in P2 is exact; <H_11[V], 1> equals the
        // boundary integral of 2 x n_1, which is the volume integral of 2
        // over the square, i.e. 8.
        let space = FeSpace::new(Mesh::uniform_square(3).unwrap(), 2).unwrap();
        let ident = identity_coefficient();
        let sys = NvSystem::assemble(&space, &ident, |_| 0.0, |_| 0.0);
        let coeffs = space.interpolate(|p| p[0] * p[0]);
        let (u_int, u_bnd) = coeffs.split_at(space.n_interior());
        let h = fe_hessian(&sys, u_int, u_bnd).unwrap();
        let mut mh = vec![0.0; space.ndofs()];
        sys.mass.matvec(&h[0][0], &mut mh);
        let total: f64 = mh.iter().sum();
        assert!((total - 8.0).abs() < 1e-9, "got {total}");
    }

    #[test]
    fn condition_of_identity_is_one_and_scale_invariant() {
        let eye = DMatrix::<f64>::identity(6, 6);
        assert!((dense_condition(&eye) - 1.0).abs() < 1e-12);
        let (_, sys) = poisson_system(2, 1);
        let e = dense_block_matrix(&sys);
        let k1 = dense_condition(&e);
        let k2 = dense_condition(&(&e * 3.5));
        assert!((k1 - k2).abs() < 1e-8 * k1);
        assert!(k1 > 1.0);
    }

    #[test]
    fn solve_is_linear_in_the_data() {
        let space = FeSpace::new(Mesh::uniform_square(4).unwrap(), 1).unwrap();
        let ident = identity_coefficient();
        let f1 = |p: [f64; 2]| (2.0 * p[0]).sin();
        let f2 = |p: [f64; 2]| p[0] * p[1] - 0.5;
        let opts = SolverOptions::default();
        let sys1 = NvSystem::assemble(&space, &ident, f1, |_| 0.0);
        let sys2 = NvSystem::assemble(&space, &ident, f2, |_| 0.0);
        let sys_sum = NvSystem::assemble(&space, &ident, |p| f1(p) + f2(p), |_| 0.0);
        let u1 = nvfem_solve(&sys1, &opts).unwrap();
        let u2 = nvfem_solve(&sys2, &opts).unwrap();
        let u12 = nvfem_solve(&sys_sum, &opts).unwrap();
        for i in 0..space.n_interior() {
            let expect = u1.u_interior[i] + u2.u_interior[i];
            assert!(
                (u12.u_interior[i] - expect).abs() <= 10.0 * opts.tol,
                "dof {i}"
            );
        }
    }

    #[test]
    fn hessian_consistency_with_dirichlet_lift() {
        // After a solve with nontrivial boundary data, each Hessian block
        // satisfies M h = C u + C_bdry g to within solver accuracy.
        let space = FeSpace::new(Mesh::uniform_square(4).unwrap(), 1).unwrap();
        let coeff = |p: [f64; 2]| {
            let b = 0.2 * p[0] * p[1];
            [[1.0, b], [b, 2.0]]
        };
        let sys = NvSystem::assemble(&space, &coeff, |p| p[0].cos(), |p| p[0] * p[0] - p[1]);
        let opts = SolverOptions::with_tol(1e-11);
        let sol = nvfem_solve(&sys, &opts).unwrap();
        let n = sys.ndofs();
        for alpha in 0..2 {
            for beta in 0..2 {
                let mut lhs = vec![0.0; n];
                sys.mass.matvec(&sol.hessian[alpha][beta], &mut lhs);
                let mut rhs = vec![0.0; n];
                sys.c[alpha][beta].matvec(&sol.u_interior, &mut rhs);
                sys.c_boundary[alpha][beta].matvec_add(&sol.u_boundary, 1.0, &mut rhs);
                let gap = lhs
                    .iter()
                    .zip(&rhs)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                assert!(gap <= 10.0 * opts.tol, "block ({alpha},{beta}): {gap:.2e}");
            }
        }
    }

    #[test]
    fn lumped_mass_preconditioner_reproduces_the_solution() {
        let (_, sys) = poisson_system(4, 1);
        let opts = SolverOptions::default();
        let plain = nvfem_solve(&sys, &opts).unwrap();
        let precond = LumpedMassPreconditioner::new(&sys).unwrap();
        let pre = nvfem_solve_from(&sys, &opts, None, Some(&precond)).unwrap();
        assert!(pre.stats.converged);
        for (a, b) in plain.u_interior.iter().zip(&pre.u_interior) {
            assert!((a - b).abs() <= 20.0 * opts.tol);
        }
    }

    #[test]
    fn lumped_mass_preconditioner_rejects_quadratics() {
        // P2 vertex rows have zero mass row sums, so lumping is invalid.
        let (_, sys) = poisson_system(2, 2);
        assert!(matches!(
            LumpedMassPreconditioner::new(&sys),
            Err(Error::UnsupportedOption(_))
        ));
    }

    #[test]
    fn schur_guard_refuses_large_systems() {
        let space = FeSpace::new(Mesh::uniform_square(72).unwrap(), 1).unwrap();
        assert!(space.ndofs() > DENSE_GUARD);
        let ident = identity_coefficient();
        let sys = NvSystem::assemble(&space, &ident, |_| 1.0, |_| 0.0);
        assert!(matches!(
            dense_schur_solve(&sys),
            Err(Error::DenseGuardExceeded { .. })
        ));
    }

    #[test]
    fn condition_guard_refuses_large_systems() {
        let space = FeSpace::new(Mesh::uniform_square(24).unwrap(), 2).unwrap();
        let ident = identity_coefficient();
        let sys = NvSystem::assemble(&space, &ident, |_| 0.0, |_| 0.0);
        assert!(sys.block_dim() > DENSE_GUARD);
        assert!(matches!(
            condition_estimate(&sys),
            Err(Error::DenseGuardExceeded { .. })
        ));
    }
}
