//! Assembly of the component matrices and vectors of the nonvariational
//! system: the mass matrix M, the coefficient-weighted blocks B, the
//! Hessian-coupling blocks C (split into interior and boundary trial
//! columns), the load vector and the Dirichlet boundary values.
//!
//! All element loops traverse cells and boundary edges in a fixed order, so
//! repeated assemblies of the same inputs are bit-identical.

use crate::error::{Error, Result};
use crate::fespace::{FeSpace, MAX_CELL_DOFS};
use crate::mesh::Point;
use crate::sparse::{SparseMatrix, Triplets};

/// Spatial dimension. Data layouts are generic in shape over this constant,
/// but only d = 2 is assembled and tested.
pub const DIM: usize = 2;

/// Evaluation context handed to coefficient fields: the cell, the
/// barycentric coordinates, and the mapped physical position.
#[derive(Debug, Clone, Copy)]
pub struct CellPoint {
    pub cell: usize,
    pub barycentric: [f64; 3],
    pub position: Point,
}

/// A symmetric matrix-valued coefficient field A(x).
///
/// Plain spatial fields are closures on the physical point; state-dependent
/// fields (e.g. the quasilinear coefficient frozen at a previous iterate)
/// implement the trait directly and may use the cell context.
pub trait CoefficientField {
    fn matrix_at(&self, at: &CellPoint) -> [[f64; 2]; 2];
}

impl<F> CoefficientField for F
where
    F: Fn(Point) -> [[f64; 2]; 2],
{
    fn matrix_at(&self, at: &CellPoint) -> [[f64; 2]; 2] {
        self(at.position)
    }
}

/// Mass matrix M_ij = int Phi_i Phi_j over all N dofs, or its row-sum
/// lumped diagonal. Lumping is only meaningful for linear elements.
pub fn assemble_mass(space: &FeSpace, lumped: bool) -> Result<SparseMatrix> {
    if lumped && space.degree() != 1 {
        return Err(Error::UnsupportedOption(
            "mass lumping is only applicable to degree-1 elements".into(),
        ));
    }
    let n = space.ndofs();
    let rule = space.interior_quadrature();
    let m = space.dofs_per_cell();
    let mut phi = [0.0; MAX_CELL_DOFS];
    let mut triplets = Triplets::new(n, n);
    for k in 0..space.mesh().n_cells() {
        let map = space.mesh().cell_map(k);
        let dofs = space.cell_dofs(k);
        let mut local = [[0.0; MAX_CELL_DOFS]; MAX_CELL_DOFS];
        for (q, &w) in rule.points.iter().zip(&rule.weights) {
            space.basis_values(*q, &mut phi);
            let scale = w * map.det;
            for i in 0..m {
                for j in 0..m {
                    local[i][j] += scale * phi[i] * phi[j];
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                triplets.push(dofs[i], dofs[j], local[i][j]);
            }
        }
    }
    let full = triplets.compress();
    if !lumped {
        return Ok(full);
    }
    let sums = full.row_sums();
    let mut diag = Triplets::new(n, n);
    for (i, &s) in sums.iter().enumerate() {
        diag.push(i, i, s);
    }
    Ok(diag.compress())
}

/// All four coefficient blocks B^{ab}_ij = int Phi_int_i A^{ab}(x) Phi_j,
/// with rows over interior dofs and columns over all dofs, assembled in a
/// single sweep so the coefficient is evaluated once per quadrature point.
pub fn assemble_b_blocks<C: CoefficientField + ?Sized>(
    space: &FeSpace,
    coeff: &C,
) -> [[SparseMatrix; 2]; 2] {
    let n = space.ndofs();
    let n_int = space.n_interior();
    let rule = space.interior_quadrature();
    let mut phi = [0.0; MAX_CELL_DOFS];
    let mut buffers: Vec<Triplets> = (0..DIM * DIM).map(|_| Triplets::new(n_int, n)).collect();
    for k in 0..space.mesh().n_cells() {
        let map = space.mesh().cell_map(k);
        let dofs = space.cell_dofs(k);
        for (q, &w) in rule.points.iter().zip(&rule.weights) {
            space.basis_values(*q, &mut phi);
            let at = CellPoint {
                cell: k,
                barycentric: *q,
                position: map.position(*q),
            };
            let a = coeff.matrix_at(&at);
            debug_assert!(
                (a[0][1] - a[1][0]).abs() <= 1e-12 * (1.0 + a[0][1].abs()),
                "coefficient field must be symmetric"
            );
            let scale = w * map.det;
            for (i, &di) in dofs.iter().enumerate() {
                if di >= n_int {
                    continue;
                }
                for (j, &dj) in dofs.iter().enumerate() {
                    let mass_ij = scale * phi[i] * phi[j];
                    for alpha in 0..DIM {
                        for beta in 0..DIM {
                            let v = a[alpha][beta] * mass_ij;
                            if v != 0.0 {
                                buffers[alpha * DIM + beta].push(di, dj, v);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut it = buffers.into_iter().map(Triplets::compress);
    [
        [it.next().unwrap(), it.next().unwrap()],
        [it.next().unwrap(), it.next().unwrap()],
    ]
}

/// One coefficient block (`alpha`, `beta` are 0-based).
pub fn assemble_b<C: CoefficientField + ?Sized>(
    space: &FeSpace,
    coeff: &C,
    alpha: usize,
    beta: usize,
) -> SparseMatrix {
    let mut blocks = assemble_b_blocks(space, coeff);
    std::mem::replace(
        &mut blocks[alpha][beta],
        SparseMatrix::zeros(space.n_interior(), space.ndofs()),
    )
}

/// All four Hessian-coupling blocks
/// C_{ab,ij} = -int d_b Phi_i d_a Phi_j + bdry int Phi_i n_b d_a Phi_j,
/// with rows over all dofs and trial columns split into the interior part
/// (N x N_int) and the boundary part (N x N_bdry). The boundary integral
/// uses the one-sided gradient trace from each edge's owning cell.
pub fn assemble_c_blocks(
    space: &FeSpace,
) -> ([[SparseMatrix; 2]; 2], [[SparseMatrix; 2]; 2]) {
    let n = space.ndofs();
    let n_int = space.n_interior();
    let n_bnd = space.n_boundary();
    let m = space.dofs_per_cell();
    let mut interior: Vec<Triplets> = (0..DIM * DIM).map(|_| Triplets::new(n, n_int)).collect();
    let mut boundary: Vec<Triplets> = (0..DIM * DIM).map(|_| Triplets::new(n, n_bnd)).collect();

    let mut push = |block: usize, row: usize, trial: usize, v: f64| {
        if v == 0.0 {
            return;
        }
        if trial < n_int {
            interior[block].push(row, trial, v);
        } else {
            boundary[block].push(row, trial - n_int, v);
        }
    };

    // Volume terms.
    let rule = space.interior_quadrature();
    let mut grads = [[0.0; 2]; MAX_CELL_DOFS];
    let mut pgrads = [[0.0; 2]; MAX_CELL_DOFS];
    for k in 0..space.mesh().n_cells() {
        let map = space.mesh().cell_map(k);
        let dofs = space.cell_dofs(k);
        for (q, &w) in rule.points.iter().zip(&rule.weights) {
            space.basis_ref_gradients(*q, &mut grads);
            for i in 0..m {
                pgrads[i] = map.gradient(grads[i]);
            }
            let scale = w * map.det;
            for (i, &di) in dofs.iter().enumerate() {
                for (j, &dj) in dofs.iter().enumerate() {
                    for alpha in 0..DIM {
                        for beta in 0..DIM {
                            let v = -scale * pgrads[i][beta] * pgrads[j][alpha];
                            push(alpha * DIM + beta, di, dj, v);
                        }
                    }
                }
            }
        }
    }

    // Boundary terms.
    let edge_rule = space.edge_quadrature();
    let mut phi = [0.0; MAX_CELL_DOFS];
    for (e, be) in space.mesh().boundary_edges().iter().enumerate() {
        let k = be.cell;
        let map = space.mesh().cell_map(k);
        let dofs = space.cell_dofs(k);
        let [la, lb] = space.boundary_edge_locals(e);
        let (pa, pb) = (
            space.mesh().vertices()[be.vertices[0]],
            space.mesh().vertices()[be.vertices[1]],
        );
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            let mut bary = [0.0; 3];
            bary[la] = 1.0 - t;
            bary[lb] = t;
            space.basis_values(bary, &mut phi);
            space.basis_ref_gradients(bary, &mut grads);
            for i in 0..m {
                pgrads[i] = map.gradient(grads[i]);
            }
            let scale = w * len;
            for (i, &di) in dofs.iter().enumerate() {
                if phi[i] == 0.0 {
                    continue;
                }
                for (j, &dj) in dofs.iter().enumerate() {
                    for alpha in 0..DIM {
                        for beta in 0..DIM {
                            let v = scale * phi[i] * be.normal[beta] * pgrads[j][alpha];
                            push(alpha * DIM + beta, di, dj, v);
                        }
                    }
                }
            }
        }
    }

    let mut ci = interior.into_iter().map(Triplets::compress);
    let mut cb = boundary.into_iter().map(Triplets::compress);
    (
        [
            [ci.next().unwrap(), ci.next().unwrap()],
            [ci.next().unwrap(), ci.next().unwrap()],
        ],
        [
            [cb.next().unwrap(), cb.next().unwrap()],
            [cb.next().unwrap(), cb.next().unwrap()],
        ],
    )
}

/// One Hessian-coupling block pair (`alpha`, `beta` 0-based): the interior
/// block N x N_int and the boundary block N x N_bdry.
pub fn assemble_c(space: &FeSpace, alpha: usize, beta: usize) -> (SparseMatrix, SparseMatrix) {
    let (mut c, mut cb) = assemble_c_blocks(space);
    (
        std::mem::replace(
            &mut c[alpha][beta],
            SparseMatrix::zeros(space.ndofs(), space.n_interior()),
        ),
        std::mem::replace(
            &mut cb[alpha][beta],
            SparseMatrix::zeros(space.ndofs(), space.n_boundary()),
        ),
    )
}

/// Load vector f_i = int f Phi_int_i over the interior basis.
pub fn assemble_load<F: Fn(Point) -> f64>(space: &FeSpace, f: F) -> Vec<f64> {
    let n_int = space.n_interior();
    let rule = space.interior_quadrature();
    let mut phi = [0.0; MAX_CELL_DOFS];
    let mut load = vec![0.0; n_int];
    for k in 0..space.mesh().n_cells() {
        let map = space.mesh().cell_map(k);
        let dofs = space.cell_dofs(k);
        for (q, &w) in rule.points.iter().zip(&rule.weights) {
            space.basis_values(*q, &mut phi);
            let fx = f(map.position(*q));
            let scale = w * map.det * fx;
            for (i, &di) in dofs.iter().enumerate() {
                if di < n_int {
                    load[di] += scale * phi[i];
                }
            }
        }
    }
    load
}

/// Dirichlet data as Lagrange coefficients at the boundary dof nodes.
pub fn boundary_values<G: Fn(Point) -> f64>(space: &FeSpace, g: G) -> Vec<f64> {
    space.dof_coords()[space.n_interior()..]
        .iter()
        .map(|&p| g(p))
        .collect()
}

/// The assembled component matrices of the nonvariational system for one
/// problem on one space.
#[derive(Debug, Clone)]
pub struct NvSystem {
    /// Mass matrix, N x N.
    pub mass: SparseMatrix,
    /// Coefficient blocks, each N_int x N, indexed [alpha][beta].
    pub b: [[SparseMatrix; 2]; 2],
    /// Hessian-coupling blocks with interior trial columns, each N x N_int.
    pub c: [[SparseMatrix; 2]; 2],
    /// Hessian-coupling blocks with boundary trial columns, each N x N_bdry.
    pub c_boundary: [[SparseMatrix; 2]; 2],
    /// Load vector, length N_int.
    pub load: Vec<f64>,
    /// Dirichlet coefficients, length N_bdry.
    pub boundary_values: Vec<f64>,
    n: usize,
    n_interior: usize,
    n_boundary: usize,
}

impl NvSystem {
    /// Assemble every component for coefficient `coeff`, right-hand side
    /// `f` and Dirichlet data `g`.
    pub fn assemble<C, F, G>(space: &FeSpace, coeff: &C, f: F, g: G) -> NvSystem
    where
        C: CoefficientField + ?Sized,
        F: Fn(Point) -> f64,
        G: Fn(Point) -> f64,
    {
        let mass = assemble_mass(space, false).expect("consistent mass is always available");
        let b = assemble_b_blocks(space, coeff);
        let (c, c_boundary) = assemble_c_blocks(space);
        NvSystem {
            mass,
            b,
            c,
            c_boundary,
            load: assemble_load(space, f),
            boundary_values: boundary_values(space, g),
            n: space.ndofs(),
            n_interior: space.n_interior(),
            n_boundary: space.n_boundary(),
        }
    }

    /// Reassemble only the coefficient blocks B, keeping M, C and the data
    /// vectors. This is the cheap per-iteration update of the quasilinear
    /// fixed point, where the coefficient depends on the previous iterate
    /// while the remaining components are problem independent.
    pub fn set_coefficient<C: CoefficientField + ?Sized>(&mut self, space: &FeSpace, coeff: &C) {
        self.b = assemble_b_blocks(space, coeff);
    }

    pub fn ndofs(&self) -> usize {
        self.n
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    /// Dimension of the stacked block vector (d^2 Hessian blocks of size N
    /// plus the interior solution block).
    pub fn block_dim(&self) -> usize {
        DIM * DIM * self.n + self.n_interior
    }
}

/// Identity coefficient field.
pub fn identity_coefficient() -> impl Fn(Point) -> [[f64; 2]; 2] {
    |_| [[1.0, 0.0], [0.0, 1.0]]
}
