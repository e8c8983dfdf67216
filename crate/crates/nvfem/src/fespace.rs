//! Lagrange finite element spaces of degree 1 and 2.
//!
//! Degrees of freedom are numbered interior first, then boundary, so the
//! block shapes of the nonvariational system can be taken by index slicing:
//! interior dofs are `0..n_interior()` and boundary dofs are
//! `n_interior()..ndofs()`. A dof is a boundary dof exactly when its node
//! lies on a boundary edge of the mesh.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{EdgeRule, QuadratureRule};

/// Maximum local basis size (6 for quadratic elements).
pub const MAX_CELL_DOFS: usize = 6;

/// A Lagrange space over a triangulation.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Mesh,
    degree: usize,
    dof_coords: Vec<Point>,
    cell_dofs: Vec<usize>, // flat, `dofs_per_cell` entries per cell
    n_interior: usize,
    n_boundary: usize,
    /// For each boundary edge: local indices of its endpoints within the
    /// owning cell (used to parametrize edge integrals).
    boundary_edge_locals: Vec<[usize; 2]>,
}

impl FeSpace {
    /// Build the degree-`degree` Lagrange space. Only degrees 1 and 2 are
    /// supported.
    pub fn new(mesh: Mesh, degree: usize) -> Result<FeSpace> {
        if degree != 1 && degree != 2 {
            return Err(Error::UnsupportedDegree(degree));
        }
        let nv = mesh.n_vertices();

        // Node enumeration: vertex nodes, then (for degree 2) one node per
        // unique mesh edge, in first-encounter order over cells.
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_list: Vec<(usize, usize)> = Vec::new();
        if degree == 2 {
            for cell in mesh.cells() {
                for e in 0..3 {
                    let (a, b) = (cell[e], cell[(e + 1) % 3]);
                    let key = if a < b { (a, b) } else { (b, a) };
                    edge_index.entry(key).or_insert_with(|| {
                        edge_list.push(key);
                        edge_list.len() - 1
                    });
                }
            }
        }
        let n_nodes = nv + edge_list.len();

        // Boundary nodes: endpoints of boundary edges, plus (degree 2) the
        // midpoint node of each boundary edge.
        let mut is_boundary = vec![false; n_nodes];
        for be in mesh.boundary_edges() {
            is_boundary[be.vertices[0]] = true;
            is_boundary[be.vertices[1]] = true;
            if degree == 2 {
                let key = sorted(be.vertices[0], be.vertices[1]);
                is_boundary[nv + edge_index[&key]] = true;
            }
        }

        // Interior-first global numbering.
        let n_boundary = is_boundary.iter().filter(|&&b| b).count();
        let n_interior = n_nodes - n_boundary;
        let mut node_to_dof = vec![0usize; n_nodes];
        let (mut next_int, mut next_bnd) = (0, n_interior);
        for (node, &bnd) in is_boundary.iter().enumerate() {
            if bnd {
                node_to_dof[node] = next_bnd;
                next_bnd += 1;
            } else {
                node_to_dof[node] = next_int;
                next_int += 1;
            }
        }

        let mut dof_coords = vec![[0.0, 0.0]; n_nodes];
        for (v, &p) in mesh.vertices().iter().enumerate() {
            dof_coords[node_to_dof[v]] = p;
        }
        for (e, &(a, b)) in edge_list.iter().enumerate() {
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            dof_coords[node_to_dof[nv + e]] = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        }

        let dofs_per_cell = if degree == 1 { 3 } else { 6 };
        let mut cell_dofs = Vec::with_capacity(mesh.n_cells() * dofs_per_cell);
        for cell in mesh.cells() {
            for &v in cell {
                cell_dofs.push(node_to_dof[v]);
            }
            if degree == 2 {
                for e in 0..3 {
                    let key = sorted(cell[e], cell[(e + 1) % 3]);
                    cell_dofs.push(node_to_dof[nv + edge_index[&key]]);
                }
            }
        }

        let boundary_edge_locals = mesh
            .boundary_edges()
            .iter()
            .map(|be| {
                let cell = mesh.cells()[be.cell];
                let local = |v| cell.iter().position(|&c| c == v).expect("edge vertex in cell");
                [local(be.vertices[0]), local(be.vertices[1])]
            })
            .collect();

        Ok(FeSpace {
            mesh,
            degree,
            dof_coords,
            cell_dofs,
            n_interior,
            n_boundary,
            boundary_edge_locals,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Total dof count N.
    pub fn ndofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    /// Interior dof indices (a contiguous prefix by construction).
    pub fn interior_dofs(&self) -> std::ops::Range<usize> {
        0..self.n_interior
    }

    /// Boundary dof indices (a contiguous suffix by construction).
    pub fn boundary_dofs(&self) -> std::ops::Range<usize> {
        self.n_interior..self.ndofs()
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn dofs_per_cell(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    /// Global dof indices of cell `k`: vertices first, then edge midpoints
    /// in local edge order (01, 12, 20).
    pub fn cell_dofs(&self, k: usize) -> &[usize] {
        let m = self.dofs_per_cell();
        &self.cell_dofs[k * m..(k + 1) * m]
    }

    /// Local endpoint indices of boundary edge `e` within its owning cell.
    pub fn boundary_edge_locals(&self, e: usize) -> [usize; 2] {
        self.boundary_edge_locals[e]
    }

    /// Local basis values at a barycentric point. `out` must hold
    /// `dofs_per_cell()` entries.
    pub fn basis_values(&self, bary: [f64; 3], out: &mut [f64]) {
        let [l0, l1, l2] = bary;
        if self.degree == 1 {
            out[..3].copy_from_slice(&[l0, l1, l2]);
        } else {
            out[0] = l0 * (2.0 * l0 - 1.0);
            out[1] = l1 * (2.0 * l1 - 1.0);
            out[2] = l2 * (2.0 * l2 - 1.0);
            out[3] = 4.0 * l0 * l1;
            out[4] = 4.0 * l1 * l2;
            out[5] = 4.0 * l2 * l0;
        }
    }

    /// Local basis gradients with respect to reference coordinates
    /// (xi, eta) = (l1, l2). `out` must hold `dofs_per_cell()` entries.
    pub fn basis_ref_gradients(&self, bary: [f64; 3], out: &mut [[f64; 2]]) {
        // grad l0 = (-1,-1), grad l1 = (1,0), grad l2 = (0,1)
        const GL: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        if self.degree == 1 {
            out[..3].copy_from_slice(&GL);
        } else {
            for i in 0..3 {
                let s = 4.0 * bary[i] - 1.0;
                out[i] = [s * GL[i][0], s * GL[i][1]];
            }
            let pairs = [(0, 1), (1, 2), (2, 0)];
            for (m, &(i, j)) in pairs.iter().enumerate() {
                let (li, lj) = (bary[i], bary[j]);
                out[3 + m] = [
                    4.0 * (li * GL[j][0] + lj * GL[i][0]),
                    4.0 * (li * GL[j][1] + lj * GL[i][1]),
                ];
            }
        }
    }

    /// Default interior quadrature for assembly and error integration
    /// (exactness 2p + 2).
    pub fn interior_quadrature(&self) -> QuadratureRule {
        QuadratureRule::triangle(2 * self.degree + 2)
    }

    /// Default edge quadrature for boundary integrals (exactness 2p + 1).
    pub fn edge_quadrature(&self) -> EdgeRule {
        EdgeRule::gauss(2 * self.degree + 1)
    }

    /// Lagrange interpolant: coefficients are nodal values of `g`.
    pub fn interpolate<F: Fn(Point) -> f64>(&self, g: F) -> Vec<f64> {
        self.dof_coords.iter().map(|&p| g(p)).collect()
    }

    /// Evaluate the FE function with coefficients `coeffs` at a barycentric
    /// point of cell `k`.
    pub fn eval_in_cell(&self, k: usize, bary: [f64; 3], coeffs: &[f64]) -> f64 {
        let mut phi = [0.0; MAX_CELL_DOFS];
        self.basis_values(bary, &mut phi);
        self.cell_dofs(k)
            .iter()
            .zip(&phi)
            .map(|(&d, &v)| coeffs[d] * v)
            .sum()
    }

    /// Physical gradient of the FE function at a barycentric point of
    /// cell `k`.
    pub fn grad_in_cell(&self, k: usize, bary: [f64; 3], coeffs: &[f64]) -> [f64; 2] {
        let mut ref_grads = [[0.0; 2]; MAX_CELL_DOFS];
        self.basis_ref_gradients(bary, &mut ref_grads);
        let map = self.mesh.cell_map(k);
        let mut g = [0.0, 0.0];
        for (&d, rg) in self.cell_dofs(k).iter().zip(&ref_grads) {
            let pg = map.gradient(*rg);
            g[0] += coeffs[d] * pg[0];
            g[1] += coeffs[d] * pg[1];
        }
        g
    }

    /// L2 and H1-seminorm errors of the FE function against an exact
    /// solution, integrated cell by cell with the interior quadrature.
    pub fn error_norms<F, G>(&self, coeffs: &[f64], u: F, grad_u: G) -> (f64, f64)
    where
        F: Fn(Point) -> f64,
        G: Fn(Point) -> [f64; 2],
    {
        assert_eq!(coeffs.len(), self.ndofs());
        let rule = self.interior_quadrature();
        let mut phi = [0.0; MAX_CELL_DOFS];
        let mut ref_grads = [[0.0; 2]; MAX_CELL_DOFS];
        let (mut e0_sq, mut e1_sq) = (0.0, 0.0);
        for k in 0..self.mesh.n_cells() {
            let map = self.mesh.cell_map(k);
            let dofs = self.cell_dofs(k);
            for (q, &w) in rule.points.iter().zip(&rule.weights) {
                self.basis_values(*q, &mut phi);
                self.basis_ref_gradients(*q, &mut ref_grads);
                let x = map.position(*q);
                let mut uh = 0.0;
                let mut gh = [0.0, 0.0];
                for (i, &d) in dofs.iter().enumerate() {
                    uh += coeffs[d] * phi[i];
                    let pg = map.gradient(ref_grads[i]);
                    gh[0] += coeffs[d] * pg[0];
                    gh[1] += coeffs[d] * pg[1];
                }
                let du = u(x) - uh;
                let dg = grad_u(x);
                let dgx = dg[0] - gh[0];
                let dgy = dg[1] - gh[1];
                e0_sq += map.det * w * du * du;
                e1_sq += map.det * w * (dgx * dgx + dgy * dgy);
            }
        }
        (e0_sq.sqrt(), e1_sq.sqrt())
    }

    /// L2 norm of the FE function with the given coefficients.
    pub fn l2_norm(&self, coeffs: &[f64]) -> f64 {
        self.error_norms(coeffs, |_| 0.0, |_| [0.0, 0.0]).0
    }
}

fn sorted(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize, p: usize) -> FeSpace {
        FeSpace::new(Mesh::uniform_square(n).unwrap(), p).unwrap()
    }

    #[test]
    fn dof_counts() {
        let s = space(2, 1);
        assert_eq!(s.ndofs(), 9);
        assert_eq!(s.n_interior(), 1);
        assert_eq!(s.n_boundary(), 8);

        let s = space(2, 2);
        assert_eq!(s.ndofs(), 25); // 9 vertices + 16 edges
        assert_eq!(s.n_interior() + s.n_boundary(), 25);

        let s = space(1, 1);
        assert_eq!(s.n_interior(), 0);
    }

    #[test]
    fn unsupported_degree_rejected() {
        let m = Mesh::uniform_square(2).unwrap();
        assert!(matches!(
            FeSpace::new(m, 3),
            Err(Error::UnsupportedDegree(3))
        ));
    }

    #[test]
    fn boundary_dofs_lie_on_boundary() {
        for p in [1, 2] {
            let s = space(3, p);
            for d in 0..s.ndofs() {
                let [x, y] = s.dof_coords()[d];
                let on_boundary = x.abs() > 1.0 - 1e-12 || y.abs() > 1.0 - 1e-12;
                assert_eq!(d >= s.n_interior(), on_boundary, "p={p} dof {d}");
            }
        }
    }

    #[test]
    fn lagrange_property() {
        for p in [1, 2] {
            let s = space(2, p);
            // For every cell, the local basis evaluated at a local node is
            // the matching unit vector.
            let local_nodes: Vec<[f64; 3]> = if p == 1 {
                vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
            } else {
                vec![
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                    [0.5, 0.5, 0.0],
                    [0.0, 0.5, 0.5],
                    [0.5, 0.0, 0.5],
                ]
            };
            let mut phi = [0.0; MAX_CELL_DOFS];
            for (i, &node) in local_nodes.iter().enumerate() {
                s.basis_values(node, &mut phi);
                for j in 0..s.dofs_per_cell() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((phi[j] - expect).abs() < 1e-14, "p={p} node {i} fn {j}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_at_quadrature_points() {
        for p in [1, 2] {
            let s = space(3, p);
            let rule = s.interior_quadrature();
            let mut phi = [0.0; MAX_CELL_DOFS];
            let mut grads = [[0.0; 2]; MAX_CELL_DOFS];
            for k in 0..s.mesh().n_cells() {
                let map = s.mesh().cell_map(k);
                for q in &rule.points {
                    s.basis_values(*q, &mut phi);
                    let sum: f64 = phi[..s.dofs_per_cell()].iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                    s.basis_ref_gradients(*q, &mut grads);
                    let mut gsum = [0.0, 0.0];
                    for g in &grads[..s.dofs_per_cell()] {
                        let pg = map.gradient(*g);
                        gsum[0] += pg[0];
                        gsum[1] += pg[1];
                    }
                    assert!(gsum[0].abs() < 1e-10 && gsum[1].abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let s = space(3, 1);
        let coeffs = s.interpolate(|_| 0.0);
        assert!(coeffs.iter().all(|&c| c == 0.0));

        let coeffs = s.interpolate(|p| p[0]);
        let (e0, e1) = s.error_norms(&coeffs, |p| p[0], |_| [1.0, 0.0]);
        assert!(e0 < 1e-12 && e1 < 1e-12);

        let s = space(3, 2);
        let coeffs = s.interpolate(|p| p[0] * p[1]);
        let (e0, e1) = s.error_norms(&coeffs, |p| p[0] * p[1], |p| [p[1], p[0]]);
        assert!(e0 < 1e-12, "e0 = {e0}");
        assert!(e1 < 1e-12, "e1 = {e1}");
    }

    #[test]
    fn error_norm_of_zero_against_constant() {
        let s = space(4, 1);
        let coeffs = vec![0.0; s.ndofs()];
        let (e0, _) = s.error_norms(&coeffs, |_| 1.0, |_| [0.0, 0.0]);
        assert!((e0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_error_decays_quadratically() {
        let u = |p: Point| (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin();
        let gu = |p: Point| {
            let pi = std::f64::consts::PI;
            [
                pi * (pi * p[0]).cos() * (pi * p[1]).sin(),
                pi * (pi * p[0]).sin() * (pi * p[1]).cos(),
            ]
        };
        let mut prev = None;
        for n in [8, 16, 32] {
            let s = space(n, 1);
            let coeffs = s.interpolate(u);
            let (e0, _) = s.error_norms(&coeffs, u, gu);
            if let Some(p) = prev {
                let ratio: f64 = p / e0;
                assert!(
                    (ratio - 4.0).abs() < 0.5,
                    "n={n}: L2 ratio {ratio} not close to 4"
                );
            }
            prev = Some(e0);
        }
    }

    #[test]
    fn interpolation_idempotent() {
        // Evaluating the FE function at every dof node recovers the
        // coefficient vector exactly.
        for p in [1, 2] {
            let s = space(3, p);
            let coeffs = s.interpolate(|q| (q[0] + 0.3).sin() * q[1]);
            let local_nodes: &[[f64; 3]] = if p == 1 {
                &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
            } else {
                &[
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                    [0.5, 0.5, 0.0],
                    [0.0, 0.5, 0.5],
                    [0.5, 0.0, 0.5],
                ]
            };
            for k in 0..s.mesh().n_cells() {
                for (i, &node) in local_nodes.iter().enumerate() {
                    let d = s.cell_dofs(k)[i];
                    let v = s.eval_in_cell(k, node, &coeffs);
                    assert!((v - coeffs[d]).abs() < 1e-14);
                }
            }
        }
    }
}
