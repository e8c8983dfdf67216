//! Conforming triangulations of the square (-1,1)^2.
//!
//! A [`Mesh`] stores vertices, counterclockwise-oriented cells and boundary
//! edges with unit outward normals. The canonical refinement family is the
//! uniform diagonal-split mesh produced by [`Mesh::uniform_square`]: the
//! tensor grid of the square with each grid cell split along its
//! bottom-left-to-top-right diagonal. Meshes are immutable after
//! construction and safe to share across threads.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];

/// Affine map from the reference triangle {(x,y): x,y >= 0, x+y <= 1}
/// onto a physical cell.
#[derive(Debug, Clone, Copy)]
pub struct CellMap {
    /// Image of the reference origin (first cell vertex).
    pub origin: Point,
    /// Jacobian columns: (v1 - v0, v2 - v0).
    pub jacobian: [[f64; 2]; 2],
    /// Inverse transpose of the Jacobian; maps reference gradients to
    /// physical gradients.
    pub inv_jac_t: [[f64; 2]; 2],
    /// Jacobian determinant (twice the cell area, positive for ccw cells).
    pub det: f64,
}

impl CellMap {
    /// Physical coordinates of a barycentric point (l0, l1, l2).
    pub fn position(&self, bary: [f64; 3]) -> Point {
        let (xi, eta) = (bary[1], bary[2]);
        [
            self.origin[0] + self.jacobian[0][0] * xi + self.jacobian[0][1] * eta,
            self.origin[1] + self.jacobian[1][0] * xi + self.jacobian[1][1] * eta,
        ]
    }

    /// Push a reference gradient forward to physical coordinates.
    pub fn gradient(&self, ref_grad: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jac_t[0][0] * ref_grad[0] + self.inv_jac_t[0][1] * ref_grad[1],
            self.inv_jac_t[1][0] * ref_grad[0] + self.inv_jac_t[1][1] * ref_grad[1],
        ]
    }
}

/// A boundary edge together with its owning cell and unit outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoint vertex indices.
    pub vertices: [usize; 2],
    /// Index of the unique cell containing this edge.
    pub cell: usize,
    /// Unit normal pointing out of the owning cell.
    pub normal: [f64; 2],
}

/// Summary mesh-quality metrics: the meshsize `h` (max cell diameter) and
/// the shape regularity (worst inradius-to-diameter ratio).
#[derive(Debug, Clone, Copy)]
pub struct MeshMetrics {
    pub h: f64,
    pub shape_regularity: f64,
}

/// A conforming triangulation.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

impl Mesh {
    /// Uniform mesh of the square (-1,1)^2 with `n` subdivisions per side.
    ///
    /// Vertices sit on the (n+1) x (n+1) tensor grid, indexed row-major
    /// from (-1,-1). Each grid square is split into two triangles by its
    /// bottom-left-to-top-right diagonal, lower triangle first, so the mesh
    /// has 2 n^2 cells with legs 2/n and diameters sqrt(2) * 2/n.
    pub fn uniform_square(n: usize) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "subdivision count must be at least 1".into(),
            ));
        }
        let nv = n + 1;
        let coord = |i: usize| 2.0 * i as f64 / n as f64 - 1.0;
        let mut vertices = Vec::with_capacity(nv * nv);
        for j in 0..nv {
            for i in 0..nv {
                vertices.push([coord(i), coord(j)]);
            }
        }
        let idx = |i: usize, j: usize| j * nv + i;
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (bl, br) = (idx(i, j), idx(i + 1, j));
                let (tl, tr) = (idx(i, j + 1), idx(i + 1, j + 1));
                cells.push([bl, br, tr]);
                cells.push([bl, tr, tl]);
            }
        }
        let mut boundary = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary.push([idx(i, 0), idx(i + 1, 0)]);
            boundary.push([idx(i, n), idx(i + 1, n)]);
            boundary.push([idx(0, i), idx(0, i + 1)]);
            boundary.push([idx(n, i), idx(n, i + 1)]);
        }
        Mesh::from_parts(vertices, cells, &boundary)
    }

    /// Build a mesh from raw vertex, cell and boundary-edge lists.
    ///
    /// Boundary normals are recomputed from the geometry. Cell orientation
    /// and the ownership of each boundary edge are validated.
    pub fn from_parts(
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        boundary_pairs: &[[usize; 2]],
    ) -> Result<Mesh> {
        let nv = vertices.len();
        for (k, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= nv {
                    return Err(Error::InvalidArgument(format!(
                        "cell {k} references vertex {v} out of range"
                    )));
                }
            }
            let area = signed_area(&vertices, cell);
            if area <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cell {k} is degenerate or not counterclockwise (signed area {area})"
                )));
            }
        }

        // Edge -> owning cells map, keyed by sorted endpoints.
        let mut edge_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (k, cell) in cells.iter().enumerate() {
            for e in 0..3 {
                let key = sorted_pair(cell[e], cell[(e + 1) % 3]);
                edge_cells.entry(key).or_default().push(k);
            }
        }

        let mut boundary_edges = Vec::with_capacity(boundary_pairs.len());
        for pair in boundary_pairs {
            let key = sorted_pair(pair[0], pair[1]);
            let owners = edge_cells.get(&key).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "boundary edge ({}, {}) is not an edge of any cell",
                    pair[0], pair[1]
                ))
            })?;
            if owners.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "boundary edge ({}, {}) belongs to {} cells, expected 1",
                    pair[0],
                    pair[1],
                    owners.len()
                )));
            }
            let cell = owners[0];
            let normal = outward_normal(&vertices, &cells[cell], *pair);
            boundary_edges.push(BoundaryEdge {
                vertices: *pair,
                cell,
                normal,
            });
        }

        // Conformity: every mesh edge is shared by one or two cells, and
        // single-cell edges must all be declared boundary edges.
        let declared: HashMap<(usize, usize), ()> = boundary_pairs
            .iter()
            .map(|p| (sorted_pair(p[0], p[1]), ()))
            .collect();
        for (key, owners) in &edge_cells {
            match owners.len() {
                1 => {
                    if !declared.contains_key(key) {
                        return Err(Error::InvalidArgument(format!(
                            "edge ({}, {}) lies on the boundary but is not declared",
                            key.0, key.1
                        )));
                    }
                }
                2 => {}
                m => {
                    return Err(Error::InvalidArgument(format!(
                        "edge ({}, {}) is shared by {m} cells; mesh is not conforming",
                        key.0, key.1
                    )))
                }
            }
        }

        Ok(Mesh {
            vertices,
            cells,
            boundary_edges,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_area(&self, k: usize) -> f64 {
        0.5 * signed_area(&self.vertices, &self.cells[k])
    }

    pub fn cell_centroid(&self, k: usize) -> Point {
        let [a, b, c] = self.cells[k];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [
            (pa[0] + pb[0] + pc[0]) / 3.0,
            (pa[1] + pb[1] + pc[1]) / 3.0,
        ]
    }

    /// Longest edge of cell `k`.
    pub fn cell_diameter(&self, k: usize) -> f64 {
        let [a, b, c] = self.cells[k];
        let d = |p: Point, q: Point| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        d(pa, pb).max(d(pb, pc)).max(d(pc, pa))
    }

    /// Affine reference-to-physical map for cell `k`.
    pub fn cell_map(&self, k: usize) -> CellMap {
        let [a, b, c] = self.cells[k];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let jac = [
            [pb[0] - pa[0], pc[0] - pa[0]],
            [pb[1] - pa[1], pc[1] - pa[1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_jac_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        CellMap {
            origin: pa,
            jacobian: jac,
            inv_jac_t,
            det,
        }
    }

    /// Meshsize h (max cell diameter) and shape regularity
    /// min_K rho_K / h_K, with rho_K the inradius 2 area / perimeter.
    pub fn metrics(&self) -> MeshMetrics {
        let mut h = 0.0_f64;
        let mut mu = f64::INFINITY;
        for k in 0..self.cells.len() {
            let [a, b, c] = self.cells[k];
            let d = |p: Point, q: Point| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let (e0, e1, e2) = (d(pa, pb), d(pb, pc), d(pc, pa));
            let diam = e0.max(e1).max(e2);
            let rho = 2.0 * self.cell_area(k) / (e0 + e1 + e2);
            h = h.max(diam);
            mu = mu.min(rho / diam);
        }
        MeshMetrics {
            h,
            shape_regularity: mu,
        }
    }

    /// Write the plain-text mesh format: a `nv nc nb` header, `nv` vertex
    /// lines `x y`, `nc` cell lines `i j k` and `nb` boundary-edge lines
    /// `i j`, all 0-based.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} {} {}",
            self.vertices.len(),
            self.cells.len(),
            self.boundary_edges.len()
        )?;
        for v in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", v[0], v[1])?;
        }
        for c in &self.cells {
            writeln!(w, "{} {} {}", c[0], c[1], c[2])?;
        }
        for e in &self.boundary_edges {
            writeln!(w, "{} {}", e.vertices[0], e.vertices[1])?;
        }
        Ok(())
    }

    /// Read the plain-text mesh format. Normals are recomputed on load.
    pub fn read_text<R: Read>(r: R) -> Result<Mesh> {
        let reader = BufReader::new(r);
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line?;
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut next_usize = |what: &str| -> Result<usize> {
            it.next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of mesh file reading {what}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let nv = next_usize("vertex count")?;
        let nc = next_usize("cell count")?;
        let nb = next_usize("boundary edge count")?;
        let mut rest: Vec<String> = it.collect();
        let expected = 2 * nv + 3 * nc + 2 * nb;
        if rest.len() != expected {
            return Err(Error::Parse(format!(
                "mesh file has {} data tokens, expected {expected}",
                rest.len()
            )));
        }
        let mut drain = rest.drain(..);
        let mut next_f64 = |what: &str| -> Result<f64> {
            drain
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push([next_f64("vertex x")?, next_f64("vertex y")?]);
        }
        let mut next_idx = |what: &str| -> Result<usize> {
            drain
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            cells.push([
                next_idx("cell index")?,
                next_idx("cell index")?,
                next_idx("cell index")?,
            ]);
        }
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            boundary.push([next_idx("boundary index")?, next_idx("boundary index")?]);
        }
        Mesh::from_parts(vertices, cells, &boundary)
    }

    pub fn write_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_text(std::fs::File::create(path)?)
    }

    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Mesh> {
        Mesh::read_text(std::fs::File::open(path)?)
    }
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Twice the signed area of a cell.
fn signed_area(vertices: &[Point], cell: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Unit normal of edge `pair` pointing out of `cell`.
fn outward_normal(vertices: &[Point], cell: &[usize; 3], pair: [usize; 2]) -> [f64; 2] {
    let (a, b) = (vertices[pair[0]], vertices[pair[1]]);
    let e = [b[0] - a[0], b[1] - a[1]];
    let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
    let mut n = [e[1] / len, -e[0] / len];
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let centroid = {
        let (p, q, r) = (vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    };
    if n[0] * (mid[0] - centroid[0]) + n[1] * (mid[1] - centroid[1]) < 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}
