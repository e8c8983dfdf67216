//! A conforming finite element method for second order elliptic equations
//! in nondivergence form A : D^2 u = f on the square (-1,1)^2.
//!
//! The discretization tests the strong form directly against a finite
//! element Hessian and couples the Hessian unknowns to the solution through
//! a block system solved matrix-free with restarted GMRES. The crate
//! provides:
//!
//! - [`mesh`]: uniform triangulations of the square with boundary normals
//!   and quality metrics, plus a plain-text mesh format;
//! - [`fespace`]: Lagrange P1/P2 spaces with interior-first dof numbering,
//!   interpolation and error norms;
//! - [`assembly`]: the component matrices (mass, coefficient blocks,
//!   Hessian couplings with Dirichlet splitting) and data vectors;
//! - [`linsolve`]: the block operator, Krylov solvers, the dense Schur
//!   oracle, finite element Hessian extraction and condition estimates;
//! - [`problems`]: benchmark problems with manufactured solutions, a
//!   divergence-form comparator and quasilinear fixed-point drivers.

pub mod assembly;
pub mod error;
pub mod fespace;
pub mod linsolve;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod sparse;

pub use assembly::{CellPoint, CoefficientField, NvSystem};
pub use error::{Error, Result};
pub use fespace::FeSpace;
pub use linsolve::{BlockOperator, Solution, SolveStats, SolverOptions};
pub use mesh::{Mesh, MeshMetrics, Point};
pub use problems::{ProblemId, ProblemSpec, QuasiMode};
pub use quadrature::{EdgeRule, QuadratureRule};
pub use sparse::{SparseMatrix, Triplets};
