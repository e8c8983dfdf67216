//! Shared fixtures for the benchmarks.

use nvfem::problems::{self, ProblemId, ProblemParams};
use nvfem::{FeSpace, Mesh, NvSystem};

/// The first linear benchmark assembled on a uniform mesh.
pub fn test41_system(n: usize, degree: usize) -> (FeSpace, NvSystem) {
    let problem = problems::make_problem(ProblemId::Test41, ProblemParams::default())
        .expect("benchmark problem");
    let space = FeSpace::new(Mesh::uniform_square(n).expect("mesh"), degree).expect("space");
    let sys = problem.assemble(&space);
    (space, sys)
}
