//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line with the measured quantities. Criteria marked by gates inside the
//! run drivers are asserted through those gates; the remaining criteria
//! are checked directly against the library.

use std::path::PathBuf;

use nvfem::assembly::{self, NvSystem};
use nvfem::linsolve::{self, BlockOperator, LinearOperator, SolverOptions};
use nvfem::problems::{self, ProblemId, ProblemParams};
use nvfem::quadrature::EdgeRule;
use nvfem::{FeSpace, Mesh};
use nvfem_cli::config::{RunConfig, RunMode};
use nvfem_cli::output::Gate;
use nvfem_cli::runs;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn out_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn config(problem: ProblemId, degree: usize, levels: &[usize], mode: RunMode, out: &str) -> RunConfig {
    RunConfig {
        problem,
        k: 5000.0,
        degree,
        levels: levels.to_vec(),
        tol: 1e-10,
        // A longer restart window roughly halves the iteration count on
        // the finest levels, keeping each criterion inside its runtime
        // budget; the CLI default stays at 50.
        restart: 100,
        maxiter: None,
        mode,
        out_dir: out_dir(out),
    }
}

fn report_criterion(name: &str, gates: &[Gate]) {
    let failed: Vec<&Gate> = gates.iter().filter(|g| !g.passed).collect();
    if failed.is_empty() {
        println!("{name}: PASS");
    } else {
        for g in &failed {
            println!("{name}: FAIL — {} ({})", g.name, g.detail);
        }
    }
    assert!(
        failed.is_empty(),
        "{name}: failing gates: {:?}",
        failed
            .iter()
            .map(|g| format!("{} ({})", g.name, g.detail))
            .collect::<Vec<_>>()
    );
}

fn convergence_criterion(name: &str, problem: ProblemId, k: f64, out: &str) {
    let mut gates = Vec::new();
    for (degree, levels) in [(1usize, vec![8, 16, 32, 64]), (2, vec![4, 8, 16, 32])] {
        let mut cfg = config(problem, degree, &levels, RunMode::Nvfem, out);
        cfg.k = k;
        let (_, report) = runs::run_convergence(&cfg).expect("convergence run");
        for mut gate in report.gates {
            gate.name = format!("p{degree}-{}", gate.name);
            gates.push(gate);
        }
    }
    report_criterion(name, &gates);
}

#[test]
fn criterion_01_convergence_test41() {
    convergence_criterion("criterion 1 (test41 convergence)", ProblemId::Test41, 5000.0, "crit1");
}

#[test]
fn criterion_02_convergence_test42() {
    convergence_criterion("criterion 2 (test42 convergence)", ProblemId::Test42, 5000.0, "crit2");
}

// Known red: the final-level P2 H1 EOC of this benchmark measures ~1.79
// against the [1.8, 2.2] gate. The exact solution has D^3 u ~ 1/|x| near
// the origin, so u lies in H^(3-eps) but not H^3 and the H1 rate carries a
// log factor; the plain P2 interpolant of the exact solution shows the
// same crawl (1.60, 1.73, 1.80, 1.85 over n = 4..64) and the discrete
// solution tracks it from below. The criterion is asserted as stated.
#[test]
fn criterion_03_convergence_test43() {
    convergence_criterion("criterion 3 (test43 convergence)", ProblemId::Test43, 5000.0, "crit3");
}

#[test]
fn criterion_04_conditioning() {
    let cfg = config(ProblemId::Test41, 1, &[2, 4, 8, 16], RunMode::Condition, "crit4");
    let (rows, report) = runs::run_condition(&cfg).expect("condition run");
    assert!(rows.len() >= 3, "expected several dense-feasible levels");
    report_criterion("criterion 4 (conditioning)", &report.gates);
}

#[test]
fn criterion_05_schur_equivalence() {
    let problem = problems::make_problem(ProblemId::Test41, ProblemParams::default()).unwrap();
    let mut gates = Vec::new();
    for n in [4usize, 8] {
        let space = FeSpace::new(Mesh::uniform_square(n).unwrap(), 1).unwrap();
        let sys = problem.assemble(&space);
        let u_dense = linsolve::dense_schur_solve(&sys).unwrap();
        let sol = linsolve::nvfem_solve(&sys, &SolverOptions::with_tol(1e-12)).unwrap();
        let gap = u_dense
            .iter()
            .zip(&sol.u_interior)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        gates.push(Gate::check(
            &format!("n{n}-equivalence"),
            gap <= 1e-8,
            format!("max|u_block - u_dense| = {gap:.3e} <= 1e-8"),
        ));
    }
    report_criterion("criterion 5 (Schur equivalence)", &gates);
}

#[test]
fn criterion_06_oscillation_comparison() {
    let mut gates = Vec::new();

    // Steep layer: the divergence-form rewrite oscillates, the direct
    // discretization does not.
    let cfg = config(ProblemId::Test42, 1, &[32], RunMode::Nvfem, "crit6-steep");
    let (summary, report) = runs::run_compare(&cfg).expect("compare run");
    assert!(
        (summary.ratio - summary.max_nodal_fem / summary.max_nodal_nvfem).abs() < 1e-12
            || summary.max_nodal_fem.is_infinite()
    );
    gates.extend(report.gates);

    // Shallow layer: both methods converge at the optimal rates.
    for mode in [RunMode::Nvfem, RunMode::StandardFem] {
        let mut cfg = config(
            ProblemId::Test42,
            1,
            &[8, 16, 32, 64],
            mode,
            &format!("crit6-{}", mode.as_str()),
        );
        cfg.k = 1.0;
        let (_, report) = runs::run_convergence(&cfg).expect("K=1 convergence");
        for mut gate in report.gates {
            gate.name = format!("K1-{}-{}", mode.as_str(), gate.name);
            gates.push(gate);
        }
    }
    report_criterion("criterion 6 (oscillation comparison)", &gates);
}

#[test]
fn criterion_07_quasilinear_stagnation() {
    let cfg = config(
        ProblemId::Test41, // unused by the quasilinear driver
        1,
        &[10, 20, 40, 80],
        RunMode::QuasilinearBoth,
        "crit7",
    );
    let (rows, report) = runs::run_quasilinear(&cfg).expect("quasilinear run");
    assert_eq!(rows.len(), 8, "four levels, two modes each");
    let gates: Vec<Gate> = report
        .gates
        .into_iter()
        .filter(|g| {
            matches!(
                g.name.as_str(),
                "stagnation-bands" | "nonvariational-nondecreasing" | "variational-exceeds"
            )
        })
        .collect();
    assert_eq!(gates.len(), 3);
    report_criterion("criterion 7 (quasilinear stagnation)", &gates);
}

#[test]
fn criterion_08_quasilinear_convergence() {
    let mut gates = Vec::new();
    for (degree, levels) in [(1usize, vec![8, 16, 32, 64]), (2, vec![4, 8, 16, 32])] {
        let cfg = config(
            ProblemId::Test41,
            degree,
            &levels,
            RunMode::QuasilinearNonvariational,
            &format!("crit8-p{degree}"),
        );
        let (_, report) = runs::run_quasilinear(&cfg).expect("quasilinear convergence run");
        for mut gate in report.gates {
            if gate.name.starts_with("final-eoc") || gate.name == "monotone-errors" {
                gate.name = format!("p{degree}-{}", gate.name);
                gates.push(gate);
            }
        }
    }
    report_criterion("criterion 8 (quasilinear convergence)", &gates);
}

/// Independent edge-quadrature evaluation of the boundary functional
/// int_bdry n_beta d_alpha V ds for an FE function V (higher-order rule
/// than assembly uses).
fn boundary_flux_oracle(space: &FeSpace, coeffs: &[f64], alpha: usize, beta: usize) -> f64 {
    let rule = EdgeRule::gauss(9);
    let mut total = 0.0;
    for (e, be) in space.mesh().boundary_edges().iter().enumerate() {
        let [la, lb] = space.boundary_edge_locals(e);
        let (pa, pb) = (
            space.mesh().vertices()[be.vertices[0]],
            space.mesh().vertices()[be.vertices[1]],
        );
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let mut bary = [0.0; 3];
            bary[la] = 1.0 - t;
            bary[lb] = t;
            let grad = space.grad_in_cell(be.cell, bary, coeffs);
            total += w * len * be.normal[beta] * grad[alpha];
        }
    }
    total
}

/// Central second differences with a step that balances truncation
/// against f64 rounding amplification.
fn fd_hessian(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2]) -> [[f64; 2]; 2] {
    let h = 1e-4;
    let at = |dx: f64, dy: f64| f([p[0] + dx, p[1] + dy]);
    let fxx = (at(h, 0.0) - 2.0 * at(0.0, 0.0) + at(-h, 0.0)) / (h * h);
    let fyy = (at(0.0, h) - 2.0 * at(0.0, 0.0) + at(0.0, -h)) / (h * h);
    let fxy = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
    [[fxx, fxy], [fxy, fyy]]
}

#[test]
fn criterion_09_invariant_suites() {
    let mut gates = Vec::new();

    // Mass matrix: SPD on a small space, row sums integrate the basis
    // (partition of unity: total mass equals the domain area).
    for p in [1usize, 2] {
        let space = FeSpace::new(Mesh::uniform_square(2).unwrap(), p).unwrap();
        let mass = assembly::assemble_mass(&space, false).unwrap();
        let dense = mass.to_dense();
        let max_entry = dense.amax();
        let asym = (&dense - dense.transpose()).amax();
        let total: f64 = mass.row_sums().iter().sum();
        let min_eig = dense.symmetric_eigen().eigenvalues.min();
        gates.push(Gate::check(
            &format!("p{p}-mass-spd"),
            asym <= 1e-13 * max_entry && min_eig > 0.0 && (total - 4.0).abs() < 1e-12,
            format!("asym={asym:.1e}, min eig={min_eig:.3e}, total mass={total:.12}"),
        ));
    }

    // Column sums of the Hessian couplings against the independent
    // boundary-flux quadrature.
    for p in [1usize, 2] {
        let space = FeSpace::new(Mesh::uniform_square(3).unwrap(), p).unwrap();
        let (c, _) = assembly::assemble_c_blocks(&space);
        let mut worst = 0.0_f64;
        for alpha in 0..2 {
            for beta in 0..2 {
                for j in 0..space.n_interior() {
                    let col: f64 = (0..space.ndofs()).map(|i| c[alpha][beta].get(i, j)).sum();
                    let mut basis = vec![0.0; space.ndofs()];
                    basis[j] = 1.0;
                    let oracle = boundary_flux_oracle(&space, &basis, alpha, beta);
                    worst = worst.max((col - oracle).abs());
                }
            }
        }
        gates.push(Gate::check(
            &format!("p{p}-column-sums"),
            worst <= 1e-10,
            format!("max |col sum - boundary flux| = {worst:.3e} <= 1e-10"),
        ));
    }

    // Finite element Hessian identity <H[V], 1> = boundary flux of grad V
    // on 50 random interior coefficient vectors.
    {
        let space = FeSpace::new(Mesh::uniform_square(4).unwrap(), 2).unwrap();
        let ident = assembly::identity_coefficient();
        let sys = NvSystem::assemble(&space, &ident, |_| 0.0, |_| 0.0);
        let mut rng = StdRng::seed_from_u64(42);
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let u_int: Vec<f64> = (0..space.n_interior()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u_bnd = vec![0.0; space.n_boundary()];
            let hess = linsolve::fe_hessian(&sys, &u_int, &u_bnd).unwrap();
            let mut full = u_int.clone();
            full.extend_from_slice(&u_bnd);
            for alpha in 0..2 {
                for beta in 0..2 {
                    let mut mh = vec![0.0; space.ndofs()];
                    sys.mass.matvec(&hess[alpha][beta], &mut mh);
                    let pairing: f64 = mh.iter().sum();
                    let oracle = boundary_flux_oracle(&space, &full, alpha, beta);
                    worst = worst.max((pairing - oracle).abs());
                }
            }
        }
        gates.push(Gate::check(
            "hessian-identity",
            worst <= 1e-9,
            format!("max |<H,1> - boundary flux| = {worst:.3e} <= 1e-9 over 50 vectors"),
        ));
    }

    // Closed-form right-hand sides against finite-difference Hessians at
    // 100 interior points per problem (clear of the test43 origin, where
    // the exact solution is not C^4).
    {
        let mut rng = StdRng::seed_from_u64(42);
        let mut worst = 0.0_f64;
        for id in [ProblemId::Test41, ProblemId::Test42, ProblemId::Test43, ProblemId::Poisson] {
            let p = problems::make_problem(id, ProblemParams::default()).unwrap();
            let exact = p.exact.as_ref().unwrap();
            let mut count = 0;
            while count < 100 {
                let x = [rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95)];
                if id == ProblemId::Test43 && x[0] * x[0] + x[1] * x[1] < 0.04 {
                    continue;
                }
                count += 1;
                let f_closed = (p.rhs)(x);
                let hess = fd_hessian(&**exact, x);
                let a = (p.coeff)(x);
                let mut f_fd = 0.0;
                for r in 0..2 {
                    for c in 0..2 {
                        f_fd += a[r][c] * hess[r][c];
                    }
                }
                worst = worst.max((f_closed - f_fd).abs() / (1.0 + f_closed.abs()));
            }
        }
        gates.push(Gate::check(
            "fd-derivation-oracle",
            worst <= 1e-6,
            format!("max relative defect {worst:.3e} <= 1e-6 at 100 points per problem"),
        ));
    }

    // Linearity of the matrix-free block application.
    {
        let problem = problems::make_problem(ProblemId::Test41, ProblemParams::default()).unwrap();
        let space = FeSpace::new(Mesh::uniform_square(4).unwrap(), 1).unwrap();
        let sys = problem.assemble(&space);
        let op = BlockOperator::new(&sys);
        let dim = sys.block_dim();
        let mut rng = StdRng::seed_from_u64(7);
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let combo: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
            let mut yc = vec![0.0; dim];
            let mut yv = vec![0.0; dim];
            let mut yw = vec![0.0; dim];
            op.apply(&combo, &mut yc);
            op.apply(&v, &mut yv);
            op.apply(&w, &mut yw);
            for i in 0..dim {
                worst = worst.max((yc[i] - a * yv[i] - b * yw[i]).abs());
            }
        }
        gates.push(Gate::check(
            "block-apply-linearity",
            worst <= 1e-10,
            format!("max linearity defect {worst:.3e} <= 1e-10"),
        ));
    }

    report_criterion("criterion 9 (invariant suites)", &gates);
}

#[test]
fn criterion_10_poisson_sanity() {
    convergence_criterion("criterion 10 (Poisson sanity)", ProblemId::Poisson, 5000.0, "crit10");
}
