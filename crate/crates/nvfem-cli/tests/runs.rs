//! Library-level tests of the run drivers.

use std::path::PathBuf;

use nvfem::ProblemId;
use nvfem_cli::config::{RunConfig, RunMode};
use nvfem_cli::runs;

fn config(levels: &[usize], mode: RunMode, out: &str) -> RunConfig {
    RunConfig {
        problem: ProblemId::Test42,
        k: 1.0,
        degree: 1,
        levels: levels.to_vec(),
        tol: 1e-10,
        restart: 50,
        maxiter: None,
        mode,
        out_dir: PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(out),
    }
}

#[test]
fn condition_sweep_truncates_at_dense_guard() {
    let mut cfg = config(&[2, 4, 8, 16, 32], RunMode::Condition, "runs-cond");
    cfg.problem = ProblemId::Test41;
    cfg.k = 5000.0;
    let (rows, report) = runs::run_condition(&cfg).expect("condition run");
    // n = 32 exceeds the dense guard (block dimension > 5000), so the
    // sweep stops after four rows and the truncation is recorded.
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.n <= 16));
    assert!(
        report.rows.iter().any(|r| r.contains("dense guard")),
        "truncation not recorded: {:?}",
        report.rows
    );
    assert!(report.all_gates_pass());
}

#[test]
fn shallow_layer_comparison_is_balanced() {
    // With K = 1 both discretizations resolve the coefficient, so their
    // max nodal errors are of the same order and no ratio gate applies.
    let cfg = config(&[16], RunMode::Nvfem, "runs-cmp");
    let (summary, report) = runs::run_compare(&cfg).expect("compare run");
    assert!(summary.ratio.is_finite());
    assert!(summary.ratio > 0.2 && summary.ratio < 5.0, "ratio {}", summary.ratio);
    assert!(report.gates.is_empty(), "no oscillation gate at K=1");
    assert!(report.all_gates_pass());
}

#[test]
fn compare_requires_the_layer_problem() {
    let mut cfg = config(&[8], RunMode::Nvfem, "runs-cmp-bad");
    cfg.problem = ProblemId::Poisson;
    assert!(runs::run_compare(&cfg).is_err());
}

#[test]
fn standard_fem_needs_coefficient_divergence() {
    // test41 has a nondifferentiable coefficient: no closed-form div(A),
    // so the divergence-form mode records a failed row and no gates pass.
    let mut cfg = config(&[4, 8], RunMode::StandardFem, "runs-nodiv");
    cfg.problem = ProblemId::Test41;
    let (rows, report) = runs::run_convergence(&cfg).expect("sweep continues past failures");
    assert!(rows.is_empty());
    assert!(report.rows.iter().all(|r| r.contains("failed")));
    assert!(!report.all_gates_pass());
}
