use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use nvfem_cli::config::{parse_levels, Command, RawOptions};
use nvfem_cli::{runs, RunReport};

/// Nonvariational finite element experiments on the square (-1,1)^2.
#[derive(Parser)]
#[command(name = "nvfem", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mesh-refinement convergence study with estimated orders.
    Convergence(CommonArgs),
    /// Condition numbers of the block matrix across refinements.
    Condition(CommonArgs),
    /// Standard FEM vs NVFEM oscillation comparison (test42).
    Compare(CommonArgs),
    /// Quasilinear fixed-point stagnation table and convergence.
    Quasilinear(CommonArgs),
    /// Single solve with mesh/solution/Hessian dumps.
    Solve(SolveArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem id: test41 | test42 | test43 | poisson.
    #[arg(long)]
    problem: Option<String>,
    /// Polynomial degree (1 or 2).
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated refinement levels (subdivisions per side).
    #[arg(long)]
    levels: Option<String>,
    /// Steepness parameter of the arctan coefficient (test42).
    #[arg(long = "K")]
    k: Option<f64>,
    /// Relative residual tolerance of the linear solver.
    #[arg(long)]
    tol: Option<f64>,
    /// GMRES restart length.
    #[arg(long)]
    restart: Option<usize>,
    /// Inner-iteration cap (default 20 x system dimension).
    #[arg(long)]
    maxiter: Option<usize>,
    /// Run mode (nvfem | standard-fem | quasilinear-variational |
    /// quasilinear-nonvariational | both | condition).
    #[arg(long)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also dump the component matrices in `row col value` format.
    #[arg(long)]
    dump_matrices: bool,
}

impl CommonArgs {
    fn resolve(self, command: Command) -> Result<nvfem_cli::RunConfig> {
        let levels = self.levels.as_deref().map(parse_levels).transpose()?;
        let cli = RawOptions {
            problem: self.problem,
            p: self.p,
            levels,
            k: self.k,
            tol: self.tol,
            restart: self.restart,
            maxiter: self.maxiter,
            mode: self.mode,
            out: self.out,
        };
        let merged = match &self.config {
            Some(path) => cli.or(RawOptions::from_file(path)?),
            None => cli,
        };
        merged.resolve(command)
    }
}

fn finish(report: &RunReport) -> ExitCode {
    for gate in &report.gates {
        println!(
            "gate {}: {} ({})",
            gate.name,
            if gate.passed { "pass" } else { "FAIL" },
            gate.detail
        );
    }
    if report.all_gates_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    Ok(match cli.command {
        Cmd::Convergence(args) => {
            let cfg = args.resolve(Command::Convergence)?;
            let (rows, report) = runs::run_convergence(&cfg)?;
            for r in &rows {
                println!(
                    "n={:<4} h={:.4} N={:<6} e0={:.4e} e1={:.4e} eoc0={} eoc1={} iters={} ({:.2}s)",
                    r.n,
                    r.h,
                    r.ndofs,
                    r.e0,
                    r.e1,
                    nvfem_cli::output::eoc_cell(r.eoc0),
                    nvfem_cli::output::eoc_cell(r.eoc1),
                    r.iterations,
                    r.seconds
                );
            }
            finish(&report)
        }
        Cmd::Condition(args) => {
            let cfg = args.resolve(Command::Condition)?;
            let (rows, report) = runs::run_condition(&cfg)?;
            for r in &rows {
                println!(
                    "n={:<4} dofs={:<6} h={:.4} kappa={:.4e} h^2*kappa={:.3}",
                    r.n, r.dofs, r.h, r.kappa, r.h2_kappa
                );
            }
            finish(&report)
        }
        Cmd::Compare(args) => {
            let cfg = args.resolve(Command::Compare)?;
            let (summary, report) = runs::run_compare(&cfg)?;
            println!(
                "n={}: max nodal error nvfem={:.4e} standard-fem={:.4e} ratio={:.2}",
                summary.n, summary.max_nodal_nvfem, summary.max_nodal_fem, summary.ratio
            );
            finish(&report)
        }
        Cmd::Quasilinear(args) => {
            let cfg = args.resolve(Command::Quasilinear)?;
            let (rows, report) = runs::run_quasilinear(&cfg)?;
            for r in &rows {
                println!(
                    "n={:<4} h={:.4} {:<16} stagnation={:<3} e0={:.4e} e1={:.4e} ({:.2}s)",
                    r.n, r.h, r.mode.to_string(), r.stagnation_point, r.e0, r.e1, r.seconds
                );
            }
            finish(&report)
        }
        Cmd::Solve(args) => {
            let dump = args.dump_matrices;
            let cfg = args.common.resolve(Command::Solve)?;
            let report = runs::run_solve(&cfg, dump)?;
            for row in &report.rows {
                println!("{row}");
            }
            finish(&report)
        }
    })
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
