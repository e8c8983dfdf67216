//! Deterministic output files: CSV tables, two-column log-log plot data,
//! solver statistics, and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::RunConfig;

/// One acceptance gate evaluated by a run.
#[derive(Debug, Clone)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Gate {
    pub fn check(name: &str, passed: bool, detail: String) -> Gate {
        Gate {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Collects per-row statuses and gate results, then writes the manifest.
#[derive(Debug, Default)]
pub struct RunReport {
    pub rows: Vec<String>,
    pub gates: Vec<Gate>,
}

impl RunReport {
    pub fn row_ok(&mut self, label: &str) {
        self.rows.push(format!("{label}: ok"));
    }

    pub fn row_failed(&mut self, label: &str, err: &dyn std::fmt::Display) {
        self.rows.push(format!("{label}: failed: {err}"));
    }

    pub fn all_gates_pass(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    /// Write `manifest.txt`: config echo, code version, row statuses and
    /// gate outcomes.
    pub fn write_manifest(&self, cfg: &RunConfig, command: &str) -> Result<()> {
        let mut text = String::new();
        writeln!(text, "command={command}").unwrap();
        writeln!(text, "version={}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(text, "problem={}", cfg.problem).unwrap();
        writeln!(text, "p={}", cfg.degree).unwrap();
        writeln!(
            text,
            "levels={}",
            cfg.levels
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap();
        writeln!(text, "K={}", cfg.k).unwrap();
        writeln!(text, "tol={:e}", cfg.tol).unwrap();
        writeln!(text, "restart={}", cfg.restart).unwrap();
        writeln!(text, "mode={}", cfg.mode.as_str()).unwrap();
        writeln!(text, "out={}", cfg.out_dir.display()).unwrap();
        for row in &self.rows {
            writeln!(text, "row: {row}").unwrap();
        }
        for gate in &self.gates {
            writeln!(
                text,
                "gate: {} {} ({})",
                gate.name,
                if gate.passed { "pass" } else { "FAIL" },
                gate.detail
            )
            .unwrap();
        }
        write_text(&cfg.out_dir.join("manifest.txt"), &text)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Append one solver-statistics row (`n,p,problem,dofs,iterations,
/// residual,seconds`) to `solves.csv`, creating it with a header first.
pub fn append_solve_stat(
    out_dir: &Path,
    n: usize,
    p: usize,
    problem: &str,
    dofs: usize,
    stats: &nvfem::SolveStats,
) -> Result<PathBuf> {
    ensure_dir(out_dir)?;
    let path = out_dir.join("solves.csv");
    let fresh = !path.exists();
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(file, "n,p,problem,dofs,iterations,residual,seconds")?;
    }
    writeln!(
        file,
        "{n},{p},{problem},{dofs},{},{:.6e},{:.3}",
        stats.iterations, stats.residual, stats.seconds
    )?;
    Ok(path)
}

/// Format an optional EOC cell; absent for the first row of a sweep.
pub fn eoc_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Two-column whitespace data file (h vs error), log-log ready.
pub fn write_plot_data(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut text = String::new();
    for (h, e) in points {
        writeln!(text, "{h:.12e} {e:.12e}").unwrap();
    }
    write_text(path, &text)
}
