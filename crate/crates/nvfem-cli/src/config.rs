//! Run configuration: defaults, flat key=value config files, and command
//! line overrides (command line wins over file, file wins over defaults).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nvfem::problems::ProblemId;

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Nvfem,
    StandardFem,
    QuasilinearVariational,
    QuasilinearNonvariational,
    /// Both quasilinear linearizations side by side.
    QuasilinearBoth,
    Condition,
}

impl RunMode {
    pub fn parse(s: &str) -> Result<RunMode> {
        Ok(match s {
            "nvfem" => RunMode::Nvfem,
            "standard-fem" => RunMode::StandardFem,
            "quasilinear-variational" => RunMode::QuasilinearVariational,
            "quasilinear-nonvariational" => RunMode::QuasilinearNonvariational,
            "both" | "quasilinear-both" => RunMode::QuasilinearBoth,
            "condition" => RunMode::Condition,
            other => bail!("unknown mode '{other}'"),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Nvfem => "nvfem",
            RunMode::StandardFem => "standard-fem",
            RunMode::QuasilinearVariational => "quasilinear-variational",
            RunMode::QuasilinearNonvariational => "quasilinear-nonvariational",
            RunMode::QuasilinearBoth => "quasilinear-both",
            RunMode::Condition => "condition",
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub k: f64,
    pub degree: usize,
    pub levels: Vec<usize>,
    pub tol: f64,
    pub restart: usize,
    pub maxiter: Option<usize>,
    pub mode: RunMode,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn solver_options(&self) -> nvfem::SolverOptions {
        nvfem::SolverOptions {
            tol: self.tol,
            restart: self.restart,
            maxiter: self.maxiter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree != 1 && self.degree != 2 {
            bail!("degree must be 1 or 2, got {}", self.degree);
        }
        if self.levels.is_empty() {
            bail!("refinement list is empty");
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            bail!("refinement list must be strictly increasing: {:?}", self.levels);
        }
        if self.tol <= 0.0 || self.restart == 0 {
            bail!("tol must be positive and restart nonzero");
        }
        Ok(())
    }
}

/// Raw option values gathered from a config file and/or the command line.
#[derive(Debug, Clone, Default)]
pub struct RawOptions {
    pub problem: Option<String>,
    pub p: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub k: Option<f64>,
    pub tol: Option<f64>,
    pub restart: Option<usize>,
    pub maxiter: Option<usize>,
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
}

impl RawOptions {
    /// Fill unset fields from `other` (lower precedence).
    pub fn or(mut self, other: RawOptions) -> RawOptions {
        self.problem = self.problem.or(other.problem);
        self.p = self.p.or(other.p);
        self.levels = self.levels.or(other.levels);
        self.k = self.k.or(other.k);
        self.tol = self.tol.or(other.tol);
        self.restart = self.restart.or(other.restart);
        self.maxiter = self.maxiter.or(other.maxiter);
        self.mode = self.mode.or(other.mode);
        self.out = self.out.or(other.out);
        self
    }

    /// Parse a flat `key=value` config file. Blank lines and `#` comments
    /// are ignored.
    pub fn from_file(path: &Path) -> Result<RawOptions> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key=value", path.display(), lineno + 1))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut raw = RawOptions::default();
        for (key, value) in map {
            match key.as_str() {
                "problem" => raw.problem = Some(value),
                "p" => raw.p = Some(value.parse().context("config key p")?),
                "levels" => raw.levels = Some(parse_levels(&value)?),
                "K" | "k" => raw.k = Some(value.parse().context("config key K")?),
                "tol" => raw.tol = Some(value.parse().context("config key tol")?),
                "restart" => raw.restart = Some(value.parse().context("config key restart")?),
                "maxiter" => raw.maxiter = Some(value.parse().context("config key maxiter")?),
                "mode" => raw.mode = Some(value),
                "out" => raw.out = Some(PathBuf::from(value)),
                other => bail!("unknown config key '{other}'"),
            }
        }
        Ok(raw)
    }

    /// Resolve against the defaults of one subcommand.
    pub fn resolve(self, command: Command) -> Result<RunConfig> {
        let problem = match &self.problem {
            Some(s) => s
                .parse::<ProblemId>()
                .map_err(|e| anyhow::anyhow!("{e}"))?,
            None => command.default_problem(),
        };
        let degree = self.p.unwrap_or(1);
        let mode = match (&self.mode, command) {
            (Some(s), _) => RunMode::parse(s)?,
            (None, Command::Condition) => RunMode::Condition,
            (None, Command::Quasilinear) => RunMode::QuasilinearBoth,
            (None, _) => RunMode::Nvfem,
        };
        let levels = match self.levels {
            Some(l) => l,
            None => command.default_levels(degree),
        };
        let cfg = RunConfig {
            problem,
            k: self.k.unwrap_or(5000.0),
            degree,
            levels,
            tol: self.tol.unwrap_or(1e-10),
            restart: self.restart.unwrap_or(50),
            maxiter: self.maxiter,
            mode,
            out_dir: self.out.unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_levels(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().context("levels entry"))
        .collect()
}

/// CLI subcommand kind, used only to pick defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Convergence,
    Condition,
    Compare,
    Quasilinear,
    Solve,
}

impl Command {
    fn default_problem(self) -> ProblemId {
        match self {
            Command::Compare => ProblemId::Test42,
            _ => ProblemId::Test41,
        }
    }

    fn default_levels(self, degree: usize) -> Vec<usize> {
        match self {
            // Refinement doubling; quadratics start coarser since they
            // carry more dofs per cell.
            Command::Convergence => {
                if degree == 1 {
                    vec![8, 16, 32, 64]
                } else {
                    vec![4, 8, 16, 32]
                }
            }
            Command::Condition => vec![2, 4, 8, 16],
            Command::Compare => vec![32],
            Command::Quasilinear => vec![10, 20, 40, 80],
            Command::Solve => vec![8],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_cli_precedence() {
        let dir = std::env::temp_dir().join("nvfem-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(&path, "problem=test42\np=2\nlevels=2,4\n# comment\ntol=1e-8\n").unwrap();
        let file = RawOptions::from_file(&path).unwrap();
        let cli = RawOptions {
            tol: Some(1e-6),
            ..Default::default()
        };
        let cfg = cli.or(file).resolve(Command::Convergence).unwrap();
        assert_eq!(cfg.problem, ProblemId::Test42);
        assert_eq!(cfg.degree, 2);
        assert_eq!(cfg.levels, vec![2, 4]);
        assert_eq!(cfg.tol, 1e-6); // command line wins
        assert_eq!(cfg.restart, 50); // default
    }

    #[test]
    fn decreasing_levels_rejected() {
        let raw = RawOptions {
            levels: Some(vec![8, 4]),
            ..Default::default()
        };
        assert!(raw.resolve(Command::Convergence).is_err());
    }

    #[test]
    fn unknown_config_key_rejected() {
        let dir = std::env::temp_dir().join("nvfem-config-test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.cfg");
        std::fs::write(&path, "nope=1\n").unwrap();
        assert!(RawOptions::from_file(&path).is_err());
    }

    #[test]
    fn default_levels_depend_on_degree() {
        let cfg = RawOptions::default().resolve(Command::Convergence).unwrap();
        assert_eq!(cfg.levels, vec![8, 16, 32, 64]);
        let cfg = RawOptions {
            p: Some(2),
            ..Default::default()
        }
        .resolve(Command::Convergence)
        .unwrap();
        assert_eq!(cfg.levels, vec![4, 8, 16, 32]);
    }
}
