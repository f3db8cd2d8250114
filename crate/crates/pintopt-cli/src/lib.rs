//! Benchmark harness for the all-at-once control solvers: sweep
//! configuration, per-cell solve driver, CSV emission, and the eigenvalue
//! dump behind the interval figures.
//!
//! A sweep walks the (γ, mesh, solver) grid of one example problem, solves
//! each cell with the configured Krylov method and preconditioner, recovers
//! the state and control, and records iteration counts, solve wall time, and
//! the discrete error against the closed-form solution. Runs are
//! deterministic: reruns produce identical iteration counts and error bit
//! patterns (the timing column is exempt).

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use num_complex::Complex64;

use pintopt::discretize::{
    analytic_state, assemble_rhs, assemble_spatial, build_grid, error_measure, recover_state,
    BlockVector, ExampleId, ProblemSpec, SystemForm,
};
use pintopt::krylov::{gmres, minres, SolveReport};
use pintopt::operators::{PreconditionerHandle, PreconditionerKind, SystemOperator};
use pintopt::spectra::figure_eigs_1d;

/// Errors surfaced by the harness, split by exit code: configuration
/// problems abort before any run, numerical problems abort a run in
/// progress.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid or inconsistent configuration; exit code 1.
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical failure inside a solve; exit code 2.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<pintopt::Error> for CliError {
    fn from(err: pintopt::Error) -> Self {
        match err {
            pintopt::Error::InvalidSpec(_)
            | pintopt::Error::NonPositiveCoefficient { .. }
            | pintopt::Error::NotDstDiagonalizable(_)
            | pintopt::Error::DenseSizeGuard { .. } => CliError::Config(err.to_string()),
            pintopt::Error::ShapeMismatch(_)
            | pintopt::Error::ContractViolation(_)
            | pintopt::Error::Numerical(_) => CliError::Numerical(err.to_string()),
        }
    }
}

/// Solver-and-preconditioner pairings the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// GMRES on the row-swapped arrangement with the circulant-quotient
    /// preconditioner.
    GmresPS,
    /// MINRES on the symmetric arrangement with the absolute-value
    /// preconditioner (constant-coefficient Dirichlet problems only).
    MinresAbsPS,
    /// MINRES on the symmetric arrangement with the solvable surrogate
    /// preconditioner.
    MinresPMS,
}

impl SolverKind {
    /// Stable name used on the command line and in CSV rows.
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::GmresPS => "gmres-ps",
            SolverKind::MinresAbsPS => "minres-abs-ps",
            SolverKind::MinresPMS => "minres-pms",
        }
    }

    /// Parses a solver name as written by [`SolverKind::name`].
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name.trim() {
            "gmres-ps" => Ok(SolverKind::GmresPS),
            "minres-abs-ps" => Ok(SolverKind::MinresAbsPS),
            "minres-pms" => Ok(SolverKind::MinresPMS),
            other => Err(CliError::Config(format!(
                "unknown solver {other:?}; expected gmres-ps, minres-abs-ps, or minres-pms"
            ))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stable name of an example problem on the command line and in CSV rows.
pub fn example_name(example: ExampleId) -> &'static str {
    match example {
        ExampleId::Ex1ConstCoeff => "ex1",
        ExampleId::Ex2VariableCoeff => "ex2",
        ExampleId::Ex3Neumann => "ex3",
        ExampleId::Custom => "custom",
    }
}

/// Parses an example name (`ex1`, `ex2`, `ex3`).
pub fn parse_example(name: &str) -> Result<ExampleId, CliError> {
    match name.trim() {
        "ex1" => Ok(ExampleId::Ex1ConstCoeff),
        "ex2" => Ok(ExampleId::Ex2VariableCoeff),
        "ex3" => Ok(ExampleId::Ex3Neumann),
        other => Err(CliError::Config(format!(
            "unknown example {other:?}; expected ex1, ex2, or ex3"
        ))),
    }
}

/// One benchmark sweep: an example problem crossed with mesh levels,
/// regularization weights, and solvers.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Which example problem to run.
    pub example: ExampleId,
    /// Mesh levels as exponents `e` with spacing `h = 2^{-e}`.
    pub h_exponents: Vec<u32>,
    /// Regularization weights γ.
    pub gammas: Vec<f64>,
    /// Time-stepping weight θ ∈ [1/2, 1].
    pub theta: f64,
    /// Corner-twist angle ζ of the time transform.
    pub zeta: f64,
    /// Solver/preconditioner pairings to run per cell.
    pub solvers: Vec<SolverKind>,
    /// Relative-residual stopping tolerance.
    pub tol: f64,
    /// Iteration cap.
    pub maxit: usize,
    /// CSV destination; standard output when absent.
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Default sweep for an example: the five benchmark weights, the meshes
    /// and solvers reported for that example, θ = 1/2, and ζ = π.
    pub fn defaults(example: ExampleId) -> Self {
        let (h_exponents, solvers) = match example {
            ExampleId::Ex2VariableCoeff => (vec![5], vec![SolverKind::GmresPS, SolverKind::MinresPMS]),
            ExampleId::Ex3Neumann => (vec![5, 6], vec![SolverKind::GmresPS]),
            _ => (vec![5, 6], vec![SolverKind::GmresPS, SolverKind::MinresAbsPS]),
        };
        Self {
            example,
            h_exponents,
            gammas: vec![1e-10, 1e-8, 1e-6, 1e-4, 1e-2],
            theta: 0.5,
            zeta: std::f64::consts::PI,
            solvers,
            tol: 1e-8,
            maxit: 100,
            out: None,
        }
    }

    /// Checks value ranges and solver/example compatibility before any cell
    /// runs.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.example == ExampleId::Custom {
            return Err(CliError::Config(
                "the harness runs the named examples ex1, ex2, ex3".into(),
            ));
        }
        if !(self.theta >= 0.5 && self.theta <= 1.0) {
            return Err(CliError::Config(format!(
                "theta must lie in [1/2, 1], got {}",
                self.theta
            )));
        }
        if !self.zeta.is_finite() {
            return Err(CliError::Config("zeta must be finite".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Config(format!(
                "tolerance must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.maxit == 0 {
            return Err(CliError::Config("maxit must be at least one".into()));
        }
        for &gamma in &self.gammas {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(CliError::Config(format!(
                    "regularization weights must be positive and finite, got {gamma}"
                )));
            }
        }
        for &e in &self.h_exponents {
            if e == 0 || e > 12 {
                return Err(CliError::Config(format!(
                    "mesh exponents must lie in 1..=12, got {e}"
                )));
            }
        }
        if self.solvers.is_empty() {
            return Err(CliError::Config("at least one solver is required".into()));
        }
        if self.solvers.contains(&SolverKind::MinresAbsPS)
            && self.example != ExampleId::Ex1ConstCoeff
        {
            return Err(CliError::Config(
                "minres-abs-ps needs a constant coefficient with Dirichlet boundary; \
                 only ex1 qualifies"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// One finished benchmark cell.
#[derive(Debug, Clone)]
pub struct TableRow {
    /// Example problem of the cell.
    pub example: ExampleId,
    /// Regularization weight γ.
    pub gamma: f64,
    /// Mesh exponent: spacing `h = 2^{-h_exp}`.
    pub h_exp: u32,
    /// Time-stepping weight θ.
    pub theta: f64,
    /// Corner-twist angle ζ.
    pub zeta: f64,
    /// Solver/preconditioner pairing.
    pub solver: SolverKind,
    /// All-at-once system dimension.
    pub dof: usize,
    /// Krylov iterations performed.
    pub iters: usize,
    /// Wall-clock seconds of the Krylov solve alone.
    pub seconds: f64,
    /// Discrete error of the recovered state/adjoint pair against the
    /// closed-form solution.
    pub e_h: f64,
    /// Whether the solve reached the tolerance within the cap.
    pub converged: bool,
}

/// Spatial points per dimension for a mesh exponent under each boundary
/// condition (interior points for Dirichlet, cells for Neumann).
fn mesh_points(example: ExampleId, h_exp: u32) -> (usize, usize) {
    let n = 1usize << h_exp;
    let m1 = match example {
        ExampleId::Ex3Neumann => n,
        _ => n - 1,
    };
    (n, m1)
}

/// Solves one benchmark cell and returns its table row together with the
/// full solver report.
pub fn solve_cell(
    example: ExampleId,
    gamma: f64,
    h_exp: u32,
    theta: f64,
    zeta: f64,
    solver: SolverKind,
    tol: f64,
    maxit: usize,
) -> Result<(TableRow, SolveReport), CliError> {
    let (n, m1) = mesh_points(example, h_exp);
    let spec = ProblemSpec::example(example, gamma, theta, zeta, n, m1)?;
    let grid = build_grid(&spec);
    let spatial = assemble_spatial(&spec, &grid)?;
    let m = spatial.m();
    let (form, kind) = match solver {
        SolverKind::GmresPS => (SystemForm::RowSwapped, PreconditionerKind::Ps),
        SolverKind::MinresAbsPS => (SystemForm::Symmetric, PreconditionerKind::AbsPs),
        SolverKind::MinresPMS => (SystemForm::Symmetric, PreconditionerKind::Pms),
    };
    let op = SystemOperator::new(&spec, form)?;
    let handle = PreconditionerHandle::new(kind, &spec, spatial)?;
    let rhs = assemble_rhs(&spec, &grid, form)?;
    let apply_op = |v: &[Complex64]| -> pintopt::Result<Vec<Complex64>> {
        let block = BlockVector::from_data(v.to_vec(), m, n)?;
        Ok(op.apply_system(&block)?.data)
    };
    let apply_pre = |v: &[Complex64]| -> pintopt::Result<Vec<Complex64>> {
        let block = BlockVector::from_data(v.to_vec(), m, n)?;
        Ok(handle.apply_inverse(&block)?.data)
    };
    let (x, report) = match solver {
        SolverKind::GmresPS => gmres(apply_op, apply_pre, &rhs.data, tol, maxit)?,
        _ => minres(apply_op, apply_pre, &rhs.data, tol, maxit)?,
    };
    let raw = BlockVector::from_data(x, m, n)?;
    let state = recover_state(&raw, &spec)?;
    let e_h = match analytic_state(&spec, &grid) {
        Some(exact) => error_measure(&state, &exact, &grid)?,
        None => f64::NAN,
    };
    let row = TableRow {
        example,
        gamma,
        h_exp,
        theta,
        zeta,
        solver,
        dof: 2 * m * n,
        iters: report.iterations,
        seconds: report.wall_seconds,
        e_h,
        converged: report.converged,
    };
    Ok((row, report))
}

/// Runs every cell of a sweep in deterministic order: mesh level, then
/// weight, then solver. Non-convergence is recorded in the row, not raised.
pub fn run(config: &RunConfig) -> Result<Vec<TableRow>, CliError> {
    config.validate()?;
    let mut rows = Vec::new();
    for &h_exp in &config.h_exponents {
        for &gamma in &config.gammas {
            for &solver in &config.solvers {
                let (row, _) = solve_cell(
                    config.example,
                    gamma,
                    h_exp,
                    config.theta,
                    config.zeta,
                    solver,
                    config.tol,
                    config.maxit,
                )?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with a header, comma separation, LF endings, and
/// 17-significant-digit floats, so the table can be replotted losslessly.
pub fn write_rows_csv<W: Write>(sink: &mut W, rows: &[TableRow]) -> std::io::Result<()> {
    sink.write_all(b"example,gamma,h_exp,theta,zeta,solver,dof,iters,seconds,e_h,converged\n")?;
    for row in rows {
        writeln!(
            sink,
            "{},{:.16e},{},{:.16e},{:.16e},{},{},{},{:.16e},{:.16e},{}",
            example_name(row.example),
            row.gamma,
            row.h_exp,
            row.theta,
            row.zeta,
            row.solver,
            row.dof,
            row.iters,
            row.seconds,
            row.e_h,
            row.converged,
        )?;
    }
    Ok(())
}

/// Sweep over the eigenvalue dump of the surrogate-preconditioned absolute
/// value, on the one-dimensional model problem.
#[derive(Debug, Clone)]
pub struct SpectraConfig {
    /// Regularization weights, one eigenvalue block each.
    pub gammas: Vec<f64>,
    /// Time-stepping weight θ.
    pub theta: f64,
    /// Corner-twist angle ζ.
    pub zeta: f64,
    /// Time steps.
    pub n: usize,
    /// Interior spatial points of the one-dimensional mesh.
    pub points: usize,
    /// CSV destination; standard output when absent.
    pub out: Option<PathBuf>,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            gammas: vec![1e-2, 1e-6, 1e-10],
            theta: 0.5,
            zeta: std::f64::consts::PI,
            n: 16,
            points: 15,
            out: None,
        }
    }
}

/// Interval verdict for one eigenvalue block of the dump.
#[derive(Debug, Clone)]
pub struct SpectraBlock {
    /// Regularization weight of the block.
    pub gamma: f64,
    /// Smallest eigenvalue.
    pub min: f64,
    /// Largest eigenvalue.
    pub max: f64,
    /// Lower bound of the predicted interval.
    pub lo: f64,
    /// Upper bound of the predicted interval.
    pub hi: f64,
    /// Whether every eigenvalue lies inside the interval (slack 1e-9).
    pub pass: bool,
}

/// Computes the eigenvalue blocks of a dump sweep and writes them as CSV
/// (`gamma,theta,zeta,n,m,index,value`), returning the interval verdicts.
pub fn spectra_dump<W: Write>(
    config: &SpectraConfig,
    sink: &mut W,
) -> Result<Vec<SpectraBlock>, CliError> {
    for &gamma in &config.gammas {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(CliError::Config(format!(
                "regularization weights must be positive and finite, got {gamma}"
            )));
        }
    }
    if !(config.theta >= 0.5 && config.theta <= 1.0) {
        return Err(CliError::Config(format!(
            "theta must lie in [1/2, 1], got {}",
            config.theta
        )));
    }
    let (lo, hi) = if config.theta == 0.5 {
        (std::f64::consts::FRAC_1_SQRT_2, 1.0)
    } else {
        (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::SQRT_2)
    };
    let slack = 1e-9;
    sink.write_all(b"gamma,theta,zeta,n,m,index,value\n")
        .map_err(|e| CliError::Numerical(format!("CSV write failed: {e}")))?;
    let mut blocks = Vec::new();
    for &gamma in &config.gammas {
        let eigs = figure_eigs_1d(config.theta, config.zeta, gamma, config.n, config.points, 1.0)?;
        for (index, value) in eigs.iter().enumerate() {
            writeln!(
                sink,
                "{:.16e},{:.16e},{:.16e},{},{},{},{:.16e}",
                gamma, config.theta, config.zeta, config.n, config.points, index, value,
            )
            .map_err(|e| CliError::Numerical(format!("CSV write failed: {e}")))?;
        }
        let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        blocks.push(SpectraBlock {
            gamma,
            min,
            max,
            lo,
            hi,
            pass: min >= lo - slack && max <= hi + slack,
        });
    }
    Ok(blocks)
}

/// Optional overrides collected from a config file or command-line flags;
/// later layers win key by key.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    /// Example problem.
    pub example: Option<ExampleId>,
    /// Mesh exponents.
    pub h_exponents: Option<Vec<u32>>,
    /// Regularization weights.
    pub gammas: Option<Vec<f64>>,
    /// Time-stepping weight.
    pub theta: Option<f64>,
    /// Corner-twist angle.
    pub zeta: Option<f64>,
    /// Solver pairings.
    pub solvers: Option<Vec<SolverKind>>,
    /// Stopping tolerance.
    pub tol: Option<f64>,
    /// Iteration cap.
    pub maxit: Option<usize>,
    /// CSV destination.
    pub out: Option<PathBuf>,
}

fn parse_list<T, E>(value: &str, what: &str, parse: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, CliError> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|item| {
            parse(item.trim()).map_err(|_| {
                CliError::Config(format!("cannot parse {what} entry {:?}", item.trim()))
            })
        })
        .collect()
}

/// Parses the flat `key = value` config-file format. Lists are
/// comma-separated; `#` starts a comment; unknown keys are rejected.
pub fn parse_config_text(text: &str) -> Result<ConfigOverrides, CliError> {
    let mut overrides = ConfigOverrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "example" => overrides.example = Some(parse_example(value)?),
            "h_exp" => {
                overrides.h_exponents =
                    Some(parse_list(value, "mesh exponent", str::parse::<u32>)?)
            }
            "gamma" => {
                overrides.gammas = Some(parse_list(value, "regularization weight", str::parse::<f64>)?)
            }
            "theta" => {
                overrides.theta = Some(value.parse().map_err(|_| {
                    CliError::Config(format!("cannot parse theta value {value:?}"))
                })?)
            }
            "zeta" => {
                overrides.zeta = Some(value.parse().map_err(|_| {
                    CliError::Config(format!("cannot parse zeta value {value:?}"))
                })?)
            }
            "solver" => {
                let names = parse_list(value, "solver", |s| Ok::<_, CliError>(s.to_string()))?;
                let mut solvers = Vec::new();
                for name in names {
                    solvers.push(SolverKind::parse(&name)?);
                }
                overrides.solvers = Some(solvers);
            }
            "tol" => {
                overrides.tol = Some(value.parse().map_err(|_| {
                    CliError::Config(format!("cannot parse tol value {value:?}"))
                })?)
            }
            "maxit" => {
                overrides.maxit = Some(value.parse().map_err(|_| {
                    CliError::Config(format!("cannot parse maxit value {value:?}"))
                })?)
            }
            "out" => overrides.out = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::Config(format!(
                    "line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    Ok(overrides)
}

/// Builds the final sweep from example defaults, then file overrides, then
/// flag overrides.
pub fn resolve_config(file: Option<&ConfigOverrides>, flags: &ConfigOverrides) -> RunConfig {
    let example = flags
        .example
        .or_else(|| file.and_then(|f| f.example))
        .unwrap_or(ExampleId::Ex1ConstCoeff);
    let mut config = RunConfig::defaults(example);
    for layer in file.into_iter().chain(std::iter::once(flags)) {
        if let Some(v) = &layer.h_exponents {
            config.h_exponents = v.clone();
        }
        if let Some(v) = &layer.gammas {
            config.gammas = v.clone();
        }
        if let Some(v) = layer.theta {
            config.theta = v;
        }
        if let Some(v) = layer.zeta {
            config.zeta = v;
        }
        if let Some(v) = &layer.solvers {
            config.solvers = v.clone();
        }
        if let Some(v) = layer.tol {
            config.tol = v;
        }
        if let Some(v) = layer.maxit {
            config.maxit = v;
        }
        if let Some(v) = &layer.out {
            config.out = Some(v.clone());
        }
    }
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_example() {
        let ex1 = RunConfig::defaults(ExampleId::Ex1ConstCoeff);
        assert_eq!(
            ex1.solvers,
            vec![SolverKind::GmresPS, SolverKind::MinresAbsPS],
            "constant-coefficient default must pair GMRES with the absolute value"
        );
        assert_eq!(ex1.h_exponents, vec![5, 6], "two mesh levels by default");
        assert_eq!(ex1.gammas.len(), 5, "five benchmark weights by default");
        let ex2 = RunConfig::defaults(ExampleId::Ex2VariableCoeff);
        assert_eq!(
            ex2.solvers,
            vec![SolverKind::GmresPS, SolverKind::MinresPMS],
            "variable-coefficient default must pair GMRES with the surrogate"
        );
        assert_eq!(ex2.h_exponents, vec![5], "one mesh level for the multigrid table");
        let ex3 = RunConfig::defaults(ExampleId::Ex3Neumann);
        assert_eq!(
            ex3.solvers,
            vec![SolverKind::GmresPS],
            "the Neumann default runs GMRES alone"
        );
        ex1.validate().expect("defaults must validate");
        ex2.validate().expect("defaults must validate");
        ex3.validate().expect("defaults must validate");
    }

    #[test]
    fn solver_and_example_names_round_trip() {
        for kind in [SolverKind::GmresPS, SolverKind::MinresAbsPS, SolverKind::MinresPMS] {
            assert_eq!(
                SolverKind::parse(kind.name()).expect("round trip"),
                kind,
                "solver name must round trip"
            );
        }
        for example in [
            ExampleId::Ex1ConstCoeff,
            ExampleId::Ex2VariableCoeff,
            ExampleId::Ex3Neumann,
        ] {
            assert_eq!(
                parse_example(example_name(example)).expect("round trip"),
                example,
                "example name must round trip"
            );
        }
        assert!(SolverKind::parse("minres").is_err(), "bad solver names must fail");
        assert!(parse_example("ex9").is_err(), "bad example names must fail");
    }

    #[test]
    fn config_file_layers_under_flags() {
        let text = "\
# benchmark sweep
example = ex2
gamma = 1e-4, 1e-2
h_exp = 4
theta = 0.75
solver = gmres-ps
tol = 1e-9
maxit = 50
out = rows.csv
";
        let file = parse_config_text(text).expect("well-formed file");
        let flags = ConfigOverrides {
            gammas: Some(vec![1e-6]),
            ..ConfigOverrides::default()
        };
        let config = resolve_config(Some(&file), &flags);
        assert_eq!(config.example, ExampleId::Ex2VariableCoeff, "file sets the example");
        assert_eq!(config.gammas, vec![1e-6], "flags override the file");
        assert_eq!(config.h_exponents, vec![4], "file overrides the defaults");
        assert_eq!(config.theta, 0.75, "file sets theta");
        assert_eq!(config.tol, 1e-9, "file sets the tolerance");
        assert_eq!(config.maxit, 50, "file sets the cap");
        assert_eq!(config.out.as_deref(), Some(std::path::Path::new("rows.csv")));
        assert!(
            matches!(parse_config_text("mystery = 3"), Err(CliError::Config(_))),
            "unknown keys must be rejected"
        );
        assert!(
            matches!(parse_config_text("just words"), Err(CliError::Config(_))),
            "lines without = must be rejected"
        );
    }

    #[test]
    fn validation_rejects_incompatible_requests() {
        let mut config = RunConfig::defaults(ExampleId::Ex3Neumann);
        config.solvers = vec![SolverKind::MinresAbsPS];
        assert!(
            matches!(config.validate(), Err(CliError::Config(_))),
            "the absolute value needs constant-coefficient Dirichlet problems"
        );
        let mut config = RunConfig::defaults(ExampleId::Ex1ConstCoeff);
        config.theta = 0.25;
        assert!(
            matches!(config.validate(), Err(CliError::Config(_))),
            "theta below one half must be rejected"
        );
        let mut config = RunConfig::defaults(ExampleId::Ex1ConstCoeff);
        config.gammas = vec![-1.0];
        assert!(
            matches!(config.validate(), Err(CliError::Config(_))),
            "negative weights must be rejected"
        );
        let mut config = RunConfig::defaults(ExampleId::Ex1ConstCoeff);
        config.solvers.clear();
        assert!(
            matches!(config.validate(), Err(CliError::Config(_))),
            "an empty solver list must be rejected"
        );
    }

    #[test]
    fn run_emits_one_row_per_cell() {
        let mut config = RunConfig::defaults(ExampleId::Ex1ConstCoeff);
        config.h_exponents = vec![2];
        config.gammas = vec![1e-2, 1e-4];
        config.solvers = vec![SolverKind::GmresPS];
        let rows = run(&config).expect("small sweep runs");
        assert_eq!(rows.len(), 2, "one row per weight");
        for row in &rows {
            assert!(row.converged, "small cells must converge");
            assert!(row.e_h.is_finite() && row.e_h > 0.0, "error column must be positive");
            assert_eq!(row.dof, 2 * 9 * 4, "dimension column must match the mesh");
            assert!(row.iters >= 1, "at least one iteration happens");
        }
        config.gammas.clear();
        let rows = run(&config).expect("empty sweep runs");
        assert!(rows.is_empty(), "no weights means no rows");
    }

    #[test]
    fn csv_rows_are_lossless() {
        let rows = vec![TableRow {
            example: ExampleId::Ex1ConstCoeff,
            gamma: 1e-6,
            h_exp: 5,
            theta: 0.5,
            zeta: std::f64::consts::PI,
            solver: SolverKind::GmresPS,
            dof: 61504,
            iters: 3,
            seconds: 0.03125,
            e_h: 2.8983e-6,
            converged: true,
        }];
        let mut buffer = Vec::new();
        write_rows_csv(&mut buffer, &rows).expect("write");
        let text = String::from_utf8(buffer).expect("utf8");
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("example,gamma,h_exp,theta,zeta,solver,dof,iters,seconds,e_h,converged"),
            "header row must be stable"
        );
        let row = lines.next().expect("one data row");
        assert!(row.starts_with("ex1,"), "row names the example: {row}");
        assert!(row.contains(",gmres-ps,"), "row names the solver: {row}");
        let gamma_field = row.split(',').nth(1).expect("gamma field");
        assert_eq!(
            gamma_field.parse::<f64>().expect("parseable"),
            1e-6,
            "floats must survive the round trip"
        );
        let e_h_field = row.split(',').nth(9).expect("e_h field");
        assert_eq!(
            e_h_field.parse::<f64>().expect("parseable"),
            2.8983e-6,
            "floats must survive the round trip"
        );
        let mut empty = Vec::new();
        write_rows_csv(&mut empty, &[]).expect("write");
        assert_eq!(
            String::from_utf8(empty).expect("utf8").lines().count(),
            1,
            "an empty sweep still writes the header"
        );
    }

    #[test]
    fn spectra_dump_checks_the_interval() {
        let config = SpectraConfig {
            gammas: vec![1e-2, 1e-6],
            n: 4,
            points: 3,
            ..SpectraConfig::default()
        };
        let mut buffer = Vec::new();
        let blocks = spectra_dump(&config, &mut buffer).expect("dump");
        assert_eq!(blocks.len(), 2, "one block per weight");
        for block in &blocks {
            assert!(block.pass, "eigenvalues must sit inside the predicted interval");
            assert!(
                block.lo <= block.min && block.max <= block.hi + 1e-9,
                "verdict must reflect the extremes"
            );
            assert_eq!(block.hi, 1.0, "the averaged scheme pins the upper end at one");
        }
        let text = String::from_utf8(buffer).expect("utf8");
        assert_eq!(
            text.lines().next(),
            Some("gamma,theta,zeta,n,m,index,value"),
            "header row must be stable"
        );
        assert_eq!(
            text.lines().count(),
            1 + 2 * (2 * 4 * 3),
            "one row per eigenvalue of each block"
        );
        let empty = SpectraConfig {
            gammas: Vec::new(),
            ..SpectraConfig::default()
        };
        let mut buffer = Vec::new();
        let blocks = spectra_dump(&empty, &mut buffer).expect("dump");
        assert!(blocks.is_empty(), "no weights means no blocks");
        assert_eq!(
            String::from_utf8(buffer).expect("utf8").lines().count(),
            1,
            "an empty sweep still writes the header"
        );
    }
}
