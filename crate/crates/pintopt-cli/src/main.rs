//! Command-line driver: `solve` runs one benchmark cell and prints its
//! report, `bench` sweeps a table into CSV, `spectra` dumps eigenvalue
//! blocks with interval verdicts. Exit code 0 on completion, 1 on
//! configuration errors, 2 on numerical failures.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pintopt_cli::{
    example_name, parse_config_text, parse_example, resolve_config, run, solve_cell, spectra_dump,
    write_rows_csv, CliError, ConfigOverrides, RunConfig, SolverKind, SpectraConfig,
};

#[derive(Parser)]
#[command(
    name = "pintopt-cli",
    about = "Benchmarks for block omega-circulant preconditioned all-at-once control solvers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single benchmark cell and print its report.
    Solve(SolveArgs),
    /// Run a table sweep and write the rows as CSV.
    Bench(BenchArgs),
    /// Dump eigenvalue blocks of the surrogate-preconditioned absolute value.
    Spectra(SpectraArgs),
}

#[derive(Args)]
struct SweepFlags {
    /// Config file with flat `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Example problem: ex1, ex2, or ex3.
    #[arg(long)]
    example: Option<String>,
    /// Regularization weights, comma-separated.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Mesh exponents e (spacing 2^-e), comma-separated.
    #[arg(long = "h-exp", value_delimiter = ',')]
    h_exp: Option<Vec<u32>>,
    /// Time-stepping weight in [1/2, 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Corner-twist angle of the time transform.
    #[arg(long)]
    zeta: Option<f64>,
    /// Solvers: gmres-ps, minres-abs-ps, minres-pms; comma-separated.
    #[arg(long, value_delimiter = ',')]
    solver: Option<Vec<String>>,
    /// Relative-residual stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    maxit: Option<usize>,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SweepFlags {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read config file {}: {e}", path.display()))
                })?;
                Some(parse_config_text(&text)?)
            }
            None => None,
        };
        let mut flags = ConfigOverrides {
            h_exponents: self.h_exp.clone(),
            gammas: self.gamma.clone(),
            theta: self.theta,
            zeta: self.zeta,
            tol: self.tol,
            maxit: self.maxit,
            out: self.out.clone(),
            ..ConfigOverrides::default()
        };
        if let Some(name) = &self.example {
            flags.example = Some(parse_example(name)?);
        }
        if let Some(names) = &self.solver {
            let mut solvers = Vec::new();
            for name in names {
                solvers.push(SolverKind::parse(name)?);
            }
            flags.solvers = Some(solvers);
        }
        Ok(resolve_config(file.as_ref(), &flags))
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    sweep: SweepFlags,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    sweep: SweepFlags,
}

#[derive(Args)]
struct SpectraArgs {
    /// Regularization weights, one block each, comma-separated.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Time-stepping weight in [1/2, 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Corner-twist angle of the time transform.
    #[arg(long)]
    zeta: Option<f64>,
    /// Time steps.
    #[arg(long)]
    n: Option<usize>,
    /// Interior spatial points of the one-dimensional mesh.
    #[arg(long)]
    points: Option<usize>,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn single<T: Copy>(values: &[T], what: &str) -> Result<T, CliError> {
    match values {
        [one] => Ok(*one),
        _ => Err(CliError::Config(format!(
            "solve runs one cell; give exactly one {what}, got {}",
            values.len()
        ))),
    }
}

fn run_solve(args: &SolveArgs) -> Result<(), CliError> {
    let config = args.sweep.resolve()?;
    config.validate()?;
    let gamma = single(&config.gammas, "regularization weight")?;
    let h_exp = single(&config.h_exponents, "mesh exponent")?;
    let solver = single(&config.solvers, "solver")?;
    let (row, report) = solve_cell(
        config.example,
        gamma,
        h_exp,
        config.theta,
        config.zeta,
        solver,
        config.tol,
        config.maxit,
    )?;
    println!(
        "example {}  gamma {:e}  h 2^-{}  theta {}  zeta {}",
        example_name(row.example),
        row.gamma,
        row.h_exp,
        row.theta,
        row.zeta
    );
    println!("solver {}  dof {}", row.solver, row.dof);
    println!(
        "iterations {}  converged {}  seconds {:.3}",
        row.iters, row.converged, row.seconds
    );
    println!(
        "e_h {:.4e}  final true residual {:.4e}",
        row.e_h, report.final_true_residual
    );
    let history: Vec<String> = report
        .relative_residuals
        .iter()
        .map(|r| format!("{r:.3e}"))
        .collect();
    println!("relative residuals: {}", history.join(" "));
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<(), CliError> {
    let config = args.sweep.resolve()?;
    let rows = run(&config)?;
    match &config.out {
        Some(path) => {
            let mut sink = fs::File::create(path).map_err(|e| {
                CliError::Config(format!("cannot create {}: {e}", path.display()))
            })?;
            write_rows_csv(&mut sink, &rows)
                .map_err(|e| CliError::Numerical(format!("CSV write failed: {e}")))?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut sink = stdout.lock();
            write_rows_csv(&mut sink, &rows)
                .map_err(|e| CliError::Numerical(format!("CSV write failed: {e}")))?;
            sink.flush()
                .map_err(|e| CliError::Numerical(format!("CSV write failed: {e}")))?;
        }
    }
    Ok(())
}

fn run_spectra(args: &SpectraArgs) -> Result<(), CliError> {
    let mut config = SpectraConfig::default();
    if let Some(gammas) = &args.gamma {
        config.gammas = gammas.clone();
    }
    if let Some(theta) = args.theta {
        config.theta = theta;
    }
    if let Some(zeta) = args.zeta {
        config.zeta = zeta;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(points) = args.points {
        config.points = points;
    }
    config.out = args.out.clone();
    let blocks = match &config.out {
        Some(path) => {
            let mut sink = fs::File::create(path).map_err(|e| {
                CliError::Config(format!("cannot create {}: {e}", path.display()))
            })?;
            spectra_dump(&config, &mut sink)?
        }
        None => {
            let stdout = std::io::stdout();
            let mut sink = stdout.lock();
            let blocks = spectra_dump(&config, &mut sink)?;
            sink.flush()
                .map_err(|e| CliError::Numerical(format!("CSV write failed: {e}")))?;
            blocks
        }
    };
    for block in &blocks {
        eprintln!(
            "gamma {:e}: {} — eigenvalues in [{:.12}, {:.12}], predicted [{:.12}, {:.12}]",
            block.gamma,
            if block.pass { "PASS" } else { "FAIL" },
            block.min,
            block.max,
            block.lo,
            block.hi
        );
    }
    if blocks.iter().all(|b| b.pass) {
        Ok(())
    } else {
        Err(CliError::Numerical(
            "eigenvalues escaped the predicted interval".into(),
        ))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Bench(args) => run_bench(args),
        Command::Spectra(args) => run_spectra(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
