//! End-to-end tests of the installed binary: flag parsing, config-file
//! layering, CSV output, report formatting, and exit codes.

use std::io::Write;
use std::process::{Command, Output};

const CSV_HEADER: &str = "example,gamma,h_exp,theta,zeta,solver,dof,iters,seconds,e_h,converged";

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pintopt-cli"))
}

fn run_with(args: &[&str]) -> Output {
    binary()
        .args(args)
        .output()
        .expect("the benchmark binary should launch")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout should be UTF-8")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr should be UTF-8")
}

#[test]
fn bench_writes_csv_rows_to_stdout() {
    let output = run_with(&[
        "bench",
        "--example",
        "ex1",
        "--gamma",
        "1e-2",
        "--h-exp",
        "2",
        "--solver",
        "gmres-ps",
    ]);
    assert!(
        output.status.success(),
        "tiny bench run should succeed, stderr: {}",
        stderr_of(&output)
    );
    let stdout = stdout_of(&output);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2, "one header and one row, got {stdout:?}");
    assert_eq!(lines[0], CSV_HEADER, "header names every CSV column");
    assert!(
        lines[1].starts_with("ex1,"),
        "row should open with the example name, got {:?}",
        lines[1]
    );
    assert!(
        lines[1].ends_with(",true"),
        "the tiny cell should converge, got {:?}",
        lines[1]
    );
}

#[test]
fn bench_writes_csv_to_the_requested_file() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("rows.csv");
    let output = run_with(&[
        "bench",
        "--example",
        "ex1",
        "--gamma",
        "1e-2",
        "--h-exp",
        "2",
        "--solver",
        "gmres-ps",
        "--out",
        path.to_str().expect("UTF-8 temp path"),
    ]);
    assert!(
        output.status.success(),
        "bench with --out should succeed, stderr: {}",
        stderr_of(&output)
    );
    assert!(
        stdout_of(&output).is_empty(),
        "rows go to the file, not stdout"
    );
    assert!(
        stderr_of(&output).contains("wrote 1 rows"),
        "stderr should report the row count, got {}",
        stderr_of(&output)
    );
    let written = std::fs::read_to_string(&path).expect("the CSV file should exist");
    assert!(
        written.starts_with(CSV_HEADER),
        "file should open with the header, got {written:?}"
    );
    assert_eq!(written.lines().count(), 2, "header plus one row in the file");
}

#[test]
fn solve_prints_a_single_cell_report() {
    let output = run_with(&[
        "solve",
        "--example",
        "ex1",
        "--gamma",
        "1e-2",
        "--h-exp",
        "2",
        "--solver",
        "gmres-ps",
    ]);
    assert!(
        output.status.success(),
        "tiny solve should succeed, stderr: {}",
        stderr_of(&output)
    );
    let stdout = stdout_of(&output);
    assert!(
        stdout.contains("example ex1"),
        "report should name the example, got {stdout}"
    );
    assert!(
        stdout.contains("converged true"),
        "report should state convergence, got {stdout}"
    );
    assert!(
        stdout.contains("e_h "),
        "report should give a discretization error, got {stdout}"
    );
    assert!(
        stdout.contains("relative residuals:"),
        "report should list the residual history, got {stdout}"
    );
}

#[test]
fn solve_rejects_the_absolute_value_solver_outside_example_one() {
    let output = run_with(&[
        "solve",
        "--example",
        "ex3",
        "--gamma",
        "1e-2",
        "--h-exp",
        "2",
        "--solver",
        "minres-abs-ps",
    ]);
    assert_eq!(
        output.status.code(),
        Some(1),
        "a configuration error must exit with code 1"
    );
    assert!(
        stderr_of(&output).contains("only ex1 qualifies"),
        "stderr should explain the restriction, got {}",
        stderr_of(&output)
    );
}

#[test]
fn spectra_prints_interval_verdicts_on_stderr_and_csv_on_stdout() {
    let output = run_with(&["spectra", "--n", "8", "--points", "7", "--gamma", "1e-2,1e-10"]);
    assert!(
        output.status.success(),
        "spectra at a contained setting should succeed, stderr: {}",
        stderr_of(&output)
    );
    let stdout = stdout_of(&output);
    assert!(
        stdout.starts_with("gamma,theta,zeta,n,m,index,value"),
        "stdout should carry the eigenvalue CSV, got {stdout:?}"
    );
    let stderr = stderr_of(&output);
    assert_eq!(
        stderr.matches("PASS").count(),
        2,
        "one verdict per weight, got {stderr:?}"
    );
    assert!(
        !stderr.contains("FAIL"),
        "both blocks should sit inside the predicted interval, got {stderr:?}"
    );
}

#[test]
fn config_file_sets_the_run_and_flags_override_it() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("run.conf");
    let mut file = std::fs::File::create(&path).expect("config file");
    writeln!(
        file,
        "# tiny smoke cell\nexample = ex1\ngamma = 1e-2\nh_exp = 2\nsolver = gmres-ps"
    )
    .expect("config contents");
    drop(file);
    let output = run_with(&[
        "bench",
        "--config",
        path.to_str().expect("UTF-8 temp path"),
        "--gamma",
        "1e-4",
    ]);
    assert!(
        output.status.success(),
        "config-driven bench should succeed, stderr: {}",
        stderr_of(&output)
    );
    let stdout = stdout_of(&output);
    assert!(
        stdout.contains("ex1,1.0000000000000000e-4,2,"),
        "the flag weight should override the file weight on the file's mesh, got {stdout}"
    );
}

#[test]
fn config_file_with_an_unknown_key_exits_with_code_one() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "mesh = 4\n").expect("config contents");
    let output = run_with(&["bench", "--config", path.to_str().expect("UTF-8 temp path")]);
    assert_eq!(
        output.status.code(),
        Some(1),
        "an unknown config key is a configuration error"
    );
    assert!(
        stderr_of(&output).contains("unknown key"),
        "stderr should point at the bad key, got {}",
        stderr_of(&output)
    );
}
