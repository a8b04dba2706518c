use std::process::Command;

use ssnewton::geproblem::find_builtin;
use ssnewton::ssnsolver::{SolveReport, SolveStatus};
use ssnewton_cli::{exit_code, run, CheckReport, CompareReport};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ssnewton"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn report(stdout: &str) -> SolveReport {
    serde_json::from_str(stdout).unwrap()
}

#[test]
fn ncp_trajectory_from_cli() {
    let (code, out, _) = call(&["solve", "--problem", "ncp-paper", "--x0", "-0.1", "--tol", "1e-12", "--known-solution", "0"]);
    assert_eq!(code, 0);
    let rep = report(&out);
    assert_eq!(rep.status, SolveStatus::Converged);
    let xs: Vec<f64> = rep.iterations.iter().map(|r| r.x[0]).collect();
    assert_eq!(xs.len(), 3);
    assert_eq!(xs[0], -0.1);
    assert!((xs[1] - 0.0125).abs() <= 1e-15);
    assert_eq!(xs[2], 0.0);
    assert!(rep.iterations.iter().all(|r| r.error_norm.is_some()));
}

#[test]
fn josephy_failure_from_cli() {
    let (code, out, _) = call(&["solve", "--problem", "ncp-paper", "--method", "josephy", "--x0", "0.1"]);
    assert_eq!(code, 2);
    assert_eq!(report(&out).status, SolveStatus::UnsolvableSubproblem);
}

#[test]
fn box_vi_from_cli() {
    let (code, out, _) = call(&["solve", "--problem", "box-vi-2d", "--x0", "0.3,0.3"]);
    assert_eq!(code, 0);
    let rep = report(&out);
    assert_eq!(rep.status, SolveStatus::Converged);
    assert_eq!(rep.final_x, vec![0.0, 0.0]);
}

#[test]
fn csv_output_layout() {
    let (code, out, err) = call(&["solve", "--problem", "box-vi-2d", "--x0", "0.3,0.3", "--output", "csv"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "k,x1,x2,residual,step_norm,rate");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("1,0,0,0,"));
    assert!(err.contains("CONVERGED"));

    let (_, out, _) = call(&["solve", "--problem", "ncp-paper", "--x0", "-0.1", "--output", "csv", "--known-solution", "0"]);
    assert_eq!(out.lines().next().unwrap(), "k,x1,residual,step_norm,rate,error_norm,error_rate");
}

#[test]
fn report_round_trip_through_json() {
    let (_, out, _) = call(&["solve", "--problem", "disk-projection-2d", "--x0", "0.8,0.6", "--known-solution", "0.8944271909999159,0.4472135954999579"]);
    let rep = report(&out);
    let again = serde_json::to_string_pretty(&rep).unwrap() + "\n";
    assert_eq!(again, out);
    let b = find_builtin("disk-projection-2d").unwrap();
    let direct = ssnewton::ssnsolver::solve(&b.problem, &[0.8, 0.6], 1e-10, 50).unwrap();
    assert_eq!(direct.iterations.len(), rep.iterations.len());
    for (a, r) in direct.iterations.iter().zip(&rep.iterations) {
        assert_eq!(a.x, r.x);
        assert_eq!(a.residual, r.residual);
    }
}

#[test]
fn compare_columns_match_standalone_runs() {
    let base = ["solve", "--problem", "disk-projection-2d", "--x0", "0.8,0.6", "--tol", "1e-12"];
    let mut cmp_args = base.to_vec();
    cmp_args.extend(["--method", "compare"]);
    let (code, out, _) = call(&cmp_args);
    assert_eq!(code, 0);
    let cmp: CompareReport = serde_json::from_str(&out).unwrap();
    for (method, expected) in [("ssstar", &cmp.ssstar), ("josephy", &cmp.josephy)] {
        let mut args = base.to_vec();
        args.extend(["--method", method]);
        let (_, single, _) = call(&args);
        assert_eq!(&report(&single), expected, "{method}");
    }
    // The CSV table carries the same numbers.
    let mut csv_args = cmp_args.clone();
    csv_args.extend(["--output", "csv"]);
    let (_, csv, _) = call(&csv_args);
    let row1: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row1[1].parse::<f64>().unwrap(), cmp.ssstar.iterations[1].x[0]);
    assert_eq!(row1[6].parse::<f64>().unwrap(), cmp.josephy.iterations[1].x[0]);
}

#[test]
fn compare_exit_code_needs_both() {
    let (code, out, _) = call(&["solve", "--problem", "ncp-paper", "--method", "compare", "--x0", "0.1"]);
    assert_eq!(code, 2);
    let cmp: CompareReport = serde_json::from_str(&out).unwrap();
    assert_eq!(cmp.ssstar.status, SolveStatus::Converged);
    assert_eq!(cmp.josephy.status, SolveStatus::UnsolvableSubproblem);
}

#[test]
fn exit_code_contract() {
    let all = [
        SolveStatus::Converged,
        SolveStatus::MaxIter,
        SolveStatus::QpInfeasible,
        SolveStatus::SingularNewtonSystem,
        SolveStatus::UnsolvableSubproblem,
        SolveStatus::NumericalFailure,
    ];
    for s in all {
        assert_eq!(exit_code(s), if s == SolveStatus::Converged { 0 } else { 2 });
    }
    let (code, out, _) = call(&["solve", "--problem", "ncp-paper", "--x0", "-0.1", "--max-iter", "1"]);
    assert_eq!(code, 2);
    assert_eq!(report(&out).status, SolveStatus::MaxIter);
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["solve", "--problem", "no-such-problem", "--x0", "1"],
        vec!["solve", "--problem", "ncp-paper", "--x0", "1,2"],
        vec!["solve", "--problem", "ncp-paper", "--x0", "abc"],
        vec!["solve", "--problem", "ncp-paper", "--x0", "1", "--tol", "0"],
        vec!["solve", "--problem", "ncp-paper"],
        vec!["frobnicate"],
    ] {
        let (code, _, err) = call(&args);
        assert_eq!(code, 1, "{args:?}");
        assert!(!err.is_empty());
    }
}

#[test]
fn check_ncp_solution_point() {
    let (code, out, _) = call(&["check", "--problem", "ncp-paper", "--x", "0", "--lambda", "0", "--output", "json"]);
    assert_eq!(code, 0);
    let r: CheckReport = serde_json::from_str(&out).unwrap();
    assert_eq!(r.nondegeneracy_modulus, Some(1.0));
    assert_eq!(r.faces.len(), 2);
    assert!(r.faces.iter().all(|f| f.regular));
    assert_eq!(r.max_defect, 0.0);

    let (code, text, _) = call(&["check", "--problem", "ncp-paper", "--x", "0", "--lambda", "0"]);
    assert_eq!(code, 0);
    assert!(text.contains("J = {}: PASS"));
    assert!(text.contains("J = {1}: PASS"));
}

#[test]
fn check_infeasible_point() {
    let (code, _, err) = call(&["check", "--problem", "ncp-paper", "--x", "0.5", "--lambda", "0"]);
    assert_eq!(code, 1);
    assert!(err.contains("not in D"));
}

const DEGENERATE: &str = r#"{
  "name": "zero-row", "n": 1, "s": 1,
  "M": [[1.0]], "q": [0.0], "G": [[0.0]], "h": [0.0],
  "lower": ["-inf"], "upper": [0.0]
}"#;

#[test]
fn check_degenerate_file_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero-row.json");
    std::fs::write(&path, DEGENERATE).unwrap();
    let p = path.to_str().unwrap();
    let (code, out, _) = call(&["check", "--problem", p, "--x", "0", "--lambda", "0", "--output", "json"]);
    assert_eq!(code, 2);
    let r: CheckReport = serde_json::from_str(&out).unwrap();
    assert_eq!(r.nondegeneracy_modulus, Some(0.0));
    assert!(!r.passed);
}

#[test]
fn malformed_problem_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"name": "bad", "n": 1}"#).unwrap();
    let (code, _, err) = call(&["solve", "--problem", path.to_str().unwrap(), "--x0", "0"]);
    assert_eq!(code, 1);
    assert!(err.contains("error"));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let (code, out, _) = call(&["solve", "--problem", "box-vi-2d", "--x0", "0.3,0.3", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let rep: SolveReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rep.status, SolveStatus::Converged);
}

#[test]
fn list_is_sorted_and_stable() {
    let (code, a, _) = call(&["list"]);
    let (_, b, _) = call(&["list"]);
    assert_eq!(code, 0);
    assert_eq!(a, b);
    let names: Vec<&str> = a.lines().collect();
    assert!(names.contains(&"ncp-paper") && names.contains(&"box-vi-2d"));
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ssnewton");
    let ok = Command::new(bin).args(["solve", "--problem", "ncp-paper", "--x0", "-0.1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let fail = Command::new(bin).args(["solve", "--problem", "ncp-paper", "--method", "josephy", "--x0", "0.1"]).output().unwrap();
    assert_eq!(fail.status.code(), Some(2));
    let usage = Command::new(bin).args(["solve"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
}
