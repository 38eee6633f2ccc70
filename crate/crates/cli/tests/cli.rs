use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chiplet-dse"))
        .args(args)
        .args(["--workload", "WL-6", "--basis-samples", "500", "--out-dir"])
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn evaluate_prints_a_report_and_flags_infeasible_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run(tmp.path(), &["evaluate", "2|64-7-256;64-7-256|0-WS-0|0|3D-HB-HBM3|UC3|ring"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(v["cost"].as_f64().unwrap() > 0.0, "{v}");

    let bad = run(tmp.path(), &["evaluate", "2|64-7-256;64-7-256|0-WS-0|0|2.5D-RDL-HBM3|UC3|ring"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("uc3"));

    let garbled = run(tmp.path(), &["evaluate", "2|64-7"]);
    assert_eq!(garbled.status.code(), Some(2));
}

#[test]
fn oversized_bruteforce_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["bruteforce", "--cap", "1000", "--counts", "1,2"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!tmp.path().join("ORACLE.json").exists());
}

#[test]
fn pareto_over_summary_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("runs.csv");
    fs::write(
        &csv,
        "method,settings,best_cost,runtime_s,evaluations,best_config\n\
         sa,a,2.0,1.0,10,x\n\
         sa,b,1.5,3.0,10,y\n\
         agent,c,1.8,4.0,10,z\n\
         agent,d,1.0,9.0,10,w\n",
    )
    .unwrap();
    let out = run(tmp.path(), &["pareto", csv.to_str().unwrap(), "--svg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let front = fs::read_to_string(tmp.path().join("PARETO.csv")).unwrap();
    let settings: Vec<&str> = front.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(settings, ["a", "b", "d"]);
    assert!(fs::read_to_string(tmp.path().join("PARETO.svg")).unwrap().starts_with("<svg"));
}
