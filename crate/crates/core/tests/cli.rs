use std::path::PathBuf;
use std::process::{Command, Output};

use divprem::asymptotics::SweepReport;
use divprem::cli::{InsuranceReport, PremiumReport};
use divprem::oracle::OracleReport;
use divprem::valuation::ValuationReport;

fn data(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("examples/data");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn divprem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divprem")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn coin_premium() {
    let text = stdout(&divprem(&["premium", "--tree", &data("coin.json"), "--rv", "Z"]));
    let report: PremiumReport = serde_json::from_str(&text).unwrap();
    assert!((report.premium - 0.620115).abs() < 5e-7);
    assert_eq!(report.premium, 0.620114506958);
}

#[test]
fn single_contract_premium() {
    let text = stdout(&divprem(&["insure", "--portfolio", &data("single_contract.json")]));
    let report: InsuranceReport = serde_json::from_str(&text).unwrap();
    assert!((report.premium - (0.1 * std::f64::consts::E + 0.9).ln()).abs() < 1e-11);
    assert!(report.tree_residual.unwrap() < 1e-10);
}

#[test]
fn missing_rv_is_named() {
    let out = divprem(&["premium", "--tree", &data("coin.json"), "--rv", "claims"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("claims"));
}

#[test]
fn parse_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"horizon\": 1,\n \"nodes\": [,\n]}").unwrap();
    let out = divprem(&["premium", "--tree", path.to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.json:2:"), "{err}");
}

#[test]
fn reruns_are_byte_identical() {
    for args in [
        vec!["allocate", "--tree", &data("binomial2.json"), "--schedule", &data("two_agents.json")],
        vec!["sweep-m", "--grid", "1,2,4"],
        vec!["oracle-check", "--seed", "5", "--grid", "0.01", "--trials", "3"],
    ] {
        let a = divprem(&args);
        let b = divprem(&args);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn reports_round_trip() {
    let text = stdout(&divprem(&["allocate", "--tree", &data("binomial2.json"), "--schedule", &data("two_agents.json")]));
    let report: ValuationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_value(&report).unwrap(), serde_json::from_str::<serde_json::Value>(&text).unwrap());
    assert!(report.diagnostics.martingale_residual < 1e-12);

    let text = stdout(&divprem(&["sweep-n", "--tree", &data("binomial2.json"), "--grid", "1,2,4,8"]));
    let sweep: SweepReport = serde_json::from_str(&text).unwrap();
    assert!(sweep.is_strictly_decreasing());
    assert_eq!(sweep.ratios.len(), 4);

    let text = stdout(&divprem(&["oracle-check", "--grid", "0.01", "--trials", "2"]));
    let oracle: OracleReport = serde_json::from_str(&text).unwrap();
    assert!(oracle.passed);
}

#[test]
fn inline_schedule_and_convolution_table() {
    let text = stdout(&divprem(&[
        "convolve",
        "--utilities",
        r#"[{"kind": "exp", "alpha": 1}, {"kind": "exp", "alpha": 3}]"#,
        "--grid",
        "-1:1:0.5",
        "--format",
        "csv",
    ]));
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("x,"));
    assert_eq!(lines.count(), 5);

    let text = stdout(&divprem(&["premium", "--tree", &data("coin.json"), "--schedule", r#"{"alpha": 2}"#]));
    let report: PremiumReport = serde_json::from_str(&text).unwrap();
    assert!(report.premium > 0.620115);
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let args = ["premium", "--tree", &data("binomial2.json"), "--format", "csv"];
    let direct = stdout(&divprem(&args));
    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    assert!(divprem(&with_out).status.success());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), direct);
}

#[test]
fn strict_flags_breaches() {
    let base = ["allocate", "--tree", &data("binomial2.json"), "--schedule", &data("two_agents.json")];
    let tight = [&base[..], &["--martingale-tol", "1e-300"]].concat();
    let loose = divprem(&tight);
    assert_eq!(loose.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&loose.stderr).contains("diagnostic breach"));
    let strict = divprem(&[&tight[..], &["--strict"]].concat());
    assert_eq!(strict.status.code(), Some(2));
    assert_eq!(strict.stdout, loose.stdout);

    let ok = divprem(&[&base[..], &["--strict"]].concat());
    assert_eq!(ok.status.code(), Some(0));
    let bad = divprem(&[&base[..], &["--recursion-tol", "-1"]].concat());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn thread_cap_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_divprem"))
            .args(["sweep-m", "--grid", "1,2,4,8"])
            .env("DIVPREM_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}
