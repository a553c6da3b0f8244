use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shadowlab"))
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn linear_shadow_writes_ledger_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["linear-shadow", "--config", &scenario("linear_identity.json"), "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["ledger.jsonl", "timing.jsonl", "report.csv", "report.json", "report.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("scenario_id,t_or_r,value,error,margin,pass\n"));
    assert!(csv.contains("linear-identity,0.0000000000000000e0,9.8696044010893"));
    // appending a second run keeps the first record
    bin()
        .args(["linear-shadow", "--config", &scenario("linear_identity.json"), "--format", "csv", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    let ledger = std::fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
    let lines: Vec<&str> = ledger.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], lines[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // missing config and mismatched subcommand are config errors
    let st = bin().arg("capacity").arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin()
        .args(["capacity", "--config", &scenario("linear_identity.json"), "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin()
        .args(["linear-shadow", "--config", &scenario("linear_identity.json"), "--tol=-1", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    // an unreachable capacity target is an inequality violation, record retained
    let bad = dir.path().join("ball.json");
    let text = std::fs::read_to_string(scenario("capacity_ball.json")).unwrap();
    std::fs::write(&bad, text.replace("\"radius\": 1.3", "\"radius\": 1.2")).unwrap();
    let out = dir.path().join("violation");
    let st = bin().args(["capacity", "--config"]).arg(&bad).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));
    assert!(std::fs::read_to_string(out.join("ledger.jsonl")).unwrap().contains("\"pass\":false"));
    // a degenerate ellipsoid is rejected
    let deg = dir.path().join("deg.json");
    std::fs::write(&deg, text.replace("\"kind\": \"ball\",\n      \"radius\": 1.3", "\"kind\": \"ellipsoid\", \"semi_axes\": [1.0, 0.0]")).unwrap();
    let st = bin().args(["capacity", "--config"]).arg(&deg).arg("--out").arg(dir.path()).status().unwrap();
    assert!(matches!(st.code(), Some(2) | Some(3)), "{st:?}");
}

#[test]
fn verify_ledgers_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let out = bin()
            .args(["verify", "--criteria", "1,2,6", "--seed", "7", "--workers", workers, "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3, "{stdout}");
    }
    let la = std::fs::read(a.path().join("ledger.jsonl")).unwrap();
    let lb = std::fs::read(b.path().join("ledger.jsonl")).unwrap();
    assert!(!la.is_empty());
    assert_eq!(la, lb);
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .env("SHADOWLAB_WORKERS", "2")
        .args(["capacity", "--config", &scenario("capacity_ellipsoid.json"), "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let st = bin()
        .env("SHADOWLAB_WORKERS", "many")
        .args(["capacity", "--config", &scenario("capacity_ellipsoid.json"), "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}
