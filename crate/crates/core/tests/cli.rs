use std::path::Path;
use std::process::{Command, Output};

fn termcov(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_termcov"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write_yields(path: &Path) {
    let mut s = String::from("date,maturity_years,yield\n");
    let start = chrono::NaiveDate::from_ymd_opt(2019, 1, 7).unwrap();
    for i in 0..104i64 {
        let date = start + chrono::Duration::days(7 * i);
        let level = 0.03 + 0.002 * ((i as f64) * 0.7).sin() + if i >= 70 { 0.02 } else { 0.0 };
        for j in 1..=10 {
            let x = j as f64 / 20.0;
            let slope = 0.01 * ((i as f64) * 0.31).cos();
            let y = level + slope * (1.0 - (-3.0 * x).exp()) + 0.001 * x * ((i * j) as f64).sin();
            s.push_str(&format!("{date},{x},{y}\n"));
        }
    }
    std::fs::write(path, s).unwrap();
}

const CONFIG: &str = r#"{
  "seed": 5,
  "data": {"yields_csv": "yields.csv", "steps_per_year": 20, "max_maturity": 0.5},
  "mc": {"replications": 2, "steps_per_year": 20, "max_maturity": 1.0, "only": ["M1-S1", "M3-S1"]},
  "rmae": {"lags": [0, 2], "max_factors": 4, "validation_per_period": 5},
  "simulate": {"a": 50.0, "grid": {"delta_n": 0.05, "n_steps": 20, "max_maturity": 1.0, "horizon": 1.0}, "lambda1": 1.0, "rho1": 0.0116}
}"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_yields(&dir.path().join("yields.csv"));
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    dir
}

#[test]
fn every_subcommand_succeeds() {
    let dir = setup();
    for (cmd, expected) in [
        ("simulate", vec!["forwards.csv", "log_prices.csv", "jumps.csv", "kernels/integrated_volatility.csv"]),
        ("estimate", vec!["kernels/q_hat.csv", "kernels/q_hat_truncated.json", "kernels/q_hat_jumps_triplets.csv"]),
        ("rule", vec!["rule.json"]),
        ("mc", vec!["mc_summary.csv", "mc_summary.json"]),
        ("empirical", vec!["year_report.csv", "kernels/long_run.csv"]),
        ("rmae", vec!["rmae.csv"]),
        ("report", vec!["mc_summary.csv", "year_report.csv", "rmae.csv"]),
    ] {
        let out_dir = format!("out_{cmd}");
        let o = termcov(&[cmd, "--config", "cfg.json", "--out", &out_dir, "--threads", "1"], dir.path());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        for f in expected.iter().chain(&["manifest.json"]) {
            assert!(dir.path().join(&out_dir).join(f).exists(), "{cmd}: {f}");
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out_mc/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "mc");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let years = std::fs::read_to_string(dir.path().join("out_empirical/year_report.csv")).unwrap();
    assert_eq!(years.lines().count(), 3);
}

#[test]
fn reruns_are_byte_identical_apart_from_the_manifest() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = termcov(&["report", "--config", "cfg.json", "--out", out, "--seed", "9"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["mc_summary.csv", "mc_summary.json", "year_report.csv", "rmae.csv", "kernels/long_run.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.json"), r#"{"rule": {"w_exponent": 0.8}}"#).unwrap();
    assert_eq!(termcov(&["mc", "--config", "bad.json"], dir.path()).status.code(), Some(2));
    assert_eq!(termcov(&["mc", "--config", "missing.json"], dir.path()).status.code(), Some(2));
    // Estimation needs a data section.
    assert_eq!(termcov(&["estimate"], dir.path()).status.code(), Some(2));

    std::fs::write(dir.path().join("broken.csv"), "date,maturity_years,yield\n2020-01-01,abc,0.1\n").unwrap();
    let cfg = r#"{"data": {"yields_csv": "broken.csv", "steps_per_year": 20, "max_maturity": 0.5}}"#;
    std::fs::write(dir.path().join("broken.json"), cfg).unwrap();
    let o = termcov(&["estimate", "--config", "broken.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    assert_eq!(termcov(&["frobnicate"], dir.path()).status.code(), Some(2));
}
