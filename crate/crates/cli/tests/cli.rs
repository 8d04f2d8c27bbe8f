use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curvehedge::config::{emit, parse_config, ExperimentConfig};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> ExperimentConfig {
    parse_config(&std::fs::read_to_string(config_path(name)).unwrap()).unwrap()
}

fn curvehedge(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvehedge"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

/// Data rows of a CSV written by the binary, header excluded.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["bond_call_atm.json", "caplet.json", "swaption.json", "zero_vol.json"] {
        let once = emit(&load(name));
        assert_eq!(once, emit(&parse_config(&once).unwrap()), "{name}");
    }
}

#[test]
fn zero_vol_verify_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("zero_vol.json");
    cfg.run.residual_paths = 20;
    let path = dir.path().join("c.json");
    std::fs::write(&path, emit(&cfg)).unwrap();
    let out = curvehedge(&["verify", "--paths", "200", "--inner-paths", "1000", "--steps", "10,20"], &path, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for r in rows(&dir.path().join("verify.csv")) {
        assert_eq!(r[3], "true", "{r:?}");
        if r[0] != "gradient" {
            assert_eq!(r[1], "0", "{r:?}");
        }
    }
}

#[test]
fn atm_bond_call_black_and_monte_carlo_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvehedge(
        &["price", "--paths", "20000", "--inner-paths", "2000", "--steps", "20"],
        &config_path("bond_call_atm.json"),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("price.csv"));
    let get = |method: &str| -> (f64, f64) {
        let r = table.iter().find(|r| r[0] == method && r[1] == "forward").unwrap();
        (r[2].parse().unwrap(), r[3].parse().unwrap())
    };
    let (black, zero) = get("black");
    assert_eq!(zero, 0.0);
    for method in ["mc-exact", "mc-euler", "nested"] {
        let (v, se) = get(method);
        assert!((v - black).abs() < 3.0 * se, "{method}: {v} vs {black} (se {se})");
    }
}

#[test]
fn swaption_hedge_holds_exactly_the_tenor_dates() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvehedge(&["hedge", "--inner-paths", "2000", "--steps", "20"], &config_path("swaption.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("hedge.csv"));
    for date in ["0", "0.5"] {
        let maturities: Vec<&str> = table.iter().filter(|r| r[0] == date).map(|r| r[1].as_str()).collect();
        assert_eq!(maturities, ["1", "1.5", "2", "2.5", "3"], "date {date}");
    }
    assert_eq!(rows(&dir.path().join("hedge_summary.csv")).len(), 2);
}

#[test]
fn invalid_config_exits_2_with_all_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"market": {"curve": [[1.0, 0.97], [2.0, -1.0]]}, "vol": {"family": "vasicek", "sigma": [0.01]},
            "instrument": {"kind": "bond-call", "exercise": 1.0, "maturity": 2.0}}"#,
    )
    .unwrap();
    let out = curvehedge(&["price"], &path, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["price -1", "mean_reversion", "strike"] {
        assert!(err.contains(needle), "missing {needle:?} in {err}");
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvehedge(
        &["price", "--seed", "9", "--paths", "100", "--inner-paths", "1000", "--steps", "5,10"],
        &config_path("caplet.json"),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("price.csv")).unwrap();
    for line in ["# seed: 9", "# steps: 10", "# paths: 100", "# inner_paths: 1000"] {
        assert!(text.contains(line), "{line:?} missing in {text}");
    }
    assert!(!text.contains('\r'));
}

#[test]
fn zero_vol_backtest_replicates_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvehedge(
        &["backtest", "--paths", "10", "--inner-paths", "1000", "--steps", "5,10"],
        &config_path("zero_vol.json"),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("backtest.csv"));
    assert_eq!(table.len(), 2);
    for r in &table {
        // mean_error, sd_error, max_abs_error, max_gap
        for col in [5, 6, 8, 9] {
            assert_eq!(r[col].parse::<f64>().unwrap(), 0.0, "{r:?}");
        }
    }
    assert_eq!(rows(&dir.path().join("backtest_gaps.csv")).len(), 15);
}
