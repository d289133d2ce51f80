use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcfusion::cli::format::COLUMNS;

const BASE: &str = r#"{
    "experiment": "roc", "seed": 3, "trials": 20000, "max_points": 8,
    "sensing": {"kind": "soft", "levels": 2},
    "channel": {"gain": 15, "noise": 4, "slots": 1, "sensors": 2},
    "detectors": ["opt_dtm", "mrc", "two_stage", "opt_stm"]
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcfusion"))
        .arg("run")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

#[test]
fn golden_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "base.json", BASE);
    let out = run(&cfg, dir.path(), &["--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("base.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "experiment,detector,scheme,levels,gain,noise,slots,sensors,threshold,threshold_global,\
         pfa,pd,pm,method,ci_pfa,ci_pm,trials,seed,s,exponent0,exponent1,status"
    );
    let rows = read_csv(&dir.path().join("base.csv"));
    assert_eq!(rows[0], COLUMNS);
    // first analytic point is the always-decide threshold
    assert_eq!(
        rows[1],
        [
            "base", "opt_dtm", "DTM", "2", "15", "4", "1", "2", "-inf", "NA", "1", "1", "0", "analytic", "NA", "NA",
            "NA", "NA", "NA", "NA", "NA", "ok"
        ]
    );
    for r in &rows[1..] {
        assert_eq!(r.len(), COLUMNS.len());
        for (i, f) in r.iter().enumerate().skip(3) {
            if i != 13 && i != 21 {
                assert!(!f.contains('e') || f.ends_with("inf") || f == "<1e-300", "{r:?}");
            }
        }
        if r[13] == "montecarlo" {
            assert_eq!((r[16].as_str(), r[17].as_str()), ("20000", "3"));
        }
    }
    for kind in ["opt_dtm", "mrc", "two_stage", "opt_stm"] {
        assert!(rows.iter().any(|r| r[1] == kind && r[13] == "montecarlo"));
    }
    assert!(rows.iter().any(|r| r[1] == "opt_stm" && r[2] == "STM"));
    assert!(rows.iter().any(|r| r[1] == "two_stage" && r[9] != "NA"));
}

#[test]
fn manifest_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "base.json", BASE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&cfg, &a, &["--quiet"]).status.success());
    let manifest = a.join("base.manifest.json");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["tool"], "mcfusion");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["channel"]["noise"], 4.0);
    assert_eq!(m["config"]["id"], "base");
    assert!(m["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
    assert!(run(&manifest, &b, &["--quiet"]).status.success());
    assert_eq!(std::fs::read(a.join("base.csv")).unwrap(), std::fs::read(b.join("base.csv")).unwrap());
}

#[test]
fn thread_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "base.json", BASE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&cfg, &a, &["--threads", "2"]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_mcfusion"))
        .env("MCFUSION_THREADS", "3")
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&b)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("base.csv"));
    assert_eq!(std::fs::read(a.join("base.csv")).unwrap(), std::fs::read(b.join("base.csv")).unwrap());
}

#[test]
fn empty_detector_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &BASE.replace(r#"["opt_dtm", "mrc", "two_stage", "opt_stm"]"#, "[]"));
    let out = run(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detector list is empty"));
    assert!(!dir.path().join("bad.csv").exists());
}

#[test]
fn malformed_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax", "{ not json"),
        ("unknown_key", &*BASE.replace("\"seed\": 3", "\"seed\": 3, \"colour\": 1")),
        ("no_seed", &*BASE.replace("\"seed\": 3,", "")),
        ("bad_gain", &*BASE.replace("\"gain\": 15", "\"gain\": -1")),
        ("bad_kind", &*BASE.replace("\"roc\"", "\"scatter\"")),
    ];
    for (name, text) in cases {
        let cfg = write(dir.path(), &format!("{name}.json"), text);
        assert_eq!(run(&cfg, dir.path(), &["--quiet"]).status.code(), Some(2), "{name}");
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&missing, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn infeasible_calibration_exits_3_with_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    // at A = 0 the statistic is identically zero
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{
            "experiment": "sweep", "seed": 1, "trials": 2000, "target_pfa": 0.05,
            "sensing": {"kind": "soft", "levels": 2},
            "channel": {"gain": 15, "slots": 1, "sensors": 2},
            "detectors": ["opt_dtm"],
            "sweep": {"axis": "A", "values": [0, 15]}
        }"#,
    );
    let out = run(&cfg, dir.path(), &["--quiet"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[1][21], "infeasible");
    assert_eq!(rows[3][21], "ok");
    assert_eq!(rows[3][4], "15");
    let m = std::fs::read_to_string(dir.path().join("sweep.manifest.json")).unwrap();
    assert!(m.contains("\"status\": \"infeasible\""));
}

#[test]
fn validate_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "val.json", &BASE.replace("\"roc\"", "\"validate\""));
    let out = run(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("validate: PASS"), "{stdout}");
    let rows = read_csv(&dir.path().join("val.csv"));
    let last = rows.last().unwrap();
    assert_eq!((last[13].as_str(), last[21].as_str()), ("summary", "pass"));
}

#[test]
fn exponent_rows_locate_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        r#"{
            "experiment": "exponent", "seed": 7,
            "sensing": {"kind": "hard", "p0": 0.1, "p1": 0.1},
            "channel": {"gain": 4, "slots": 1, "sensors": 1},
            "exponent": {"gains": [4, 6, 8, 10], "s_grid": [0.05, 0.1, 0.2, 0.3, 0.4]}
        }"#,
    );
    assert_eq!(run(&cfg, dir.path(), &["--quiet"]).status.code(), Some(0));
    let rows = read_csv(&dir.path().join("exp.csv"));
    assert_eq!(rows.len(), 1 + 4 * (5 + 2));
    let stars: Vec<f64> = rows.iter().filter(|r| r[21] == "s_star0").map(|r| r[18].parse().unwrap()).collect();
    assert_eq!(stars.len(), 4);
    assert!(stars.windows(2).all(|w| w[1] < w[0]));
    assert!(rows[1..].iter().all(|r| r[1] == "mrc" && r[13] == "chernoff_bound"));
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        mcfusion::cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
