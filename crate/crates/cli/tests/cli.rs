use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim")).args(args).output().unwrap()
}

fn demo_tle() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/demo.tle")
}

/// Small demo scenario in `dir`; `extra` is appended to the file.
fn scenario(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "tle_path = {:?}\nseed = 5\n\n[site]\nlatitude = 1.2966\nlongitude = 103.7764\naltitude = 20.0\n\n\
         [search]\nduration_hours = 2.0\n\n[simulation]\nslice_interval = 30.0\nslice_duration = 0.005\n{extra}",
        demo_tle().display().to_string()
    );
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_is_byte_for_byte_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = qkdsim(&["simulate", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        let line = text.lines().next().unwrap();
        assert!(line.starts_with("sifted=") && line.contains(" qber=") && line.contains(" secret="), "{line}");
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    for f in ["pat.csv", "pcs.csv", "link.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["key"]["key_model"], "asymptotic");
}

#[test]
fn seed_flag_overrides_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "");
    let out = dir.path().join("o");
    let o = qkdsim(&["simulate", "--scenario", s.to_str().unwrap(), "--seed", "99", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 99);
}

#[test]
fn binary_tags_and_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "");
    let out = dir.path().join("o");
    let o = qkdsim(&[
        "simulate", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "bin", "--tags",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ground = std::fs::metadata(out.join("tags_ground.bin")).unwrap().len();
    assert!(ground > 0 && ground % 9 == 0);
    assert!(out.join("pat.csv").exists());

    let out = dir.path().join("j");
    let o = qkdsim(&["link-budget", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success());
    let link: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("link.json")).unwrap()).unwrap();
    assert!(link.as_array().unwrap().len() > 100);
}

#[test]
fn ensemble_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "");
    let out = dir.path().join("e");
    let o = qkdsim(&["simulate", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--ensemble", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ensemble.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,sifted_bits,qber,secret_bits");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("5,") && lines[3].starts_with("7,"));
}

#[test]
fn invalid_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "\n[source]\nvisibility = 1.5\n");
    let o = qkdsim(&["simulate", "--scenario", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("visibility"));

    std::fs::write(&s, "tle_path = 3\n").unwrap();
    assert_eq!(qkdsim(&["predict", "--scenario", s.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn bad_input_data_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let tle = std::fs::read_to_string(demo_tle()).unwrap().replace("15.15000000", "15.15000001");
    std::fs::write(dir.path().join("bad.tle"), tle).unwrap();
    let text = "tle_path = \"bad.tle\"\n[site]\nlatitude = 1.0\nlongitude = 103.0\naltitude = 0.0\n";
    std::fs::write(dir.path().join("s.toml"), text).unwrap();
    let o = qkdsim(&["predict", "--scenario", dir.path().join("s.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));
}

#[test]
fn missing_pass_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "");
    let o = qkdsim(&["simulate", "--scenario", s.to_str().unwrap(), "--pass", "40", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn predict_with_unreachable_threshold_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "");
    let text = std::fs::read_to_string(&s).unwrap().replace("duration_hours = 2.0", "duration_hours = 2.0\nmin_elevation = 89.99");
    std::fs::write(&s, text).unwrap();
    let o = qkdsim(&["predict", "--scenario", s.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("no passes"));
}

#[test]
fn source_check_reports_visibility() {
    let o = qkdsim(&["source-check"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let v: f64 = text
        .lines()
        .find(|l| l.starts_with("fitted visibility"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!((v - 0.98).abs() < 0.01, "{v}");
}

#[test]
fn example_scenario_is_a_valid_scenario() {
    let o = qkdsim(&["example-scenario"]);
    assert!(o.status.success());
    let s = qkdsim_core::Scenario::from_toml(&stdout(&o)).unwrap();
    s.validate().unwrap();
}
