mod common;

use std::path::PathBuf;

use qkdsim_core::orbit::{predict_passes, time::offset, Orbit};
use qkdsim_core::simulate::{find_passes, simulate_pass};
use qkdsim_core::telemetry::{read_tags, write_link, write_pat, write_pcs, write_tags, Format};
use qkdsim_core::{Scenario, ScenarioError, SimError};

fn demo() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/demo.toml");
    let mut s = Scenario::load(&path).unwrap();
    s.simulation.slice_interval = 10.0;
    s.simulation.slice_duration = 0.02;
    s
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qkdsim-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn demo_pass_produces_a_consistent_report() {
    let out = simulate_pass(&demo(), true).unwrap();
    let r = &out.report;
    let k = &r.key;
    assert_eq!(k.sync_failures, 0);
    assert!(k.slices > 20, "{}", k.slices);
    assert!(k.sifted_bits > 200, "{}", k.sifted_bits);
    assert_eq!(k.sifted_bits + k.discarded_mismatched_basis, k.coincidences);
    assert_eq!(k.true_coincidences + k.accidental_coincidences, k.coincidences);
    // Measured error rate against the budget built from its parts.
    let budget = k.qber_budget.source + k.qber_budget.polarization.unwrap() + k.qber_budget.accidental.unwrap();
    let full = k.qber_full.unwrap();
    let sd = (budget * (1.0 - budget) / k.sifted_bits as f64).sqrt();
    assert!((full - budget).abs() < 4.0 * sd, "{full} vs {budget}");
    assert!(r.extrapolated_sifted_bits > k.sifted_bits as f64);
    assert!(r.downlink_time_s > 100.0 && r.downlink_time_s < r.los.signed_duration_since(r.aos).num_seconds() as f64);
    assert!(r.pat_lock_fraction > 0.9);
    let lb = k.loss_budget.as_ref().unwrap();
    assert!(lb.geometric_db > 20.0 && lb.geometric_db < 40.0, "{lb:?}");

    let dir = scratch("telemetry");
    write_pat(&dir.join("pat.csv"), &out.env.pat, Format::Csv).unwrap();
    write_pcs(&dir.join("pcs.csv"), &out.env.pcs, Format::Csv).unwrap();
    let link = out.link_samples(1.0).unwrap();
    write_link(&dir.join("link.json"), &link, Format::Json).unwrap();
    let pat = std::fs::read_to_string(dir.join("pat.csv")).unwrap();
    assert_eq!(pat.lines().count(), out.env.pat.states.len() + 1);
    assert!(pat.starts_with("time_s,phase,"));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("link.json")).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), link.len());

    let (ground, _) = out.slices.iter().find_map(|s| s.tags.clone()).unwrap();
    write_tags(&dir.join("g.bin"), &ground, Format::Binary).unwrap();
    let back = read_tags(&dir.join("g.bin"), Format::Binary).unwrap();
    assert_eq!(back.len(), ground.len());
    assert!(back.iter().zip(&ground).all(|(a, b)| a.time == b.time && a.channel == b.channel));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn different_seeds_give_different_keys() {
    let mut a = demo();
    a.simulation.slice_interval = 30.0;
    let mut b = a.clone();
    b.seed += 1;
    let ra = simulate_pass(&a, false).unwrap().report;
    let rb = simulate_pass(&b, false).unwrap().report;
    assert_ne!(ra.key.coincidences, rb.key.coincidences);
    assert_eq!(ra.aos, rb.aos);
}

#[test]
fn missing_pass_is_reported() {
    let mut s = demo();
    s.pass_index = 9;
    match simulate_pass(&s, false) {
        Err(SimError::NoSuchPass { index: 9, found }) => assert!(found < 9),
        other => panic!("{:?}", other.map(|o| o.report)),
    }
}

#[test]
fn json_scenario_matches_toml() {
    let toml_version = demo();
    let dir = scratch("json-scenario");
    let path = dir.join("s.json");
    std::fs::write(&path, toml_version.to_json().unwrap()).unwrap();
    let loaded = Scenario::load(&path).unwrap();
    assert_eq!(loaded, toml_version);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_element_file_is_an_input_error() {
    let mut s = demo();
    s.tle_path = PathBuf::from("/nonexistent/sat.tle");
    let err = find_passes(&s).unwrap_err();
    assert!(matches!(err, SimError::Scenario(ScenarioError::Io { .. })));
    assert!(err.is_input_data());
}

#[test]
fn corrupted_checksum_is_an_input_error() {
    let dir = scratch("bad-tle");
    let good = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/demo.tle")).unwrap();
    let mut lines: Vec<String> = good.lines().map(String::from).collect();
    let last = lines[2].pop().unwrap();
    lines[2].push(char::from_digit((last.to_digit(10).unwrap() + 1) % 10, 10).unwrap());
    std::fs::write(dir.join("bad.tle"), lines.join("\n")).unwrap();
    let mut s = demo();
    s.tle_path = dir.join("bad.tle");
    let err = find_passes(&s).unwrap_err();
    assert!(err.is_input_data(), "{err}");
    assert!(err.to_string().contains("checksum"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn overhead_threshold_finds_nothing() {
    let (orbit, site, pass) = common::zenith_pass(550.0);
    let none = predict_passes(&orbit, &site, offset(pass.aos, -600.0), offset(pass.los, 600.0), 90.0).unwrap();
    assert!(none.is_empty());
    let again: Orbit = Orbit::new(orbit.tle().clone()).unwrap();
    let same = predict_passes(&again, &site, offset(pass.aos, -600.0), offset(pass.los, 600.0), 10.0).unwrap();
    assert_eq!(same, vec![pass]);
}
