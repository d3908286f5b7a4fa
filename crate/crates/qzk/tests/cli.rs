use std::fs;
use std::path::PathBuf;
use std::process::Command;

use qzk::instance::{parse_instance, InstanceFile};
use qzk::scenarios::{Params, Scenario, ScenarioConfig};
use qzk::{run_scenario, CliError};
use qzk_core::fixtures;
use serde_json::Value;

fn tmp(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_file(&p);
    p
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qzk"))
}

#[test]
fn same_seed_gives_identical_metrics() {
    for scenario in [Scenario::ProtocolCompleteness, Scenario::CommBound] {
        let cfg = ScenarioConfig::new(scenario, 11).with(Params { trials: Some(3), ..Params::default() });
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.metrics_json(), b.metrics_json());
        let other = run_scenario(&ScenarioConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.metrics_json(), other.metrics_json());
    }
}

#[test]
fn ell_must_be_a_power_of_two() {
    let cfg = ScenarioConfig::new(Scenario::MerkleRoundtrip, 1).with(Params { ell: Some(vec![3]), ..Params::default() });
    assert!(matches!(run_scenario(&cfg), Err(CliError::Config(_))));
}

#[test]
fn oversized_trees_are_refused() {
    let cfg = ScenarioConfig::new(Scenario::CommBound, 1).with(Params { ell: Some(vec![16]), ..Params::default() });
    assert!(matches!(run_scenario(&cfg), Err(CliError::Config(_))));
    let cfg = ScenarioConfig::new(Scenario::MerkleRoundtrip, 1).with(Params { b: Some(vec![3]), ..Params::default() });
    assert!(matches!(run_scenario(&cfg), Err(CliError::Config(_))));
}

#[test]
fn module_errors_name_the_module() {
    let cfg = ScenarioConfig::new(Scenario::HistoryEnergy, 1)
        .with(Params { n: Some(13), m: Some(2), k: Some(1), gamma: Some(1), trials: Some(1), ..Params::default() });
    match run_scenario(&cfg) {
        Err(CliError::Module { module, .. }) => assert!(["qsat", "encver", "clockham", "qsim"].contains(&module)),
        other => panic!("expected a module error, got {other:?}"),
    }
}

#[test]
fn instance_files_round_trip() {
    for inst in [fixtures::with_t(2, 1, 1).unwrap(), fixtures::mixed(3, 5, 2, 1).unwrap()] {
        let text = serde_json::to_string(&InstanceFile::from_instance(&inst)).unwrap();
        assert_eq!(parse_instance(&text).unwrap(), inst);
    }
    let bad = r#"{"n": 1, "k": 1, "gamma": 1, "subsets": [[0]], "circuits": [[{"gate": "cnot", "wires": [0]}]]}"#;
    assert!(matches!(parse_instance(bad), Err(CliError::Instance(_))));
}

#[test]
fn all_accept_instance_has_zero_ground_energy() {
    let path = tmp("all_accept.json");
    let inst = fixtures::all_accept(1, 2, 1, 1).unwrap();
    fs::write(&path, serde_json::to_string(&InstanceFile::from_instance(&inst)).unwrap()).unwrap();
    let cfg = ScenarioConfig::new(Scenario::HistoryEnergy, 3).with(Params { instance: Some(path), trials: Some(2), ..Params::default() });
    let r = run_scenario(&cfg).unwrap();
    assert!(r.passed);
    assert!(r.find("all-accept-lambda-min").unwrap().value <= 1e-8);
}

#[test]
fn binary_writes_a_versioned_report() {
    let out = tmp("comm.json");
    let status = bin().args(["--scenario", "comm-bound", "--seed", "4", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["schema"], "qzk-report/1");
    assert_eq!(v["scenario"], "comm-bound");
    for key in ["params", "seeds", "metrics", "checks", "passed", "wall_time_s"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn config_overrides_flags_but_not_the_seed() {
    let cfg = tmp("cfg.json");
    fs::write(&cfg, r#"{"scenario": "protocol-completeness", "seed": 5, "trials": 2}"#).unwrap();
    let out = tmp("cfg_out.json");
    let status =
        bin().args(["--scenario", "comm-bound", "--trials", "7", "--seed", "9", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["scenario"], "protocol-completeness");
    assert_eq!(v["params"]["trials"], 2);
    let direct = run_scenario(&ScenarioConfig::new(Scenario::ProtocolCompleteness, 9).with(Params { trials: Some(2), ..Params::default() }))
        .unwrap();
    assert_eq!(v["seeds"], serde_json::to_value(&direct.seeds).unwrap());
}

#[test]
fn invalid_config_leaves_no_output() {
    let cfg = tmp("bad_cfg.json");
    fs::write(&cfg, r#"{"scenario": "merkle-roundtrip", "ell": [6]}"#).unwrap();
    let out = tmp("bad_out.json");
    let o = bin().arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("power of two"));
}
