use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rename-sim"))
}

#[test]
fn sweep_writes_csvs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"protocol":"crash","n_values":[8,16],"f_values":[0,"n/2"],"adversaries":["committee_assassin"],"trials_per_cell":2}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(&out).args(["--log", "off"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let raw = fs::read_to_string(out.join("raw.csv")).unwrap();
    assert_eq!(raw.lines().next().unwrap(), "protocol,n,N,f_budget,f_actual,seed,rounds,messages,bits,success,monitor_failures");
    assert_eq!(raw.lines().count(), 1 + 8);
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 1 + 4);
}

#[test]
fn single_trial_writes_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("trial.json");
    fs::write(
        &cfg,
        r#"{"protocol":"byzantine","n":16,"N":1280,"seed":3,"adversary":{"name":"silent","budget_f":1}}"#,
    )
    .unwrap();
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let t: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("transcript.json")).unwrap()).unwrap();
    assert_eq!(t["config"]["seed"], 3);
    assert!(t["success"].as_bool().unwrap());
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"protocol":"crash","n_values":[2],"f_values":[0],"adversaries":["none"],"trials_per_cell":1}"#).unwrap();
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn oracle_subcommand_small_n() {
    let out = bin().args(["oracle", "--n", "4"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["violations"], 0);
}
