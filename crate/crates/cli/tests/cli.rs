use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ftcbf"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ftcbf-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn simulate_verify_plot_roundtrip() {
    let dir = out_dir("sim");
    let out = bin()
        .args(["simulate", "--seed", "4", "--scenario"])
        .arg(scenario("scalar_reach.json"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = dir.join("scalar_reach_seed4.json");
    assert!(log.exists() && dir.join("scalar_reach_seed4.csv").exists());

    let out = bin().args(["verify", "--log"]).arg(&log).arg("--scenario").arg(scenario("scalar_reach.json")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Satisfied"));

    let out = bin().args(["plots", "--log"]).arg(&log).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("scalar_reach_seed4.svg").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn decompose_lists_three_subtasks() {
    let out = bin().args(["decompose", "--scenario"]).arg(scenario("case_study.json")).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with('[')).count(), 3, "{text}");
    assert!(text.contains("-> acc"));
}

#[test]
fn missing_scenario_is_an_error() {
    let out = bin().args(["simulate", "--scenario", "/nonexistent.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
