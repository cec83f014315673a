use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_red-rl"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn small_config(dir: &Path, sweep: bool) -> PathBuf {
    let mut text = String::from(
        "preset = \"red-cvar-q\"\nsteps = 2000\nseeds = [0, 1]\nwindow = 200\n\n\
         [step_sizes]\nalpha = 2e-2\neta_r_bar = 0.1\neta_var = 0.1\n\n\
         [environment]\nkind = \"rpbp\"\n",
    );
    if sweep {
        text.push_str("\n[sweep]\nalpha = [2e-3, 2e-2]\neta_var = [0.1, 1.0]\n");
    }
    let path = dir.join(if sweep { "sweep.toml" } else { "run.toml" });
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), false);
    let out = dir.path().join("out");
    let report = json(&bin().arg("run").arg(&cfg).arg("--seed").arg("1").arg("--out").arg(&out).output().unwrap());
    assert_eq!(report["preset"], "red-cvar-q");
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert_eq!(report["runs"][0]["summary"]["steps_completed"], 2000);
    let csv = std::fs::read_to_string(out.join("run_seed1.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,reward,estimate,var_estimate,state,action");
    assert_eq!(csv.lines().count(), 2001);
    assert!(out.join("run_seed1.json").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn sweep_reports_best_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), true);
    let out = dir.path().join("out");
    let report = json(
        &bin()
            .args(["--workers", "2", "sweep"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    assert_eq!(report["cells"], 4);
    assert!(report["best"].is_object());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("alpha,eta_r_bar,eta_var,eta_pi,tau,runs,failures,"));
}

#[test]
fn oracle_picks_red_for_cvar_and_blue_for_average() {
    let model = configs().join("rpbp-model.toml");
    let cvar = json(&bin().arg("oracle").arg(&model).args(["--objective", "cvar", "--tau", "0.25"]).output().unwrap());
    assert_eq!(cvar["policy_names"], serde_json::json!(["red_pill", "red_pill"]));
    let avg = json(&bin().arg("oracle").arg(&model).args(["--objective", "avg"]).output().unwrap());
    assert_eq!(avg["policy_names"], serde_json::json!(["blue_pill", "blue_pill"]));
    assert!((avg["average_reward"].as_f64().unwrap() + 0.605).abs() < 1e-9);
    assert!(avg["var"].is_null());
}

#[test]
fn replicate_fig_d4_small() {
    let dir = tempfile::tempdir().unwrap();
    let report = json(
        &bin()
            .args(["replicate", "figD4", "--runs", "1", "--steps", "1000", "--stride", "250", "--out"])
            .arg(dir.path())
            .output()
            .unwrap(),
    );
    assert_eq!(report["figure"], "figD4");
    let csv = std::fs::read_to_string(dir.path().join("figD4.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,run,tau,time_in_blue");
    assert_eq!(csv.lines().count(), 1 + 6 * 4);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "preset = \"red-cvar-q\"\nsteps = 0\n").unwrap();
    let out = bin().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = bin().args(["replicate", "fig9", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().arg("oracle").arg(dir.path().join("missing.toml")).args(["--objective", "avg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
