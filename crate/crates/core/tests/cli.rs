use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_overlay-heal"));
    c.env_remove("OVERLAY_HEAL_OUT");
    c
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

const SMALL: &str = r#"
protocols = ["none", "p2n"]
replicates = 3
rounds = 20
base_seed = 7

[topology]
kind = "uniform"
n_nodes = 50
uniform_degree = 4

[mode]
kind = "evolution"
"#;

#[test]
fn run_writes_one_file_per_protocol_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let files = names(&out);
    assert_eq!(files.iter().filter(|f| f.starts_with("run_")).count(), 6);
    assert_eq!(files.iter().filter(|f| f.starts_with("aggregate_")).count(), 2);
    for f in ["run_none_7.csv", "run_p2n_9.csv", "resolved_config.toml", "summary.csv"] {
        assert!(files.contains(&f.to_string()), "{f} missing from {files:?}");
    }
    let header = fs::read_to_string(out.join("run_p2n_7.csv")).unwrap();
    assert!(header.starts_with(
        "round,main_component_size,main_component_fraction,isolated_count,avg_n1,avg_n2,active_count,links_total,messages_sent"
    ));
    let first_row = header.lines().nth(1).unwrap();
    assert_eq!(first_row.split(',').nth(2).unwrap(), "1.000000");

    // the echoed config reproduces the run byte for byte
    let again = dir.path().join("again");
    let status = bin()
        .args(["run", "--config"])
        .arg(out.join("resolved_config.toml"))
        .arg("--out")
        .arg(&again)
        .arg("--sequential")
        .status()
        .unwrap();
    assert!(status.success());
    for f in &files {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "100", "--replicates", "2", "--protocol", "pecc", "--set", "rounds=5"])
        .status()
        .unwrap();
    assert!(status.success());
    let runs: Vec<String> = names(&out).into_iter().filter(|f| f.starts_with("run_")).collect();
    assert_eq!(runs, vec!["run_pecc_100.csv", "run_pecc_101.csv"]);
    let rows = fs::read_to_string(out.join("run_pecc_100.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 6);
}

#[test]
fn output_directory_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("env-out");
    let status = bin()
        .env("OVERLAY_HEAL_OUT", &out)
        .args(["run", "--replicates", "1", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("run_none_7.csv").exists());
}

#[test]
fn negative_gamma_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["scenario", "clustered-attack", "--set", "topology.gamma=-0.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[params]\nt_ecc = 0.4\nwindow = 3\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window"));
}

#[test]
fn unknown_scenario_lists_names() {
    let out = bin().args(["scenario", "ring-of-fire", "--out", "/nonexistent"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("uniform-evolution") && err.contains("usage"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = bin()
        .args(["scenario", "uniform-evolution", "--replicates", "1", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degree_dist_scenario_emits_four_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["scenario", "sf-degree-dist", "--replicates", "2", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let dists: Vec<String> = names(dir.path()).into_iter().filter(|f| f.starts_with("degree_dist_")).collect();
    assert_eq!(
        dists,
        vec![
            "degree_dist_none.csv",
            "degree_dist_original.csv",
            "degree_dist_p2n.csv",
            "degree_dist_pecc.csv"
        ]
    );
}

#[test]
fn failures_scenario_runs_until_empty() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["scenario", "uniform-failures", "--replicates", "1", "--protocol", "none", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(dir.path().join("run_none_1.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert_eq!(last.split(',').nth(6).unwrap(), "0");
    assert_eq!(text.lines().count(), 1 + 201);
}

#[test]
fn show_prints_resolved_config() {
    let out = bin().args(["show", "--scenario", "sf-attack", "--set", "params.r=2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("kind = \"scale-free\""));
    assert!(text.contains("r = 2"));
}
