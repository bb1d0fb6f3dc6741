//! End-to-end tests of the `neuracc` binary: the gen-synth → compile →
//! simulate → verify → report flow, flag overrides, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn neuracc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuracc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "manifest": "model.json",
            "stream": "stream.txt",
            "out_dir": "out",
            "hardware": { "engines": 2, "virtual_neurons": 4 },
            "prune_ratio": 0.3,
            "seed": 5
        }"#,
    )
    .unwrap();
    path
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn full_flow_passes_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());

    let gen = neuracc(
        &[
            "gen-synth",
            "--manifest",
            "model.json",
            "--stream",
            "stream.txt",
            "--layers",
            "8,6,4",
            "--input-size",
            "8",
            "--timesteps",
            "12",
            "--density",
            "0.25",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));

    let compile = neuracc(&["compile", "--config", config.to_str().unwrap()], dir.path());
    assert!(compile.status.success(), "{}", String::from_utf8_lossy(&compile.stderr));
    assert!(stdout(&compile).contains("compiled layer0"));
    assert!(dir.path().join("out/layer2/sn.hex").exists());

    let simulate = neuracc(&["simulate", "--config", config.to_str().unwrap()], dir.path());
    assert!(simulate.status.success(), "{}", String::from_utf8_lossy(&simulate.stderr));
    assert!(stdout(&simulate).contains("simulated"));
    assert!(dir.path().join("out/report.csv").exists());
    assert!(dir.path().join("out/utilization.csv").exists());

    let verify = neuracc(&["verify", "--config", config.to_str().unwrap()], dir.path());
    assert_eq!(verify.status.code(), Some(0), "{}", stdout(&verify));
    assert!(stdout(&verify).contains("PASS"));

    let report = neuracc(&["report", "--config", config.to_str().unwrap()], dir.path());
    assert!(report.status.success());
    assert!(stdout(&report).contains("ops="));
}

#[test]
fn corrupted_artifact_exits_one_on_verify() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    // Dense single connection driven every timestep so the corruption is
    // visible in the output.
    std::fs::write(
        dir.path().join("model.json"),
        r#"{
            "input_size": 1,
            "timesteps": 4,
            "layers": [
                {"rows": 1, "cols": 1, "vth": 0.4, "vreset": 0.0,
                 "leak_lambda": 0.9, "weights": [1.0]}
            ]
        }"#,
    )
    .unwrap();
    std::fs::write(dir.path().join("stream.txt"), "1\n1\n1\n1\n").unwrap();

    let compile = neuracc(
        &["compile", "--config", config.to_str().unwrap(), "--prune-ratio", "0"],
        dir.path(),
    );
    assert!(compile.status.success(), "{}", String::from_utf8_lossy(&compile.stderr));

    let wmem = dir.path().join("out/layer0/wmem_0.hex");
    let text = std::fs::read_to_string(&wmem).unwrap();
    std::fs::write(&wmem, text.replacen("7f", "00", 1)).unwrap();

    let verify = neuracc(&["verify", "--config", config.to_str().unwrap()], dir.path());
    assert_eq!(verify.status.code(), Some(1));
    assert!(stdout(&verify).contains("FAIL"));
    assert!(stdout(&verify).contains("timestep 0"));
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let result = neuracc(&["compile", "--config", "nope.json"], dir.path());
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("error"));
}

#[test]
fn simulate_before_compile_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let gen = neuracc(
        &[
            "gen-synth",
            "--manifest",
            "model.json",
            "--stream",
            "stream.txt",
            "--layers",
            "4",
            "--input-size",
            "4",
            "--timesteps",
            "4",
        ],
        dir.path(),
    );
    assert!(gen.status.success());
    let simulate = neuracc(&["simulate", "--config", config.to_str().unwrap()], dir.path());
    assert_eq!(simulate.status.code(), Some(2));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let gen = neuracc(
        &[
            "gen-synth",
            "--manifest",
            "model.json",
            "--stream",
            "stream.txt",
            "--layers",
            "6",
            "--input-size",
            "6",
            "--timesteps",
            "4",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert!(gen.status.success());

    // Prune everything via the flag: all layers compile to empty tables even
    // though the config says 0.3.
    let compile = neuracc(
        &[
            "compile",
            "--config",
            config.to_str().unwrap(),
            "--prune-ratio",
            "1.0",
            "--out",
            "out_flag",
            "--solver",
            "greedy",
            "--jobs",
            "2",
        ],
        dir.path(),
    );
    assert!(compile.status.success(), "{}", String::from_utf8_lossy(&compile.stderr));
    assert!(stdout(&compile).contains("0 connections"));
    assert!(dir.path().join("out_flag/compile_manifest.json").exists());
    let manifest =
        std::fs::read_to_string(dir.path().join("out_flag/compile_manifest.json")).unwrap();
    assert!(manifest.contains("\"solver\": \"greedy\""));
    assert!(manifest.contains("\"prune_ratio\": 1.0"));
}

#[test]
fn bad_gen_synth_arguments_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let result = neuracc(
        &[
            "gen-synth",
            "--manifest",
            "m.json",
            "--stream",
            "s.txt",
            "--layers",
            "4",
            "--input-size",
            "4",
            "--timesteps",
            "4",
            "--density",
            "1.5",
        ],
        dir.path(),
    );
    assert_eq!(result.status.code(), Some(2));
}
