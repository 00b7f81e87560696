use std::path::Path;
use std::process::{Command, Output};

fn bimanual(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bimanual")).args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_report_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let tasks = "spatial_sparse,blocks_ranking_rgb,stack_blocks_two";
    let run = bimanual(&["run", "--tasks", tasks, "--episodes", "2", "--parallel", "2", "--out", out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(Path::new(out).join("summary.json").exists());
    assert!(Path::new(out).join("logs/stack_blocks_two/1.jsonl").exists());
    assert!(Path::new(out).join("logs/stack_blocks_two/1.rec.jsonl").exists());

    let report = bimanual(&["report", "--out", out]);
    assert!(report.status.success());
    assert_eq!(text(&report), text(&run));

    let logs = Path::new(out).join("logs");
    let replay = bimanual(&["replay", logs.to_str().unwrap()]);
    assert!(replay.status.success(), "{}", text(&replay));
    assert!(text(&replay).contains("6 episodes replayed, 0 mismatched"));

    let again = bimanual(&["run", "--tasks", tasks, "--episodes", "2", "--out", out]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("ran 0 episodes, resumed 6"));
}

#[test]
fn verify_reports_each_task() {
    let dir = tempfile::tempdir().unwrap();
    let v = bimanual(&["verify", "--tasks", "spatial_dense,grab_roller", "--episodes", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(v.status.success());
    let t = text(&v);
    assert!(t.lines().any(|l| l.starts_with("ok") && l.contains("spatial_dense")));
    assert!(t.lines().any(|l| l.starts_with("ok") && l.contains("grab_roller")));
}

#[test]
fn argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = bimanual(&["run", "--backend", "replay", "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    let r = bimanual(&["run", "--tasks", "no_such_task", "--out", out]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn remote_without_key_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let r = Command::new(env!("CARGO_BIN_EXE_bimanual"))
        .args(["run", "--backend", "remote", "--tasks", "spatial_sparse", "--episodes", "1"])
        .args(["--api-key-env", "BIMANUAL_CLI_TEST_KEY", "--out", dir.path().to_str().unwrap()])
        .env_remove("BIMANUAL_CLI_TEST_KEY")
        .output()
        .unwrap();
    assert!(r.status.success());
    let log = std::fs::read_to_string(dir.path().join("logs/spatial_sparse/0.jsonl")).unwrap();
    assert!(log.contains("backend_error"));
}
