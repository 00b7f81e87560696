use std::path::Path;

use bimanual_harness::agents::{BackendChoice, BackendError, OraclePolicy, Policy, RemoteModelConfig, ReplayPolicy, Turn};
use bimanual_harness::episode::{ActionStatus, Termination};
use bimanual_harness::runner::{self, run_episode, EpisodeContext, RunConfig};
use bimanual_harness::scoring::ErrorSubtype;
use bimanual_harness::tasks::TaskRegistry;

struct Silent;

impl Policy for Silent {
    fn name(&self) -> String {
        "silent".into()
    }

    fn propose(&mut self, _turn: &Turn<'_>) -> Result<String, BackendError> {
        Ok(String::new())
    }
}

fn cfg(out: &Path, tasks: &[&str], episodes: usize, backend: BackendChoice) -> RunConfig {
    RunConfig {
        tasks: tasks.iter().map(|s| s.to_string()).collect(),
        episodes,
        backend,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn empty_output_exhausts_rounds_with_format_errors() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    for id in ["spatial_sparse", "stack_blocks_three", "stack_blocks_two"] {
        let task = reg.get(id).unwrap();
        let (log, _) = run_episode(task, 3, &mut Silent, &ctx);
        assert!(!log.result.success, "{id}");
        assert_eq!(log.result.termination, Termination::RoundsExhausted, "{id}");
        assert_eq!(log.rounds.len(), task.max_plan_rounds, "{id}");
        assert!(log.result.error_labels.iter().any(|l| l.subtype == ErrorSubtype::FormatError), "{id}");
    }
}

#[test]
fn oracle_stacks_two_blocks_within_two_rounds() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let task = reg.get("stack_blocks_two").unwrap();
    let mut oracle = OraclePolicy::default();
    for seed in 0..40 {
        let (log, _) = run_episode(task, seed, &mut oracle, &ctx);
        assert!(log.result.success, "seed {seed}");
        assert!(log.result.rounds_used <= 2, "seed {seed}: {} rounds", log.result.rounds_used);
    }
}

#[test]
fn round_budget_and_feedback_invariants() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let mut oracle = OraclePolicy::default();
    for task in &reg.tasks {
        for seed in 0..3 {
            let (log, _) = run_episode(task, seed, &mut oracle, &ctx);
            assert!(log.rounds.len() <= task.max_plan_rounds, "{} {seed}", task.id);
            for r in &log.rounds {
                assert!(r.actions.len() <= task.max_chunk_size, "{} {seed}", task.id);
                for a in &r.actions {
                    if a.status == ActionStatus::Skipped {
                        assert!(a.feedback.is_empty());
                    } else {
                        assert_eq!(a.feedback.lines().count(), 1, "{} {seed}: {:?}", task.id, a.feedback);
                    }
                }
            }
        }
    }
}

#[test]
fn replaying_the_same_recording_is_deterministic() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let task = reg.get("blocks_ranking_rgb").unwrap();
    let (_, rec) = run_episode(task, 11, &mut OraclePolicy::default(), &ctx);
    let a = run_episode(task, 11, &mut ReplayPolicy::from_entries(rec.clone()), &ctx).0;
    let b = run_episode(task, 11, &mut ReplayPolicy::from_entries(rec), &ctx).0;
    assert!(a.result.success);
    assert_eq!(a.content_hash(), b.content_hash());
}

#[test]
fn exhausted_recording_is_environmental() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let task = reg.get("stack_blocks_three").unwrap();
    let (log, _) = run_episode(task, 0, &mut ReplayPolicy::from_outputs(Vec::new()), &ctx);
    assert_eq!(log.result.termination, Termination::BackendError);
    assert!(log.result.error_labels.iter().any(|l| l.subtype == ErrorSubtype::EnvBackend));
}

#[test]
fn resume_skips_completed_episodes() {
    let reg = TaskRegistry::builtin();
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(dir.path(), &["spatial_sparse", "stack_blocks_two"], 4, BackendChoice::Oracle);
    let first = runner::run_batch(&c, reg).unwrap();
    assert_eq!((first.ran, first.resumed), (8, 0));

    let removed = runner::log_path(dir.path(), "stack_blocks_two", 2);
    std::fs::remove_file(&removed).unwrap();
    let kept = runner::log_path(dir.path(), "spatial_sparse", 0);
    let before = std::fs::read(&kept).unwrap();

    let second = runner::run_batch(&c, reg).unwrap();
    assert_eq!((second.ran, second.resumed), (1, 7));
    assert!(removed.exists());
    assert_eq!(std::fs::read(&kept).unwrap(), before);
    assert_eq!(first.summary.report, second.summary.report);
    let hashes = |s: &runner::RunSummary| s.episodes.iter().map(|e| e.log_hash.clone()).collect::<Vec<_>>();
    assert_eq!(hashes(&first.summary), hashes(&second.summary));
}

#[test]
fn changed_config_reruns_instead_of_resuming() {
    let reg = TaskRegistry::builtin();
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(dir.path(), &["spatial_dense"], 2, BackendChoice::Oracle);
    runner::run_batch(&c, reg).unwrap();
    c.sigma = 0.2;
    let again = runner::run_batch(&c, reg).unwrap();
    assert_eq!((again.ran, again.resumed), (2, 0));
    assert_eq!(again.summary.sigma, 0.2);
}

#[test]
fn parallelism_does_not_change_the_summary() {
    let reg = TaskRegistry::builtin();
    let tasks = ["spatial_cluttered", "blocks_ranking_size", "place_object_scale"];
    let rec = tempfile::tempdir().unwrap();
    runner::run_batch(&cfg(rec.path(), &tasks, 6, BackendChoice::Oracle), reg).unwrap();
    let recordings = runner::logs_dir(rec.path());

    let mut outs = Vec::new();
    for parallel in [1, 8] {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path(), &tasks, 6, BackendChoice::Replay { dir: recordings.clone() });
        c.parallel = parallel;
        let o = runner::run_batch(&c, reg).unwrap();
        outs.push((o.summary.to_json(), std::fs::read_to_string(dir.path().join("summary.json")).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn missing_credential_is_logged_not_fatal() {
    let reg = TaskRegistry::builtin();
    let dir = tempfile::tempdir().unwrap();
    let remote = RemoteModelConfig { api_key_env: "BIMANUAL_TEST_UNSET_KEY_VAR".into(), ..RemoteModelConfig::default() };
    let out = runner::run_batch(&cfg(dir.path(), &["spatial_sparse"], 2, BackendChoice::remote(remote)), reg).unwrap();
    assert_eq!(out.summary.episodes.len(), 2);
    for e in &out.summary.episodes {
        assert_eq!(e.termination, Termination::BackendError);
        assert!(!e.success);
    }
    let text = std::fs::read_to_string(runner::log_path(dir.path(), "spatial_sparse", 0)).unwrap();
    assert!(text.contains("BIMANUAL_TEST_UNSET_KEY_VAR"));
}

#[test]
fn report_reproduces_the_stored_summary() {
    let reg = TaskRegistry::builtin();
    let dir = tempfile::tempdir().unwrap();
    runner::run_batch(&cfg(dir.path(), &["spatial_sparse", "handover_block", "grab_roller"], 3, BackendChoice::Oracle), reg)
        .unwrap();
    let stored = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let again = runner::report(dir.path(), reg).unwrap();
    assert_eq!(again.to_json(), stored);
}

#[test]
fn oracle_spatial_mean_is_full_marks() {
    let reg = TaskRegistry::builtin();
    let dir = tempfile::tempdir().unwrap();
    let out = runner::run_batch(&cfg(dir.path(), &["spatial_sparse", "spatial_dense", "spatial_cluttered"], 100, BackendChoice::Oracle), reg)
        .unwrap();
    for t in &out.summary.report.tasks {
        assert!((t.mean_score - 100.0).abs() < 1e-9, "{}: {}", t.task_id, t.mean_score);
    }
    assert!(runner::verify_summary(&out.summary, 95.0).iter().all(|v| v.1));
}
