//! Episode loop, batch execution, persistence and re-scoring.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{
    read_recording, recording_path, BackendChoice, BackendError, Observation, Policy, RecordEntry, ReplayPolicy, Turn,
};
use crate::episode::{
    ActionLog, ActionStatus, EpisodeHeader, EpisodeLog, EpisodeResult, ParseOutcome, RoundLog, Termination,
};
use crate::protocol::{
    assemble_prompt, parse_plan, parse_spatial_results, skill_value, truncate_chunk, ExecutablePlan, HistoryStep,
    HistoryWindow,
};
use crate::render::{render_view, ViewSpec};
use crate::scoring::{aggregate, classify_errors, spatial_score, EpisodeScore, Report, SpatialScoreParams, DEFAULT_SIGMA};
use crate::simulator::{step_low_level, SimConfig};
use crate::skills::{execute_skill, SkillError, SkillName, SkillStatus};
use crate::tasks::{evaluate_success, TaskRegistry, TaskSpec, Tier};
use crate::world::{generate_scene, ObjectKind, SceneState, WorldError};

pub const DEFAULT_EPISODES: usize = 100;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("bad log {path}: {reason}")]
    BadLog { path: PathBuf, reason: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Settings shared by every episode of a run.
#[derive(Debug, Clone)]
pub struct EpisodeContext<'a> {
    pub registry: &'a TaskRegistry,
    pub sim: SimConfig,
    pub sigma: f64,
    pub views: Vec<ViewSpec>,
    /// Written into the log header.
    pub backend_label: String,
    /// Where rendered observations are saved, if anywhere.
    pub image_dir: Option<PathBuf>,
}

impl<'a> EpisodeContext<'a> {
    pub fn new(registry: &'a TaskRegistry) -> Self {
        EpisodeContext {
            registry,
            sim: SimConfig::default(),
            sigma: DEFAULT_SIGMA,
            views: crate::render::default_views().to_vec(),
            backend_label: "oracle".into(),
            image_dir: None,
        }
    }

    pub fn config_hash(&self) -> String {
        config_hash(self.registry, &self.sim, self.sigma, &self.views)
    }
}

/// Hash over everything that can change an episode log apart from the
/// backend and the seed.
pub fn config_hash(registry: &TaskRegistry, sim: &SimConfig, sigma: f64, views: &[ViewSpec]) -> String {
    let tasks: Vec<serde_json::Value> = registry
        .tasks
        .iter()
        .map(|t| {
            serde_json::json!({
                "id": t.id, "tier": t.tier, "scene": t.scene, "k": t.max_chunk_size,
                "rounds": t.max_plan_rounds, "success": t.success_source, "template": t.template,
                "instruction": t.instruction, "place_targets": t.place_targets,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "tasks": tasks,
        "tolerances": registry.tolerances,
        "templates": {
            "system": registry.templates.system,
            "format": registry.templates.format,
            "assistant": registry.templates.assistant,
        },
        "sim": sim,
        "sigma": sigma,
        "views": views,
        "skills": crate::skills::schema_json(),
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn sha(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn cube_ids(s: &SceneState) -> Vec<String> {
    s.objects.iter().filter(|o| o.kind == ObjectKind::Cube).map(|o| o.id.clone()).collect()
}

/// Runs one episode on the task's scene for `seed`.
pub fn run_episode(
    task: &TaskSpec,
    seed: u64,
    policy: &mut dyn Policy,
    ctx: &EpisodeContext<'_>,
) -> (EpisodeLog, Vec<RecordEntry>) {
    run_episode_with_scene(task, generate_scene(&task.scene, seed), seed, policy, ctx)
}

/// Runs one episode from a given initial scene, or records the scene error.
pub fn run_episode_with_scene(
    task: &TaskSpec,
    scene: Result<SceneState, WorldError>,
    seed: u64,
    policy: &mut dyn Policy,
    ctx: &EpisodeContext<'_>,
) -> (EpisodeLog, Vec<RecordEntry>) {
    let tol = &ctx.registry.tolerances;
    let mut header = EpisodeHeader {
        task_id: task.id.clone(),
        tier: task.tier,
        seed,
        backend: ctx.backend_label.clone(),
        config_hash: ctx.config_hash(),
        scene_hash: String::new(),
        sigma: ctx.sigma,
        started_at: now(),
    };
    let mut state = match scene {
        Ok(s) => s,
        Err(e) => {
            let mut log = EpisodeLog {
                header,
                rounds: Vec::new(),
                result: EpisodeResult {
                    success: false,
                    score: 0.0,
                    termination: Termination::SceneError,
                    rounds_used: 0,
                    error_labels: Vec::new(),
                    scene_error: Some(e.to_string()),
                    spatial_predictions: None,
                    final_state: None,
                },
            };
            log.result.error_labels = classify_errors(&log, task, tol);
            return (log, Vec::new());
        }
    };
    header.scene_hash = state.canonical_hash();
    policy.begin_episode(task, seed);

    let mut history = HistoryWindow::default();
    let mut rounds = Vec::new();
    let mut records = Vec::new();
    let mut termination = Termination::RoundsExhausted;
    let mut success = false;
    let mut score = 0.0;
    let mut predictions = None;
    let first_step = if task.tier == Tier::LowLevel { 0 } else { 1 };

    for round in 0..task.max_plan_rounds {
        let mut observations = Vec::new();
        if policy.needs_observations() {
            for v in &ctx.views {
                let png = render_view(&state, v).to_png();
                let name = format!("{}_{}_r{}_{}.png", task.id, seed, round, v.kind.as_str());
                if let Some(dir) = &ctx.image_dir {
                    let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(&name), &png));
                }
                observations.push(Observation { name, view: v.kind, png });
            }
        }
        let names: Vec<String> = observations.iter().map(|o| o.name.clone()).collect();
        let prompt = assemble_prompt(task, &state, &history, &names, &ctx.registry.templates);
        let mut log = RoundLog {
            round,
            prompt_sha256: sha(&prompt.text),
            observations: names,
            raw_output: None,
            parse: ParseOutcome::NoOutput,
            actions: Vec::new(),
            backend_error: None,
            success_after: false,
            state_hash_after: String::new(),
        };
        let turn = Turn { task, state: &state, prompt: &prompt, observations: &observations, round };
        let out = policy.propose(&turn);
        records.push(RecordEntry { round, output: out.clone() });
        let raw = match out {
            Ok(r) => r,
            Err(e) => {
                log.backend_error = Some(e.to_string());
                log.state_hash_after = state.canonical_hash();
                rounds.push(log);
                termination = Termination::BackendError;
                break;
            }
        };
        log.raw_output = Some(raw.clone());
        let number = round + first_step;

        if task.tier == Tier::Spatial {
            let required = cube_ids(&state);
            match parse_plan(&raw, Tier::Spatial).and_then(|p| {
                parse_spatial_results(&raw, &required).map(|r| (p.leniency, r))
            }) {
                Ok((leniency, results)) => {
                    let n = results.len();
                    log.parse = ParseOutcome::Parsed { leniency, planned: n, executed: n, dropped: 0 };
                    score = spatial_score(&results, &state, &SpatialScoreParams { sigma: ctx.sigma }).unwrap_or(0.0);
                    success = score >= 100.0;
                    predictions = Some(results);
                    termination = Termination::Answered;
                }
                Err(f) => log.parse = ParseOutcome::Failed { failure: f },
            }
            log.success_after = success;
            log.state_hash_after = state.canonical_hash();
            rounds.push(log);
            if termination == Termination::Answered {
                break;
            }
            continue;
        }

        let parsed = match parse_plan(&raw, task.tier) {
            Ok(p) => p,
            Err(f) => {
                history.push(HistoryStep::failed(number, &f.detail));
                log.parse = ParseOutcome::Failed { failure: f };
                log.state_hash_after = state.canonical_hash();
                rounds.push(log);
                continue;
            }
        };
        let planned = parsed.record.executable_plan.len();
        match parsed.record.executable_plan {
            ExecutablePlan::Skills(calls) => {
                let (exec, dropped) = truncate_chunk(&calls, task.max_chunk_size);
                log.parse = ParseOutcome::Parsed { leniency: parsed.leniency, planned, executed: exec.len(), dropped };
                let mut ran = Vec::new();
                let mut feedback = Vec::new();
                let mut failed = false;
                for (i, call) in exec.iter().enumerate() {
                    let mut a = ActionLog {
                        index: i,
                        entry: skill_value(call),
                        skill: Some(call.action_name.as_str().to_string()),
                        arm: call.arm(),
                        actor: call.actor().map(str::to_string),
                        status: ActionStatus::Skipped,
                        feedback: String::new(),
                        events: Vec::new(),
                        unknown_actor: None,
                        place_without_hold: false,
                        goal_objects_satisfied: Vec::new(),
                    };
                    if failed {
                        log.actions.push(a);
                        continue;
                    }
                    a.goal_objects_satisfied = task.goal_objects_satisfied(&state, tol);
                    if call.action_name == SkillName::PlaceActor {
                        if let (Some(arm), Some(actor)) = (call.arm(), call.actor()) {
                            a.place_without_hold = state.object(actor).is_some()
                                && state.arms[arm].attached_object.as_deref() != Some(actor);
                        }
                    }
                    match execute_skill(&state, call, &ctx.sim) {
                        Ok((next, outcome)) => {
                            state = next;
                            a.status = match outcome.status {
                                SkillStatus::Succeeded => ActionStatus::Succeeded,
                                SkillStatus::FailedTruncated => ActionStatus::FailedTruncated,
                                SkillStatus::FailedExecution => ActionStatus::FailedExecution,
                            };
                            a.feedback = outcome.feedback;
                            a.events = outcome.events;
                        }
                        Err(SkillError::UnknownActor(id)) => {
                            a.status = ActionStatus::Rejected;
                            a.feedback = format!("Action failed: there is no object named {id}");
                            a.unknown_actor = Some(id);
                        }
                        Err(e) => {
                            a.status = ActionStatus::Rejected;
                            a.feedback = format!("Action failed: {e}");
                        }
                    }
                    state.step_index += 1;
                    failed = a.status != ActionStatus::Succeeded;
                    ran.push(call.clone());
                    feedback.push(a.feedback.clone());
                    log.actions.push(a);
                }
                history.push(HistoryStep::from_skills(number, &ran, feedback));
            }
            ExecutablePlan::Actions(actions) => {
                let (exec, dropped) = truncate_chunk(&actions, task.max_chunk_size);
                log.parse = ParseOutcome::Parsed { leniency: parsed.leniency, planned, executed: exec.len(), dropped };
                let mut feedback = Vec::new();
                for (i, act) in exec.iter().enumerate() {
                    let goal = task.goal_objects_satisfied(&state, tol);
                    let (next, events) = step_low_level(&state, &act.action(), &ctx.sim);
                    state = next;
                    state.step_index += 1;
                    let fail = events.iter().find(|e| e.kind.is_failure());
                    let (status, fb) = match fail {
                        Some(e) => (ActionStatus::FailedExecution, format!("Action failed: {}", e.detail)),
                        None => (ActionStatus::Succeeded, "Action succeeded.".to_string()),
                    };
                    feedback.push(fb.clone());
                    log.actions.push(ActionLog {
                        index: i,
                        entry: serde_json::Value::String(act.raw.clone()),
                        skill: None,
                        arm: None,
                        actor: None,
                        status,
                        feedback: fb,
                        events,
                        unknown_actor: None,
                        place_without_hold: false,
                        goal_objects_satisfied: goal,
                    });
                }
                history.push(HistoryStep::from_actions(number, &exec, feedback));
            }
            ExecutablePlan::Spatial(_) => {}
        }
        success = evaluate_success(task, &state, tol);
        log.success_after = success;
        log.state_hash_after = state.canonical_hash();
        rounds.push(log);
        if success {
            termination = Termination::Success;
            break;
        }
    }
    if task.tier != Tier::Spatial {
        score = if success { 100.0 } else { 0.0 };
    }
    let mut log = EpisodeLog {
        header,
        rounds: Vec::new(),
        result: EpisodeResult {
            success,
            score,
            termination,
            rounds_used: 0,
            error_labels: Vec::new(),
            scene_error: None,
            spatial_predictions: predictions,
            final_state: Some(state),
        },
    };
    log.result.rounds_used = rounds.len();
    log.rounds = rounds;
    log.result.error_labels = classify_errors(&log, task, tol);
    (log, records)
}

/// Batch settings. Episodes use seeds `seed_base..seed_base + episodes`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Task ids to run; empty means every registered task.
    pub tasks: Vec<String>,
    pub episodes: usize,
    pub seed_base: u64,
    pub backend: BackendChoice,
    pub sigma: f64,
    pub views: Vec<ViewSpec>,
    pub parallel: usize,
    pub out_dir: PathBuf,
    pub sim: SimConfig,
    pub save_images: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tasks: Vec::new(),
            episodes: DEFAULT_EPISODES,
            seed_base: 0,
            backend: BackendChoice::Oracle,
            sigma: DEFAULT_SIGMA,
            views: crate::render::default_views().to_vec(),
            parallel: 1,
            out_dir: PathBuf::from("out"),
            sim: SimConfig::default(),
            save_images: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub task_id: String,
    pub seed: u64,
    pub success: bool,
    pub score: f64,
    pub termination: Termination,
    pub rounds_used: usize,
    pub labels: Vec<String>,
    pub log_hash: String,
}

/// The machine-readable run summary. A pure function of the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub backend: String,
    pub sigma: f64,
    pub seed_base: u64,
    pub episodes_per_task: usize,
    /// Tier-one average is the mean of the per-setting means.
    pub spatial_average_kind: String,
    pub report: Report,
    pub episodes: Vec<EpisodeEntry>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "backend: {}  seeds: {}..{}  episodes per task: {}\n",
            self.backend,
            self.seed_base,
            self.seed_base + self.episodes_per_task as u64,
            self.episodes_per_task
        );
        s.push_str(&self.report.to_text());
        s
    }
}

/// Counts for one batch invocation. Not part of the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub summary: RunSummary,
    pub ran: usize,
    pub resumed: usize,
}

pub fn logs_dir(out: &Path) -> PathBuf {
    out.join("logs")
}

pub fn log_path(out: &Path, task_id: &str, seed: u64) -> PathBuf {
    logs_dir(out).join(task_id).join(format!("{seed}.jsonl"))
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)
}

fn select_tasks<'r>(registry: &'r TaskRegistry, ids: &[String]) -> Result<Vec<&'r TaskSpec>, RunError> {
    if ids.is_empty() {
        return Ok(registry.tasks.iter().collect());
    }
    ids.iter().map(|id| registry.get(id).ok_or_else(|| RunError::UnknownTask(id.clone()))).collect()
}

fn failed_backend_log(task: &TaskSpec, seed: u64, ctx: &EpisodeContext<'_>, err: &BackendError) -> EpisodeLog {
    struct Broken(BackendError);
    impl Policy for Broken {
        fn name(&self) -> String {
            "unavailable".into()
        }
        fn propose(&mut self, _turn: &Turn<'_>) -> Result<String, BackendError> {
            Err(self.0.clone())
        }
    }
    run_episode(task, seed, &mut Broken(err.clone()), ctx).0
}

fn existing_log(path: &Path, config_hash: &str) -> Option<EpisodeLog> {
    let text = std::fs::read_to_string(path).ok()?;
    EpisodeLog::from_jsonl(&text).ok().filter(|l| l.header.config_hash == config_hash)
}

/// Runs every (task, seed) pair with bounded parallelism, skipping pairs
/// that already have a complete log with the same config hash.
pub fn run_batch(cfg: &RunConfig, registry: &TaskRegistry) -> Result<BatchOutcome, RunError> {
    let tasks = select_tasks(registry, &cfg.tasks)?;
    let mut ctx = EpisodeContext::new(registry);
    ctx.sim = cfg.sim;
    ctx.sigma = cfg.sigma;
    ctx.views = cfg.views.clone();
    ctx.backend_label = cfg.backend.name().to_string();
    if cfg.save_images {
        ctx.image_dir = Some(cfg.out_dir.join("images"));
    }
    let hash = ctx.config_hash();
    let jobs: Vec<(&TaskSpec, u64)> = tasks
        .iter()
        .flat_map(|t| (0..cfg.episodes as u64).map(move |i| (*t, cfg.seed_base + i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let write_recordings = !matches!(cfg.backend, BackendChoice::Replay { .. });
    let results: Vec<Result<(EpisodeLog, bool), RunError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(task, seed)| {
                let path = log_path(&cfg.out_dir, &task.id, *seed);
                if let Some(log) = existing_log(&path, &hash) {
                    return Ok((log, true));
                }
                let (log, records) = match cfg.backend.build(&ctx.sim) {
                    Ok(mut p) => run_episode(task, *seed, p.as_mut(), &ctx),
                    Err(e) => (failed_backend_log(task, *seed, &ctx, &e), Vec::new()),
                };
                if write_recordings {
                    let mut rec = String::new();
                    for r in &records {
                        rec.push_str(&serde_json::to_string(r).expect("record serializes"));
                        rec.push('\n');
                    }
                    write_atomic(&recording_path(&logs_dir(&cfg.out_dir), &task.id, *seed), &rec)?;
                }
                write_atomic(&path, &log.to_jsonl())?;
                Ok((log, false))
            })
            .collect()
    });
    let mut logs = Vec::with_capacity(results.len());
    let (mut ran, mut resumed) = (0, 0);
    for r in results {
        let (log, reused) = r?;
        if reused {
            resumed += 1;
        } else {
            ran += 1;
        }
        logs.push(log);
    }
    let summary = summarize(&logs, registry);
    write_summary(&cfg.out_dir, &summary)?;
    Ok(BatchOutcome { summary, ran, resumed })
}

pub fn write_summary(out: &Path, summary: &RunSummary) -> std::io::Result<()> {
    write_atomic(&out.join("summary.json"), &summary.to_json())?;
    write_atomic(&out.join("summary.txt"), &summary.to_text())
}

pub fn episode_score(log: &EpisodeLog) -> EpisodeScore {
    EpisodeScore {
        task_id: log.header.task_id.clone(),
        seed: log.header.seed,
        tier: log.header.tier,
        success: log.result.success,
        score: log.result.score,
        error_labels: log.result.error_labels.clone(),
    }
}

/// Builds the summary from logs alone. Order of `logs` does not matter.
pub fn summarize(logs: &[EpisodeLog], registry: &TaskRegistry) -> RunSummary {
    let order: BTreeMap<&str, usize> = registry.tasks.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let mut sorted: Vec<&EpisodeLog> = logs.iter().collect();
    sorted.sort_by_key(|l| (order.get(l.header.task_id.as_str()).copied().unwrap_or(usize::MAX), l.header.task_id.clone(), l.header.seed));
    let scores: Vec<EpisodeScore> = sorted.iter().map(|l| episode_score(l)).collect();
    let pick = |f: &dyn Fn(&EpisodeLog) -> String| {
        let mut v: Vec<String> = sorted.iter().map(|l| f(l)).collect();
        v.sort();
        v.dedup();
        if v.len() == 1 {
            v.remove(0)
        } else if v.is_empty() {
            String::new()
        } else {
            "mixed".into()
        }
    };
    let config_hash = pick(&|l| l.header.config_hash.clone());
    let backend = pick(&|l| l.header.backend.clone());
    let sigma = sorted.first().map_or(DEFAULT_SIGMA, |l| l.header.sigma);
    let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &sorted {
        *per_task.entry(l.header.task_id.as_str()).or_insert(0) += 1;
    }
    let episodes = sorted
        .iter()
        .map(|l| EpisodeEntry {
            task_id: l.header.task_id.clone(),
            seed: l.header.seed,
            success: l.result.success,
            score: l.result.score,
            termination: l.result.termination,
            rounds_used: l.result.rounds_used,
            labels: l.result.error_labels.iter().map(|e| e.subtype.as_str().to_string()).collect(),
            log_hash: l.content_hash(),
        })
        .collect();
    RunSummary {
        report: aggregate(&scores, registry, sigma, &config_hash),
        config_hash,
        backend,
        sigma,
        seed_base: sorted.iter().map(|l| l.header.seed).min().unwrap_or(0),
        episodes_per_task: per_task.values().copied().max().unwrap_or(0),
        spatial_average_kind: "macro".into(),
        episodes,
    }
}

/// Reads every `*.jsonl` episode log under `dir`, in path order.
pub fn read_logs(dir: &Path) -> Result<Vec<(PathBuf, EpisodeLog)>, RunError> {
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "jsonl") && !p.to_string_lossy().ends_with(".rec.jsonl") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)?;
            let log = EpisodeLog::from_jsonl(&text).map_err(|reason| RunError::BadLog { path: p.clone(), reason })?;
            Ok((p, log))
        })
        .collect()
}

/// Re-aggregates the logs of an output directory and rewrites its summary.
pub fn report(out: &Path, registry: &TaskRegistry) -> Result<RunSummary, RunError> {
    let logs: Vec<EpisodeLog> = read_logs(&logs_dir(out))?.into_iter().map(|(_, l)| l).collect();
    let summary = summarize(&logs, registry);
    write_summary(out, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCheck {
    pub task_id: String,
    pub seed: u64,
    pub stored_hash: String,
    pub replay_hash: String,
    pub stored_score: f64,
    pub replay_score: f64,
}

impl ReplayCheck {
    pub fn matches(&self) -> bool {
        self.stored_hash == self.replay_hash && self.stored_score.to_bits() == self.replay_score.to_bits()
    }
}

/// Recorded outputs for a log: the recording file next to it if present,
/// else the raw outputs stored in the log itself.
fn entries_for(log_file: &Path, log: &EpisodeLog) -> Vec<RecordEntry> {
    let rec = log_file.with_extension("rec.jsonl");
    if let Ok(entries) = read_recording(&rec) {
        return entries;
    }
    log.rounds
        .iter()
        .filter_map(|r| r.raw_output.clone().map(|raw| RecordEntry { round: r.round, output: Ok(raw) }))
        .collect()
}

/// Re-runs every log in `dir` from its recorded outputs and compares.
pub fn replay_dir(dir: &Path, registry: &TaskRegistry, sim: &SimConfig, views: &[ViewSpec]) -> Result<Vec<ReplayCheck>, RunError> {
    let mut out = Vec::new();
    for (path, log) in read_logs(dir)? {
        let task = registry.get(&log.header.task_id).ok_or_else(|| RunError::UnknownTask(log.header.task_id.clone()))?;
        let mut ctx = EpisodeContext::new(registry);
        ctx.sim = *sim;
        ctx.sigma = log.header.sigma;
        ctx.views = views.to_vec();
        ctx.backend_label = log.header.backend.clone();
        let mut policy = ReplayPolicy::from_entries(entries_for(&path, &log));
        let (again, _) = run_episode(task, log.header.seed, &mut policy, &ctx);
        out.push(ReplayCheck {
            task_id: log.header.task_id.clone(),
            seed: log.header.seed,
            stored_hash: log.content_hash(),
            replay_hash: again.content_hash(),
            stored_score: log.result.score,
            replay_score: again.result.score,
        });
    }
    Ok(out)
}

/// Per-task verdicts for an oracle run: SR at least `min_sr` percent, and
/// a perfect mean score on tier one.
pub fn verify_summary(summary: &RunSummary, min_sr: f64) -> Vec<(String, bool, f64)> {
    summary
        .report
        .tasks
        .iter()
        .map(|t| {
            let ok = if t.tier == Tier::Spatial { t.mean_score >= 100.0 - 1e-9 } else { t.success_rate >= min_sr };
            let v = if t.tier == Tier::Spatial { t.mean_score } else { t.success_rate };
            (t.task_id.clone(), ok, v)
        })
        .collect()
}
