//! Policy backends. Every backend turns one planning round into raw text;
//! the runner parses it exactly as it would parse a model reply.

pub mod oracle;
pub mod remote;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{render_plan, Prompt};
use crate::render::ViewKind;
use crate::simulator::SimConfig;
use crate::tasks::{TaskSpec, Tier};
use crate::world::{ArmTag, ObjectKind, SceneState};

pub use oracle::oracle_propose;
pub use remote::{RemoteModelConfig, RemotePolicy, Semaphore};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("credential was rejected (HTTP {0})")]
    AuthFailure(u16),
    #[error("rate limited after retries")]
    RateLimited,
    #[error("environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("HTTP {0}")]
    Http(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("response did not contain a message: {0}")]
    BadResponse(String),
    #[error("no recorded output for round {0}")]
    RecordingExhausted(usize),
    #[error("no policy available for task `{0}`")]
    UnsupportedTask(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub name: String,
    pub view: ViewKind,
    pub png: Vec<u8>,
}

/// Everything a policy may look at in one round.
pub struct Turn<'a> {
    pub task: &'a TaskSpec,
    pub state: &'a SceneState,
    pub prompt: &'a Prompt,
    pub observations: &'a [Observation],
    pub round: usize,
}

pub trait Policy: Send {
    fn name(&self) -> String;

    /// Called before each episode. Clears any per-episode memory.
    fn begin_episode(&mut self, _task: &TaskSpec, _seed: u64) {}

    /// Whether the runner should render images for this policy.
    fn needs_observations(&self) -> bool {
        false
    }

    fn propose(&mut self, turn: &Turn<'_>) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Default)]
pub struct OraclePolicy {
    pub sim: SimConfig,
}

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn propose(&mut self, turn: &Turn<'_>) -> Result<String, BackendError> {
        oracle_propose(turn.task, turn.state, &self.sim).map(|r| render_plan(&r))
    }
}

/// Picks an arm uniformly at random for every tier-one cube.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    base_seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(base_seed: u64) -> Self {
        RandomPolicy { base_seed, rng: ChaCha8Rng::seed_from_u64(base_seed) }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn begin_episode(&mut self, _task: &TaskSpec, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.base_seed ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }

    fn propose(&mut self, turn: &Turn<'_>) -> Result<String, BackendError> {
        if turn.task.tier != Tier::Spatial {
            return Err(BackendError::UnsupportedTask(turn.task.id.clone()));
        }
        let results: Vec<serde_json::Value> = turn
            .state
            .objects
            .iter()
            .filter(|o| o.kind == ObjectKind::Cube)
            .map(|o| {
                let arm = if self.rng.random_bool(0.5) { ArmTag::Left } else { ArmTag::Right };
                serde_json::json!({"object": o.id, "use_arm": arm.as_str()})
            })
            .collect();
        Ok(serde_json::json!({"visual_state_description": "", "results": results}).to_string())
    }
}

/// One round of a recording: what the backend returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub round: usize,
    pub output: Result<String, BackendError>,
}

pub fn recording_path(root: &Path, task_id: &str, seed: u64) -> PathBuf {
    root.join(task_id).join(format!("{seed}.rec.jsonl"))
}

pub fn read_recording(path: &Path) -> std::io::Result<Vec<RecordEntry>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}

/// Plays back recorded outputs.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    root: Option<PathBuf>,
    entries: Vec<RecordEntry>,
}

impl ReplayPolicy {
    /// Loads `{root}/{task}/{seed}.rec.jsonl` at the start of each episode.
    pub fn from_dir(root: impl Into<PathBuf>) -> Self {
        ReplayPolicy { root: Some(root.into()), entries: Vec::new() }
    }

    /// A fixed list of outputs, one per round.
    pub fn from_outputs(outputs: Vec<String>) -> Self {
        let entries = outputs.into_iter().enumerate().map(|(round, o)| RecordEntry { round, output: Ok(o) }).collect();
        ReplayPolicy { root: None, entries }
    }

    pub fn from_entries(entries: Vec<RecordEntry>) -> Self {
        ReplayPolicy { root: None, entries }
    }
}

impl Policy for ReplayPolicy {
    fn name(&self) -> String {
        "replay".into()
    }

    fn begin_episode(&mut self, task: &TaskSpec, seed: u64) {
        if let Some(root) = &self.root {
            self.entries = read_recording(&recording_path(root, &task.id, seed)).unwrap_or_default();
        }
    }

    fn propose(&mut self, turn: &Turn<'_>) -> Result<String, BackendError> {
        self.entries
            .iter()
            .find(|e| e.round == turn.round)
            .map(|e| e.output.clone())
            .unwrap_or(Err(BackendError::RecordingExhausted(turn.round)))
    }
}

/// Which backend a run uses. Builds one policy per episode.
#[derive(Debug, Clone)]
pub enum BackendChoice {
    Oracle,
    Random { seed: u64 },
    Replay { dir: PathBuf },
    Remote { config: RemoteModelConfig, limiter: Arc<Semaphore> },
}

impl BackendChoice {
    pub fn remote(config: RemoteModelConfig) -> Self {
        let limiter = Arc::new(Semaphore::new(config.max_in_flight.max(1)));
        BackendChoice::Remote { config, limiter }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackendChoice::Oracle => "oracle",
            BackendChoice::Random { .. } => "random",
            BackendChoice::Replay { .. } => "replay",
            BackendChoice::Remote { .. } => "remote",
        }
    }

    pub fn build(&self, sim: &SimConfig) -> Result<Box<dyn Policy>, BackendError> {
        Ok(match self {
            BackendChoice::Oracle => Box::new(OraclePolicy { sim: *sim }),
            BackendChoice::Random { seed } => Box::new(RandomPolicy::new(*seed)),
            BackendChoice::Replay { dir } => Box::new(ReplayPolicy::from_dir(dir.clone())),
            BackendChoice::Remote { config, limiter } => Box::new(RemotePolicy::new(config.clone(), limiter.clone())?),
        })
    }
}
