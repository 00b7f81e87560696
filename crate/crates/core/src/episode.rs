//! Records written for every episode. One JSON line per record.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::protocol::{Leniency, ParseFailure, SpatialAssignment};
use crate::simulator::SimEvent;
use crate::tasks::Tier;
use crate::world::{ArmTag, SceneState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub task_id: String,
    pub tier: Tier,
    pub seed: u64,
    pub backend: String,
    pub config_hash: String,
    /// Hash of the initial scene, or empty when the scene could not be built.
    pub scene_hash: String,
    pub sigma: f64,
    /// Wall-clock start in seconds since the epoch. Not part of any hash.
    #[serde(default)]
    pub started_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Succeeded,
    FailedTruncated,
    FailedExecution,
    Skipped,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLog {
    pub index: usize,
    /// The entry as the agent wrote it.
    pub entry: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<ArmTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    pub status: ActionStatus,
    pub feedback: String,
    #[serde(default)]
    pub events: Vec<SimEvent>,
    /// Set when the call named an object that does not exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unknown_actor: Option<String>,
    /// Set when a place was attempted by an arm not holding the actor.
    #[serde(default)]
    pub place_without_hold: bool,
    /// Objects already meeting their goal before this action ran.
    #[serde(default)]
    pub goal_objects_satisfied: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ParseOutcome {
    Parsed { leniency: Vec<Leniency>, planned: usize, executed: usize, dropped: usize },
    Failed { failure: ParseFailure },
    NoOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub prompt_sha256: String,
    /// File names of the images sent with the prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    pub parse: ParseOutcome,
    #[serde(default)]
    pub actions: Vec<ActionLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
    pub success_after: bool,
    pub state_hash_after: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    RoundsExhausted,
    Answered,
    BackendError,
    SceneError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub score: f64,
    pub termination: Termination,
    pub rounds_used: usize,
    pub error_labels: Vec<crate::scoring::ErrorLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_predictions: Option<Vec<SpatialAssignment>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_state: Option<SceneState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub rounds: Vec<RoundLog>,
    pub result: EpisodeResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "record")]
pub enum LogLine {
    Header(EpisodeHeader),
    Round(RoundLog),
    Result(EpisodeResult),
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = std::iter::once(LogLine::Header(self.header.clone()))
            .chain(self.rounds.iter().cloned().map(LogLine::Round))
            .chain(std::iter::once(LogLine::Result(self.result.clone())));
        for l in lines {
            out.push_str(&serde_json::to_string(&l).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EpisodeLog, String> {
        let mut header = None;
        let mut rounds = Vec::new();
        let mut result = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<LogLine>(line).map_err(|e| format!("line {}: {e}", i + 1))? {
                LogLine::Header(h) => header = Some(h),
                LogLine::Round(r) => rounds.push(r),
                LogLine::Result(r) => result = Some(r),
            }
        }
        Ok(EpisodeLog {
            header: header.ok_or("log has no header line")?,
            rounds,
            result: result.ok_or("log has no result line")?,
        })
    }

    /// sha256 over the log with timestamps zeroed.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut copy = self.clone();
        copy.header.started_at = 0.0;
        hex::encode(Sha256::digest(copy.to_jsonl().as_bytes()))
    }
}
