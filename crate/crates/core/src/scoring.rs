//! Episode scores, report tables and the rule-based failure labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{ActionStatus, EpisodeLog, ParseOutcome};
use crate::protocol::{ParseFailureKind, SpatialAssignment};
use crate::simulator::{EventKind, MID_AIR_DROP};
use crate::tasks::{Coordination, TaskRegistry, TaskSpec, Tier, Tolerances};
use crate::world::{ground_truth_arm, ObjectKind, SceneState};

pub const DEFAULT_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialScoreParams {
    pub sigma: f64,
}

impl Default for SpatialScoreParams {
    fn default() -> Self {
        SpatialScoreParams { sigma: DEFAULT_SIGMA }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("no prediction for `{0}`")]
    MissingPrediction(String),
    #[error("more than one prediction for `{0}`")]
    DuplicatePrediction(String),
    #[error("sigma must be positive")]
    BadSigma,
}

/// Mean per-cube score: 100 for the right arm, otherwise
/// `100 exp(-x^2 / (2 sigma^2))` with `x` the cube's lateral offset.
pub fn spatial_score(
    predictions: &[SpatialAssignment],
    scene: &SceneState,
    params: &SpatialScoreParams,
) -> Result<f64, ScoreError> {
    if !(params.sigma > 0.0) {
        return Err(ScoreError::BadSigma);
    }
    let targets: Vec<_> = scene.objects.iter().filter(|o| o.kind == ObjectKind::Cube).collect();
    if targets.is_empty() {
        return Ok(100.0);
    }
    let mut total = 0.0;
    for t in &targets {
        let mut hits = predictions.iter().filter(|p| p.object == t.id);
        let p = hits.next().ok_or_else(|| ScoreError::MissingPrediction(t.id.clone()))?;
        if hits.next().is_some() {
            return Err(ScoreError::DuplicatePrediction(t.id.clone()));
        }
        total += if p.use_arm == ground_truth_arm(t) {
            100.0
        } else {
            let d = t.center().x.abs();
            100.0 * (-(d * d) / (2.0 * params.sigma * params.sigma)).exp()
        };
    }
    Ok(total / targets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Environmental,
    Perceptual,
    Planning,
    Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSubtype {
    StateEstimationMisjudgment,
    EndEffectorAllocation,
    PhysicalAttributeMisreasoning,
    ActionSequencing,
    BimanualConflict,
    ActionParameterInconsistency,
    FormatError,
    EnvGrasp,
    EnvRandomization,
    EnvBackend,
}

impl ErrorSubtype {
    pub fn category(self) -> ErrorCategory {
        use ErrorSubtype::*;
        match self {
            StateEstimationMisjudgment | EndEffectorAllocation | PhysicalAttributeMisreasoning => ErrorCategory::Perceptual,
            ActionSequencing | BimanualConflict | ActionParameterInconsistency => ErrorCategory::Planning,
            FormatError => ErrorCategory::Format,
            EnvGrasp | EnvRandomization | EnvBackend => ErrorCategory::Environmental,
        }
    }

    pub fn as_str(self) -> &'static str {
        use ErrorSubtype::*;
        match self {
            StateEstimationMisjudgment => "state_estimation_misjudgment",
            EndEffectorAllocation => "end_effector_allocation",
            PhysicalAttributeMisreasoning => "physical_attribute_misreasoning",
            ActionSequencing => "action_sequencing",
            BimanualConflict => "bimanual_conflict",
            ActionParameterInconsistency => "action_parameter_inconsistency",
            FormatError => "format_error",
            EnvGrasp => "env_grasp",
            EnvRandomization => "env_randomization",
            EnvBackend => "env_backend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorLabel {
    pub category: ErrorCategory,
    pub subtype: ErrorSubtype,
}

impl From<ErrorSubtype> for ErrorLabel {
    fn from(subtype: ErrorSubtype) -> Self {
        ErrorLabel { category: subtype.category(), subtype }
    }
}

/// Every ordering of `items`, in lexicographic order of positions.
pub fn permutations(items: &[String]) -> Vec<Vec<String>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

/// Whether some other assignment of the size roles would have made the
/// final state a success.
fn roles_swapped_success(task: &TaskSpec, state: &SceneState, tol: &Tolerances) -> bool {
    let keys: Vec<String> = state.roles.keys().cloned().collect();
    let ids: Vec<String> = keys.iter().map(|k| state.roles[k].clone()).collect();
    permutations(&ids).into_iter().filter(|p| p != &ids).any(|p| {
        let mut s = state.clone();
        for (k, id) in keys.iter().zip(p) {
            s.roles.insert(k.clone(), id);
        }
        task.success_predicate.evaluate(&s, tol)
    })
}

/// Labels an episode from the evidence in its log. One label per subtype.
pub fn classify_errors(log: &EpisodeLog, task: &TaskSpec, tol: &Tolerances) -> Vec<ErrorLabel> {
    use ErrorSubtype::*;
    let mut found = std::collections::BTreeSet::new();
    if log.result.scene_error.is_some() {
        found.insert(EnvRandomization);
    }
    for r in &log.rounds {
        if r.backend_error.is_some() {
            found.insert(EnvBackend);
        }
        if let ParseOutcome::Failed { failure } = &r.parse {
            found.insert(match failure.kind {
                ParseFailureKind::MalformedStructure | ParseFailureKind::MissingField | ParseFailureKind::WrongArity => FormatError,
                ParseFailureKind::BadParameter | ParseFailureKind::UnknownAction => ActionParameterInconsistency,
            });
        }
        for a in &r.actions {
            if a.unknown_actor.is_some() || a.status == ActionStatus::Rejected {
                found.insert(ActionParameterInconsistency);
            }
            if a.status == ActionStatus::FailedTruncated {
                found.insert(EndEffectorAllocation);
            }
            if a.place_without_hold {
                found.insert(ActionSequencing);
            }
            for e in &a.events {
                match e.kind {
                    EventKind::CollisionArmArm => {
                        found.insert(BimanualConflict);
                    }
                    EventKind::CollisionObject | EventKind::CollisionTable if log.header.tier == Tier::HighLevel => {
                        found.insert(ActionSequencing);
                    }
                    EventKind::Release if e.drop.is_some_and(|d| d > MID_AIR_DROP) => {
                        found.insert(ActionSequencing);
                    }
                    EventKind::GraspMiss if a.skill.as_deref() == Some("grasp_actor") => {
                        found.insert(EnvGrasp);
                    }
                    EventKind::GraspSuccess => {
                        if e.object.as_ref().is_some_and(|o| a.goal_objects_satisfied.contains(o)) {
                            found.insert(StateEstimationMisjudgment);
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    if !log.result.success && task.uses_roles() {
        if let Some(state) = &log.result.final_state {
            if roles_swapped_success(task, state, tol) {
                found.insert(PhysicalAttributeMisreasoning);
            }
        }
    }
    found.into_iter().map(ErrorLabel::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub task_id: String,
    pub seed: u64,
    pub tier: Tier,
    pub success: bool,
    pub score: f64,
    pub error_labels: Vec<ErrorLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub code: String,
    pub tier: Tier,
    pub coordination: Coordination,
    pub episodes: usize,
    pub successes: usize,
    /// Percent of episodes that succeeded.
    pub success_rate: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sigma: f64,
    pub config_hash: String,
    pub tasks: Vec<TaskSummary>,
    /// Macro average over the spatial settings present.
    pub spatial_average: Option<f64>,
    pub high_level_independent_average: Option<f64>,
    pub high_level_sequential_average: Option<f64>,
    pub high_level_total_average: Option<f64>,
    pub low_level_average: Option<f64>,
    pub label_counts: BTreeMap<String, usize>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.into_iter().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-task and grouped means, in registry order.
pub fn aggregate(scores: &[EpisodeScore], registry: &TaskRegistry, sigma: f64, config_hash: &str) -> Report {
    let mut tasks = Vec::new();
    for t in &registry.tasks {
        let eps: Vec<&EpisodeScore> = scores.iter().filter(|s| s.task_id == t.id).collect();
        if eps.is_empty() {
            continue;
        }
        let successes = eps.iter().filter(|e| e.success).count();
        tasks.push(TaskSummary {
            task_id: t.id.clone(),
            code: t.code.clone(),
            tier: t.tier,
            coordination: t.coordination,
            episodes: eps.len(),
            successes,
            success_rate: 100.0 * successes as f64 / eps.len() as f64,
            mean_score: eps.iter().map(|e| e.score).sum::<f64>() / eps.len() as f64,
        });
    }
    let by = |f: &dyn Fn(&TaskSummary) -> bool| mean(tasks.iter().filter(|t| f(t)).map(|t| t.mean_score));
    let mut label_counts = BTreeMap::new();
    for s in scores {
        for l in &s.error_labels {
            *label_counts.entry(l.subtype.as_str().to_string()).or_insert(0) += 1;
        }
    }
    Report {
        sigma,
        config_hash: config_hash.to_string(),
        spatial_average: by(&|t| t.tier == Tier::Spatial),
        high_level_independent_average: by(&|t| t.tier == Tier::HighLevel && t.coordination == Coordination::IndependentParallel),
        high_level_sequential_average: by(&|t| t.tier == Tier::HighLevel && t.coordination != Coordination::IndependentParallel),
        high_level_total_average: by(&|t| t.tier == Tier::HighLevel),
        low_level_average: by(&|t| t.tier == Tier::LowLevel),
        label_counts,
        tasks,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

impl Report {
    /// Aligned plain-text tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sigma: {}  config: {}", self.sigma, self.config_hash);
        for tier in [Tier::Spatial, Tier::HighLevel, Tier::LowLevel] {
            let rows: Vec<&TaskSummary> = self.tasks.iter().filter(|t| t.tier == tier).collect();
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n[{}]", tier.as_str());
            let _ = writeln!(out, "{:<18} {:<26} {:>8} {:>8} {:>10}", "code", "task", "episodes", "SR%", "score");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<18} {:<26} {:>8} {:>8.2} {:>10.2}",
                    r.code, r.task_id, r.episodes, r.success_rate, r.mean_score
                );
            }
            match tier {
                Tier::Spatial => {
                    let _ = writeln!(out, "average (mean of settings): {}", opt(self.spatial_average));
                }
                Tier::HighLevel => {
                    let _ = writeln!(out, "independent average: {}", opt(self.high_level_independent_average));
                    let _ = writeln!(out, "sequential average: {}", opt(self.high_level_sequential_average));
                    let _ = writeln!(out, "total average: {}", opt(self.high_level_total_average));
                }
                Tier::LowLevel => {
                    let _ = writeln!(out, "average: {}", opt(self.low_level_average));
                }
            }
        }
        if !self.label_counts.is_empty() {
            let _ = writeln!(out, "\n[error labels]");
            for (k, v) in &self.label_counts {
                let _ = writeln!(out, "{k:<34} {v:>6}");
            }
        }
        out
    }
}
