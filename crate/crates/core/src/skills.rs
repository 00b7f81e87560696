//! High-level primitives run on top of the simulator, and the reach guard
//! that refuses grasp/place calls an arm cannot finish.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{ArmCommand, LowLevelAction, Pose, Quaternion, Vec3};
use crate::simulator::{riders, step_low_level, SimConfig, SimEvent};
use crate::world::{downward_quat, reachable, ArmTag, ObjectInstance, SceneState, GRIPPER_HEIGHT_OFFSET};

const SCHEMA_JSON: &str = include_str!("../data/skills.json");

/// Height the gripper is opened to while approaching an object.
const OPEN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillName {
    GraspActor,
    PlaceActor,
    MoveByDisplacement,
    MoveToPose,
    CloseGripper,
    OpenGripper,
    BackToOrigin,
    GetArmPose,
}

impl SkillName {
    pub const ALL: [SkillName; 8] = [
        SkillName::GraspActor,
        SkillName::PlaceActor,
        SkillName::MoveByDisplacement,
        SkillName::MoveToPose,
        SkillName::CloseGripper,
        SkillName::OpenGripper,
        SkillName::BackToOrigin,
        SkillName::GetArmPose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkillName::GraspActor => "grasp_actor",
            SkillName::PlaceActor => "place_actor",
            SkillName::MoveByDisplacement => "move_by_displacement",
            SkillName::MoveToPose => "move_to_pose",
            SkillName::CloseGripper => "close_gripper",
            SkillName::OpenGripper => "open_gripper",
            SkillName::BackToOrigin => "back_to_origin",
            SkillName::GetArmPose => "get_arm_pose",
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            SkillName::GraspActor => "2.2",
            SkillName::PlaceActor => "2.3",
            SkillName::MoveByDisplacement => "2.4",
            SkillName::MoveToPose => "2.5",
            SkillName::CloseGripper => "2.6",
            SkillName::OpenGripper => "2.7",
            SkillName::BackToOrigin => "2.8",
            SkillName::GetArmPose => "2.9",
        }
    }

    pub fn parse(s: &str) -> Option<SkillName> {
        SkillName::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCall {
    pub action_id: String,
    pub action_name: SkillName,
    pub parameters: Map<String, Value>,
}

impl SkillCall {
    pub fn new(name: SkillName, parameters: Map<String, Value>) -> Self {
        SkillCall { action_id: name.id().to_string(), action_name: name, parameters }
    }

    pub fn arm(&self) -> Option<ArmTag> {
        self.parameters.get("arm_tag").and_then(Value::as_str).and_then(ArmTag::parse)
    }

    pub fn actor(&self) -> Option<&str> {
        self.parameters.get("actor").and_then(Value::as_str)
    }

    fn num(&self, key: &str) -> Option<f64> {
        self.parameters.get(key).and_then(Value::as_f64)
    }

    fn numbers(&self, key: &str) -> Option<Vec<f64>> {
        self.parameters.get(key)?.as_array()?.iter().map(Value::as_f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillStatus {
    Succeeded,
    FailedTruncated,
    FailedExecution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillOutcome {
    pub status: SkillStatus,
    pub feedback: String,
    pub events: Vec<SimEvent>,
}

impl SkillOutcome {
    fn ok(events: Vec<SimEvent>) -> Self {
        SkillOutcome { status: SkillStatus::Succeeded, feedback: "Action succeeded.".into(), events }
    }

    fn failed(detail: &str, events: Vec<SimEvent>) -> Self {
        SkillOutcome { status: SkillStatus::FailedExecution, feedback: format!("Action failed: {detail}"), events }
    }

    fn truncated(guard: String) -> Self {
        SkillOutcome { status: SkillStatus::FailedTruncated, feedback: format!("Action failed: {guard}"), events: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Arm,
    Number,
    Bool,
    Int,
    IntList,
    Pose,
    Quat,
    Vector,
    Choice,
    Axis,
    Kwargs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub default: Option<Value>,
    #[serde(default)]
    pub choices: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillSpec {
    pub id: String,
    pub name: SkillName,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl SkillSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Deserialize)]
struct SchemaDoc {
    skills: Vec<SkillSpec>,
}

/// The bundled parameter schema as published.
pub fn schema_json() -> &'static str {
    SCHEMA_JSON
}

pub fn skill_schema() -> &'static [SkillSpec] {
    static SCHEMA: OnceLock<Vec<SkillSpec>> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let doc: SchemaDoc = serde_json::from_str(SCHEMA_JSON).expect("bundled skill schema is valid");
        doc.skills
    })
}

pub fn skill_spec(name: SkillName) -> &'static SkillSpec {
    skill_schema().iter().find(|s| s.name == name).expect("every skill has a schema entry")
}

/// Keys allowed inside place_actor's `kwargs` object.
const KWARG_KEYS: [&str; 5] = ["constrain", "align_axis", "actor_axis", "actor_axis_type", "pre_dis_axis"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("action id {id} does not belong to {name}")]
    IdMismatch { id: String, name: String },
    #[error("{skill} has no parameter `{param}`")]
    UnknownParameter { skill: String, param: String },
    #[error("{skill} is missing required parameter `{param}`")]
    MissingParameter { skill: String, param: String },
    #[error("{skill} parameter `{param}` must be {expected}")]
    WrongType { skill: String, param: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkillError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("unknown actor `{0}`")]
    UnknownActor(String),
}

fn finite(v: &Value) -> bool {
    v.as_f64().is_some_and(f64::is_finite)
}

fn numeric_list(v: &Value, lens: &[usize]) -> Option<Vec<f64>> {
    let arr = v.as_array()?;
    if !lens.contains(&arr.len()) || !arr.iter().all(finite) {
        return None;
    }
    Some(arr.iter().filter_map(Value::as_f64).collect())
}

fn quat_ok(q: &[f64]) -> bool {
    Quaternion::new(q[0], q[1], q[2], q[3]).is_ok()
}

fn check_value(spec: &ParamSpec, v: &Value) -> Result<(), &'static str> {
    let ok = match spec.ty {
        ParamType::String => v.is_string(),
        ParamType::Arm => v.as_str().and_then(ArmTag::parse).is_some(),
        ParamType::Number => finite(v),
        ParamType::Bool => v.is_boolean(),
        ParamType::Int => v.is_i64() || v.is_u64(),
        ParamType::IntList => v.as_array().is_some_and(|a| a.iter().all(|x| x.is_i64() || x.is_u64())),
        ParamType::Pose => numeric_list(v, &[3, 7]).is_some_and(|p| p.len() == 3 || quat_ok(&p[3..])),
        ParamType::Quat => numeric_list(v, &[4]).is_some_and(|q| quat_ok(&q)),
        ParamType::Vector => numeric_list(v, &[3]).is_some(),
        ParamType::Choice => v.as_str().is_some_and(|s| spec.choices.iter().any(|c| c == s)),
        ParamType::Axis => v.as_str().is_some_and(|s| s == "grasp" || s == "fp") || numeric_list(v, &[3]).is_some(),
        ParamType::Kwargs => v.is_object(),
    };
    if ok {
        return Ok(());
    }
    Err(match spec.ty {
        ParamType::String => "a string",
        ParamType::Arm => "\"left\" or \"right\"",
        ParamType::Number => "a finite number",
        ParamType::Bool => "true or false",
        ParamType::Int => "an integer",
        ParamType::IntList => "a list of integers",
        ParamType::Pose => "3 or 7 finite numbers with a non-zero quaternion",
        ParamType::Quat => "4 finite numbers, not all zero",
        ParamType::Vector => "3 finite numbers",
        ParamType::Choice => "one of the listed choices",
        ParamType::Axis => "grasp, fp or 3 numbers",
        ParamType::Kwargs => "an object",
    })
}

fn check_params(spec: &SkillSpec, params: &Map<String, Value>, allowed: Option<&[&str]>) -> Result<(), SchemaError> {
    let skill = spec.name.as_str().to_string();
    for (k, v) in params {
        let p = spec
            .param(k)
            .filter(|_| allowed.is_none_or(|a| a.contains(&k.as_str())))
            .ok_or_else(|| SchemaError::UnknownParameter { skill: skill.clone(), param: k.clone() })?;
        check_value(p, v).map_err(|expected| SchemaError::WrongType {
            skill: skill.clone(),
            param: k.clone(),
            expected: expected.to_string(),
        })?;
        if p.ty == ParamType::Kwargs {
            check_params(spec, v.as_object().expect("checked"), Some(&KWARG_KEYS))?;
        }
    }
    Ok(())
}

/// Checks a call against the bundled schema.
pub fn validate_call(call: &SkillCall) -> Result<(), SchemaError> {
    let spec = skill_spec(call.action_name);
    if call.action_id != spec.id {
        return Err(SchemaError::IdMismatch { id: call.action_id.clone(), name: spec.name.as_str().into() });
    }
    check_params(spec, &call.parameters, None)?;
    for p in spec.params.iter().filter(|p| p.required) {
        if !call.parameters.contains_key(&p.name) {
            return Err(SchemaError::MissingParameter { skill: spec.name.as_str().into(), param: p.name.clone() });
        }
    }
    Ok(())
}

/// Fills in defaults for absent parameters. Supplied values are kept.
pub fn with_defaults(call: &SkillCall) -> SkillCall {
    let mut out = call.clone();
    for p in &skill_spec(call.action_name).params {
        if let Some(d) = &p.default {
            out.parameters.entry(p.name.clone()).or_insert_with(|| d.clone());
        }
    }
    out
}

/// Refuses grasp/place calls whose target the named arm cannot reach.
/// The returned text is reported to the agent verbatim.
pub fn allocation_guard(state: &SceneState, call: &SkillCall) -> Option<String> {
    let (verb, point, actor) = match call.action_name {
        SkillName::GraspActor => {
            let actor = call.actor()?;
            ("grasp", state.object(actor)?.center(), actor)
        }
        SkillName::PlaceActor => {
            let p = call.numbers("target_pose")?;
            if p.len() < 3 {
                return None;
            }
            ("place", Vec3::new(p[0], p[1], p[2]), call.actor()?)
        }
        _ => return None,
    };
    let arm = call.arm()?;
    if reachable(&state.arm_configs[arm], point) {
        return None;
    }
    Some(format!(
        "Action Failed: target {actor} is too far, {arm} arm can not finish this '{verb}' action! Please use another arm!"
    ))
}

/// Holds the other arm still while driving one arm through waypoints.
struct Exec<'a> {
    s: SceneState,
    cfg: &'a SimConfig,
    events: Vec<SimEvent>,
}

impl Exec<'_> {
    /// Returns false when the motion produced a failure event.
    fn go(&mut self, arm: ArmTag, pose: Pose, gripper: f64) -> bool {
        let idle = |s: &SceneState, t: ArmTag| ArmCommand { pose: s.arms[t].pose, gripper: s.arms[t].gripper };
        let cmd = ArmCommand { pose, gripper };
        let action = match arm {
            ArmTag::Left => LowLevelAction { left: cmd, right: idle(&self.s, ArmTag::Right) },
            ArmTag::Right => LowLevelAction { left: idle(&self.s, ArmTag::Left), right: cmd },
        };
        let (next, evs) = step_low_level(&self.s, &action, self.cfg);
        self.s = next;
        let failed = evs.iter().any(|e| e.kind.is_failure());
        self.events.extend(evs);
        !failed
    }

    fn first_failure(&self) -> String {
        self.events
            .iter()
            .find(|e| e.kind.is_failure())
            .map(|e| e.detail.clone())
            .unwrap_or_else(|| "motion was interrupted".into())
    }

    fn finish(self, ok: bool) -> (SceneState, SkillOutcome) {
        if ok {
            (self.s, SkillOutcome::ok(self.events))
        } else {
            let detail = self.first_failure();
            (self.s, SkillOutcome::failed(&detail, self.events))
        }
    }
}

/// Side-face centers for contact ids: `id % 4` maps 0:-x, 1:+x, 2:-y, 3:+y.
/// The left arm takes the candidate with the smallest x, the right arm the
/// largest.
pub fn grasp_point_for(obj: &ObjectInstance, arm: ArmTag, contact_ids: Option<&[i64]>) -> Vec3 {
    let c = obj.center();
    let h = obj.half_extents;
    let Some(ids) = contact_ids.filter(|ids| !ids.is_empty()) else { return c };
    let face = |id: i64| match id.rem_euclid(4) {
        0 => c - Vec3::new(h.x, 0.0, 0.0),
        1 => c + Vec3::new(h.x, 0.0, 0.0),
        2 => c - Vec3::new(0.0, h.y, 0.0),
        _ => c + Vec3::new(0.0, h.y, 0.0),
    };
    let mut pts: Vec<(i64, Vec3)> = ids.iter().map(|&i| (i.rem_euclid(4), face(i))).collect();
    pts.sort_by(|a, b| a.0.cmp(&b.0));
    let key = |p: &Vec3| if arm == ArmTag::Left { p.x } else { -p.x };
    pts.iter().min_by(|a, b| key(&a.1).total_cmp(&key(&b.1))).map(|p| p.1).unwrap_or(c)
}

/// Highest surface under `obj` if it were centered at `(x, y)`.
fn support_at(s: &SceneState, obj: &ObjectInstance, x: f64, y: f64) -> f64 {
    let mut skip = riders(s, &obj.id);
    skip.push(obj.id.clone());
    let mut probe = obj.clone();
    probe.pose.position = Vec3::new(x, y, obj.center().z);
    let b = probe.aabb();
    let mut best = s.table_top_z;
    for o in &s.objects {
        if skip.contains(&o.id) || s.is_held(&o.id) {
            continue;
        }
        let ob = o.aabb();
        if !ob.overlaps_xy(&b, 1e-9) {
            continue;
        }
        let surface = if o.receptacle && b.footprint_within(&ob, 1e-9) { o.floor_z() } else { o.top_z() };
        best = best.max(surface);
    }
    best
}

fn pose_quat(p: &[f64], fallback: Quaternion) -> Quaternion {
    if p.len() == 7 {
        Quaternion::new(p[3], p[4], p[5], p[6]).unwrap_or(fallback)
    } else {
        fallback
    }
}

fn fmt_pose(p: &Pose) -> String {
    let v: Vec<String> = p.to_array().iter().map(|x| format!("{x:.5}")).collect();
    format!("[{}]", v.join(", "))
}

/// Runs one primitive. Calls refused by the reach guard leave the state
/// untouched and come back as `FailedTruncated`.
pub fn execute_skill(
    state: &SceneState,
    call: &SkillCall,
    cfg: &SimConfig,
) -> Result<(SceneState, SkillOutcome), SkillError> {
    validate_call(call)?;
    let call = with_defaults(call);
    if let Some(actor) = call.actor() {
        if state.object(actor).is_none() {
            return Err(SkillError::UnknownActor(actor.to_string()));
        }
    }
    if let Some(msg) = allocation_guard(state, &call) {
        return Ok((state.clone(), SkillOutcome::truncated(msg)));
    }
    let arm = call.arm().expect("validated");
    let num = |k: &str| call.num(k).expect("validated with defaults");
    let mut ex = Exec { s: state.clone(), cfg, events: Vec::new() };
    let here = ex.s.arms[arm].pose;
    let grip = ex.s.arms[arm].gripper;
    let lift = Vec3::new(0.0, 0.0, GRIPPER_HEIGHT_OFFSET);

    match call.action_name {
        SkillName::GraspActor => {
            let actor = call.actor().expect("validated");
            match ex.s.arms[arm].attached_object.as_deref() {
                Some(a) if a == actor => return Ok((ex.s, SkillOutcome::ok(Vec::new()))),
                Some(other) => {
                    let msg = format!("{arm} arm is already holding {other}");
                    return Ok((ex.s, SkillOutcome::failed(&msg, Vec::new())));
                }
                None => {}
            }
            let obj = ex.s.object(actor).expect("checked").clone();
            let ids: Option<Vec<i64>> = call
                .parameters
                .get("contact_point_id")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_i64).collect());
            let gp = grasp_point_for(&obj, arm, ids.as_deref());
            let q = obj.grasp_quat();
            let hover = Vec3::new(0.0, 0.0, num("grasp_dis"));
            let pre = gp + lift + hover + Vec3::new(0.0, 0.0, num("pre_grasp_dis"));
            let ok = ex.go(arm, Pose::new(pre, q), OPEN)
                && ex.go(arm, Pose::new(gp + lift + hover, q), OPEN)
                && ex.go(arm, Pose::new(gp + lift + hover, q), num("gripper_pos").clamp(0.0, 1.0));
            if !ok {
                return Ok(ex.finish(false));
            }
            match ex.s.arms[arm].attached_object.clone() {
                Some(a) if a == actor => Ok(ex.finish(true)),
                Some(a) => {
                    let msg = format!("{arm} arm grasped {a} instead of {actor}");
                    Ok((ex.s, SkillOutcome::failed(&msg, ex.events)))
                }
                None => {
                    let msg = format!("{arm} gripper did not close on {actor}");
                    Ok((ex.s, SkillOutcome::failed(&msg, ex.events)))
                }
            }
        }
        SkillName::PlaceActor => {
            let actor = call.actor().expect("validated");
            if ex.s.arms[arm].attached_object.as_deref() != Some(actor) {
                let msg = format!("{arm} arm is not holding {actor}");
                return Ok((ex.s, SkillOutcome::failed(&msg, Vec::new())));
            }
            let obj = ex.s.object(actor).expect("checked").clone();
            let off = ex.s.arms[arm].attach_offset.unwrap_or(Vec3::ZERO);
            let tp = call.numbers("target_pose").expect("validated");
            let q = pose_quat(&tp, downward_quat());
            let support = support_at(&ex.s, &obj, tp[0], tp[1]);
            let final_z = (tp[2] + num("dis")).max(support + obj.half_extents.z);
            let pre_z = (tp[2] + num("pre_dis")).max(final_z);
            let arm_at = |z: f64| Vec3::new(tp[0], tp[1], z) - off + lift;
            let mut ok = ex.go(arm, Pose::new(arm_at(pre_z), q), grip) && ex.go(arm, Pose::new(arm_at(final_z), q), grip);
            if ok && call.parameters.get("is_open").and_then(Value::as_bool).unwrap_or(true) {
                ok = ex.go(arm, Pose::new(arm_at(final_z), q), OPEN);
            }
            Ok(ex.finish(ok))
        }
        SkillName::MoveByDisplacement => {
            let mut d = Vec3::new(num("x"), num("y"), num("z"));
            if call.parameters.get("move_axis").and_then(Value::as_str) == Some("arm") {
                d = here.orientation.rotate(d);
            }
            let q = call
                .numbers("quat")
                .and_then(|q| Quaternion::new(q[0], q[1], q[2], q[3]).ok())
                .unwrap_or(here.orientation);
            let ok = ex.go(arm, Pose::new(here.position + d, q), grip);
            Ok(ex.finish(ok))
        }
        SkillName::MoveToPose => {
            let tp = call.numbers("target_pose").expect("validated");
            let q = pose_quat(&tp, here.orientation);
            let ok = ex.go(arm, Pose::new(Vec3::new(tp[0], tp[1], tp[2]), q), grip);
            Ok(ex.finish(ok))
        }
        SkillName::CloseGripper | SkillName::OpenGripper => {
            let ok = ex.go(arm, here, num("pos").clamp(0.0, 1.0));
            Ok(ex.finish(ok))
        }
        SkillName::BackToOrigin => {
            let origin = ex.s.arm_configs[arm].base_origin;
            let ok = ex.go(arm, origin, grip);
            Ok(ex.finish(ok))
        }
        SkillName::GetArmPose => {
            let feedback = format!("Action succeeded. {arm} arm pose is {}", fmt_pose(&here));
            Ok((ex.s, SkillOutcome { status: SkillStatus::Succeeded, feedback, events: Vec::new() }))
        }
    }
}
