//! Scripted solvers that read the true scene and emit plans in the wire
//! format. Each round they re-plan from the current state, dry-run their own
//! macros in the simulator and keep only whole macros that fit the chunk.

use serde_json::{json, Map, Value};

use super::BackendError;
use crate::geometry::{encode_action, ArmCommand, LowLevelAction, Pose, Quaternion, Vec3};
use crate::protocol::{py_float, ExecutablePlan, PlanRecord, RawAction, SpatialAssignment};
use crate::simulator::{riders, step_low_level, SimConfig};
use crate::skills::{execute_skill, SkillCall, SkillName, SkillStatus};
use crate::tasks::{TaskSpec, Tier};
use crate::world::{downward_quat, ground_truth_arm, reachable, ArmTag, ObjectKind, SceneState, GRIPPER_HEIGHT_OFFSET};

const G: f64 = GRIPPER_HEIGHT_OFFSET;
/// Clearance kept between a carried object and everything else.
const CLEAR: f64 = 0.02;
const HANDOVER_MIN_Z: f64 = 0.9;
const SETTLED: f64 = 1e-3;
pub const IDEAL_BOTTOM_Z: f64 = 0.7244852714832615;
pub const IDEAL_TOP_Z: f64 = 0.7744852714832615;

#[derive(Debug, Clone, PartialEq)]
enum Dest {
    /// On the table, centered on a named target.
    Table(&'static str),
    OnTop(String),
    /// Inside a receptacle, offset along x from its center.
    Inside(String, f64),
}

#[derive(Debug, Clone)]
struct Goal {
    object: String,
    dest: Dest,
    /// Grip a side face instead of the center.
    side_grip: bool,
    /// Commanded center height overriding the resting height (tier 3).
    command_z: Option<f64>,
}

impl Goal {
    fn new(object: impl Into<String>, dest: Dest) -> Self {
        Goal { object: object.into(), dest, side_grip: false, command_z: None }
    }
}

fn resting_center(s: &SceneState, g: &Goal) -> Option<Vec3> {
    let o = s.object(&g.object)?;
    let hz = o.half_extents.z;
    Some(match &g.dest {
        Dest::Table(t) => {
            let p = s.targets.get(*t)?;
            Vec3::new(p.x, p.y, s.table_top_z + hz)
        }
        Dest::OnTop(b) => {
            let b = s.object(b)?;
            Vec3::new(b.center().x, b.center().y, b.top_z() + hz)
        }
        Dest::Inside(c, dx) => {
            let c = s.object(c)?;
            Vec3::new(c.center().x + dx, c.center().y, c.floor_z() + hz)
        }
    })
}

fn satisfied(s: &SceneState, g: &Goal) -> bool {
    let (Some(o), Some(e)) = (s.object(&g.object), resting_center(s, g)) else { return false };
    !s.is_held(&g.object) && (o.center() - e).norm() <= SETTLED
}

fn goals(task: &TaskSpec, s: &SceneState) -> Vec<Goal> {
    let role = |r: &str| s.resolve(r).to_string();
    let table = |o: &str, t: &'static str| Goal::new(o, Dest::Table(t));
    let on = |o: String, b: String| Goal::new(o, Dest::OnTop(b));
    let inside = |o: &str, c: &str, dx: f64| Goal::new(o, Dest::Inside(c.into(), dx));
    match task.id.as_str() {
        "place_cans_plasticbox" => vec![inside("can1", "plasticbox", -0.045), inside("can2", "plasticbox", 0.045)],
        "blocks_cross_shape" => ["red", "black", "blue", "green", "yellow"]
            .iter()
            .map(|c| {
                let slot: &'static str = match *c {
                    "red" => "slot_red",
                    "black" => "slot_black",
                    "blue" => "slot_blue",
                    "green" => "slot_green",
                    _ => "slot_yellow",
                };
                table(&format!("{c}_block"), slot)
            })
            .collect(),
        "blocks_ranking_rgb" => vec![
            table("red_block", "slot_red"),
            table("green_block", "slot_green"),
            table("blue_block", "slot_blue"),
        ],
        "blocks_ranking_size" => vec![
            table(&role("$largest"), "slot1"),
            table(&role("$middle"), "slot2"),
            table(&role("$smallest"), "slot3"),
        ],
        "stack_blocks_three" => vec![
            table("red_block", "center"),
            on("green_block".into(), "red_block".into()),
            on("blue_block".into(), "green_block".into()),
        ],
        "stack_bowls_three" => vec![
            table("bowl1", "center"),
            on("bowl2".into(), "bowl1".into()),
            on("bowl3".into(), "bowl2".into()),
        ],
        "blocks_tower" => vec![
            table(&role("$size1"), "center"),
            on(role("$size2"), role("$size1")),
            on(role("$size3"), role("$size2")),
            on(role("$size4"), role("$size3")),
        ],
        "place_burger_fries" | "place_burger_fries_ll" => {
            vec![inside("burger", "tray", -0.05), inside("fries", "tray", 0.05)]
        }
        "place_object_basket" => {
            let mut basket = table("basket", "basket_goal");
            basket.side_grip = true;
            vec![inside("toy", "basket", 0.0), basket]
        }
        "place_bread_skillet" => vec![inside("bread", "skillet", 0.0)],
        "put_bottles_dustbin" => vec![
            inside("bottle1", "dustbin", -0.045),
            inside("bottle2", "dustbin", 0.0),
            inside("bottle3", "dustbin", 0.045),
        ],
        "place_object_scale" => vec![on("object".into(), "scale".into())],
        "place_bread_skillet_ll" => vec![table("skillet", "center"), inside("bread", "skillet", 0.0)],
        "stack_blocks_two" => {
            let mut bottom = table("block1", "center");
            bottom.command_z = Some(IDEAL_BOTTOM_Z);
            let mut top = on("block2".into(), "block1".into());
            top.command_z = Some(IDEAL_TOP_Z);
            vec![bottom, top]
        }
        _ => Vec::new(),
    }
}

/// Height the bottom of a carried object must clear: the tallest free
/// object that is not moving with it, plus a margin.
fn clearance(s: &SceneState, carried: &str) -> f64 {
    let mut skip = riders(s, carried);
    skip.push(carried.to_string());
    s.objects
        .iter()
        .filter(|o| !skip.contains(&o.id) && !s.is_held(&o.id))
        .map(|o| o.top_z())
        .fold(s.table_top_z, f64::max)
        + CLEAR
}

fn params(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn call(name: SkillName, v: Value) -> SkillCall {
    SkillCall::new(name, params(v))
}

fn r6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn pose7(p: Vec3, q: Quaternion) -> Value {
    let q = q.to_array();
    json!([r6(p.x), r6(p.y), r6(p.z), q[0], q[1], q[2], q[3]])
}

/// Where an object ends up, and which arm should take it there.
struct Leg {
    arm: ArmTag,
    center: Vec3,
    relay: bool,
}

fn leg(s: &SceneState, g: &Goal) -> Option<Leg> {
    let o = s.object(&g.object)?;
    let arm = s.holders(&g.object).first().copied().unwrap_or_else(|| ground_truth_arm(o));
    let center = resting_center(s, g)?;
    if reachable(&s.arm_configs[arm], center) {
        return Some(Leg { arm, center, relay: false });
    }
    let r = s.targets.get("relay")?;
    Some(Leg { arm, center: Vec3::new(r.x, r.y, s.table_top_z + o.half_extents.z), relay: true })
}

fn grasp_call(arm: ArmTag, id: &str, side: bool, pre: f64) -> SkillCall {
    let mut v = json!({"actor": id, "arm_tag": arm.as_str(), "pre_grasp_dis": pre, "grasp_dis": 0.0});
    if side {
        v["contact_point_id"] = json!([0, 1, 2, 3]);
    }
    call(SkillName::GraspActor, v)
}

fn lift_call(arm: ArmTag, dz: f64) -> SkillCall {
    call(SkillName::MoveByDisplacement, json!({"arm_tag": arm.as_str(), "z": r6(dz), "move_axis": "world"}))
}

fn origin_call(arm: ArmTag) -> SkillCall {
    call(SkillName::BackToOrigin, json!({"arm_tag": arm.as_str()}))
}

/// Bottom height of `id` once the grasp has happened, assuming it has not
/// moved yet.
fn lift_for(s: &SceneState, id: &str) -> f64 {
    let o = s.object(id).expect("goal object exists");
    (clearance(s, id) - o.bottom_z()).max(0.05)
}

fn place_call(s: &SceneState, arm: ArmTag, id: &str, center: Vec3, is_open: bool, pre_dis: Option<f64>) -> SkillCall {
    let o = s.object(id).expect("goal object exists");
    let pre = pre_dis.unwrap_or_else(|| (clearance(s, id) + o.half_extents.z - center.z + 0.01).max(0.1));
    call(
        SkillName::PlaceActor,
        json!({
            "actor": id,
            "arm_tag": arm.as_str(),
            "target_pose": pose7(center, downward_quat()),
            "functional_point_id": 0,
            "pre_dis": r6(pre),
            "dis": 0.0,
            "is_open": is_open,
            "constrain": "align",
        }),
    )
}

fn pick_place(s: &SceneState, g: &Goal, l: &Leg) -> Vec<SkillCall> {
    vec![
        grasp_call(l.arm, &g.object, g.side_grip, 0.1),
        lift_call(l.arm, lift_for(s, &g.object)),
        place_call(s, l.arm, &g.object, l.center, true, None),
        lift_call(l.arm, 0.1),
        origin_call(l.arm),
    ]
}

/// Giver lifts the object to a mid-air point, the receiver takes it by the
/// facing side and the giver backs off. Optionally the receiver then sets
/// it down on `dest`.
fn handover(s: &SceneState, id: &str, giver: ArmTag, dest: Option<&Goal>) -> Vec<SkillCall> {
    let o = s.object(id).expect("handover object exists");
    let receiver = giver.other();
    let h = s.targets.get("handover").copied().unwrap_or(Vec3::ZERO);
    let z = HANDOVER_MIN_Z.max(clearance(s, id) + o.half_extents.z);
    let mut out = vec![
        grasp_call(giver, id, true, 0.1),
        lift_call(giver, lift_for(s, id)),
        place_call(s, giver, id, Vec3::new(h.x, h.y, z), false, Some(0.0)),
        grasp_call(receiver, id, true, 0.07),
        call(SkillName::OpenGripper, json!({"arm_tag": giver.as_str()})),
        lift_call(giver, 0.06),
        origin_call(giver),
    ];
    if let Some(g) = dest {
        let center = resting_center(s, g).expect("destination exists");
        out.push(place_call(s, receiver, id, center, true, None));
        out.push(lift_call(receiver, 0.1));
        out.push(origin_call(receiver));
    }
    out
}

fn next_skill_macro(task: &TaskSpec, s: &SceneState) -> Option<Vec<SkillCall>> {
    match task.id.as_str() {
        "handover_mic" => {
            let done = s.hold_history.contains(&("mic".to_string(), ArmTag::Right))
                && s.holders("mic") == vec![ArmTag::Left];
            (!done).then(|| handover(s, "mic", ArmTag::Right, None))
        }
        "handover_block" | "hanging_mug" => {
            let (id, base) = if task.id == "handover_block" { ("block", "pad") } else { ("mug", "rack") };
            let g = Goal::new(id, Dest::OnTop(base.into()));
            let both = ArmTag::BOTH.iter().all(|&a| s.hold_history.contains(&(id.to_string(), a)));
            if both && satisfied(s, &g) {
                return None;
            }
            let holders = s.holders(id);
            if both || holders == vec![ArmTag::Right] {
                let l = Leg { arm: ArmTag::Right, center: resting_center(s, &g)?, relay: false };
                return Some(pick_place(s, &g, &l));
            }
            Some(handover(s, id, ArmTag::Left, Some(&g)))
        }
        _ => {
            let g = goals(task, s).into_iter().find(|g| !satisfied(s, g))?;
            let l = leg(s, &g)?;
            Some(pick_place(s, &g, &l))
        }
    }
}

fn run_skills(s: &SceneState, calls: &[SkillCall], cfg: &SimConfig) -> (SceneState, bool) {
    let mut s = s.clone();
    for c in calls {
        match execute_skill(&s, c, cfg) {
            Ok((next, out)) => {
                s = next;
                s.step_index += 1;
                if out.status != SkillStatus::Succeeded {
                    return (s, false);
                }
            }
            Err(_) => return (s, false),
        }
    }
    (s, true)
}

// Low-level plans.

fn hold(s: &SceneState, arm: ArmTag) -> ArmCommand {
    ArmCommand { pose: s.arms[arm].pose, gripper: s.arms[arm].gripper }
}

fn with_arm(s: &SceneState, arm: ArmTag, cmd: ArmCommand) -> LowLevelAction {
    let mut a = LowLevelAction { left: hold(s, ArmTag::Left), right: hold(s, ArmTag::Right) };
    match arm {
        ArmTag::Left => a.left = cmd,
        ArmTag::Right => a.right = cmd,
    }
    a
}

fn raw_action(a: &LowLevelAction) -> RawAction {
    let values = encode_action(a);
    let text: Vec<String> = values.iter().map(|&v| py_float(v)).collect();
    RawAction { raw: format!("[{}]", text.join(", ")), values: values.to_vec() }
}

/// Steps a sequence of single-arm commands, each built from the state the
/// previous one left behind.
struct LowPlan<'a> {
    s: SceneState,
    cfg: &'a SimConfig,
    out: Vec<RawAction>,
}

impl<'a> LowPlan<'a> {
    fn new(s: &SceneState, cfg: &'a SimConfig) -> Self {
        LowPlan { s: s.clone(), cfg, out: Vec::new() }
    }

    fn push(&mut self, a: LowLevelAction) {
        let raw = raw_action(&a);
        self.s = step_low_level(&self.s, &raw.action(), self.cfg).0;
        self.s.step_index += 1;
        self.out.push(raw);
    }

    fn arm(&mut self, arm: ArmTag, p: Vec3, q: Quaternion, gripper: f64) {
        let a = with_arm(&self.s, arm, ArmCommand { pose: Pose::new(p, q), gripper });
        self.push(a);
    }
}

fn low_pick_place(s: &SceneState, g: &Goal, l: &Leg, cfg: &SimConfig) -> (Vec<RawAction>, SceneState) {
    let o = s.object(&g.object).expect("goal object exists");
    let c = o.center();
    let q = o.grasp_quat();
    let down = downward_quat();
    let travel = clearance(s, &g.object) + o.half_extents.z + 0.01;
    let target_z = if l.relay { l.center.z } else { g.command_z.unwrap_or(l.center.z) };
    let mut p = LowPlan::new(s, cfg);
    let arm = l.arm;
    p.arm(arm, Vec3::new(c.x, c.y, (c.z + G + 0.1).max(1.0)), q, 1.0);
    p.arm(arm, Vec3::new(c.x, c.y, c.z + G), q, 1.0);
    p.arm(arm, Vec3::new(c.x, c.y, c.z + G), q, 0.0);
    p.arm(arm, Vec3::new(c.x, c.y, travel + G), q, 0.0);
    p.arm(arm, Vec3::new(l.center.x, l.center.y, travel + G), down, 0.0);
    p.arm(arm, Vec3::new(l.center.x, l.center.y, target_z + G), down, 0.0);
    p.arm(arm, Vec3::new(l.center.x, l.center.y, target_z + G), down, 1.0);
    p.arm(arm, Vec3::new(l.center.x, l.center.y, travel + G), down, 1.0);
    let origin = s.arm_configs[arm].base_origin;
    p.arm(arm, origin.position, origin.orientation, 1.0);
    (p.out, p.s)
}

fn roller_plan(s: &SceneState, cfg: &SimConfig) -> Option<(Vec<RawAction>, SceneState)> {
    let r = s.object("roller")?;
    if s.joint.is_some() {
        return None;
    }
    let c = r.center();
    let q = downward_quat();
    let ends = [Vec3::new(c.x - 0.15, c.y, c.z), Vec3::new(c.x + 0.15, c.y, c.z)];
    let mut p = LowPlan::new(s, cfg);
    let both = |p: &mut LowPlan, dz: f64, gripper: f64| {
        let cmd = |e: Vec3| ArmCommand { pose: Pose::new(Vec3::new(e.x, e.y, e.z + G + dz), q), gripper };
        p.push(LowLevelAction { left: cmd(ends[0]), right: cmd(ends[1]) });
    };
    both(&mut p, 0.1, 1.0);
    both(&mut p, 0.0, 1.0);
    both(&mut p, 0.0, 0.0);
    both(&mut p, 0.15, 0.0);
    Some((p.out, p.s))
}

fn next_low_macro(task: &TaskSpec, s: &SceneState, cfg: &SimConfig) -> Option<(Vec<RawAction>, SceneState)> {
    if task.id == "grab_roller" {
        return roller_plan(s, cfg);
    }
    let g = goals(task, s).into_iter().find(|g| !satisfied(s, g))?;
    let l = leg(s, &g)?;
    Some(low_pick_place(s, &g, &l, cfg))
}

fn spatial_plan(s: &SceneState) -> Vec<SpatialAssignment> {
    s.objects
        .iter()
        .filter(|o| o.kind == ObjectKind::Cube)
        .map(|o| SpatialAssignment { object: o.id.clone(), use_arm: ground_truth_arm(o) })
        .collect()
}

fn describe(s: &SceneState) -> String {
    let parts: Vec<String> = s
        .objects
        .iter()
        .map(|o| {
            let c = o.center();
            format!("{} at ({:.3}, {:.3}, {:.3})", o.id, c.x, c.y, c.z)
        })
        .collect();
    parts.join("; ")
}

/// Plan for the current round. Fails only for tasks it has no script for.
pub fn oracle_propose(task: &TaskSpec, state: &SceneState, cfg: &SimConfig) -> Result<PlanRecord, BackendError> {
    let unsupported = || BackendError::UnsupportedTask(task.id.clone());
    let k = task.max_chunk_size.max(1);
    let visual = describe(state);
    let (plan, language) = match task.tier {
        Tier::Spatial => (ExecutablePlan::Spatial(spatial_plan(state)), "Assign each cube to the arm on its side.".to_string()),
        Tier::HighLevel => {
            if goals(task, state).is_empty() && !matches!(task.id.as_str(), "handover_mic" | "handover_block" | "hanging_mug") {
                return Err(unsupported());
            }
            let mut s = state.clone();
            let mut calls: Vec<SkillCall> = Vec::new();
            while let Some(m) = next_skill_macro(task, &s) {
                if calls.len() + m.len() > k {
                    break;
                }
                let (next, ok) = run_skills(&s, &m, cfg);
                calls.extend(m);
                s = next;
                if !ok {
                    break;
                }
            }
            let steps: Vec<String> = calls.iter().map(|c| c.action_name.as_str().to_string()).collect();
            (ExecutablePlan::Skills(calls), steps.join(", "))
        }
        Tier::LowLevel => {
            if task.id != "grab_roller" && goals(task, state).is_empty() {
                return Err(unsupported());
            }
            let mut s = state.clone();
            let mut acts: Vec<RawAction> = Vec::new();
            while let Some((m, next)) = next_low_macro(task, &s, cfg) {
                if acts.len() + m.len() > k {
                    break;
                }
                acts.extend(m);
                s = next;
            }
            let n = acts.len();
            (ExecutablePlan::Actions(acts), format!("{n} end-effector targets"))
        }
    };
    Ok(PlanRecord {
        visual_state_description: visual,
        reasoning_and_reflection: "Each object is handled by the arm on its side; carried objects travel above everything else.".into(),
        language_plan: language,
        executable_plan: plan,
    })
}
