//! Kinematic stepping of the two arms, grasp attachment and contact events.
//!
//! There are no dynamics. Arms move in straight lines toward their commanded
//! poses; held objects follow their arm, and anything resting on or inside a
//! held object follows it too. Contacts stop motion at the moment of impact.
//! The caller owns `step_index` and advances it once per protocol action.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, LowLevelAction, Pose, Quaternion, Vec3};
use crate::world::{ArmTag, JointHold, ObjectInstance, SceneState};

/// Penetration allowed before two boxes count as overlapping.
const CONTACT_EPS: f64 = 1e-9;
/// Obstacles already overlapping a mover this deeply are ignored so it can
/// move free.
const STUCK_EPS: f64 = 1e-6;
const RIDER_GAP: f64 = 2e-3;
/// Drops longer than this count as a release in mid-air.
pub const MID_AIR_DROP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub max_translation_per_substep: f64,
    pub max_rotation_per_substep: f64,
    pub substeps_per_action: usize,
}

impl Default for MotionLimits {
    fn default() -> Self {
        MotionLimits { max_translation_per_substep: 0.02, max_rotation_per_substep: 0.1, substeps_per_action: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub limits: MotionLimits,
    pub grasp_tolerance: f64,
    pub close_threshold: f64,
    /// Radius of the sphere around each end-effector used for arm-arm checks.
    pub r_ee: f64,
    /// How far the grasp points of a two-arm hold may drift apart before the
    /// grip breaks.
    pub joint_slack: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            limits: MotionLimits::default(),
            grasp_tolerance: 0.03,
            close_threshold: 0.5,
            r_ee: 0.05,
            joint_slack: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CollisionArmArm,
    CollisionTable,
    CollisionObject,
    GraspSuccess,
    GraspMiss,
    Release,
    UnreachableTarget,
}

impl EventKind {
    /// Events that make a low-level action or a skill count as failed.
    pub fn is_failure(self) -> bool {
        matches!(
            self,
            EventKind::CollisionArmArm
                | EventKind::CollisionTable
                | EventKind::CollisionObject
                | EventKind::GraspMiss
                | EventKind::UnreachableTarget
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub kind: EventKind,
    pub step: u64,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<ArmTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// Vertical settling distance, for release events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop: Option<f64>,
}

impl SimEvent {
    fn new(kind: EventKind, step: u64, detail: String) -> Self {
        SimEvent { kind, step, detail, arm: None, object: None, drop: None }
    }

    fn arm(mut self, arm: ArmTag) -> Self {
        self.arm = Some(arm);
        self
    }

    fn object(mut self, id: &str) -> Self {
        self.object = Some(id.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{0} arm is already holding `{1}`")]
    AlreadyHolding(ArmTag, String),
}

/// Who is moving an object during an action.
#[derive(Debug, Clone)]
enum Driver {
    Arm(ArmTag, Vec3),
    Joint(Vec3, Vec3),
}

#[derive(Debug, Clone)]
struct Mover {
    id: String,
    driver: Driver,
}

#[derive(Debug, Clone)]
struct Rider {
    id: String,
    driver: String,
    rel: Vec3,
}

fn index_of(state: &SceneState, id: &str) -> Option<usize> {
    state.objects.iter().position(|o| o.id == id)
}

fn movers(state: &SceneState) -> Vec<Mover> {
    let mut out = Vec::new();
    if let Some(j) = &state.joint {
        let l = state.arms.left.attach_offset.unwrap_or(Vec3::ZERO);
        let r = state.arms.right.attach_offset.unwrap_or(Vec3::ZERO);
        out.push(Mover { id: j.object.clone(), driver: Driver::Joint(l, r) });
    }
    for tag in ArmTag::BOTH {
        let arm = &state.arms[tag];
        if let Some(id) = &arm.attached_object {
            if state.joint.as_ref().is_some_and(|j| &j.object == id) {
                continue;
            }
            out.push(Mover { id: id.clone(), driver: Driver::Arm(tag, arm.attach_offset.unwrap_or(Vec3::ZERO)) });
        }
    }
    out
}

fn rests_on(o: &ObjectInstance, base: &ObjectInstance) -> bool {
    let on_top = (o.bottom_z() - base.top_z()).abs() <= RIDER_GAP && base.aabb().contains_xy(o.center());
    let inside = base.receptacle
        && o.aabb().footprint_within(&base.aabb(), 1e-9)
        && o.bottom_z() >= base.bottom_z() - 1e-6
        && o.bottom_z() < base.top_z();
    on_top || inside
}

/// Free objects carried along when `driver_id` moves, transitively.
fn riders_of(state: &SceneState, driver_id: &str, skip: &[String]) -> Vec<Rider> {
    let mut out: Vec<Rider> = Vec::new();
    let mut frontier = vec![driver_id.to_string()];
    while let Some(d) = frontier.pop() {
        let Some(base) = state.object(&d) else { continue };
        for o in &state.objects {
            if o.id == driver_id
                || skip.contains(&o.id)
                || state.is_held(&o.id)
                || out.iter().any(|r| r.id == o.id)
            {
                continue;
            }
            if rests_on(o, base) {
                out.push(Rider { id: o.id.clone(), driver: d.clone(), rel: o.center() - base.center() });
                frontier.push(o.id.clone());
            }
        }
    }
    out
}

/// Ids of the free objects that move along with `id`.
pub fn riders(state: &SceneState, id: &str) -> Vec<String> {
    riders_of(state, id, &[]).into_iter().map(|r| r.id).collect()
}

fn table_box(state: &SceneState) -> Aabb {
    Aabb {
        min: Vec3::new(-1e3, -1e3, state.table_top_z - 1.0),
        max: Vec3::new(1e3, 1e3, state.table_top_z),
    }
}

/// Collision volume of `obstacle` as seen by a mover with box `mover`.
fn obstacle_box(obstacle: &ObjectInstance, mover: &Aabb) -> Aabb {
    let b = obstacle.aabb();
    if obstacle.receptacle && mover.footprint_within(&b, 1e-9) {
        Aabb { min: b.min, max: Vec3::new(b.max.x, b.max.y, obstacle.floor_z()) }
    } else {
        b
    }
}

fn deeply_overlapping(a: &Aabb, b: &Aabb) -> bool {
    a.overlaps(b, STUCK_EPS)
}

/// First time in `[0, 1]` at which the two spheres come within `2 r` while
/// closing in on each other.
fn sphere_toi(pl: Vec3, dl: Vec3, pr: Vec3, dr: Vec3, r: f64) -> Option<f64> {
    let p = pl - pr;
    let d = dl - dr;
    let rr = 2.0 * r;
    let a = d.dot(d);
    let b = 2.0 * p.dot(d);
    let c = p.dot(p) - rr * rr;
    if c <= 0.0 {
        return if b < 0.0 { Some(0.0) } else { None };
    }
    if a < 1e-18 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (0.0..=1.0).contains(&t).then_some(t)
}

fn step_toward(pose: &Pose, target: &Pose, limits: &MotionLimits) -> (Vec3, Quaternion) {
    let delta = target.position - pose.position;
    let len = delta.norm();
    let next_pos = if len <= limits.max_translation_per_substep {
        target.position
    } else {
        pose.position + delta * (limits.max_translation_per_substep / len)
    };
    let next_q = if pose.orientation == target.orientation {
        target.orientation
    } else {
        let angle = pose.orientation.angle_to(target.orientation);
        if angle <= limits.max_rotation_per_substep {
            target.orientation
        } else {
            pose.orientation.slerp(target.orientation, limits.max_rotation_per_substep / angle)
        }
    };
    (next_pos, next_q)
}

fn place_carried(state: &mut SceneState, movers: &[Mover], riders: &[Rider]) {
    for m in movers {
        let center = match &m.driver {
            Driver::Arm(tag, off) => state.grasp_point(*tag) + *off,
            Driver::Joint(l, r) => {
                let a = state.grasp_point(ArmTag::Left) + *l;
                let b = state.grasp_point(ArmTag::Right) + *r;
                (a + b) * 0.5
            }
        };
        if let Some(i) = index_of(state, &m.id) {
            state.objects[i].pose.position = center;
        }
    }
    for r in riders {
        let Some(base) = state.object(&r.driver).map(|o| o.center()) else { continue };
        if let Some(i) = index_of(state, &r.id) {
            state.objects[i].pose.position = base + r.rel;
        }
    }
}

struct Contact {
    t: f64,
    event: SimEvent,
}

fn earliest(slot: &mut Option<Contact>, t: f64, make: impl FnOnce() -> SimEvent) {
    if slot.as_ref().is_none_or(|c| t < c.t) {
        *slot = Some(Contact { t, event: make() });
    }
}

/// Moves both arms toward their commanded poses and applies gripper
/// transitions. Anomalies are reported as events; this never fails.
pub fn step_low_level(state: &SceneState, action: &LowLevelAction, cfg: &SimConfig) -> (SceneState, Vec<SimEvent>) {
    let mut s = state.clone();
    let step = s.step_index;
    let mut events = Vec::new();

    let mut targets = [action.left.pose, action.right.pose];
    for (i, tag) in ArmTag::BOTH.into_iter().enumerate() {
        let base = s.arm_configs[tag].base_origin.position;
        let reach = s.arm_configs[tag].reach_radius;
        let p = targets[i].position;
        let d = base.horizontal_distance(p);
        if d > reach {
            let k = reach / d;
            targets[i].position = Vec3::new(base.x + (p.x - base.x) * k, base.y + (p.y - base.y) * k, p.z);
            events.push(
                SimEvent::new(
                    EventKind::UnreachableTarget,
                    step,
                    format!("{tag} arm target is {d:.3} m from its base, beyond reach {reach:.3} m"),
                )
                .arm(tag),
            );
        }
    }

    let movers = movers(&s);
    let moving_ids: Vec<String> = movers.iter().map(|m| m.id.clone()).collect();
    let mut riders = Vec::new();
    for m in &movers {
        riders.extend(riders_of(&s, &m.id, &moving_ids));
    }
    let carried: Vec<String> =
        moving_ids.iter().cloned().chain(riders.iter().map(|r| r.id.clone())).collect();
    let table = table_box(&s);

    for _ in 0..cfg.limits.substeps_per_action {
        let mut next = [(Vec3::ZERO, Quaternion::IDENTITY); 2];
        let mut delta = [Vec3::ZERO; 2];
        let mut idle = true;
        for (i, tag) in ArmTag::BOTH.into_iter().enumerate() {
            let pose = &s.arms[tag].pose;
            next[i] = step_toward(pose, &targets[i], &cfg.limits);
            delta[i] = next[i].0 - pose.position;
            if next[i].0 != pose.position || next[i].1 != pose.orientation {
                idle = false;
            }
        }
        if idle {
            break;
        }

        let mut hit: Option<Contact> = None;
        for (i, tag) in ArmTag::BOTH.into_iter().enumerate() {
            let gp = s.grasp_point(tag);
            if delta[i].z < 0.0 && gp.z + delta[i].z < s.table_top_z - CONTACT_EPS && gp.z >= s.table_top_z - CONTACT_EPS {
                let t = ((s.table_top_z - gp.z) / delta[i].z).clamp(0.0, 1.0);
                earliest(&mut hit, t, || {
                    SimEvent::new(EventKind::CollisionTable, step, format!("{tag} gripper reached the table surface")).arm(tag)
                });
            }
        }
        let (pl, pr) = (s.arms.left.pose.position, s.arms.right.pose.position);
        if let Some(t) = sphere_toi(pl, delta[0], pr, delta[1], cfg.r_ee) {
            earliest(&mut hit, t, || SimEvent::new(EventKind::CollisionArmArm, step, "the two grippers collided".into()));
        }
        for m in &movers {
            let Some(obj) = s.object(&m.id) else { continue };
            let (d, arm) = match &m.driver {
                Driver::Arm(tag, _) => (delta[if *tag == ArmTag::Left { 0 } else { 1 }], Some(*tag)),
                Driver::Joint(..) => ((delta[0] + delta[1]) * 0.5, None),
            };
            let b = obj.aabb();
            if let Some(t) = b.time_of_impact(d, &table, CONTACT_EPS) {
                if !deeply_overlapping(&b, &table) {
                    earliest(&mut hit, t, || {
                        let mut e = SimEvent::new(EventKind::CollisionTable, step, format!("held {} hit the table", m.id)).object(&m.id);
                        e.arm = arm;
                        e
                    });
                }
            }
            for o in &s.objects {
                if carried.contains(&o.id) {
                    continue;
                }
                let ob = obstacle_box(o, &b);
                if deeply_overlapping(&b, &ob) {
                    continue;
                }
                if let Some(t) = b.time_of_impact(d, &ob, CONTACT_EPS) {
                    earliest(&mut hit, t, || {
                        let mut e = SimEvent::new(EventKind::CollisionObject, step, format!("held {} hit {}", m.id, o.id))
                            .object(&m.id);
                        e.arm = arm;
                        e
                    });
                }
            }
        }

        let t = hit.as_ref().map_or(1.0, |c| c.t);
        for (i, tag) in ArmTag::BOTH.into_iter().enumerate() {
            let arm = &mut s.arms[tag];
            if t >= 1.0 {
                arm.pose = Pose::new(next[i].0, next[i].1);
            } else {
                arm.pose.position = arm.pose.position + delta[i] * t;
                arm.pose.orientation = arm.pose.orientation.slerp(next[i].1, t);
            }
        }
        place_carried(&mut s, &movers, &riders);
        if let Some(c) = hit {
            events.push(c.event);
            break;
        }
    }

    apply_joint_slack(&mut s, cfg, &mut events);
    apply_grippers(&mut s, action, cfg, &mut events);
    events.extend(check_conflicts(&s, cfg));
    (s, events)
}

fn apply_joint_slack(s: &mut SceneState, cfg: &SimConfig, events: &mut Vec<SimEvent>) {
    let Some(j) = s.joint.clone() else { return };
    let sep = (s.grasp_point(ArmTag::Left) - s.grasp_point(ArmTag::Right)).norm();
    if (sep - j.separation).abs() > cfg.joint_slack {
        let step = s.step_index;
        let drop = release_object(s, &j.object);
        s.joint = None;
        for tag in ArmTag::BOTH {
            s.arms[tag].attached_object = None;
            s.arms[tag].attach_offset = None;
        }
        let mut e = SimEvent::new(EventKind::Release, step, format!("two-arm grip on {} broke", j.object)).object(&j.object);
        e.drop = Some(drop);
        events.push(e);
    }
}

fn apply_grippers(s: &mut SceneState, action: &LowLevelAction, cfg: &SimConfig, events: &mut Vec<SimEvent>) {
    let th = cfg.close_threshold;
    let cmds = [action.left.gripper.clamp(0.0, 1.0), action.right.gripper.clamp(0.0, 1.0)];
    let mut closing = [false; 2];
    let mut opening = [false; 2];
    for (i, tag) in ArmTag::BOTH.into_iter().enumerate() {
        let old = s.arms[tag].gripper;
        closing[i] = old >= th && cmds[i] < th;
        opening[i] = old < th && cmds[i] >= th;
        s.arms[tag].gripper = cmds[i];
    }
    let mut handled = [false; 2];
    if closing[0] && closing[1] {
        if let Some(id) = joint_candidate(s, cfg) {
            attach_joint(s, &id);
            events.push(
                SimEvent::new(EventKind::GraspSuccess, s.step_index, format!("both arms grasped {id}")).object(&id),
            );
            handled = [true; 2];
        }
    }
    for (i, tag) in ArmTag::BOTH.into_iter().enumerate() {
        if closing[i] && !handled[i] {
            match try_attach(s, tag, cfg) {
                Ok((next, _, evs)) => {
                    *s = next;
                    events.extend(evs);
                }
                Err(_) => {}
            }
        }
    }
    for (i, tag) in ArmTag::BOTH.into_iter().enumerate() {
        if opening[i] {
            events.extend(release(s, tag));
        }
    }
}

fn joint_candidate(s: &SceneState, cfg: &SimConfig) -> Option<String> {
    if s.arms.left.attached_object.is_some() || s.arms.right.attached_object.is_some() {
        return None;
    }
    let (gl, gr) = (s.grasp_point(ArmTag::Left), s.grasp_point(ArmTag::Right));
    s.objects
        .iter()
        .filter(|o| o.graspable && o.dual_grasp)
        .filter(|o| o.aabb().distance_to_point(gl) <= cfg.grasp_tolerance && o.aabb().distance_to_point(gr) <= cfg.grasp_tolerance)
        .map(|o| o.id.clone())
        .min()
}

fn attach_joint(s: &mut SceneState, id: &str) {
    let center = s.object(id).expect("candidate exists").center();
    let (gl, gr) = (s.grasp_point(ArmTag::Left), s.grasp_point(ArmTag::Right));
    for (tag, gp) in [(ArmTag::Left, gl), (ArmTag::Right, gr)] {
        s.arms[tag].attached_object = Some(id.to_string());
        s.arms[tag].attach_offset = Some(center - gp);
        s.hold_history.insert((id.to_string(), tag));
    }
    s.joint = Some(JointHold { object: id.to_string(), separation: (gl - gr).norm() });
}

/// Attaches the graspable object nearest to the arm's grasp point, if any
/// lies within tolerance. Ties go to the closer center, then the smaller id.
/// Grasping an object the other arm holds takes it over.
pub fn try_attach(
    state: &SceneState,
    arm: ArmTag,
    cfg: &SimConfig,
) -> Result<(SceneState, Option<String>, Vec<SimEvent>), SimError> {
    if let Some(id) = &state.arms[arm].attached_object {
        return Err(SimError::AlreadyHolding(arm, id.clone()));
    }
    let mut s = state.clone();
    let step = s.step_index;
    let gp = s.grasp_point(arm);
    let jointly_held = s.joint.as_ref().map(|j| j.object.clone());
    let mut best: Option<(f64, f64, &ObjectInstance)> = None;
    for o in &state.objects {
        if !o.graspable || jointly_held.as_deref() == Some(o.id.as_str()) {
            continue;
        }
        let d = o.aabb().distance_to_point(gp);
        if d > cfg.grasp_tolerance {
            continue;
        }
        let c = (o.center() - gp).norm();
        let better = match best {
            None => true,
            Some((bd, bc, bo)) => (d, c, o.id.as_str()) < (bd, bc, bo.id.as_str()),
        };
        if better {
            best = Some((d, c, o));
        }
    }
    let Some((_, _, obj)) = best else {
        let e = SimEvent::new(EventKind::GraspMiss, step, format!("{arm} gripper closed on nothing")).arm(arm);
        return Ok((s, None, vec![e]));
    };
    if obj.dual_grasp {
        let e = SimEvent::new(EventKind::GraspMiss, step, format!("{} needs both arms to close together", obj.id))
            .arm(arm)
            .object(&obj.id);
        return Ok((s, None, vec![e]));
    }
    let id = obj.id.clone();
    let offset = obj.center() - gp;
    let other = arm.other();
    let mut detail = format!("{arm} arm grasped {id}");
    if s.arms[other].attached_object.as_deref() == Some(id.as_str()) {
        s.arms[other].attached_object = None;
        s.arms[other].attach_offset = None;
        detail = format!("{arm} arm took {id} from the {other} arm");
    }
    s.arms[arm].attached_object = Some(id.clone());
    s.arms[arm].attach_offset = Some(offset);
    s.hold_history.insert((id.clone(), arm));
    let e = SimEvent::new(EventKind::GraspSuccess, step, detail).arm(arm).object(&id);
    Ok((s, Some(id), vec![e]))
}

/// Height the object's bottom settles to when let go, ignoring `skip`.
fn support_height(s: &SceneState, obj: &ObjectInstance, skip: &[String]) -> f64 {
    let b = obj.aabb();
    let mut best = s.table_top_z;
    for o in &s.objects {
        if o.id == obj.id || skip.contains(&o.id) || s.is_held(&o.id) {
            continue;
        }
        let ob = o.aabb();
        if !ob.overlaps_xy(&b, CONTACT_EPS) {
            continue;
        }
        let surface = if o.receptacle && b.footprint_within(&ob, 1e-9) { o.floor_z() } else { o.top_z() };
        if surface <= obj.bottom_z() + 1e-6 && surface > best {
            best = surface;
        }
    }
    best
}

/// Lets an object fall straight down onto whatever is below it, carrying
/// its riders. Returns the drop distance.
fn release_object(s: &mut SceneState, id: &str) -> f64 {
    let riders = riders_of(s, id, &[]);
    let skip: Vec<String> = riders.iter().map(|r| r.id.clone()).collect();
    let Some(obj) = s.object(id).cloned() else { return 0.0 };
    let floor = support_height(s, &obj, &skip);
    let dz = (floor - obj.bottom_z()).min(0.0);
    for name in std::iter::once(id.to_string()).chain(skip) {
        if let Some(o) = s.object_mut(&name) {
            o.pose.position.z += dz;
        }
    }
    -dz
}

fn release(s: &mut SceneState, arm: ArmTag) -> Vec<SimEvent> {
    let Some(id) = s.arms[arm].attached_object.clone() else { return Vec::new() };
    let step = s.step_index;
    let joint = s.joint.as_ref().is_some_and(|j| j.object == id);
    let holders: Vec<ArmTag> = if joint { ArmTag::BOTH.to_vec() } else { vec![arm] };
    for t in &holders {
        s.arms[*t].attached_object = None;
        s.arms[*t].attach_offset = None;
    }
    if joint {
        s.joint = None;
    }
    let drop = release_object(s, &id);
    let mut e = SimEvent::new(EventKind::Release, step, format!("{arm} arm released {id}, drop {drop:.3} m"))
        .arm(arm)
        .object(&id);
    e.drop = Some(drop);
    vec![e]
}

/// Reports overlapping end-effector spheres, or one object held by both
/// arms outside a two-arm grip.
pub fn check_conflicts(state: &SceneState, cfg: &SimConfig) -> Vec<SimEvent> {
    let mut out = Vec::new();
    let step = state.step_index;
    let d = (state.arms.left.pose.position - state.arms.right.pose.position).norm();
    if d < 2.0 * cfg.r_ee - CONTACT_EPS {
        out.push(SimEvent::new(EventKind::CollisionArmArm, step, format!("grippers are {d:.3} m apart")));
    }
    let (l, r) = (&state.arms.left.attached_object, &state.arms.right.attached_object);
    if let (Some(a), Some(b)) = (l, r) {
        if a == b && !state.joint.as_ref().is_some_and(|j| &j.object == a) {
            out.push(SimEvent::new(EventKind::CollisionArmArm, step, format!("both arms hold {a}")).object(a));
        }
    }
    out
}
