//! Task catalog, success predicates and the per-task helper text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::world::{downward_quat, scene_names, ArmTag, SceneState};

/// The bundled task catalog and prompt templates, as TOML source.
pub const TASKS_TOML: &str = include_str!("../data/tasks.toml");
pub const TEMPLATES_TOML: &str = include_str!("../data/templates.toml");

/// Every task id the harness expects to find in a registry.
pub const CANONICAL_TASKS: [&str; 22] = [
    "spatial_sparse",
    "spatial_dense",
    "spatial_cluttered",
    "place_cans_plasticbox",
    "blocks_cross_shape",
    "blocks_ranking_size",
    "blocks_ranking_rgb",
    "stack_blocks_three",
    "stack_bowls_three",
    "handover_mic",
    "handover_block",
    "hanging_mug",
    "place_burger_fries",
    "place_object_basket",
    "place_bread_skillet",
    "blocks_tower",
    "put_bottles_dustbin",
    "place_object_scale",
    "place_burger_fries_ll",
    "place_bread_skillet_ll",
    "grab_roller",
    "stack_blocks_two",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Spatial,
    HighLevel,
    LowLevel,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Spatial => "spatial",
            Tier::HighLevel => "high_level",
            Tier::LowLevel => "low_level",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordination {
    IndependentParallel,
    SequentialCollaborative,
    SynchronousCollaborative,
    SingleArm,
}

impl Coordination {
    pub fn as_str(self) -> &'static str {
        match self {
            Coordination::IndependentParallel => "independent_parallel",
            Coordination::SequentialCollaborative => "sequential_collaborative",
            Coordination::SynchronousCollaborative => "synchronous_collaborative",
            Coordination::SingleArm => "single_arm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub on_top_xy: f64,
    pub on_top_z: f64,
    pub within_xy: f64,
    pub order_separation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { on_top_xy: 0.025, on_top_z: 0.01, within_xy: 0.05, order_separation: 0.03 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("registry file is malformed: {0}")]
    Malformed(String),
    #[error("registry is missing task `{0}`")]
    MissingTask(String),
    #[error("task `{0}` is registered more than once")]
    DuplicateTask(String),
    #[error("task `{0}` is not a known benchmark task")]
    UnknownTask(String),
    #[error("task `{task}` refers to unknown scene `{scene}`")]
    UnknownScene { task: String, scene: String },
    #[error("task `{task}` refers to unknown template `{template}`")]
    UnknownTemplate { task: String, template: String },
    #[error("bad predicate in `{task}`: {msg}")]
    Predicate { task: String, msg: String },
}

/// A success condition over a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "args")]
pub enum Predicate {
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
    OnTopOf { a: String, b: String, xy_tol: Option<f64>, z_tol: Option<f64> },
    WithinXy { a: String, target: String, tol: Option<f64> },
    Inside { a: String, container: String },
    HeldBy { a: String, arm: ArmTag },
    Held { a: String },
    EverHeldBy { a: String, arm: ArmTag },
    OrderedByX { ids: Vec<String> },
    AboveHeight { a: String, z_min: f64 },
    AtOrigin { arm: ArmTag },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Num(f64),
    Open,
    Close,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || "-+.eE".contains(chars[i])) {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Token::Num(s.parse().map_err(|_| format!("bad number `{s}`"))?));
            }
            c if c.is_alphanumeric() || c == '_' || c == '@' || c == '$' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || "_@$".contains(chars[i])) {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Arg {
    Expr(Predicate),
    Name(String),
    Num(f64),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn arg(&mut self) -> Result<Arg, String> {
        match self.next() {
            Some(Token::Num(n)) => Ok(Arg::Num(n)),
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::Open) {
                    self.pos += 1;
                    let args = self.args()?;
                    Ok(Arg::Expr(build(&name, args)?))
                } else {
                    Ok(Arg::Name(name))
                }
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }

    fn args(&mut self) -> Result<Vec<Arg>, String> {
        let mut out = Vec::new();
        if self.peek() == Some(&Token::Close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.arg()?);
            match self.next() {
                Some(Token::Comma) => continue,
                Some(Token::Close) => return Ok(out),
                other => return Err(format!("expected `,` or `)`, found {other:?}")),
            }
        }
    }
}

fn name(a: &Arg) -> Result<String, String> {
    match a {
        Arg::Name(n) => Ok(n.clone()),
        other => Err(format!("expected a name, found {other:?}")),
    }
}

fn num(a: Option<&Arg>) -> Result<Option<f64>, String> {
    match a {
        None => Ok(None),
        Some(Arg::Num(n)) => Ok(Some(*n)),
        Some(other) => Err(format!("expected a number, found {other:?}")),
    }
}

fn arm(a: &Arg) -> Result<ArmTag, String> {
    ArmTag::parse(&name(a)?).ok_or_else(|| "expected left or right".to_string())
}

fn arity(op: &str, args: &[Arg], lo: usize, hi: usize) -> Result<(), String> {
    if args.len() < lo || args.len() > hi {
        return Err(format!("{op} takes {lo} to {hi} arguments, got {}", args.len()));
    }
    Ok(())
}

fn build(op: &str, args: Vec<Arg>) -> Result<Predicate, String> {
    let exprs = |args: Vec<Arg>| -> Result<Vec<Predicate>, String> {
        args.into_iter()
            .map(|a| match a {
                Arg::Expr(p) => Ok(p),
                other => Err(format!("expected a predicate, found {other:?}")),
            })
            .collect()
    };
    Ok(match op {
        "all" => Predicate::All(exprs(args)?),
        "any" => Predicate::Any(exprs(args)?),
        "not" => {
            arity(op, &args, 1, 1)?;
            Predicate::Not(Box::new(exprs(args)?.remove(0)))
        }
        "on_top_of" => {
            arity(op, &args, 2, 4)?;
            Predicate::OnTopOf { a: name(&args[0])?, b: name(&args[1])?, xy_tol: num(args.get(2))?, z_tol: num(args.get(3))? }
        }
        "within_xy" => {
            arity(op, &args, 2, 3)?;
            Predicate::WithinXy { a: name(&args[0])?, target: name(&args[1])?, tol: num(args.get(2))? }
        }
        "inside" => {
            arity(op, &args, 2, 2)?;
            Predicate::Inside { a: name(&args[0])?, container: name(&args[1])? }
        }
        "held_by" => {
            arity(op, &args, 2, 2)?;
            Predicate::HeldBy { a: name(&args[0])?, arm: arm(&args[1])? }
        }
        "held" => {
            arity(op, &args, 1, 1)?;
            Predicate::Held { a: name(&args[0])? }
        }
        "ever_held_by" => {
            arity(op, &args, 2, 2)?;
            Predicate::EverHeldBy { a: name(&args[0])?, arm: arm(&args[1])? }
        }
        "ordered_by_x" => {
            arity(op, &args, 2, usize::MAX)?;
            Predicate::OrderedByX { ids: args.iter().map(name).collect::<Result<_, _>>()? }
        }
        "above_height" => {
            arity(op, &args, 2, 2)?;
            Predicate::AboveHeight { a: name(&args[0])?, z_min: num(args.get(1))?.expect("arity checked") }
        }
        "at_origin" => {
            arity(op, &args, 1, 1)?;
            Predicate::AtOrigin { arm: arm(&args[0])? }
        }
        other => return Err(format!("unknown predicate `{other}`")),
    })
}

impl Predicate {
    pub fn parse(src: &str) -> Result<Predicate, String> {
        let mut p = Parser { toks: tokenize(src)?, pos: 0 };
        let out = match p.arg()? {
            Arg::Expr(e) => e,
            other => return Err(format!("expected a predicate, found {other:?}")),
        };
        if p.pos != p.toks.len() {
            return Err("trailing input after predicate".into());
        }
        Ok(out)
    }

    pub fn evaluate(&self, state: &SceneState, tol: &Tolerances) -> bool {
        let obj = |n: &str| state.object(state.resolve(n));
        match self {
            Predicate::All(ps) => ps.iter().all(|p| p.evaluate(state, tol)),
            Predicate::Any(ps) => ps.iter().any(|p| p.evaluate(state, tol)),
            Predicate::Not(p) => !p.evaluate(state, tol),
            Predicate::OnTopOf { a, b, xy_tol, z_tol } => {
                let (Some(a), Some(b)) = (obj(a), obj(b)) else { return false };
                a.center().horizontal_distance(b.center()) <= xy_tol.unwrap_or(tol.on_top_xy)
                    && (a.bottom_z() - b.top_z()).abs() <= z_tol.unwrap_or(tol.on_top_z)
            }
            Predicate::WithinXy { a, target, tol: t } => {
                let Some(a) = obj(a) else { return false };
                let Some(p) = point(state, target) else { return false };
                a.center().horizontal_distance(p) <= t.unwrap_or(tol.within_xy)
            }
            Predicate::Inside { a, container } => {
                let (Some(a), Some(c)) = (obj(a), obj(container)) else { return false };
                a.aabb().footprint_within(&c.aabb(), 1e-6)
                    && a.bottom_z() >= c.bottom_z() - 1e-6
                    && a.bottom_z() <= c.floor_z() + tol.on_top_z
            }
            Predicate::HeldBy { a, arm } => {
                state.arms[*arm].attached_object.as_deref() == Some(state.resolve(a))
            }
            Predicate::Held { a } => state.is_held(state.resolve(a)),
            Predicate::EverHeldBy { a, arm } => state.hold_history.contains(&(state.resolve(a).to_string(), *arm)),
            Predicate::OrderedByX { ids } => {
                let xs: Option<Vec<f64>> = ids.iter().map(|i| obj(i).map(|o| o.center().x)).collect();
                let Some(xs) = xs else { return false };
                xs.windows(2).all(|w| w[1] - w[0] >= tol.order_separation)
            }
            Predicate::AboveHeight { a, z_min } => obj(a).is_some_and(|o| o.center().z > *z_min),
            Predicate::AtOrigin { arm } => {
                let p = &state.arms[*arm].pose;
                let o = &state.arm_configs[*arm].base_origin;
                (p.position - o.position).norm() <= 1e-6 && p.orientation.angle_to(o.orientation) <= 1e-5
            }
        }
    }

    /// Leaf atoms whose subject is `id` (after role resolution), excluding
    /// history and holding atoms.
    pub fn placement_atoms_for<'a>(&'a self, state: &SceneState, id: &str, out: &mut Vec<&'a Predicate>) {
        match self {
            Predicate::All(ps) | Predicate::Any(ps) => ps.iter().for_each(|p| p.placement_atoms_for(state, id, out)),
            Predicate::Not(_) => {}
            Predicate::OnTopOf { a, .. } | Predicate::WithinXy { a, .. } | Predicate::Inside { a, .. } | Predicate::AboveHeight { a, .. } => {
                if state.resolve(a) == id {
                    out.push(self);
                }
            }
            _ => {}
        }
    }

    /// Every object-like name mentioned.
    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        self.collect_names(&mut v);
        v
    }

    fn collect_names(&self, v: &mut Vec<String>) {
        match self {
            Predicate::All(ps) | Predicate::Any(ps) => ps.iter().for_each(|p| p.collect_names(v)),
            Predicate::Not(p) => p.collect_names(v),
            Predicate::OnTopOf { a, b, .. } => v.extend([a.clone(), b.clone()]),
            Predicate::WithinXy { a, target, .. } => v.extend([a.clone(), target.clone()]),
            Predicate::Inside { a, container } => v.extend([a.clone(), container.clone()]),
            Predicate::HeldBy { a, .. } | Predicate::Held { a } | Predicate::EverHeldBy { a, .. } | Predicate::AboveHeight { a, .. } => {
                v.push(a.clone())
            }
            Predicate::OrderedByX { ids } => v.extend(ids.iter().cloned()),
            Predicate::AtOrigin { .. } => {}
        }
    }
}

/// A scene point: `@name` target, or the center of an object.
pub fn point(state: &SceneState, name: &str) -> Option<Vec3> {
    match name.strip_prefix('@') {
        Some(t) => state.targets.get(t).copied(),
        None => state.object(state.resolve(name)).map(|o| o.center()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub code: String,
    pub tier: Tier,
    pub coordination: Coordination,
    pub scene: String,
    pub max_chunk_size: usize,
    pub max_plan_rounds: usize,
    pub instruction: String,
    pub template: String,
    pub success_source: String,
    pub success_predicate: Predicate,
    /// Object id to table target for the suggested place poses.
    pub place_targets: IndexMap<String, String>,
}

impl TaskSpec {
    /// Objects whose every placement atom already holds.
    pub fn goal_objects_satisfied(&self, state: &SceneState, tol: &Tolerances) -> Vec<String> {
        let mut out = Vec::new();
        for o in &state.objects {
            let mut atoms = Vec::new();
            self.success_predicate.placement_atoms_for(state, &o.id, &mut atoms);
            if !atoms.is_empty() && atoms.iter().all(|a| a.evaluate(state, tol)) {
                out.push(o.id.clone());
            }
        }
        out
    }

    /// Whether the predicate refers to size roles.
    pub fn uses_roles(&self) -> bool {
        self.success_source.contains('$')
    }
}

#[derive(Deserialize)]
struct RawDefaults {
    high_level_k: usize,
    high_level_rounds: usize,
    low_level_k: usize,
    low_level_rounds: usize,
}

#[derive(Deserialize)]
struct RawTask {
    id: String,
    code: String,
    tier: Tier,
    coordination: Coordination,
    scene: String,
    k: Option<usize>,
    rounds: Option<usize>,
    template: String,
    instruction: String,
    success: String,
    #[serde(default)]
    place_targets: IndexMap<String, String>,
}

#[derive(Deserialize)]
struct RawRegistry {
    defaults: RawDefaults,
    #[serde(default)]
    tolerances: Option<Tolerances>,
    task: Vec<RawTask>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Templates {
    pub system: BTreeMap<String, String>,
    pub format: BTreeMap<String, String>,
    pub assistant: BTreeMap<String, String>,
}

impl Templates {
    pub fn closing(&self) -> &str {
        self.format.get("closing").map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone)]
pub struct TaskRegistry {
    pub tasks: Vec<TaskSpec>,
    pub tolerances: Tolerances,
    pub templates: Templates,
}

impl TaskRegistry {
    /// The catalog shipped with the crate.
    pub fn builtin() -> &'static TaskRegistry {
        static REG: OnceLock<TaskRegistry> = OnceLock::new();
        REG.get_or_init(|| TaskRegistry::from_toml(TASKS_TOML, TEMPLATES_TOML).expect("bundled registry is valid"))
    }

    /// Parses and validates a registry. Missing canonical ids are an error.
    pub fn from_toml(tasks: &str, templates: &str) -> Result<TaskRegistry, TaskError> {
        let raw: RawRegistry = toml::from_str(tasks).map_err(|e| TaskError::Malformed(e.to_string()))?;
        let templates: Templates = toml::from_str(templates).map_err(|e| TaskError::Malformed(e.to_string()))?;
        let mut out = Vec::new();
        for t in raw.task {
            if out.iter().any(|o: &TaskSpec| o.id == t.id) {
                return Err(TaskError::DuplicateTask(t.id));
            }
            if !CANONICAL_TASKS.contains(&t.id.as_str()) {
                return Err(TaskError::UnknownTask(t.id));
            }
            if !scene_names().contains(&t.scene.as_str()) {
                return Err(TaskError::UnknownScene { task: t.id, scene: t.scene });
            }
            if !templates.assistant.contains_key(&t.template) {
                return Err(TaskError::UnknownTemplate { task: t.id, template: t.template });
            }
            let pred = Predicate::parse(&t.success).map_err(|msg| TaskError::Predicate { task: t.id.clone(), msg })?;
            let (dk, dr) = match t.tier {
                Tier::Spatial => (1, 1),
                Tier::HighLevel => (raw.defaults.high_level_k, raw.defaults.high_level_rounds),
                Tier::LowLevel => (raw.defaults.low_level_k, raw.defaults.low_level_rounds),
            };
            out.push(TaskSpec {
                id: t.id,
                code: t.code,
                tier: t.tier,
                coordination: t.coordination,
                scene: t.scene,
                max_chunk_size: t.k.unwrap_or(dk),
                max_plan_rounds: t.rounds.unwrap_or(dr),
                instruction: t.instruction,
                template: t.template,
                success_source: t.success,
                success_predicate: pred,
                place_targets: t.place_targets,
            });
        }
        for id in CANONICAL_TASKS {
            if !out.iter().any(|t| t.id == id) {
                return Err(TaskError::MissingTask(id.to_string()));
            }
        }
        Ok(TaskRegistry { tasks: out, tolerances: raw.tolerances.unwrap_or_default(), templates })
    }

    pub fn load(tasks_path: &std::path::Path) -> Result<TaskRegistry, TaskError> {
        let text = std::fs::read_to_string(tasks_path).map_err(|e| TaskError::Malformed(e.to_string()))?;
        TaskRegistry::from_toml(&text, TEMPLATES_TOML)
    }

    pub fn get(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

pub fn evaluate_success(task: &TaskSpec, state: &SceneState, tol: &Tolerances) -> bool {
    task.tier != Tier::Spatial && task.success_predicate.evaluate(state, tol)
}

/// Decimal text with 5 places and no negative zero.
pub fn fmt5(x: f64) -> String {
    let s = format!("{x:.5}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

pub fn fmt_list(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|&x| fmt5(x)).collect();
    format!("[{}]", v.join(", "))
}

fn fmt_pose(p: &Pose) -> String {
    fmt_list(&p.to_array())
}

/// Pose at which `id` would rest centered on `(x, y)` on the table.
pub fn table_place_pose(state: &SceneState, id: &str, at: Vec3) -> Option<[f64; 7]> {
    let o = state.object(id)?;
    let q = downward_quat().to_array();
    Some([at.x, at.y, state.table_top_z + o.half_extents.z, q[0], q[1], q[2], q[3]])
}

/// Fills `{key}` placeholders; unknown keys are left as they are.
pub fn fill(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// Task-specific helper text with ground-truth positions.
pub fn assistant_info(task: &TaskSpec, state: &SceneState, templates: &Templates) -> String {
    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    let names: Vec<&str> = state.objects.iter().filter(|o| o.graspable || task.tier != Tier::Spatial).map(|o| o.id.as_str()).collect();
    vars.insert("object_names", names.join(", "));
    let mut objects = String::new();
    let mut quats = String::new();
    for o in &state.objects {
        let h = o.half_extents;
        let _ = writeln!(
            objects,
            "- {}: center {}, size {}",
            o.id,
            fmt_list(&o.center().to_array()),
            fmt_list(&[2.0 * h.x, 2.0 * h.y, 2.0 * h.z])
        );
        if o.graspable {
            let _ = writeln!(quats, "- {}: {}", o.id, fmt_list(&o.grasp_quat().to_array()));
        }
    }
    vars.insert("objects", objects.trim_end().to_string());
    vars.insert("grasp_quats", quats.trim_end().to_string());
    let mut targets = String::new();
    for (id, target) in &task.place_targets {
        if let Some(pose) = point(state, target).and_then(|p| table_place_pose(state, id, p)) {
            let _ = writeln!(targets, "- {id}: {}", fmt_list(&pose));
        }
    }
    vars.insert("targets", targets.trim_end().to_string());
    let mut named = String::new();
    for (name, p) in &state.targets {
        let _ = writeln!(named, "- {name}: {}", fmt_list(&[p.x, p.y]));
    }
    if named.is_empty() {
        named.push_str("- none");
    }
    vars.insert("named_points", named.trim_end().to_string());
    vars.insert("left_pose", fmt_pose(&state.arms[ArmTag::Left].pose));
    vars.insert("right_pose", fmt_pose(&state.arms[ArmTag::Right].pose));
    vars.insert("left_origin", fmt_pose(&state.arm_configs[ArmTag::Left].base_origin));
    vars.insert("right_origin", fmt_pose(&state.arm_configs[ArmTag::Right].base_origin));
    vars.insert("gripper_note", templates.assistant.get("gripper_note").cloned().unwrap_or_default());
    let tpl = templates.assistant.get(&task.template).map(String::as_str).unwrap_or("");
    fill(tpl, &vars).trim_end().to_string()
}
