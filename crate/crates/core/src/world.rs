//! Scene model: table, objects, the two arms and seeded scene generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{Aabb, Pose, Quaternion, Vec3};

mod scenes;

pub use scenes::{scene_names, SPAWN_ATTEMPTS};

pub const TABLE_TOP_Z: f64 = 0.71449;
pub const GRIPPER_HEIGHT_OFFSET: f64 = 0.162;
pub const DEFAULT_REACH_RADIUS: f64 = 0.65;
pub const LEFT_BASE: Vec3 = Vec3::new(-0.3495, -0.2523, 0.94049);
pub const RIGHT_BASE: Vec3 = Vec3::new(0.3505, -0.2523, 0.94049);
/// Orientation of both arms at their origin pose, `(qx, qy, qz, qw)`.
pub const ORIGIN_QUAT: [f64; 4] = [0.70711, -1e-5, 1e-5, 0.70711];
/// Gripper pointing down with fingers opening left-right.
pub const DOWNWARD_QUAT: [f64; 4] = [0.5, -0.5, 0.5, 0.5];
/// Half-width of the table top in x and y.
pub const TABLE_HALF: [f64; 2] = [0.6, 0.35];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("could not place `{object}` after {attempts} attempts")]
    PlacementFailure { object: String, attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmTag {
    Left,
    Right,
}

impl ArmTag {
    pub const BOTH: [ArmTag; 2] = [ArmTag::Left, ArmTag::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            ArmTag::Left => "left",
            ArmTag::Right => "right",
        }
    }

    pub fn other(self) -> ArmTag {
        match self {
            ArmTag::Left => ArmTag::Right,
            ArmTag::Right => ArmTag::Left,
        }
    }

    pub fn parse(s: &str) -> Option<ArmTag> {
        match s {
            "left" => Some(ArmTag::Left),
            "right" => Some(ArmTag::Right),
            _ => None,
        }
    }
}

impl fmt::Display for ArmTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value per arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPair<T> {
    pub left: T,
    pub right: T,
}

impl<T> ArmPair<T> {
    pub fn new(left: T, right: T) -> Self {
        ArmPair { left, right }
    }
}

impl<T> Index<ArmTag> for ArmPair<T> {
    type Output = T;
    fn index(&self, tag: ArmTag) -> &T {
        match tag {
            ArmTag::Left => &self.left,
            ArmTag::Right => &self.right,
        }
    }
}

impl<T> IndexMut<ArmTag> for ArmPair<T> {
    fn index_mut(&mut self, tag: ArmTag) -> &mut T {
        match tag {
            ArmTag::Left => &mut self.left,
            ArmTag::Right => &mut self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub tag: ArmTag,
    pub base_origin: Pose,
    pub reach_radius: f64,
    pub gripper_height_offset: f64,
}

impl ArmConfig {
    pub fn default_for(tag: ArmTag) -> Self {
        let position = match tag {
            ArmTag::Left => LEFT_BASE,
            ArmTag::Right => RIGHT_BASE,
        };
        ArmConfig {
            tag,
            base_origin: Pose::new(position, origin_quat()),
            reach_radius: DEFAULT_REACH_RADIUS,
            gripper_height_offset: GRIPPER_HEIGHT_OFFSET,
        }
    }
}

pub fn origin_quat() -> Quaternion {
    Quaternion::try_from(ORIGIN_QUAT).expect("origin quaternion is normalizable")
}

pub fn downward_quat() -> Quaternion {
    Quaternion::try_from(DOWNWARD_QUAT).expect("downward quaternion is a unit quaternion")
}

pub fn default_arm_configs() -> ArmPair<ArmConfig> {
    ArmPair::new(ArmConfig::default_for(ArmTag::Left), ArmConfig::default_for(ArmTag::Right))
}

/// True iff `p` lies within the arm's horizontal reach disc.
pub fn reachable(arm: &ArmConfig, p: Vec3) -> bool {
    arm.base_origin.position.horizontal_distance(p) <= arm.reach_radius
}

/// The arm that should handle an object, by the sign of its x coordinate.
/// Objects exactly on the centerline go to the right arm.
pub fn ground_truth_arm(obj: &ObjectInstance) -> ArmTag {
    if obj.pose.position.x < 0.0 {
        ArmTag::Left
    } else {
        ArmTag::Right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Cube,
    Container,
    Tray,
    Roller,
    Mug,
    Rack,
    Bottle,
    Dustbin,
    Skillet,
    Scale,
    Burger,
    Fries,
    Bread,
    Basket,
    Mic,
    Pad,
    Can,
    Distractor,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Cube => "cube",
            ObjectKind::Container => "container",
            ObjectKind::Tray => "tray",
            ObjectKind::Roller => "roller",
            ObjectKind::Mug => "mug",
            ObjectKind::Rack => "rack",
            ObjectKind::Bottle => "bottle",
            ObjectKind::Dustbin => "dustbin",
            ObjectKind::Skillet => "skillet",
            ObjectKind::Scale => "scale",
            ObjectKind::Burger => "burger",
            ObjectKind::Fries => "fries",
            ObjectKind::Bread => "bread",
            ObjectKind::Basket => "basket",
            ObjectKind::Mic => "mic",
            ObjectKind::Pad => "pad",
            ObjectKind::Can => "can",
            ObjectKind::Distractor => "distractor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Black,
    White,
    Gray,
    Brown,
    Orange,
    Purple,
}

impl Color {
    /// Colors used for tier-one cubes and random block colors.
    pub const BLOCK_COLORS: [Color; 5] =
        [Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Black];

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Black => "black",
            Color::White => "white",
            Color::Gray => "gray",
            Color::Brown => "brown",
            Color::Orange => "orange",
            Color::Purple => "purple",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Green => [40, 170, 60],
            Color::Blue => [40, 80, 220],
            Color::Yellow => [235, 200, 30],
            Color::Black => [25, 25, 25],
            Color::White => [245, 245, 245],
            Color::Gray => [140, 140, 140],
            Color::Brown => [140, 90, 40],
            Color::Orange => [240, 140, 30],
            Color::Purple => [140, 60, 170],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub kind: ObjectKind,
    /// Pose of the box center. Orientation is a yaw about z and only affects
    /// the recommended grasp orientation; collision volumes stay axis-aligned.
    pub pose: Pose,
    pub half_extents: Vec3,
    pub color: Color,
    pub graspable: bool,
    /// Open-topped: held objects that fit its footprint can be lowered inside.
    #[serde(default)]
    pub receptacle: bool,
    /// Can only be lifted by both arms closing in the same step.
    #[serde(default)]
    pub dual_grasp: bool,
}

impl ObjectInstance {
    pub fn new(id: &str, kind: ObjectKind, center: Vec3, half_extents: Vec3, color: Color) -> Self {
        ObjectInstance {
            id: id.to_string(),
            kind,
            pose: Pose::new(center, Quaternion::IDENTITY),
            half_extents,
            color,
            graspable: true,
            receptacle: false,
            dual_grasp: false,
        }
    }

    pub fn center(&self) -> Vec3 {
        self.pose.position
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_center(self.pose.position, self.half_extents)
    }

    pub fn top_z(&self) -> f64 {
        self.pose.position.z + self.half_extents.z
    }

    pub fn bottom_z(&self) -> f64 {
        self.pose.position.z - self.half_extents.z
    }

    /// Height a held object rests at inside this receptacle.
    pub fn floor_z(&self) -> f64 {
        self.bottom_z() + (2.0 * self.half_extents.z).min(0.01)
    }

    /// Height a placed object rests at when set on or into this object.
    pub fn support_z(&self) -> f64 {
        if self.receptacle {
            self.floor_z()
        } else {
            self.top_z()
        }
    }

    /// Recommended grasp orientation: the object yaw applied to the
    /// downward gripper orientation.
    pub fn grasp_quat(&self) -> Quaternion {
        self.pose.orientation.mul(downward_quat())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub pose: Pose,
    /// 0 = closed, 1 = open.
    pub gripper: f64,
    pub attached_object: Option<String>,
    /// World-frame offset from the grasp point to the held object's center.
    #[serde(default)]
    pub attach_offset: Option<Vec3>,
}

impl ArmState {
    pub fn at(pose: Pose) -> Self {
        ArmState { pose, gripper: 1.0, attached_object: None, attach_offset: None }
    }
}

/// A two-arm hold of a single object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHold {
    pub object: String,
    /// Distance between the two grasp points when the hold was made.
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub table_top_z: f64,
    pub objects: Vec<ObjectInstance>,
    pub arms: ArmPair<ArmState>,
    pub arm_configs: ArmPair<ArmConfig>,
    pub step_index: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub joint: Option<JointHold>,
    /// Named goal points referenced as `@name` in success predicates.
    #[serde(default)]
    pub targets: BTreeMap<String, Vec3>,
    /// Role aliases referenced as `$name`, mapping to object ids.
    #[serde(default)]
    pub roles: BTreeMap<String, String>,
    /// Every (object, arm) pair that has held the object at some step.
    #[serde(default)]
    pub hold_history: BTreeSet<(String, ArmTag)>,
}

impl SceneState {
    /// An empty table with both arms at their origin poses.
    pub fn empty(seed: u64) -> Self {
        let cfgs = default_arm_configs();
        SceneState {
            table_top_z: TABLE_TOP_Z,
            objects: Vec::new(),
            arms: ArmPair::new(ArmState::at(cfgs.left.base_origin), ArmState::at(cfgs.right.base_origin)),
            arm_configs: cfgs,
            step_index: 0,
            rng_seed: seed,
            joint: None,
            targets: BTreeMap::new(),
            roles: BTreeMap::new(),
            hold_history: BTreeSet::new(),
        }
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut ObjectInstance> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    /// Resolves `$role` aliases; plain ids pass through.
    pub fn resolve<'a>(&'a self, name: &'a str) -> &'a str {
        match name.strip_prefix('$') {
            Some(role) => self.roles.get(role).map(String::as_str).unwrap_or(name),
            None => name,
        }
    }

    /// Arms currently holding `id`.
    pub fn holders(&self, id: &str) -> Vec<ArmTag> {
        ArmTag::BOTH
            .into_iter()
            .filter(|&t| self.arms[t].attached_object.as_deref() == Some(id))
            .collect()
    }

    pub fn is_held(&self, id: &str) -> bool {
        !self.holders(id).is_empty()
    }

    /// Grasp point of an arm: the gripper pose lowered by the height offset.
    pub fn grasp_point(&self, arm: ArmTag) -> Vec3 {
        let off = self.arm_configs[arm].gripper_height_offset;
        self.arms[arm].pose.position - Vec3::new(0.0, 0.0, off)
    }

    /// Stable, fixed-precision text form used for hashing and logs.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "table_top_z {}", fx(self.table_top_z));
        let _ = writeln!(s, "step {}", self.step_index);
        let _ = writeln!(s, "seed {}", self.rng_seed);
        for o in &self.objects {
            let _ = writeln!(
                s,
                "object {} {} {} pos {} quat {} half {} graspable {} receptacle {} dual {}",
                o.id,
                o.kind.as_str(),
                o.color.as_str(),
                fv(o.pose.position),
                fq(o.pose.orientation),
                fv(o.half_extents),
                o.graspable as u8,
                o.receptacle as u8,
                o.dual_grasp as u8
            );
        }
        for tag in ArmTag::BOTH {
            let a = &self.arms[tag];
            let c = &self.arm_configs[tag];
            let _ = writeln!(
                s,
                "arm {} pos {} quat {} gripper {} holding {} offset {} base {} reach {}",
                tag,
                fv(a.pose.position),
                fq(a.pose.orientation),
                fx(a.gripper),
                a.attached_object.as_deref().unwrap_or("-"),
                a.attach_offset.map(fv).unwrap_or_else(|| "-".into()),
                fv(c.base_origin.position),
                fx(c.reach_radius)
            );
        }
        if let Some(j) = &self.joint {
            let _ = writeln!(s, "joint {} {}", j.object, fx(j.separation));
        }
        for (name, p) in &self.targets {
            let _ = writeln!(s, "target {} {}", name, fv(*p));
        }
        for (role, id) in &self.roles {
            let _ = writeln!(s, "role {} {}", role, id);
        }
        for (id, arm) in &self.hold_history {
            let _ = writeln!(s, "held {} {}", id, arm);
        }
        s
    }

    pub fn canonical_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

fn fx(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn fv(v: Vec3) -> String {
    format!("{} {} {}", fx(v.x), fx(v.y), fx(v.z))
}

fn fq(q: Quaternion) -> String {
    format!("{} {} {} {}", fx(q.x()), fx(q.y()), fx(q.z()), fx(q.w()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialSetting {
    Sparse,
    Dense,
    Cluttered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierOneConfig {
    pub setting: SpatialSetting,
    pub cube_count: usize,
    pub distractor_count: usize,
    /// Band of allowed `|x|` values for cube centers.
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl TierOneConfig {
    pub fn for_setting(setting: SpatialSetting) -> Self {
        let (cube_count, distractor_count) = match setting {
            SpatialSetting::Sparse => (3, 0),
            SpatialSetting::Dense => (5, 0),
            SpatialSetting::Cluttered => (3, 2),
        };
        TierOneConfig { setting, cube_count, distractor_count, x_range: (0.0, 0.35), y_range: (-0.2, 0.25) }
    }
}

/// Mixes the task id into the seed so different tasks with the same seed
/// get unrelated scenes.
pub(crate) fn scene_rng(task_id: &str, seed: u64) -> ChaCha8Rng {
    let digest = Sha256::digest(task_id.as_bytes());
    let mut salt = [0u8; 8];
    salt.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(salt))
}

/// Builds the initial scene for a task. Pure in `(task_id, seed)`.
pub fn generate_scene(task_id: &str, seed: u64) -> Result<SceneState, WorldError> {
    scenes::build(task_id, seed)
}

/// Tier-one scene from an explicit configuration.
pub fn generate_spatial_scene(cfg: &TierOneConfig, seed: u64) -> Result<SceneState, WorldError> {
    let name = match cfg.setting {
        SpatialSetting::Sparse => "spatial_sparse",
        SpatialSetting::Dense => "spatial_dense",
        SpatialSetting::Cluttered => "spatial_cluttered",
    };
    let mut rng = scene_rng(name, seed);
    scenes::spatial(cfg, &mut rng, seed)
}

/// Uniform sample helper that tolerates empty ranges.
pub(crate) fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
