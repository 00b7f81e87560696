//! Per-task scene templates.

use std::f64::consts::FRAC_PI_4;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    reachable, scene_rng, uniform, ArmTag, Color, ObjectInstance, ObjectKind, SceneState,
    TierOneConfig, WorldError,
};
use crate::geometry::{Aabb, Quaternion, Vec3};

pub const SPAWN_ATTEMPTS: usize = 1000;
/// Minimum horizontal gap between spawned objects.
const CLEARANCE: f64 = 0.01;

const SCENES: &[&str] = &[
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

pub fn scene_names() -> &'static [&'static str] {
    SCENES
}

type Range = (f64, f64);

const ANY_X: Range = (-0.33, 0.33);
const LEFT_X: Range = (-0.33, -0.08);
const RIGHT_X: Range = (0.08, 0.33);
const ANY_Y: Range = (-0.2, 0.25);
const CUBE: f64 = 0.025;
const CENTER: Vec3 = Vec3::new(0.0, -0.13, 0.0);

struct Planner<'a> {
    rng: &'a mut ChaCha8Rng,
    scene: SceneState,
    keepouts: Vec<Aabb>,
}

struct Spawn<'s> {
    id: &'s str,
    kind: ObjectKind,
    half: Vec3,
    color: Color,
    x: Range,
    y: Range,
    graspable: bool,
    receptacle: bool,
    yaw: bool,
}

impl<'s> Spawn<'s> {
    fn new(id: &'s str, kind: ObjectKind, half: Vec3, color: Color, x: Range, y: Range) -> Self {
        Spawn { id, kind, half, color, x, y, graspable: true, receptacle: false, yaw: true }
    }

    fn receptacle(mut self) -> Self {
        self.receptacle = true;
        self
    }

    fn fixed(mut self) -> Self {
        self.graspable = false;
        self.yaw = false;
        self
    }
}

fn cube(h: f64) -> Vec3 {
    Vec3::new(h, h, h)
}

impl<'a> Planner<'a> {
    fn new(rng: &'a mut ChaCha8Rng, seed: u64) -> Self {
        Planner { rng, scene: SceneState::empty(seed), keepouts: Vec::new() }
    }

    fn keepout(&mut self, center: Vec3, half_x: f64, half_y: f64) {
        self.keepouts.push(Aabb::from_center(
            Vec3::new(center.x, center.y, 0.0),
            Vec3::new(half_x, half_y, 10.0),
        ));
    }

    fn target(&mut self, name: &str, p: Vec3) {
        self.scene.targets.insert(name.to_string(), p);
    }

    fn fits(&self, candidate: &ObjectInstance) -> bool {
        let b = candidate.aabb();
        let grown = Aabb::from_center(
            candidate.center(),
            candidate.half_extents + Vec3::new(CLEARANCE, CLEARANCE, 0.0),
        );
        if self.keepouts.iter().any(|k| k.overlaps_xy(&b, 0.0)) {
            return false;
        }
        if self.scene.objects.iter().any(|o| o.aabb().overlaps_xy(&grown, 0.0)) {
            return false;
        }
        if candidate.graspable {
            let cfgs = &self.scene.arm_configs;
            if !ArmTag::BOTH.iter().any(|&t| reachable(&cfgs[t], candidate.center())) {
                return false;
            }
        }
        true
    }

    fn spawn(&mut self, s: Spawn<'_>) -> Result<(), WorldError> {
        let z = self.scene.table_top_z + s.half.z;
        for _ in 0..SPAWN_ATTEMPTS {
            let x = uniform(self.rng, s.x.0, s.x.1);
            let y = uniform(self.rng, s.y.0, s.y.1);
            let yaw = if s.yaw { uniform(self.rng, -FRAC_PI_4, FRAC_PI_4) } else { 0.0 };
            let mut o = ObjectInstance::new(s.id, s.kind, Vec3::new(x, y, z), s.half, s.color);
            o.pose.orientation = Quaternion::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), yaw)
                .expect("z axis is non-degenerate");
            o.graspable = s.graspable;
            o.receptacle = s.receptacle;
            if self.fits(&o) {
                self.scene.objects.push(o);
                return Ok(());
            }
        }
        Err(WorldError::PlacementFailure { object: s.id.to_string(), attempts: SPAWN_ATTEMPTS })
    }

    fn finish(self) -> SceneState {
        self.scene
    }
}

pub fn build(task_id: &str, seed: u64) -> Result<SceneState, WorldError> {
    if !SCENES.contains(&task_id) {
        return Err(WorldError::UnknownTask(task_id.to_string()));
    }
    let mut rng = scene_rng(task_id, seed);
    let rng = &mut rng;
    match task_id {
        "spatial_sparse" => spatial(&TierOneConfig::for_setting(super::SpatialSetting::Sparse), rng, seed),
        "spatial_dense" => spatial(&TierOneConfig::for_setting(super::SpatialSetting::Dense), rng, seed),
        "spatial_cluttered" => {
            spatial(&TierOneConfig::for_setting(super::SpatialSetting::Cluttered), rng, seed)
        }
        "place_cans_plasticbox" => place_cans_plasticbox(rng, seed),
        "blocks_cross_shape" => blocks_cross_shape(rng, seed),
        "blocks_ranking_size" => blocks_ranking_size(rng, seed),
        "blocks_ranking_rgb" => blocks_ranking_rgb(rng, seed),
        "stack_blocks_three" => stack_blocks_three(rng, seed),
        "stack_bowls_three" => stack_bowls_three(rng, seed),
        "handover_mic" => handover_mic(rng, seed),
        "handover_block" => handover_block(rng, seed),
        "hanging_mug" => hanging_mug(rng, seed),
        "place_burger_fries" | "place_burger_fries_ll" => place_burger_fries(rng, seed),
        "place_object_basket" => place_object_basket(rng, seed),
        "place_bread_skillet" => place_bread_skillet(rng, seed),
        "blocks_tower" => blocks_tower(rng, seed),
        "put_bottles_dustbin" => put_bottles_dustbin(rng, seed),
        "place_object_scale" => place_object_scale(rng, seed),
        "place_bread_skillet_ll" => place_bread_skillet_ll(rng, seed),
        "grab_roller" => grab_roller(rng, seed),
        "stack_blocks_two" => stack_blocks_two(rng, seed),
        _ => unreachable!("checked against SCENES"),
    }
}

pub(super) fn spatial(cfg: &TierOneConfig, rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let colors = Color::BLOCK_COLORS;
    for color in colors.iter().take(cfg.cube_count.min(colors.len())) {
        let id = format!("{}_block", color.as_str());
        // Pick the side first so the |x| band applies to both halves.
        let left = p.rng.random_bool(0.5);
        let (lo, hi) = cfg.x_range;
        let x = if left { (-hi, -lo) } else { (lo, hi) };
        p.spawn(Spawn::new(&id, ObjectKind::Cube, cube(CUBE), *color, x, cfg.y_range))?;
    }
    const CLUTTER: [Color; 4] = [Color::Gray, Color::Brown, Color::Orange, Color::Purple];
    for i in 0..cfg.distractor_count {
        let id = format!("distractor{}", i + 1);
        let half = Vec3::new(
            uniform(p.rng, 0.015, 0.04),
            uniform(p.rng, 0.015, 0.04),
            uniform(p.rng, 0.01, 0.04),
        );
        let color = CLUTTER[i % CLUTTER.len()];
        let mut s = Spawn::new(&id, ObjectKind::Distractor, half, color, ANY_X, cfg.y_range);
        s.graspable = false;
        p.spawn(s)?;
    }
    Ok(p.finish())
}

fn place_cans_plasticbox(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    p.spawn(
        Spawn::new("plasticbox", ObjectKind::Container, Vec3::new(0.09, 0.07, 0.04), Color::Gray, (-0.03, 0.03), (-0.12, 0.0))
            .receptacle()
            .fixed(),
    )?;
    let can = Vec3::new(0.025, 0.025, 0.05);
    p.spawn(Spawn::new("can1", ObjectKind::Can, can, Color::Red, LEFT_X, ANY_Y))?;
    p.spawn(Spawn::new("can2", ObjectKind::Can, can, Color::Blue, RIGHT_X, ANY_Y))?;
    Ok(p.finish())
}

fn blocks_cross_shape(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let c = Vec3::new(0.0, -0.08, 0.0);
    let step = 0.06;
    let slots = [
        ("red", Vec3::new(-step, 0.0, 0.0)),
        ("black", Vec3::ZERO),
        ("blue", Vec3::new(step, 0.0, 0.0)),
        ("green", Vec3::new(0.0, step, 0.0)),
        ("yellow", Vec3::new(0.0, -step, 0.0)),
    ];
    for (name, off) in slots {
        p.target(&format!("slot_{name}"), c + off);
    }
    p.keepout(c, 0.12, 0.12);
    for color in [Color::Red, Color::Black, Color::Blue, Color::Green, Color::Yellow] {
        let id = format!("{}_block", color.as_str());
        p.spawn(Spawn::new(&id, ObjectKind::Cube, cube(CUBE), color, ANY_X, ANY_Y))?;
    }
    Ok(p.finish())
}

fn random_colors(rng: &mut ChaCha8Rng, n: usize) -> Vec<Color> {
    let mut colors = Color::BLOCK_COLORS.to_vec();
    colors.shuffle(rng);
    colors.truncate(n);
    colors
}

fn blocks_ranking_size(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let row = Vec3::new(0.0, -0.13, 0.0);
    for (i, dx) in [-0.1, 0.0, 0.1].into_iter().enumerate() {
        p.target(&format!("slot{}", i + 1), row + Vec3::new(dx, 0.0, 0.0));
    }
    p.target("row", row);
    p.keepout(row, 0.17, 0.07);
    let colors = random_colors(p.rng, 3);
    let mut sizes = vec![0.03, 0.025, 0.02];
    sizes.shuffle(p.rng);
    let mut ranked: Vec<(f64, String)> = Vec::new();
    for (color, h) in colors.into_iter().zip(sizes) {
        let id = format!("{}_block", color.as_str());
        p.spawn(Spawn::new(&id, ObjectKind::Cube, cube(h), color, ANY_X, ANY_Y))?;
        ranked.push((h, id));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (role, (_, id)) in ["largest", "middle", "smallest"].into_iter().zip(ranked) {
        p.scene.roles.insert(role.to_string(), id);
    }
    Ok(p.finish())
}

fn blocks_ranking_rgb(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let row = Vec3::new(uniform(p.rng, -0.03, 0.03), uniform(p.rng, -0.16, -0.12), 0.0);
    for (name, dx) in [("red", -0.09), ("green", 0.0), ("blue", 0.09)] {
        p.target(&format!("slot_{name}"), row + Vec3::new(dx, 0.0, 0.0));
    }
    p.keepout(row, 0.15, 0.06);
    for color in [Color::Red, Color::Green, Color::Blue] {
        let id = format!("{}_block", color.as_str());
        p.spawn(Spawn::new(&id, ObjectKind::Cube, cube(CUBE), color, ANY_X, ANY_Y))?;
    }
    Ok(p.finish())
}

fn center_with_keepout(p: &mut Planner<'_>, half: f64) {
    p.target("center", CENTER);
    p.keepout(CENTER, half, half);
}

fn stack_blocks_three(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    center_with_keepout(&mut p, 0.07);
    for color in [Color::Red, Color::Green, Color::Blue] {
        let id = format!("{}_block", color.as_str());
        p.spawn(Spawn::new(&id, ObjectKind::Cube, cube(CUBE), color, ANY_X, ANY_Y))?;
    }
    Ok(p.finish())
}

fn stack_bowls_three(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    center_with_keepout(&mut p, 0.09);
    let bowl = Vec3::new(0.05, 0.05, 0.02);
    for (i, color) in [Color::White, Color::Orange, Color::Purple].into_iter().enumerate() {
        let id = format!("bowl{}", i + 1);
        p.spawn(Spawn::new(&id, ObjectKind::Container, bowl, color, ANY_X, ANY_Y))?;
    }
    Ok(p.finish())
}

const HANDOVER: Vec3 = Vec3::new(0.0, 0.0, 0.0);

fn handover_mic(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    p.target("handover", HANDOVER);
    p.keepout(HANDOVER, 0.1, 0.06);
    p.spawn(Spawn::new("mic", ObjectKind::Mic, Vec3::new(0.07, 0.02, 0.02), Color::Black, (0.15, 0.3), (-0.1, 0.15)))?;
    Ok(p.finish())
}

fn handover_block(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    p.target("handover", HANDOVER);
    p.keepout(HANDOVER, 0.1, 0.06);
    p.spawn(Spawn::new("block", ObjectKind::Cube, Vec3::new(0.06, 0.02, 0.04), Color::Red, (-0.3, -0.12), (-0.1, 0.15)))?;
    p.spawn(Spawn::new("pad", ObjectKind::Pad, Vec3::new(0.04, 0.04, 0.003), Color::Blue, (0.15, 0.3), (-0.1, 0.2)).fixed())?;
    Ok(p.finish())
}

fn hanging_mug(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    p.target("handover", HANDOVER);
    p.keepout(HANDOVER, 0.1, 0.06);
    p.spawn(Spawn::new("mug", ObjectKind::Mug, Vec3::new(0.06, 0.04, 0.05), Color::White, (-0.3, -0.14), (-0.1, 0.15)))?;
    p.spawn(Spawn::new("rack", ObjectKind::Rack, Vec3::new(0.04, 0.04, 0.1), Color::Brown, (0.2, 0.3), (-0.05, 0.15)).fixed())?;
    Ok(p.finish())
}

fn place_burger_fries(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    p.spawn(
        Spawn::new("tray", ObjectKind::Tray, Vec3::new(0.1, 0.07, 0.01), Color::Gray, (-0.03, 0.03), (-0.12, -0.05))
            .receptacle()
            .fixed(),
    )?;
    p.spawn(Spawn::new("burger", ObjectKind::Burger, Vec3::new(0.035, 0.035, 0.025), Color::Brown, LEFT_X, ANY_Y))?;
    p.spawn(Spawn::new("fries", ObjectKind::Fries, Vec3::new(0.025, 0.02, 0.035), Color::Yellow, RIGHT_X, ANY_Y))?;
    Ok(p.finish())
}

fn place_object_basket(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let basket = Spawn::new("basket", ObjectKind::Basket, Vec3::new(0.08, 0.08, 0.04), Color::Brown, (0.05, 0.18), (-0.15, 0.05))
        .receptacle();
    p.spawn(basket)?;
    let b = p.scene.object("basket").expect("just spawned").center();
    let goal = Vec3::new(b.x + 0.12, b.y, 0.0);
    p.target("basket_goal", goal);
    p.keepout(goal, 0.09, 0.09);
    p.spawn(Spawn::new("toy", ObjectKind::Can, Vec3::new(0.025, 0.025, 0.04), Color::Green, (-0.3, -0.12), (-0.15, 0.15)))?;
    Ok(p.finish())
}

fn place_bread_skillet(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    p.target("relay", Vec3::new(0.0, -0.08, 0.0));
    p.keepout(Vec3::new(0.0, -0.08, 0.0), 0.06, 0.06);
    p.spawn(
        Spawn::new("skillet", ObjectKind::Skillet, Vec3::new(0.07, 0.06, 0.02), Color::Black, (0.26, 0.33), (0.05, 0.2))
            .receptacle()
            .fixed(),
    )?;
    p.spawn(Spawn::new("bread", ObjectKind::Bread, Vec3::new(0.04, 0.03, 0.02), Color::Orange, (-0.3, 0.15), (-0.15, 0.2)))?;
    Ok(p.finish())
}

fn blocks_tower(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    center_with_keepout(&mut p, 0.08);
    let colors = random_colors(p.rng, 4);
    let mut sizes = vec![0.032, 0.028, 0.024, 0.02];
    sizes.shuffle(p.rng);
    let mut ranked: Vec<(f64, String)> = Vec::new();
    for (color, h) in colors.into_iter().zip(sizes) {
        let id = format!("{}_block", color.as_str());
        p.spawn(Spawn::new(&id, ObjectKind::Cube, cube(h), color, ANY_X, ANY_Y))?;
        ranked.push((h, id));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (i, (_, id)) in ranked.into_iter().enumerate() {
        p.scene.roles.insert(format!("size{}", i + 1), id);
    }
    Ok(p.finish())
}

fn put_bottles_dustbin(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let relay = Vec3::new(-0.1, -0.1, 0.0);
    p.target("relay", relay);
    p.keepout(relay, 0.05, 0.05);
    let mut bin = ObjectInstance::new(
        "dustbin",
        ObjectKind::Dustbin,
        Vec3::new(-0.45, 0.05, p.scene.table_top_z + 0.1),
        Vec3::new(0.07, 0.07, 0.1),
        Color::Gray,
    );
    bin.graspable = false;
    bin.receptacle = true;
    p.scene.objects.push(bin);
    let bottle = Vec3::new(0.02, 0.02, 0.06);
    for (i, color) in [Color::Green, Color::Blue, Color::White].into_iter().enumerate() {
        let id = format!("bottle{}", i + 1);
        p.spawn(Spawn::new(&id, ObjectKind::Bottle, bottle, color, (-0.3, 0.33), ANY_Y))?;
    }
    Ok(p.finish())
}

fn place_object_scale(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let x = if p.rng.random_bool(0.5) { LEFT_X } else { RIGHT_X };
    p.spawn(Spawn::new("scale", ObjectKind::Scale, Vec3::new(0.05, 0.05, 0.008), Color::White, x, ANY_Y).fixed())?;
    p.spawn(Spawn::new("object", ObjectKind::Can, Vec3::new(0.025, 0.025, 0.04), Color::Red, x, ANY_Y))?;
    Ok(p.finish())
}

fn place_bread_skillet_ll(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    center_with_keepout(&mut p, 0.1);
    let x = if p.rng.random_bool(0.5) { (-0.3, -0.15) } else { (0.15, 0.3) };
    p.spawn(Spawn::new("skillet", ObjectKind::Skillet, Vec3::new(0.07, 0.06, 0.02), Color::Black, x, ANY_Y).receptacle())?;
    p.spawn(Spawn::new("bread", ObjectKind::Bread, Vec3::new(0.04, 0.03, 0.02), Color::Orange, ANY_X, ANY_Y))?;
    Ok(p.finish())
}

fn grab_roller(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    let mut s = Spawn::new("roller", ObjectKind::Roller, Vec3::new(0.2, 0.025, 0.025), Color::Brown, (-0.04, 0.04), (-0.1, 0.1));
    s.yaw = false;
    p.spawn(s)?;
    if let Some(r) = p.scene.object_mut("roller") {
        r.dual_grasp = true;
    }
    Ok(p.finish())
}

fn stack_blocks_two(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneState, WorldError> {
    let mut p = Planner::new(rng, seed);
    center_with_keepout(&mut p, 0.07);
    p.spawn(Spawn::new("block1", ObjectKind::Cube, cube(CUBE), Color::Red, ANY_X, ANY_Y))?;
    p.spawn(Spawn::new("block2", ObjectKind::Cube, cube(CUBE), Color::Green, ANY_X, ANY_Y))?;
    Ok(p.finish())
}
