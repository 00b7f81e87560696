#![allow(dead_code)]

use bimanual_harness::agents::ReplayPolicy;
use bimanual_harness::episode::EpisodeLog;
use bimanual_harness::geometry::Vec3;
use bimanual_harness::runner::{run_episode_with_scene, EpisodeContext};
use bimanual_harness::tasks::TaskRegistry;
use bimanual_harness::world::{generate_scene, SceneState};

pub const HANDOVER_PLAN: &str = include_str!("../data/handover_block.json");
pub const STACK_PLAN: &str = include_str!("../data/stack_blocks_two.json");

/// Moves object `id` to rest on the table at (x, y).
pub fn put(s: &mut SceneState, id: &str, x: f64, y: f64) {
    let top = s.table_top_z;
    let o = s.object_mut(id).unwrap_or_else(|| panic!("no object {id}"));
    let hz = o.half_extents.z;
    o.pose.position = Vec3::new(x, y, top + hz);
}

/// The handover scene with the block and pad where the transcript expects them.
pub fn handover_scene() -> SceneState {
    let mut s = generate_scene("handover_block", 0).unwrap();
    put(&mut s, "block", -0.2, 0.05);
    put(&mut s, "pad", 0.238135, 0.160577);
    s
}

/// The two-block scene in the layout the stacking transcript starts from.
pub fn stack_scene() -> SceneState {
    let mut s = generate_scene("stack_blocks_two", 0).unwrap();
    put(&mut s, "block2", -0.174, 0.029);
    put(&mut s, "block1", 0.002, -0.124);
    s
}

pub fn replay_single(task_id: &str, scene: SceneState, raw: &str) -> EpisodeLog {
    let reg = TaskRegistry::builtin();
    let task = reg.get(task_id).unwrap();
    let ctx = EpisodeContext::new(reg);
    let mut policy = ReplayPolicy::from_outputs(vec![raw.to_string()]);
    run_episode_with_scene(task, Ok(scene), 0, &mut policy, &ctx).0
}
