use bimanual_harness::geometry::*;
use bimanual_harness::world::*;
use bimanual_harness::simulator::*;

fn cube_at(id: &str, x: f64, y: f64) -> ObjectInstance {
    let h = 0.025;
    ObjectInstance::new(id, ObjectKind::Cube, Vec3::new(x, y, 0.71449 + h), Vec3::new(h, h, h), Color::Red)
}

fn hold_pose(s: &SceneState) -> LowLevelAction {
    LowLevelAction {
        left: ArmCommand { pose: s.arms.left.pose, gripper: s.arms.left.gripper },
        right: ArmCommand { pose: s.arms.right.pose, gripper: s.arms.right.gripper },
    }
}

fn with_left(s: &SceneState, p: Vec3, g: f64) -> LowLevelAction {
    let mut a = hold_pose(s);
    a.left = ArmCommand { pose: Pose::new(p, s.arms.left.pose.orientation), gripper: g };
    a
}

#[test]
fn noop_is_fixed_point() {
    let mut s = SceneState::empty(0);
    s.objects.push(cube_at("block1", -0.2, -0.07));
    let (n, ev) = step_low_level(&s, &hold_pose(&s), &SimConfig::default());
    assert_eq!(n, s);
    assert!(ev.is_empty());
}

#[test]
fn gripper_stops_at_table() {
    let s = SceneState::empty(0);
    let cfg = SimConfig::default();
    let (n, ev) = step_low_level(&s, &with_left(&s, Vec3::new(-0.3495, -0.2523, 0.8), 1.0), &cfg);
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].kind, EventKind::CollisionTable);
    assert!((n.arms.left.pose.position.z - (0.71449 + 0.162)).abs() < 1e-9);
}

#[test]
fn descend_and_close_grasps_block() {
    let mut s = SceneState::empty(0);
    s.objects.push(cube_at("block1", -0.19881, -0.07057));
    let cfg = SimConfig::default();
    for (z, g) in [(0.98, 1.0), (0.90, 1.0), (0.90, 0.0)] {
        let (n, _) = step_low_level(&s, &with_left(&s, Vec3::new(-0.20, -0.07, z), g), &cfg);
        s = n;
    }
    assert_eq!(s.arms.left.attached_object.as_deref(), Some("block1"));
    // 0.90 - 0.162 = 0.738 sits inside the cube spanning 0.71449..0.76449.
    let (n, _) = step_low_level(&s, &with_left(&s, Vec3::new(-0.20, -0.07, 1.0), 0.0), &cfg);
    let b = n.object("block1").unwrap();
    assert!((b.center().z - (1.0 - 0.162 + 0.00149)).abs() < 1e-9);
}

#[test]
fn miss_when_far_above() {
    let mut s = SceneState::empty(0);
    s.objects.push(cube_at("c", -0.2, 0.0));
    s.arms.left.pose.position = Vec3::new(-0.2, 0.0, 0.73949 + 0.025 + 0.05 + 0.162);
    let cfg = SimConfig { grasp_tolerance: 0.02, ..SimConfig::default() };
    let (_, id, ev) = try_attach(&s, ArmTag::Left, &cfg).unwrap();
    assert!(id.is_none());
    assert_eq!(ev[0].kind, EventKind::GraspMiss);
}

#[test]
fn equidistant_tie_goes_to_smaller_id() {
    let mut s = SceneState::empty(0);
    s.objects.push(cube_at("b", -0.2 + 0.04, 0.0));
    s.objects.push(cube_at("a", -0.2 - 0.04, 0.0));
    s.arms.left.pose.position = Vec3::new(-0.2, 0.0, 0.73949 + 0.162);
    let (_, id, _) = try_attach(&s, ArmTag::Left, &SimConfig::default()).unwrap();
    assert_eq!(id.as_deref(), Some("a"));
}

#[test]
fn already_holding() {
    let mut s = SceneState::empty(0);
    s.arms.left.attached_object = Some("x".into());
    assert!(matches!(try_attach(&s, ArmTag::Left, &SimConfig::default()), Err(SimError::AlreadyHolding(..))));
}

#[test]
fn origin_arms_do_not_conflict() {
    let s = SceneState::empty(0);
    assert!(check_conflicts(&s, &SimConfig::default()).is_empty());
    let mut t = s.clone();
    t.arms.right.pose.position = t.arms.left.pose.position;
    assert_eq!(check_conflicts(&t, &SimConfig::default())[0].kind, EventKind::CollisionArmArm);
}

#[test]
fn arms_stop_when_spheres_touch() {
    let s = SceneState::empty(0);
    let mut a = hold_pose(&s);
    a.left.pose.position = Vec3::new(0.0, -0.2523, 0.94049);
    a.right.pose.position = Vec3::new(0.0, -0.2523, 0.94049);
    let (n, ev) = step_low_level(&s, &a, &SimConfig::default());
    assert!(ev.iter().any(|e| e.kind == EventKind::CollisionArmArm));
    let d = (n.arms.left.pose.position - n.arms.right.pose.position).norm();
    assert!(d >= 0.1 - 1e-9, "{d}");
}

#[test]
fn unreachable_target_is_clipped() {
    let s = SceneState::empty(0);
    let (n, ev) = step_low_level(&s, &with_left(&s, Vec3::new(0.5, -0.2523, 0.94049), 1.0), &SimConfig::default());
    assert_eq!(ev[0].kind, EventKind::UnreachableTarget);
    let d = n.arms.left.pose.position.horizontal_distance(s.arm_configs.left.base_origin.position);
    assert!(d <= 0.65 + 1e-9);
}

#[test]
fn release_settles_on_table() {
    let mut s = SceneState::empty(0);
    s.objects.push(cube_at("c", -0.2, 0.0));
    s.arms.left.pose.position = Vec3::new(-0.2, 0.0, 0.73949 + 0.162);
    let cfg = SimConfig::default();
    for (z, g) in [(0.90149, 0.0), (1.0, 0.0), (1.0, 1.0)] {
        s = step_low_level(&s, &with_left(&s, Vec3::new(-0.2, 0.0, z), g), &cfg).0;
    }
    assert!((s.object("c").unwrap().center().z - 0.73949).abs() < 1e-9);
    assert!(s.arms.left.attached_object.is_none());
}

#[test]
fn codec_compatible_with_sim_commands() {
    let s = SceneState::empty(0);
    let v = encode_action(&hold_pose(&s));
    assert_eq!(decode_action(&v).unwrap(), hold_pose(&s));
}
