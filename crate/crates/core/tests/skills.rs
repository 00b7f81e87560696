use bimanual_harness::geometry::*;
use bimanual_harness::world::*;
use bimanual_harness::simulator::*;
use bimanual_harness::skills::*;
use serde_json::{json, Value};

fn call(name: SkillName, v: Value) -> SkillCall {
    SkillCall::new(name, v.as_object().unwrap().clone())
}

#[test]
fn schema_covers_every_skill() {
    for n in SkillName::ALL {
        assert_eq!(skill_spec(n).id, n.id());
    }
}

#[test]
fn defaults_do_not_override() {
    let c = call(SkillName::GraspActor, json!({"actor": "a", "arm_tag": "left", "pre_grasp_dis": 0.07}));
    let d = with_defaults(&c);
    assert_eq!(d.parameters["pre_grasp_dis"], json!(0.07));
    assert_eq!(d.parameters["grasp_dis"], json!(0.0));
    assert_eq!(with_defaults(&d), d);
}

#[test]
fn unknown_and_missing_params() {
    let c = call(SkillName::BackToOrigin, json!({"arm_tag": "left", "speed": 2}));
    assert!(matches!(validate_call(&c), Err(SchemaError::UnknownParameter { .. })));
    let c = call(SkillName::PlaceActor, json!({"actor": "a", "arm_tag": "left"}));
    assert!(matches!(validate_call(&c), Err(SchemaError::MissingParameter { .. })));
    let c = call(SkillName::PlaceActor, json!({"actor": "a", "arm_tag": "left", "target_pose": [0, 0, 1],
        "kwargs": {"constrain": "free", "pre_dis_axis": "fp"}}));
    assert!(validate_call(&c).is_ok());
    let c = call(SkillName::PlaceActor, json!({"actor": "a", "arm_tag": "left", "target_pose": [0, 0, 1],
        "kwargs": {"speed": 1}}));
    assert!(validate_call(&c).is_err());
}

#[test]
fn zero_quaternion_rejected() {
    let c = call(SkillName::MoveToPose, json!({"arm_tag": "left", "target_pose": [0, 0, 1, 0, 0, 0, 0]}));
    assert!(matches!(validate_call(&c), Err(SchemaError::WrongType { .. })));
}

#[test]
fn back_to_origin_restores_base() {
    let mut s = SceneState::empty(1);
    s.arms.left.pose.position = Vec3::new(-0.2, 0.0, 1.0);
    let (n, o) = execute_skill(&s, &call(SkillName::BackToOrigin, json!({"arm_tag": "left"})), &SimConfig::default()).unwrap();
    assert_eq!(o.status, SkillStatus::Succeeded);
    assert_eq!(n.arms.left.pose, n.arm_configs.left.base_origin);
}

#[test]
fn get_arm_pose_reports() {
    let s = SceneState::empty(1);
    let (n, o) = execute_skill(&s, &call(SkillName::GetArmPose, json!({"arm_tag": "right"})), &SimConfig::default()).unwrap();
    assert_eq!(n, s);
    assert!(o.feedback.starts_with("Action succeeded. right arm pose is [0.35050, -0.25230, 0.94049"));
}

#[test]
fn contact_face_selection() {
    let o = ObjectInstance::new(
        "b",
        bimanual_harness::world::ObjectKind::Cube,
        Vec3::new(0.0, 0.0, 0.8),
        Vec3::new(0.06, 0.02, 0.04),
        bimanual_harness::world::Color::Red,
    );
    assert_eq!(grasp_point_for(&o, ArmTag::Left, Some(&[0, 1, 2, 3])).x, -0.06);
    assert_eq!(grasp_point_for(&o, ArmTag::Right, Some(&[4, 5, 6, 7])).x, 0.06);
    assert_eq!(grasp_point_for(&o, ArmTag::Right, None), o.center());
}
