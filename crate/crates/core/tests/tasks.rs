use bimanual_harness::world::*;
use bimanual_harness::tasks::*;

#[test]
fn builtin_loads() {
    let r = TaskRegistry::builtin();
    assert_eq!(r.tasks.len(), 22);
}

#[test]
fn missing_task_refused() {
    let trimmed = TASKS_TOML.replace("id = \"grab_roller\"", "id = \"stack_blocks_two\"");
    assert!(TaskRegistry::from_toml(&trimmed, TEMPLATES_TOML).is_err());
}

#[test]
fn parse_errors() {
    assert!(Predicate::parse("all(").is_err());
    assert!(Predicate::parse("frobnicate(a)").is_err());
    assert!(Predicate::parse("on_top_of(a)").is_err());
    assert!(Predicate::parse("all() x").is_err());
    assert_eq!(Predicate::parse("all()").unwrap(), Predicate::All(vec![]));
}

#[test]
fn info_is_deterministic() {
    let r = TaskRegistry::builtin();
    let t = r.get("stack_blocks_two").unwrap();
    let s = generate_scene(&t.scene, 4).unwrap();
    let a = assistant_info(t, &s, &r.templates);
    assert_eq!(a, assistant_info(t, &s, &r.templates));
    assert!(a.contains("the gripper's height is approximately 0.162m"));
}

#[test]
fn fmt5_has_no_negative_zero() {
    assert_eq!(fmt5(-0.000001), "0.00000");
    assert_eq!(fmt5(-0.19881), "-0.19881");
}
