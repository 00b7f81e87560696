use bimanual_harness::geometry::*;
use bimanual_harness::protocol::*;
use bimanual_harness::scoring::*;
use bimanual_harness::skills::*;
use bimanual_harness::world::*;
use proptest::prelude::*;
use serde_json::json;

fn unit_quat() -> impl Strategy<Value = Quaternion> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z, w)| x * x + y * y + z * z + w * w > 1e-3)
        .prop_map(|(x, y, z, w)| Quaternion::new(x, y, z, w).unwrap())
}

fn one_cube(x: f64, y: f64) -> SceneState {
    let mut s = SceneState::empty(0);
    s.objects.push(ObjectInstance::new("c", ObjectKind::Cube, Vec3::new(x, y, 0.74), Vec3::new(0.02, 0.02, 0.02), Color::Red));
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn rotation_keeps_length(q in unit_quat(), v in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)) {
        let v = Vec3::new(v.0, v.1, v.2);
        prop_assert!((quat_rotate(q, v).norm() - v.norm()).abs() < 1e-9);
        let back = quat_rotate(q.conjugate(), quat_rotate(q, v));
        prop_assert!((back - v).norm() < 1e-9);
    }

    #[test]
    fn slerp_hits_its_endpoints(a in unit_quat(), b in unit_quat()) {
        prop_assert!(a.slerp(b, 0.0).angle_to(a) < 1e-6);
        prop_assert!(a.slerp(b, 1.0).angle_to(b) < 1e-6);
    }

    #[test]
    fn action_vectors_round_trip(l in unit_quat(), r in unit_quat(), p in prop::array::uniform6(-1.0..1.5f64), g in (0.0..=1.0f64, 0.0..=1.0f64)) {
        let mut raw = vec![p[0], p[1], p[2]];
        raw.extend(l.to_array());
        raw.push(g.0);
        raw.extend([p[3], p[4], p[5]]);
        raw.extend(r.to_array());
        raw.push(g.1);
        let a = decode_action(&raw).unwrap();
        prop_assert_eq!(decode_action(&encode_action(&a)).unwrap(), a);
    }

    #[test]
    fn spatial_score_is_bounded_and_symmetric(x in -0.5..0.5f64, y in -0.3..0.3f64, sigma in 0.01..1.0f64) {
        let s = one_cube(x, y);
        let params = SpatialScoreParams { sigma };
        let wrong = if x < 0.0 { ArmTag::Right } else { ArmTag::Left };
        let score = spatial_score(&[SpatialAssignment { object: "c".into(), use_arm: wrong }], &s, &params).unwrap();
        prop_assert!((0.0..=100.0).contains(&score));
        let mirrored = one_cube(-x, y);
        let m = spatial_score(&[SpatialAssignment { object: "c".into(), use_arm: wrong.other() }], &mirrored, &params).unwrap();
        prop_assert!((score - m).abs() < 1e-9 || x == 0.0);
        let right = spatial_score(&[SpatialAssignment { object: "c".into(), use_arm: ground_truth_arm(&s.objects[0]) }], &s, &params).unwrap();
        prop_assert_eq!(right, 100.0);
    }

    #[test]
    fn truncation_keeps_a_prefix(n in 0usize..40, k in 0usize..20) {
        let plan: Vec<usize> = (0..n).collect();
        let (kept, dropped) = truncate_chunk(&plan, k);
        prop_assert_eq!(kept.len(), n.min(k));
        prop_assert_eq!(kept.len() + dropped, n);
        prop_assert_eq!(&plan[..kept.len()], &kept[..]);
    }

    #[test]
    fn history_keeps_the_latest_three(n in 0usize..12) {
        let mut h = HistoryWindow::default();
        for i in 0..n {
            h.push(HistoryStep::failed(i + 1, "x"));
        }
        let numbers: Vec<usize> = h.steps().map(|s| s.number).collect();
        let expected: Vec<usize> = (n.saturating_sub(3) + 1..=n).collect();
        prop_assert_eq!(numbers, expected);
        prop_assert_eq!(h.render().is_empty(), n == 0);
    }

    #[test]
    fn guard_agrees_with_reach(x in -0.8..0.8f64, y in -0.5..0.5f64, left in any::<bool>()) {
        let s = one_cube(x, y);
        let arm = if left { ArmTag::Left } else { ArmTag::Right };
        let params = json!({"actor": "c", "arm_tag": arm.as_str()});
        let call = SkillCall::new(SkillName::GraspActor, params.as_object().unwrap().clone());
        let blocked = allocation_guard(&s, &call).is_some();
        prop_assert_eq!(blocked, !reachable(&s.arm_configs[arm], s.objects[0].center()));
    }
}
