use bimanual_harness::geometry::*;
use bimanual_harness::world::*;
use bimanual_harness::protocol::*;
use bimanual_harness::scoring::*;

fn scene_with(xs: &[f64]) -> SceneState {
    let mut s = SceneState::empty(0);
    for (i, &x) in xs.iter().enumerate() {
        s.objects.push(ObjectInstance::new(
            &format!("c{i}"),
            ObjectKind::Cube,
            Vec3::new(x, 0.0, 0.74),
            Vec3::new(0.025, 0.025, 0.025),
            Color::Red,
        ));
    }
    s
}

fn pred(id: &str, arm: ArmTag) -> SpatialAssignment {
    SpatialAssignment { object: id.into(), use_arm: arm }
}

#[test]
fn boundary_scores_full() {
    let s = scene_with(&[0.0]);
    let p = SpatialScoreParams::default();
    assert_eq!(spatial_score(&[pred("c0", ArmTag::Left)], &s, &p).unwrap(), 100.0);
    assert_eq!(spatial_score(&[pred("c0", ArmTag::Right)], &s, &p).unwrap(), 100.0);
}

#[test]
fn missing_and_duplicate() {
    let s = scene_with(&[0.2]);
    let p = SpatialScoreParams::default();
    assert_eq!(spatial_score(&[], &s, &p), Err(ScoreError::MissingPrediction("c0".into())));
    let two = [pred("c0", ArmTag::Left), pred("c0", ArmTag::Right)];
    assert_eq!(spatial_score(&two, &s, &p), Err(ScoreError::DuplicatePrediction("c0".into())));
}

#[test]
fn subtypes_have_categories() {
    assert_eq!(ErrorSubtype::BimanualConflict.category(), ErrorCategory::Planning);
    assert_eq!(ErrorSubtype::EnvGrasp.category(), ErrorCategory::Environmental);
    assert_eq!(ErrorSubtype::PhysicalAttributeMisreasoning.category(), ErrorCategory::Perceptual);
}

#[test]
fn permutations_count() {
    let v: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    assert_eq!(permutations(&v).len(), 6);
}

#[test]
fn aggregation_is_a_macro_average() {
    let reg = bimanual_harness::tasks::TaskRegistry::builtin();
    let ep = |task: &str, seed, score: f64| EpisodeScore {
        task_id: task.into(),
        seed,
        tier: reg.get(task).unwrap().tier,
        success: score >= 100.0,
        score,
        error_labels: if score < 100.0 { vec![ErrorSubtype::EndEffectorAllocation.into()] } else { Vec::new() },
    };
    let scores = vec![
        ep("spatial_sparse", 0, 70.0),
        ep("spatial_sparse", 1, 90.0),
        ep("spatial_dense", 0, 90.0),
        ep("spatial_dense", 1, 90.0),
    ];
    let r = aggregate(&scores, reg, 0.1, "h");
    assert_eq!(r.tasks.len(), 2);
    assert_eq!(r.tasks[0].mean_score, 80.0);
    assert_eq!(r.spatial_average, Some(85.0));
    assert_eq!(r.high_level_total_average, None);
    assert_eq!(r.label_counts.get("end_effector_allocation"), Some(&4));

    let one = aggregate(&[ep("spatial_cluttered", 0, 100.0)], reg, 0.1, "h");
    assert_eq!(one.tasks[0].success_rate, 100.0);
    assert_eq!(one.spatial_average, Some(100.0));
}
