use bimanual_harness::world::*;

#[test]
fn every_scene_builds_for_a_range_of_seeds() {
    for name in scene_names() {
        for seed in 0..20 {
            let s = generate_scene(name, seed).unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
            for (i, a) in s.objects.iter().enumerate() {
                for b in &s.objects[i + 1..] {
                    assert!(!a.aabb().overlaps(&b.aabb(), 0.0), "{name} seed {seed}: {} vs {}", a.id, b.id);
                }
                assert!(a.bottom_z() >= s.table_top_z - 1e-12);
            }
        }
    }
}

#[test]
fn unknown_scene() {
    assert_eq!(generate_scene("nope", 1), Err(WorldError::UnknownTask("nope".into())));
}

#[test]
fn roles_rank_sizes() {
    let s = generate_scene("blocks_ranking_size", 3).unwrap();
    let h = |r: &str| s.object(s.resolve(r)).unwrap().half_extents.x;
    assert!(h("$largest") > h("$middle") && h("$middle") > h("$smallest"));
}
