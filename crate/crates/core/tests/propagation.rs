use musefm_core::geom::Vec3;
use musefm_core::propagation::{
    direction_from_angles, faces, path_geometry, segment_blocked, trace_paths, Reflector, SPEED_OF_LIGHT,
};
use musefm_core::scene::{generate_scene, sample_user_positions, Axis, Scene, SceneProfile, Wall};
use musefm_testkit::{
    inside_obstacle, oracle_path_lengths, sampled_blocked, DiscObstacle, Mirror, RectObstacle,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arr(p: Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn obstacles(s: &Scene) -> (Vec<RectObstacle>, Vec<DiscObstacle>) {
    let rects = s
        .walls
        .iter()
        .map(|w| {
            let h = w.thickness / 2.0;
            if (w.start[1] - w.end[1]).abs() <= (w.start[0] - w.end[0]).abs() {
                RectObstacle {
                    lo: [w.start[0].min(w.end[0]), w.start[1] - h],
                    hi: [w.start[0].max(w.end[0]), w.start[1] + h],
                }
            } else {
                RectObstacle {
                    lo: [w.start[0] - h, w.start[1].min(w.end[1])],
                    hi: [w.start[0] + h, w.start[1].max(w.end[1])],
                }
            }
        })
        .collect();
    let discs = s.cylinders.iter().map(|c| DiscObstacle { center: c.center, radius: c.radius }).collect();
    (rects, discs)
}

/// Outer walls, floor, ceiling and both long faces of every internal wall.
fn mirrors(s: &Scene) -> Vec<Mirror> {
    let mut m = vec![
        Mirror { axis: 0, coord: -5.0, lo: [-5.0, 0.0], hi: [5.0, 3.0] },
        Mirror { axis: 0, coord: 5.0, lo: [-5.0, 0.0], hi: [5.0, 3.0] },
        Mirror { axis: 1, coord: -5.0, lo: [-5.0, 0.0], hi: [5.0, 3.0] },
        Mirror { axis: 1, coord: 5.0, lo: [-5.0, 0.0], hi: [5.0, 3.0] },
        Mirror { axis: 2, coord: 0.0, lo: [-5.0, -5.0], hi: [5.0, 5.0] },
        Mirror { axis: 2, coord: 3.0, lo: [-5.0, -5.0], hi: [5.0, 5.0] },
    ];
    let (rects, _) = obstacles(s);
    for (w, r) in s.walls.iter().zip(rects) {
        if w.axis() == Axis::X {
            for y in [r.lo[1], r.hi[1]] {
                m.push(Mirror { axis: 1, coord: y, lo: [r.lo[0], 0.0], hi: [r.hi[0], 3.0] });
            }
        } else {
            for x in [r.lo[0], r.hi[0]] {
                m.push(Mirror { axis: 0, coord: x, lo: [r.lo[1], 0.0], hi: [r.hi[1], 3.0] });
            }
        }
    }
    m
}

fn sorted_lengths(s: &Scene, a: Vec3, b: Vec3) -> Vec<f64> {
    let mut l: Vec<f64> = trace_paths(s, a, b, 1).paths.iter().map(|p| p.length).collect();
    l.sort_by(f64::total_cmp);
    l
}

#[test]
fn traced_lengths_match_fermat_oracle_and_reciprocity() {
    let profile = SceneProfile::paper();
    let mut checked = 0;
    for seed in 0..100u64 {
        let scene = generate_scene(seed, &profile).unwrap();
        let (rects, discs) = obstacles(&scene);
        let ms = mirrors(&scene);
        for rx in sample_user_positions(&scene, 4, seed + 1000).unwrap() {
            let got = sorted_lengths(&scene, scene.bs_pos, rx);
            let want = oracle_path_lengths(arr(scene.bs_pos), arr(rx), &rects, &discs, &ms, 4000);
            assert_eq!(got.len(), want.len(), "seed {seed}, rx {rx:?}: {got:?} vs {want:?}");
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-6, "seed {seed}: {g} vs {w}");
            }
            let back = sorted_lengths(&scene, rx, scene.bs_pos);
            assert_eq!(back.len(), got.len());
            for (g, b) in got.iter().zip(&back) {
                assert!((g - b).abs() < 1e-9);
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 400);
}

#[test]
fn empty_room_has_seven_mirror_paths() {
    let s = Scene::empty(SceneProfile::paper().bs_pos);
    let tx = Vec3::new(0.0, 0.0, 2.5);
    let rx = Vec3::new(3.0, 4.0, 1.0);
    let pl = trace_paths(&s, tx, rx, 1);
    assert_eq!(pl.paths.len(), 7);
    let los = pl.los().unwrap();
    assert!((los.length - 5.220153254455275).abs() < 1e-12);
    let fs = faces(&s);
    for p in pl.paths.iter().filter(|p| p.n_bounces == 1) {
        let f = fs.iter().find(|f| Some(f.reflector) == p.reflector).unwrap();
        assert!((p.length - f.image(tx).dist(rx)).abs() < 1e-9);
        assert!(p.length >= los.length);
        assert!((p.delay - p.length / SPEED_OF_LIGHT).abs() < 1e-20);
    }
    let mut seen: Vec<_> = pl.paths.iter().map(|p| (p.reflector, p.n_bounces)).collect();
    seen.dedup();
    assert_eq!(seen.len(), 7);
    assert!(pl.paths.iter().any(|p| p.reflector == Some(Reflector::Floor)));
}

/// The 1000-point oracle can step over a corner that the segment only
/// clips; such disagreements must vanish under a 2e6-point refinement.
#[test]
fn blockage_agrees_with_dense_sampling() {
    let profile = SceneProfile::paper();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut coarse_misses = 0;
    let mut blocked = 0;
    for trial in 0..10_000u64 {
        let scene = generate_scene(trial / 10, &profile).unwrap();
        let (rects, discs) = obstacles(&scene);
        let mut pt = || Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 1.0);
        let (p, q) = (pt(), pt());
        let fast = segment_blocked(&scene, p, q);
        let inside = |x: [f64; 2]| inside_obstacle(x, &rects, &discs);
        blocked += usize::from(fast);
        if fast != sampled_blocked(p.xy(), q.xy(), 1000, inside) {
            coarse_misses += 1;
            assert_eq!(fast, sampled_blocked(p.xy(), q.xy(), 2_000_000, inside), "trial {trial}");
        }
    }
    assert!(blocked > 1000);
    assert!(coarse_misses <= 10, "{coarse_misses} coarse disagreements");
}

#[test]
fn wall_crossing_examples() {
    let mut s = Scene::empty(SceneProfile::paper().bs_pos);
    assert!(!segment_blocked(&s, Vec3::new(0.0, -1.0, 1.0), Vec3::new(0.0, 1.0, 1.0)));
    s.walls.push(Wall { start: [-2.0, 0.0], end: [2.0, 0.0], thickness: 0.2 });
    assert!(segment_blocked(&s, Vec3::new(0.0, -1.0, 1.0), Vec3::new(0.0, 1.0, 1.0)));
    let pl = trace_paths(&s, Vec3::new(0.5, 2.0, 2.5), Vec3::new(-0.5, -2.0, 1.0), 1);
    assert!(pl.paths.iter().all(|p| p.n_bounces == 1));
}

#[test]
fn axis_directions() {
    let (t, _) = path_geometry(Vec3::new(0.0, 0.0, 1.0)).unwrap();
    assert_eq!(t, 0.0);
    let (t, p) = path_geometry(Vec3::new(1.0, 0.0, 0.0)).unwrap();
    assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-15 && p == 0.0);
    assert!(path_geometry(Vec3::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn angle_roundtrip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let d = Vec3::new(x, y, z);
        prop_assume!(d.norm() > 1e-3);
        let u = d * (1.0 / d.norm());
        let (t, p) = path_geometry(u).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&t));
        prop_assert!(p > -std::f64::consts::PI && p <= std::f64::consts::PI);
        let back = direction_from_angles(t, p);
        prop_assert!((back - u).norm() < 1e-12);
    }

    #[test]
    fn los_is_shortest(seed in 0u64..500, useed in any::<u64>()) {
        let scene = generate_scene(seed, &SceneProfile::paper()).unwrap();
        let rx = sample_user_positions(&scene, 1, useed).unwrap()[0];
        let pl = trace_paths(&scene, scene.bs_pos, rx, 1);
        let direct = scene.bs_pos.dist(rx);
        for p in &pl.paths {
            prop_assert!(p.length >= direct - 1e-12);
            prop_assert!(p.n_bounces <= 1);
        }
        let mut keys: Vec<_> = pl.paths.iter().map(|p| format!("{:?}{}", p.reflector, p.n_bounces)).collect();
        let n = keys.len();
        keys.sort();
        keys.dedup();
        prop_assert_eq!(keys.len(), n);
    }
}
