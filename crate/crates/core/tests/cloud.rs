use std::collections::HashSet;

use demoforge_core::cloud::{
    assemble, assemble_frame, dbscan_filter, fps_indices, goal_source_indices, min_pairwise_distance, CloudError,
};
use demoforge_core::demo::SkillRange;
use demoforge_core::{Label, SegmentedPointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn d2(a: [f32; 3], b: [f32; 3]) -> f64 {
    (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum()
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f32; 3]> {
    (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2)]).collect()
}

/// Best min-pairwise distance over all 4-subsets, with branch pruning.
fn exhaustive_best_four(points: &[[f32; 3]]) -> f64 {
    let n = points.len();
    let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d2(points[i], points[j])).collect()).collect();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let m1 = d[i][j];
            if m1 <= best {
                continue;
            }
            for k in j + 1..n {
                let m2 = m1.min(d[i][k]).min(d[j][k]);
                if m2 <= best {
                    continue;
                }
                for l in k + 1..n {
                    let m3 = m2.min(d[i][l]).min(d[j][l]).min(d[k][l]);
                    if m3 > best {
                        best = m3;
                    }
                }
            }
        }
    }
    best.sqrt()
}

#[test]
fn fps_farthest_property_and_two_approximation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let size = rng.gen_range(4..=200);
        let pts = random_cloud(&mut rng, size);
        let n = rng.gen_range(1..=size);
        let sel = fps_indices(&pts, n).unwrap();
        assert_eq!(sel.len(), n);
        assert_eq!(sel.iter().collect::<HashSet<_>>().len(), n);

        let mut centroid = [0.0f64; 3];
        for p in &pts {
            for k in 0..3 {
                centroid[k] += p[k] as f64 / size as f64;
            }
        }
        let far = |i: usize| (0..3).map(|k| (pts[i][k] as f64 - centroid[k]).powi(2)).sum::<f64>();
        let top = (0..size).map(far).fold(f64::NEG_INFINITY, f64::max);
        assert!(far(sel[0]) >= top * (1.0 - 1e-12));

        for k in 1..n {
            let chosen = &sel[..k];
            let min_to = |i: usize| chosen.iter().map(|&c| d2(pts[i], pts[c])).fold(f64::INFINITY, f64::min);
            let remaining: Vec<usize> = (0..size).filter(|i| !chosen.contains(i)).collect();
            let best = remaining.iter().map(|&i| min_to(i)).fold(f64::NEG_INFINITY, f64::max);
            let first_best = *remaining.iter().find(|&&i| min_to(i) == best).unwrap();
            assert_eq!(min_to(sel[k]), best, "step {k} is not farthest");
            assert_eq!(sel[k], first_best, "tie at step {k} not broken by lowest index");
        }

        let four = fps_indices(&pts, 4).unwrap();
        let got = min_pairwise_distance(&four.iter().map(|&i| pts[i]).collect::<Vec<_>>());
        assert!(got >= 0.5 * exhaustive_best_four(&pts));
    }
}

#[test]
fn fps_examples() {
    let seg = [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]];
    let mut two = fps_indices(&seg, 2).unwrap();
    two.sort();
    assert_eq!(two, vec![0, 2]);
    let cube: Vec<[f32; 3]> = (0..8).map(|i| [(i & 1) as f32, ((i >> 1) & 1) as f32, ((i >> 2) & 1) as f32]).collect();
    let four: Vec<[f32; 3]> = fps_indices(&cube, 4).unwrap().iter().map(|&i| cube[i]).collect();
    assert!(min_pairwise_distance(&four) >= 0.5 * exhaustive_best_four(&cube));
    assert_eq!(fps_indices(&seg, 4), Err(CloudError::TooFewPoints { requested: 4, available: 3 }));
}

#[test]
fn dbscan_drops_far_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pts: Vec<[f32; 3]> = (0..500).map(|_| [rng.gen_range(0.0..0.03), rng.gen_range(0.0..0.03), rng.gen_range(0.0..0.03)]).collect();
    for k in 0..5 {
        pts.push([1.0 + k as f32, 1.0, 1.0]);
    }
    let cloud = SegmentedPointCloud::uniform(pts.clone(), Label::Object).unwrap();
    let kept = dbscan_filter(&cloud, 0.01, 10).unwrap();
    assert_eq!(kept.points(), &pts[..500]);
}

/// Real frames whose goal points encode the frame index in their x coordinate.
fn real_frames(len: usize, goal_points: usize) -> Vec<SegmentedPointCloud> {
    (0..len)
        .map(|t| {
            let mut c = SegmentedPointCloud::default();
            for i in 0..goal_points {
                c.push([t as f32 * 10.0, i as f32 * 0.01, 0.0], Label::Goal).unwrap();
            }
            for i in 0..50 {
                c.push([-5.0, i as f32 * 0.01, 1.0], Label::Robot).unwrap();
                c.push([-6.0, i as f32 * 0.01, 1.0], Label::Object).unwrap();
            }
            c
        })
        .collect()
}

fn sim_frames(len: usize, per_label: usize, rng: &mut ChaCha8Rng) -> Vec<SegmentedPointCloud> {
    (0..len)
        .map(|_| {
            let mut c = SegmentedPointCloud::default();
            for _ in 0..per_label {
                c.push([rng.gen_range(2.0..3.0), rng.gen_range(0.0..1.0), 2.0], Label::Robot).unwrap();
                c.push([rng.gen_range(3.0..4.0), rng.gen_range(0.0..1.0), 2.0], Label::Object).unwrap();
                c.push([9.0, 9.0, 9.0], Label::Goal).unwrap();
            }
            c
        })
        .collect()
}

#[test]
fn assemble_replays_skill_goal_frames_and_keeps_labels_apart() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let source_skill = SkillRange::new(20, 34).unwrap();
    let target_skill = SkillRange::new(30, 44).unwrap();
    for (goal_points, per_label) in [(300, 300), (2000, 600)] {
        let real = real_frames(50, goal_points);
        let sim = sim_frames(60, per_label, &mut rng);
        let frames = assemble(&real, &sim, source_skill, target_skill, 1024, &mut rng).unwrap();
        assert_eq!(frames.len(), 60);
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(f.len(), 1024);
            let goal: Vec<[f32; 3]> = f.iter().filter(|p| p.1 == Label::Goal).map(|p| p.0).collect();
            let frame_of = |p: [f32; 3]| (p[0] / 10.0).round() as usize;
            if target_skill.contains(t) {
                let src = t - target_skill.start + source_skill.start;
                assert!(goal.iter().all(|&p| frame_of(p) == src));
                if goal_points + 2 * per_label <= 1024 {
                    let mut got: Vec<[u32; 3]> = goal.iter().map(|p| p.map(f32::to_bits)).collect();
                    got.sort();
                    got.dedup();
                    let mut want: Vec<[u32; 3]> =
                        real[src].iter().filter(|p| p.1 == Label::Goal).map(|p| p.0.map(f32::to_bits)).collect();
                    want.sort();
                    assert_eq!(got, want);
                }
            } else {
                assert!(goal.iter().all(|&p| !source_skill.contains(frame_of(p))));
            }
            // goal points never come from the simulated frame, robot/object never from the real one
            for (p, l) in f.iter() {
                match l {
                    Label::Goal => assert!(p[0] != 9.0),
                    Label::Robot => assert!((2.0..3.0).contains(&p[0])),
                    Label::Object => assert!((3.0..4.0).contains(&p[0])),
                    Label::Other => panic!("unexpected label"),
                }
            }
        }
    }
}

#[test]
fn goal_sources_follow_index_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let src = SkillRange::new(40, 75).unwrap();
    let tgt = SkillRange::new(50, 85).unwrap();
    let idx = goal_source_indices(100, src, tgt, 100, &mut rng).unwrap();
    for t in 50..=85 {
        assert_eq!(idx[t], t - 10);
    }
    let too_long = SkillRange::new(50, 120).unwrap();
    assert_eq!(
        goal_source_indices(100, src, too_long, 130, &mut rng),
        Err(CloudError::IndexOutOfRange { index: 100, len: 100 })
    );
}

#[test]
fn small_merged_frame_is_padded_to_n() {
    let real = SegmentedPointCloud::uniform(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], Label::Goal).unwrap();
    let sim = SegmentedPointCloud::uniform(vec![[0.0, 1.0, 0.0]], Label::Robot).unwrap();
    let f = assemble_frame(&real, &sim, 1024).unwrap();
    assert_eq!(f.len(), 1024);
    assert_eq!(f.label_histogram(), [341, 0, 683, 0]);
}

/// Plain quadratic farthest point sampling with the same start and tie rule.
fn fps_brute(points: &[[f32; 3]], n: usize) -> Vec<usize> {
    let len = points.len() as f64;
    let c = (0..3).map(|k| points.iter().map(|p| p[k] as f64).sum::<f64>() / len).collect::<Vec<_>>();
    let from_c = |p: [f32; 3]| (0..3).map(|k| (p[k] as f64 - c[k]).powi(2)).fold(0.0, |a, b| a + b);
    let mut cur = 0;
    for i in 1..points.len() {
        if from_c(points[i]) > from_c(points[cur]) {
            cur = i;
        }
    }
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut out = vec![cur];
    let mut taken = vec![false; points.len()];
    taken[cur] = true;
    while out.len() < n {
        let mut next = usize::MAX;
        for i in 0..points.len() {
            if taken[i] {
                continue;
            }
            let dx = points[i][0] as f64 - points[cur][0] as f64;
            let dy = points[i][1] as f64 - points[cur][1] as f64;
            let dz = points[i][2] as f64 - points[cur][2] as f64;
            min_d[i] = min_d[i].min(dx * dx + dy * dy + dz * dz);
            if next == usize::MAX || min_d[i] > min_d[next] {
                next = i;
            }
        }
        taken[next] = true;
        out.push(next);
        cur = next;
    }
    out
}

#[test]
fn fps_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..40 {
        let len = rng.gen_range(1..600);
        let pts: Vec<[f32; 3]> = if trial % 2 == 0 {
            random_cloud(&mut rng, len)
        } else {
            // coarse lattice: many exact ties and duplicates
            (0..len).map(|_| [rng.gen_range(0..4) as f32, rng.gen_range(0..4) as f32, rng.gen_range(0..2) as f32 * 0.5]).collect()
        };
        let n = rng.gen_range(1..=len);
        assert_eq!(fps_indices(&pts, n).unwrap(), fps_brute(&pts, n), "trial {trial}");
    }
}
