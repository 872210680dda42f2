#![allow(dead_code)]

use demoforge::core::demo::{DemoStep, Demonstration, KeypointAnnotation, SkillRange};
use demoforge::core::geometry::Quat;
use demoforge::core::{Label, Pose, SegmentedPointCloud, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let axis = axis.try_normalize().unwrap_or(Vec3::Z);
    Pose::new(
        Quat::from_axis_angle(axis, rng.gen_range(-3.0..3.0)),
        Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    )
}

/// Demonstration of `steps` random frames with `n` points each.
pub fn random_demo(seed: u64, steps: usize, n: usize, joints: usize) -> Demonstration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_grasp = steps / 4;
    let skill = SkillRange::new(steps / 2, steps - 2).unwrap();
    let frames = (0..steps)
        .map(|t| {
            let points = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen::<f32>() - 0.5]).collect();
            let labels = (0..n).map(|_| Label::ALL[rng.gen_range(0..4)]).collect();
            let closed = (t_grasp..=skill.end).contains(&t);
            DemoStep {
                time_index: t,
                ee_pose: random_pose(&mut rng),
                gripper: if closed { rng.gen_range(0.0..0.5) } else { rng.gen_range(0.51..1.0) },
                proprioception: (0..joints).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                cloud: SegmentedPointCloud::new(points, labels).unwrap(),
            }
        })
        .collect();
    let kp = KeypointAnnotation { affording_point: Vec3::new(0.1, 0.2, 0.3), function_point: Vec3::new(-0.1, 0.0, 0.05) };
    Demonstration::new(frames, t_grasp, skill, random_pose(&mut rng), kp).unwrap()
}

/// Source teapot with annotation plus two target teapots under `dir`, and a
/// configuration using a two-view 32 px rig and the given backend JSON.
pub fn correspond_config(dir: &std::path::Path, backend: &str) -> demoforge::config::RunConfig {
    use demoforge::core::primitives::{toy_teapot, TeapotParams};
    use demoforge::files::{write_json, AnnotationFile};

    let src = toy_teapot(&TeapotParams::default());
    demoforge::meshio::save_obj(&dir.join("source.obj"), &src.mesh).unwrap();
    let ann = AnnotationFile {
        skill_range: [5, 9],
        keypoints: KeypointAnnotation { affording_point: src.affording_point, function_point: src.function_point }.into(),
        t_init: Pose::IDENTITY.to_array(),
        t_grasp: None,
    };
    write_json(&dir.join("annotation.json"), &ann).unwrap();
    std::fs::create_dir_all(dir.join("targets")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..2 {
        let t = toy_teapot(&TeapotParams::sample(&mut rng));
        demoforge::meshio::save_obj(&dir.join(format!("targets/t{k}.obj")), &t.mesh).unwrap();
    }
    let cfg = format!(
        r#"{{
  "source": {{"demo": "unused", "annotation": "annotation.json", "mesh": "source.obj"}},
  "mesh_dir": "targets",
  "rig": {{"views": 2, "resolution": 32}},
  "backend": {backend}
}}"#
    );
    let path = dir.join("run.json");
    std::fs::write(&path, cfg).unwrap();
    demoforge::config::RunConfig::load(&path).unwrap()
}
