use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use demoforge::config::{RunConfig, Split};
use demoforge::core::primitives;
use demoforge::core::Vec3;
use demoforge::dataset;
use demoforge::files::write_json;
use demoforge::pipeline::{self, with_jobs};
use demoforge::{meshio, Error};

/// Synthesizes a source and `targets` meshes, canonicalizes and matches
/// them, and returns the loaded run configuration.
fn prepare(dir: &Path, targets: usize) -> RunConfig {
    let cfg = RunConfig { synth: demoforge::config::SynthConfig { targets, ..Default::default() }, ..Default::default() };
    pipeline::cmd_synth(&cfg, dir).unwrap();
    let mut run = RunConfig::load(&dir.join("run.json")).unwrap();
    let report = pipeline::cmd_canonicalize(&run, &dir.join("canonical")).unwrap();
    assert_eq!(report.meshes.len(), targets);
    let summary = pipeline::cmd_correspond(&run, &dir.join("keypoints")).unwrap();
    assert_eq!(summary.succeeded.len(), targets, "{:?}", summary.failed);
    run.render.resolution = 64;
    run
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn end_to_end_generation_is_deterministic_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = prepare(dir.path(), 2);
    run.split = Some(Split { meshes: 2, demos_per_mesh: 2 });

    let a = dir.path().join("gen_a");
    let b = dir.path().join("gen_b");
    let s = with_jobs(1, || pipeline::cmd_generate(&run, &a)).unwrap().unwrap();
    with_jobs(3, || pipeline::cmd_generate(&run, &b)).unwrap().unwrap();
    assert_eq!((s.requested, s.completed), (4, 4), "{:?}", s.failed);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs", k.display());
    }

    let manifest = dataset::read_manifest(&a).unwrap();
    assert_eq!(manifest.cloud_size, 1024);
    assert_eq!(manifest.demos.len(), 4);
    assert_eq!(manifest.demos[3].dir, "demo_3");
    assert_eq!(manifest.demos[2].mesh_id, "teapot_001");
    let demo = dataset::read_demo(&a, &manifest, 1).unwrap();
    assert!(demo.steps().iter().all(|st| st.cloud.len() == 1024));

    let (ply, text) = pipeline::cmd_inspect(&a, 1, 5, &dir.path().join("inspect")).unwrap();
    assert!(fs::read_to_string(ply).unwrap().starts_with("ply\n"));
    assert!(text.contains("points 1024"), "{text}");
    assert!(matches!(pipeline::cmd_inspect(&a, 9, 0, dir.path()), Err(Error::IndexOutOfRange { index: 9, len: 4 })));
    assert!(matches!(pipeline::cmd_inspect(&a, 0, 10_000, dir.path()), Err(Error::IndexOutOfRange { index: 10_000, .. })));

    // a mesh without a keypoint result is skipped, not fatal
    fs::remove_file(dir.path().join("keypoints/teapot_000.json")).unwrap();
    run.split = Some(Split { meshes: 2, demos_per_mesh: 1 });
    let s = pipeline::cmd_generate(&run, &dir.path().join("gen_c")).unwrap();
    assert_eq!((s.requested, s.completed), (2, 1));
    assert_eq!(s.failed[0].mesh_id, "teapot_000");

    fs::remove_file(dir.path().join("keypoints/teapot_001.json")).unwrap();
    let err = pipeline::cmd_generate(&run, &dir.path().join("gen_d")).unwrap_err();
    assert!(matches!(err, Error::AllFailed(2)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn canonicalize_reports_degenerate_meshes_and_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let meshes = dir.path().join("in");
    fs::create_dir_all(&meshes).unwrap();
    meshio::save_obj(&meshes.join("cube.obj"), &primitives::cuboid(Vec3::new(0.1, 0.1, 0.1))).unwrap();
    meshio::save_obj(&meshes.join("cube2.obj"), &primitives::cuboid(Vec3::new(0.1, 0.1, 0.1))).unwrap();
    meshio::save_obj(&meshes.join("brick.obj"), &primitives::cuboid(Vec3::new(0.05, 0.3, 0.1))).unwrap();
    let overrides = dir.path().join("overrides.json");
    write_json(&overrides, &BTreeMap::from([("cube2", [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.01])])).unwrap();
    let mut cfg = RunConfig::default();
    cfg.canonicalize.mesh_dir = Some(meshes);
    cfg.canonicalize.pose_overrides = Some(overrides);
    let out = dir.path().join("out");
    let r = pipeline::cmd_canonicalize(&cfg, &out).unwrap();
    assert_eq!(r.degenerate.len(), 1);
    assert_eq!(r.degenerate[0].mesh_id, "cube");
    assert_eq!(r.overrides_applied, vec!["cube2".to_string()]);
    assert_eq!(r.meshes.len(), 2);
    assert!(out.join("report.json").is_file());
    assert!(!out.join("cube.obj").exists());

    let brick = meshio::load_mesh(&out.join("brick.obj")).unwrap();
    let axis = |k: usize| {
        let vals = brick.vertices().iter().map(|v| v.to_array()[k]);
        vals.clone().fold(f64::NEG_INFINITY, f64::max) - vals.fold(f64::INFINITY, f64::min)
    };
    // longest axis to x, shortest to z
    let ext = [axis(0), axis(1), axis(2)];
    assert!((ext[0] - 0.3).abs() < 1e-9 && (ext[1] - 0.1).abs() < 1e-9 && (ext[2] - 0.05).abs() < 1e-9, "{ext:?}");
}

#[test]
fn configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(&path, r#"{"cloud_size": 1024, "unknown_key": 1}"#).unwrap();
    assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
    fs::write(&path, r#"{"cloud_size": 10}"#).unwrap();
    assert!(matches!(RunConfig::load(&path).unwrap().validate(), Err(Error::Config(_))));
    fs::write(&path, r#"{"backend": {"kind": "service", "url": "http://x", "options": {"stride": 5}}}"#).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert!(matches!(pipeline::build_backend(&cfg.backend), Err(Error::Config(_))));
    fs::write(&path, r#"{"mesh_dir": "missing"}"#).unwrap();
    assert!(matches!(RunConfig::load(&path).unwrap().mesh_paths(), Err(Error::Config(_))));
    assert!(matches!(pipeline::cmd_generate(&RunConfig::default(), dir.path()), Err(Error::Config(_))));
}

#[test]
fn task_seeds_depend_on_every_input() {
    let s = pipeline::task_seed(7, "mug", 3);
    assert_eq!(s, pipeline::task_seed(7, "mug", 3));
    assert_ne!(s, pipeline::task_seed(8, "mug", 3));
    assert_ne!(s, pipeline::task_seed(7, "mug2", 3));
    assert_ne!(s, pipeline::task_seed(7, "mug", 4));
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_demoforge");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"cloud_size": 3}"#).unwrap();
    let status = Command::new(bin).args(["generate", "--out"]).arg(dir.path()).arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = Command::new(bin).arg("inspect").arg(dir.path().join("nothing")).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = Command::new(bin).arg("--help").output().unwrap();
    assert!(status.status.success());
    assert!(String::from_utf8_lossy(&status.stdout).contains("generate"));
}
