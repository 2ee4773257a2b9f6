mod common;

use common::*;
use geoctl_core::io::export::{control_file_names, encode_control_frame};
use geoctl_core::io::{load_scene, save_scene, write_control_sequence};
use geoctl_core::scene::{render_background_points, SplatConfig};
use geoctl_core::{render_control_frame, render_control_sequence, Error, RenderMode, RenderSettings};

#[test]
fn scene_directory_round_trip_is_exact() {
    let (_, scene) = animated_scene(48, 32, 7, 3);
    let dir = tempfile::tempdir().unwrap();
    save_scene(&scene, dir.path()).unwrap();
    let back = load_scene(dir.path()).unwrap();
    assert_eq!(back.background(), scene.background());
    assert_eq!(back.first_frame(), scene.first_frame());
    assert_eq!(back.camera(), scene.camera());
    for (a, b) in back.objects().values().zip(scene.objects().values()) {
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.keys(), b.keys());
        assert_eq!(a.trajectory(), b.trajectory());
    }
    assert_eq!(back, scene);
    // saving again is byte-stable
    let dir2 = tempfile::tempdir().unwrap();
    save_scene(&back, dir2.path()).unwrap();
    for f in ["scene.json", "background.ply", "first_frame.png", "object_car-1.ply", "object_person-1.ply"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(dir2.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn scene_json_errors_name_the_file_and_field() {
    let (_, scene) = animated_scene(24, 16, 3, 4);
    let dir = tempfile::tempdir().unwrap();
    save_scene(&scene, dir.path()).unwrap();
    let path = dir.path().join("scene.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["objects"][1]["keys"][0]["sigma"][0] = serde_json::json!(-1.0);
    std::fs::write(&path, json.to_string()).unwrap();
    let err = load_scene(dir.path()).unwrap_err();
    assert_eq!(err.kind(), "parse");
    let msg = err.to_string();
    assert!(msg.contains("scene.json") && msg.contains("objects[1].keys[0].sigma"), "{msg}");
}

#[test]
fn export_writes_five_numbered_files_per_frame() {
    let (_, scene) = animated_scene(32, 24, 4, 5);
    let frames = render_control_sequence(&scene, RenderMode::Joint, &RenderSettings::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_control_sequence(&frames, dir.path()).unwrap();
    assert_eq!(paths.len(), 20);
    for t in 1..=4 {
        for (i, name) in control_file_names(t).iter().enumerate() {
            assert_eq!(paths[(t - 1) * 5 + i], dir.path().join(name));
            assert!(dir.path().join(name).is_file());
        }
    }
    assert_eq!(control_file_names(12)[3], "traj_depth_0012.pfm");
}

#[test]
fn rendering_is_deterministic_across_thread_counts() {
    let (_, scene) = animated_scene(40, 30, 5, 6);
    let s = RenderSettings::default();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| render_control_sequence(&scene, RenderMode::Joint, &s).unwrap());
    let many = render_control_sequence(&scene, RenderMode::Joint, &s).unwrap();
    for (a, b) in one.iter().zip(&many) {
        assert_eq!(encode_control_frame(a), encode_control_frame(b));
    }
}

#[test]
fn unit_splats_from_first_pose_reproduce_background_pixels() {
    let (inp, scene) = animated_scene(40, 30, 2, 7);
    let (rgb, depth) = render_background_points(&scene, 1, &SplatConfig { radius: 0.0 }).unwrap();
    let object_px = |c: usize, r: usize| inp.masks.iter().any(|m| *m.pixels().get(c, r));
    for r in 0..30 {
        for c in 0..40 {
            let input = inp.depth.depth(c, r);
            if input.is_some() && !object_px(c, r) {
                assert_eq!(rgb.get(c, r), inp.image.get(c, r), "({c}, {r})");
                let d = depth.depth(c, r).unwrap();
                assert!((d - input.unwrap()).abs() < 1e-5);
            } else {
                assert_eq!(depth.depth(c, r), None, "({c}, {r})");
            }
        }
    }
}

#[test]
fn object_only_holds_the_background() {
    let (_, scene) = animated_scene(32, 24, 5, 8);
    let s = RenderSettings::default();
    let frames = render_control_sequence(&scene, RenderMode::ObjectOnly, &s).unwrap();
    for f in &frames[2..] {
        assert_eq!(f.bg_rgb, frames[1].bg_rgb);
        assert_eq!(f.bg_depth, frames[1].bg_depth);
    }
    assert_ne!(frames[4].traj_rgb, frames[1].traj_rgb);
    let joint = render_control_frame(&scene, 5, RenderMode::Joint, &s).unwrap();
    assert_ne!(joint.bg_depth, frames[4].bg_depth);
}

#[test]
fn half_resolution_halves_dims_and_keeps_tracks() {
    let (_, scene) = animated_scene(41, 30, 3, 9);
    let half = scene.half_resolution();
    assert_eq!(half.first_frame().dims(), (20, 15));
    assert_eq!((half.intrinsics().width, half.intrinsics().height), (20, 15));
    assert_eq!(half.frame_count(), 3);
    assert_eq!(half.objects().len(), scene.objects().len());
    let f = render_control_frame(&half, 2, RenderMode::Joint, &RenderSettings::default()).unwrap();
    assert_eq!(f.dims(), (20, 15));
}

#[test]
fn frame_index_is_one_based() {
    let (_, scene) = animated_scene(16, 12, 3, 10);
    let s = RenderSettings::default();
    assert!(matches!(render_control_frame(&scene, 0, RenderMode::Joint, &s), Err(Error::Bounds(_))));
    assert!(matches!(render_control_frame(&scene, 4, RenderMode::Joint, &s), Err(Error::Bounds(_))));
    assert!(render_control_frame(&scene, 3, RenderMode::Joint, &s).is_ok());
}
