#![allow(dead_code)]

use geoctl_core::camera::{CameraIntrinsics, CameraPose, CameraTrack};
use geoctl_core::gaussian::{Gaussian3, KeyframeTrack};
use geoctl_core::grid::{DepthMap, Grid, RgbImage};
use geoctl_core::scene::{build_scene, InstanceMask, SceneState};
use nalgebra::{UnitQuaternion, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub struct Inputs {
    pub image: RgbImage,
    pub depth: DepthMap,
    pub masks: Vec<InstanceMask>,
    pub k: CameraIntrinsics<f64>,
}

/// Image quantized to 8-bit levels, depth on a tilted plane with holes, and
/// two rectangular masks.
pub fn inputs(w: usize, h: usize, seed: u64) -> Inputs {
    let mut rng = StdRng::seed_from_u64(seed);
    let image = Grid::from_fn(w, h, |_, _| [0, 1, 2].map(|_| rng.random_range(0..=255u8) as f32 / 255.0));
    let depth = Grid::from_fn(w, h, |c, r| {
        if (c * 7 + r * 13) % 41 == 0 {
            0.0
        } else {
            3.0 + 0.5 * (c as f32 / w as f32) + 0.25 * (r as f32 / h as f32)
        }
    });
    let rect = |x0: usize, y0: usize, x1: usize, y1: usize| Grid::from_fn(w, h, |c, r| c >= x0 && c < x1 && r >= y0 && r < y1);
    let masks = vec![
        InstanceMask::new("person-1", "person", rect(w / 5, h / 4, w / 5 + w / 10, h / 4 + h / 3)).unwrap(),
        InstanceMask::new("car-1", "car", rect(w / 2, h / 2, w / 2 + w / 4, h / 2 + h / 6)).unwrap(),
    ];
    let f = w as f64 * 0.9;
    let k = CameraIntrinsics::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h).unwrap();
    Inputs {
        image,
        depth: DepthMap::from_values(depth),
        masks,
        k,
    }
}

pub fn orbit(k: CameraIntrinsics<f64>, frames: usize, step: f64) -> CameraTrack<f64> {
    let poses = (0..frames)
        .map(|i| {
            let a = step * i as f64;
            let q = UnitQuaternion::from_euler_angles(0.0, a, 0.0);
            CameraPose::from_quaternion(q, Vector3::new(-0.5 * a, 0.0, 0.2 * a))
        })
        .collect();
    CameraTrack::new(k, poses).unwrap()
}

/// Moves every object by `shift` over the sequence.
pub fn push_objects(scene: &mut SceneState, shift: Vector3<f64>) {
    let frames = scene.frame_count();
    let ids: Vec<String> = scene.objects().keys().cloned().collect();
    for id in ids {
        let g0 = scene.objects()[&id].keys().keys()[0].1;
        let g1 = Gaussian3::new(g0.mean + shift, g0.cov).unwrap();
        let keys = if frames > 1 {
            KeyframeTrack::new(vec![(1, g0), (frames, g1)]).unwrap()
        } else {
            KeyframeTrack::single(1, g0).unwrap()
        };
        scene.set_keyframes(&id, keys).unwrap();
    }
}

pub fn animated_scene(w: usize, h: usize, frames: usize, seed: u64) -> (Inputs, SceneState) {
    let inp = inputs(w, h, seed);
    let mut scene = build_scene(&inp.image, &inp.depth, &inp.masks, &inp.k, &CameraPose::identity()).unwrap();
    scene.set_camera(orbit(inp.k, frames, 0.01)).unwrap();
    push_objects(&mut scene, Vector3::new(0.4, 0.0, -0.3));
    (inp, scene)
}
