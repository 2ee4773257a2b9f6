//! Scene directory layout:
//!
//! ```text
//! scene/
//!   scene.json          camera track, object registry, keyframes
//!   background.ply
//!   object_<id>.ply
//!   first_frame.png
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{png, ply};
use crate::camera::{poses_from_json, poses_to_json, CameraIntrinsics, CameraTrack, IntrinsicsJson, PoseJson};
use crate::error::{Error, Result};
use crate::gaussian::{KeyJson, TrajectoryJson};
use crate::scene::SceneState;

pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectJson {
    pub object_id: String,
    pub label: String,
    pub cloud: String,
    pub color: [f32; 3],
    pub keys: Vec<KeyJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub version: u32,
    pub intrinsics: IntrinsicsJson,
    pub poses: Vec<PoseJson>,
    pub background: String,
    pub first_frame: String,
    pub objects: Vec<SceneObjectJson>,
}

/// File-name-safe form of an object id.
pub fn object_file_stem(object_id: &str) -> String {
    let safe: String = object_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("object_{safe}")
}

pub fn scene_to_json(scene: &SceneState) -> SceneJson {
    SceneJson {
        version: SCENE_FORMAT_VERSION,
        intrinsics: IntrinsicsJson::from(scene.intrinsics()),
        poses: poses_to_json(scene.camera().poses()),
        background: "background.ply".into(),
        first_frame: "first_frame.png".into(),
        objects: scene
            .objects()
            .iter()
            .map(|(id, o)| SceneObjectJson {
                object_id: id.clone(),
                label: o.label.clone(),
                cloud: format!("{}.ply", object_file_stem(id)),
                color: o.color,
                keys: TrajectoryJson::from_track(id, o.color, o.keys()).keys,
            })
            .collect(),
    }
}

pub fn save_scene(scene: &SceneState, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = scene_to_json(scene);
    ply::write_ply(&dir.join(&json.background), scene.background())?;
    png::write_rgb(&dir.join(&json.first_frame), scene.first_frame())?;
    for o in &json.objects {
        ply::write_ply(&dir.join(&o.cloud), &scene.objects()[&o.object_id].cloud)?;
    }
    let path = dir.join("scene.json");
    let text = serde_json::to_string_pretty(&json).expect("scene json serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn load_scene(dir: &Path) -> Result<SceneState> {
    let path = dir.join("scene.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let json: SceneJson = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
    if json.version != SCENE_FORMAT_VERSION {
        return Err(Error::parse(&path, format!("unsupported scene version {}", json.version)));
    }
    let k = CameraIntrinsics::try_from(json.intrinsics).map_err(|e| Error::parse(&path, e))?;
    let poses = poses_from_json(&json.poses).map_err(|e| Error::parse(&path, e))?;
    let camera = CameraTrack::new(k, poses).map_err(|e| Error::parse(&path, e))?;
    let background = ply::read_ply(&dir.join(&json.background))?;
    let first_frame = png::read_rgb(&dir.join(&json.first_frame))?;
    let mut objects = Vec::with_capacity(json.objects.len());
    for (i, o) in json.objects.iter().enumerate() {
        let cloud = ply::read_ply(&dir.join(&o.cloud))?;
        let track = TrajectoryJson {
            object_id: o.object_id.clone(),
            color: o.color,
            keys: o.keys.clone(),
        }
        .to_track()
        .map_err(|e| Error::parse(&path, format!("objects[{i}].{}", e.detail())))?;
        objects.push((o.object_id.clone(), o.label.clone(), cloud, o.color, track));
    }
    SceneState::from_parts(background, objects, camera, first_frame)
}
