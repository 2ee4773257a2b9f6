//! Editable scene sessions with optimistic concurrency and a per-frame
//! preview cache.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use geoctl_core::camera::{poses_to_json, CameraTrack, IntrinsicsJson};
use geoctl_core::gaussian::{KeyframeTrack, TrajectoryJson};
use geoctl_core::{RenderMode, SceneState};

use crate::api::{ObjectSummary, SceneSummary};
use crate::error::{ServiceError, ServiceResult};

/// Encoded control maps of one frame, in export order.
pub type EncodedFrame = Arc<[Vec<u8>; 5]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreviewKey {
    pub frame: usize,
    pub mode: RenderMode,
    pub full: bool,
}

/// One scene under edit. The scene itself is an immutable snapshot that
/// mutations replace, so renders in flight keep the state they started with.
#[derive(Debug)]
pub struct SceneSession {
    pub scene_id: String,
    revision: u64,
    scene: Arc<SceneState>,
    half: Option<Arc<SceneState>>,
    dirty: BTreeSet<usize>,
    cache: HashMap<PreviewKey, EncodedFrame>,
}

impl SceneSession {
    pub fn new(scene_id: impl Into<String>, scene: SceneState) -> Self {
        let dirty = (1..=scene.frame_count()).collect();
        Self {
            scene_id: scene_id.into(),
            revision: 0,
            scene: Arc::new(scene),
            half: None,
            dirty,
            cache: HashMap::new(),
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn scene(&self) -> Arc<SceneState> {
        Arc::clone(&self.scene)
    }

    /// Scene at preview (half) resolution, built on first use.
    pub fn preview_scene(&mut self) -> Arc<SceneState> {
        let scene = &self.scene;
        Arc::clone(self.half.get_or_insert_with(|| Arc::new(scene.half_resolution())))
    }

    pub fn dirty_frames(&self) -> Vec<usize> {
        self.dirty.iter().copied().collect()
    }

    pub fn cached(&self, key: &PreviewKey) -> Option<EncodedFrame> {
        self.cache.get(key).cloned()
    }

    /// Stores a preview rendered from the snapshot at `revision` and clears
    /// the frame's dirty flag; stale results are dropped.
    pub fn store_preview(&mut self, revision: u64, key: PreviewKey, frame: EncodedFrame) {
        if revision != self.revision {
            return;
        }
        self.cache.insert(key, frame);
        self.dirty.remove(&key.frame);
    }

    fn check_revision(&self, expected: u64) -> ServiceResult<()> {
        if expected != self.revision {
            return Err(ServiceError::Conflict {
                expected,
                current: self.revision,
            });
        }
        Ok(())
    }

    fn commit(&mut self, scene: SceneState, changed: BTreeSet<usize>) -> u64 {
        self.cache.retain(|k, _| !changed.contains(&k.frame));
        self.dirty.extend(changed);
        self.scene = Arc::new(scene);
        self.half = None;
        self.revision += 1;
        self.revision
    }

    /// Replaces the camera track. Every frame becomes dirty.
    pub fn set_camera(&mut self, expected: u64, camera: CameraTrack<f64>) -> ServiceResult<u64> {
        self.check_revision(expected)?;
        let mut scene = (*self.scene).clone();
        scene.set_camera(camera)?;
        self.cache.clear();
        self.dirty.clear();
        let all = (1..=scene.frame_count()).collect();
        Ok(self.commit(scene, all))
    }

    /// Replaces one object's keyframes. Only frames whose Gaussian changed
    /// become dirty.
    pub fn set_keyframes(&mut self, expected: u64, object_id: &str, keys: KeyframeTrack<f64>) -> ServiceResult<u64> {
        self.check_revision(expected)?;
        let before = self
            .scene
            .objects()
            .get(object_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown object {object_id:?}")))?
            .trajectory()
            .clone();
        let mut scene = (*self.scene).clone();
        scene.set_keyframes(object_id, keys)?;
        let after = scene.objects()[object_id].trajectory();
        let changed = before
            .frames()
            .iter()
            .zip(after.frames())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i + 1)
            .collect();
        Ok(self.commit(scene, changed))
    }

    pub fn summary(&self) -> SceneSummary {
        let s = &self.scene;
        let k = s.intrinsics();
        SceneSummary {
            scene_id: self.scene_id.clone(),
            revision: self.revision,
            frames: s.frame_count(),
            width: k.width,
            height: k.height,
            background_points: s.background().len(),
            intrinsics: IntrinsicsJson::from(k),
            camera: poses_to_json(s.camera().poses()),
            objects: s
                .objects()
                .iter()
                .map(|(id, o)| ObjectSummary {
                    object_id: id.clone(),
                    label: o.label.clone(),
                    color: o.color,
                    points: o.cloud.len(),
                    keys: TrajectoryJson::from_track(id, o.color, o.keys()).keys,
                })
                .collect(),
            dirty_frames: self.dirty_frames(),
        }
    }
}

/// All open sessions. Each session has its own lock, so edits to one scene
/// never block renders of another.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<BTreeMap<String, Arc<Mutex<SceneSession>>>>,
    next_id: AtomicU64,
}

impl SessionStore {
    pub fn insert(&self, scene: SceneState) -> String {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("s{n}");
        self.insert_with_id(id.clone(), scene);
        id
    }

    pub fn insert_with_id(&self, scene_id: String, scene: SceneState) {
        let session = SceneSession::new(scene_id.clone(), scene);
        self.sessions
            .write()
            .expect("session map lock")
            .insert(scene_id, Arc::new(Mutex::new(session)));
    }

    pub fn get(&self, scene_id: &str) -> ServiceResult<Arc<Mutex<SceneSession>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(scene_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown scene {scene_id:?}")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.read().expect("session map lock").keys().cloned().collect()
    }
}
