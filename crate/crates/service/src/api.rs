//! JSON request and response bodies of the `/v1` endpoints.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use geoctl_core::camera::{IntrinsicsJson, PoseJson};
use geoctl_core::gaussian::KeyJson;
use geoctl_core::metrics::{Alignment, EvalManifest};
use geoctl_core::RenderMode;

pub const API_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedScene {
    pub scene_id: String,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub object_id: String,
    pub label: String,
    pub color: [f32; 3],
    pub points: usize,
    pub keys: Vec<KeyJson>,
}

/// `GET /v1/scenes/{id}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub revision: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub background_points: usize,
    pub intrinsics: IntrinsicsJson,
    pub camera: Vec<PoseJson>,
    pub objects: Vec<ObjectSummary>,
    /// Frames whose cached previews are stale, ascending.
    pub dirty_frames: Vec<usize>,
}

/// `PUT /v1/scenes/{id}/camera`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraUpdate {
    /// Revision the edit is based on.
    pub revision: u64,
    pub poses: Vec<PoseJson>,
    /// Defaults to the current intrinsics; the image size cannot change.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<IntrinsicsJson>,
}

/// `PUT /v1/scenes/{id}/objects/{oid}/keyframes`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframesUpdate {
    pub revision: u64,
    pub keys: Vec<KeyJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationResult {
    pub revision: u64,
    pub dirty_frames: Vec<usize>,
}

/// Query of `POST /v1/scenes/{id}/render`.
#[derive(Debug, Clone, Deserialize)]
pub struct RenderQuery {
    pub frame: usize,
    #[serde(default = "default_mode")]
    pub mode: RenderMode,
    /// `1` or `true` renders at full resolution instead of half.
    #[serde(default)]
    pub full: Option<String>,
}

fn default_mode() -> RenderMode {
    RenderMode::Joint
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMap {
    pub name: String,
    pub file_name: String,
    pub media_type: String,
    /// Base64 (standard alphabet, padded) file bytes.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub scene_id: String,
    pub revision: u64,
    pub frame: usize,
    pub mode: RenderMode,
    pub full_resolution: bool,
    pub width: usize,
    pub height: usize,
    pub cached: bool,
    /// `bg_rgb`, `bg_depth`, `traj_rgb`, `traj_depth`, `mask`, in that order.
    pub maps: Vec<EncodedMap>,
}

/// `POST /v1/scenes/{id}/export`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRequest {
    pub out_dir: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: RenderMode,
    /// Also write the edited scene directory here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportResponse {
    pub revision: u64,
    pub frames: usize,
    pub paths: Vec<PathBuf>,
}

/// `POST /v1/eval`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub gt: EvalManifest,
    pub pred: EvalManifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub align: Alignment,
}

/// Per-object keyframe file accepted by `geoctl init --keyframes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectKeyframes {
    pub object_id: String,
    pub keys: Vec<KeyJson>,
}

/// Labels keyed by instance id, e.g. `{"1": "person"}`.
pub type LabelMap = BTreeMap<String, String>;
