//! Operations shared by the CLI and the HTTP handlers, so both produce the
//! same scenes and byte-identical exports.

use std::path::{Path, PathBuf};

use geoctl_core::camera::{CameraIntrinsics, CameraPose, CameraTrack, IntrinsicsJson, PoseJson};
use geoctl_core::curation::CLIP_LEN;
use geoctl_core::gaussian::{KeyJson, KeyframeTrack};
use geoctl_core::io::{pfm, png, write_control_sequence};
use geoctl_core::packing::{rearrange_mask, PackedMask, StrideConfig, Tensor4};
use geoctl_core::scene::masks_from_id_grid;
use geoctl_core::{build_scene, render_control_sequence, DepthMap, Error, RenderMode, RenderSettings, SceneState};

use crate::api::{LabelMap, ObjectKeyframes};
use crate::error::{ServiceError, ServiceResult};

/// Encoded inputs of a new scene.
#[derive(Debug, Clone)]
pub struct SceneInputs {
    /// RGB PNG.
    pub image: Vec<u8>,
    /// Metric depth PFM; non-positive or non-finite values are invalid.
    pub depth: Vec<u8>,
    /// Instance-id PNG (8 or 16 bit), 0 = background.
    pub masks: Vec<u8>,
    pub intrinsics: IntrinsicsJson,
    pub labels: LabelMap,
    /// Camera track; the first pose anchors the back-projection.
    pub poses: Option<Vec<PoseJson>>,
    /// Frame count of a static camera when `poses` is absent.
    pub frames: Option<usize>,
    pub keyframes: Vec<ObjectKeyframes>,
}

fn unprocessable(field: impl Into<String>, e: impl ToString) -> ServiceError {
    ServiceError::Unprocessable {
        field: field.into(),
        message: e.to_string(),
    }
}

/// Camera poses with the offending index in the field path.
pub fn parse_poses(poses: &[PoseJson], field: &str) -> ServiceResult<Vec<CameraPose<f64>>> {
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| CameraPose::try_from(p).map_err(|e| unprocessable(format!("{field}[{i}]"), e)))
        .collect()
}

/// Keyframes checked against `[1, frames]`, with field paths on failure.
pub fn parse_keys(keys: &[KeyJson], frames: usize) -> ServiceResult<KeyframeTrack<f64>> {
    if keys.is_empty() {
        return Err(unprocessable("keys", "at least one keyframe is required"));
    }
    let mut out = Vec::with_capacity(keys.len());
    for (i, k) in keys.iter().enumerate() {
        if k.frame == 0 || k.frame > frames {
            return Err(unprocessable(
                format!("keys[{i}].frame"),
                format!("frame {} outside [1, {frames}]", k.frame),
            ));
        }
        if i > 0 && k.frame <= keys[i - 1].frame {
            return Err(unprocessable(format!("keys[{i}].frame"), "frames must be strictly increasing"));
        }
        if k.mu.iter().any(|v| !v.is_finite()) {
            return Err(unprocessable(format!("keys[{i}].mu"), "mean must be finite"));
        }
        let g = k
            .to_gaussian()
            .map_err(|e| unprocessable(format!("keys[{i}].sigma"), e.detail()))?;
        out.push((k.frame, g));
    }
    KeyframeTrack::new(out).map_err(|e| unprocessable("keys", e))
}

/// Decodes and validates the inputs, then builds the scene.
pub fn build_scene_from_inputs(inputs: &SceneInputs) -> ServiceResult<SceneState> {
    let image = png::decode_rgb(&inputs.image).map_err(|e| unprocessable("image", e))?;
    let depth = pfm::decode_pfm(inputs.depth.as_slice()).map_err(|e| unprocessable("depth", e))?;
    let depth = DepthMap::from_values(depth);
    let ids = png::decode_ids(&inputs.masks).map_err(|e| unprocessable("masks", e))?;
    let k = CameraIntrinsics::try_from(inputs.intrinsics).map_err(|e| unprocessable("intrinsics", e))?;
    let masks = masks_from_id_grid(&ids, &inputs.labels);

    let poses = match (&inputs.poses, inputs.frames) {
        (Some(p), frames) => {
            if p.is_empty() {
                return Err(unprocessable("poses", "camera track needs at least one pose"));
            }
            if let Some(n) = frames.filter(|n| *n != p.len()) {
                return Err(unprocessable("frames", format!("{n} frames requested but {} poses given", p.len())));
            }
            parse_poses(p, "poses")?
        }
        (None, frames) => {
            let n = frames.unwrap_or(CLIP_LEN);
            if n == 0 {
                return Err(unprocessable("frames", "frame count must be >= 1"));
            }
            vec![CameraPose::identity(); n]
        }
    };
    let mut scene = build_scene(&image, &depth, &masks, &k, &poses[0])?;
    scene.set_camera(CameraTrack::new(k, poses)?)?;
    for (i, ok) in inputs.keyframes.iter().enumerate() {
        if !scene.objects().contains_key(&ok.object_id) {
            return Err(unprocessable(
                format!("keyframes[{i}].object_id"),
                format!("unknown object {:?}", ok.object_id),
            ));
        }
        let track = parse_keys(&ok.keys, scene.frame_count()).map_err(|e| match e {
            ServiceError::Unprocessable { field, message } => ServiceError::Unprocessable {
                field: format!("keyframes[{i}].{field}"),
                message,
            },
            other => other,
        })?;
        scene.set_keyframes(&ok.object_id, track)?;
    }
    Ok(scene)
}

/// Renders the full-resolution control sequence and writes it to `dir`.
pub fn export_sequence(scene: &SceneState, mode: RenderMode, dir: &Path) -> ServiceResult<Vec<PathBuf>> {
    let frames = render_control_sequence(scene, mode, &RenderSettings::default())?;
    Ok(write_control_sequence(&frames, dir)?)
}

/// Stacks `mask_*.png` from `dir` (sorted by name) into `1 x T x H x W`.
pub fn load_mask_stack(dir: &Path) -> ServiceResult<Tensor4> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_owned(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("mask_") && n.ends_with(".png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Shape(format!("no mask_*.png files in {}", dir.display())).into());
    }
    let frames = paths
        .iter()
        .map(|p| png::read_gray(p))
        .collect::<geoctl_core::Result<Vec<_>>>()?;
    Ok(Tensor4::from_frames(&frames)?)
}

pub fn pack_mask_dir(dir: &Path, strides: &StrideConfig) -> ServiceResult<PackedMask> {
    Ok(rearrange_mask(&load_mask_stack(dir)?, strides)?)
}

/// Parses `T,H,W` stride triples such as `4,8,8`.
pub fn parse_strides(s: &str) -> Result<StrideConfig, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [t, h, w] = parts.as_slice() else {
        return Err(format!("expected three comma-separated strides, got {s:?}"));
    };
    let n = |v: &str| v.parse::<usize>().map_err(|e| format!("stride {v:?}: {e}"));
    StrideConfig::new(n(t)?, n(h)?, n(w)?).map_err(|e| e.to_string())
}
