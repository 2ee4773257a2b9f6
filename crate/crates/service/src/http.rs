//! `/v1` HTTP/JSON endpoints.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;

use geoctl_core::camera::{CameraIntrinsics, CameraTrack, IntrinsicsJson};
use geoctl_core::io::export::{control_file_names, encode_control_frame};
use geoctl_core::io::save_scene;
use geoctl_core::metrics::{evaluate_pair, EvalOptions, EvalReport, DEFAULT_UNMATCHED_PENALTY};
use geoctl_core::{render_control_frame, RenderSettings};

use crate::api::*;
use crate::error::{ServiceError, ServiceResult};
use crate::ops::{build_scene_from_inputs, export_sequence, parse_keys, parse_poses, SceneInputs};
use crate::session::{PreviewKey, SessionStore};

const MAP_NAMES: [&str; 5] = ["bg_rgb", "bg_depth", "traj_rgb", "traj_depth", "mask"];

pub type AppState = Arc<SessionStore>;

pub fn router(store: AppState) -> Router {
    let v1 = Router::new()
        .route("/scenes", post(create_scene))
        .route("/scenes/{id}", get(get_scene))
        .route("/scenes/{id}/camera", put(put_camera))
        .route("/scenes/{id}/objects/{oid}/keyframes", put(put_keyframes))
        .route("/scenes/{id}/render", post(render_preview))
        .route("/scenes/{id}/export", post(export_scene))
        .route("/eval", post(eval));
    Router::new().nest("/v1", v1).with_state(store)
}

/// Serves until Ctrl-C.
pub async fn serve(store: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> ServiceResult<T> {
    r.map(|Json(v)| v).map_err(|e| ServiceError::Unprocessable {
        field: "body".into(),
        message: e.body_text(),
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn create_scene(State(store): State<AppState>, mut form: Multipart) -> ServiceResult<(StatusCode, Json<CreatedScene>)> {
    let bad = |field: &str, e: &dyn std::fmt::Display| ServiceError::Unprocessable {
        field: field.to_owned(),
        message: e.to_string(),
    };
    let (mut image, mut depth, mut masks, mut intrinsics) = (None, None, None, None);
    let (mut labels, mut poses, mut frames, mut keyframes) = (LabelMap::new(), None, None, Vec::new());
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ServiceError::BadRequest(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_owned();
        let bytes = field.bytes().await.map_err(|e| bad(&name, &e))?;
        match name.as_str() {
            "image" => image = Some(bytes.to_vec()),
            "depth" => depth = Some(bytes.to_vec()),
            "masks" => masks = Some(bytes.to_vec()),
            "intrinsics" => {
                intrinsics = Some(serde_json::from_slice::<IntrinsicsJson>(&bytes).map_err(|e| bad(&name, &e))?)
            }
            "labels" => labels = serde_json::from_slice(&bytes).map_err(|e| bad(&name, &e))?,
            "poses" => poses = Some(serde_json::from_slice(&bytes).map_err(|e| bad(&name, &e))?),
            "frames" => {
                let text = String::from_utf8_lossy(&bytes);
                frames = Some(text.trim().parse::<usize>().map_err(|e| bad(&name, &e))?)
            }
            "keyframes" => keyframes = serde_json::from_slice(&bytes).map_err(|e| bad(&name, &e))?,
            _ => return Err(bad(&name, &"unknown multipart field")),
        }
    }
    let missing = |f: &str| bad(f, &"required field is missing");
    let inputs = SceneInputs {
        image: image.ok_or_else(|| missing("image"))?,
        depth: depth.ok_or_else(|| missing("depth"))?,
        masks: masks.ok_or_else(|| missing("masks"))?,
        intrinsics: intrinsics.ok_or_else(|| missing("intrinsics"))?,
        labels,
        poses,
        frames,
        keyframes,
    };
    let scene = blocking(move || build_scene_from_inputs(&inputs)).await?;
    let scene_id = store.insert(scene);
    Ok((StatusCode::CREATED, Json(CreatedScene { scene_id, revision: 0 })))
}

async fn get_scene(State(store): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SceneSummary>> {
    let session = store.get(&id)?;
    let summary = session.lock().expect("session lock").summary();
    Ok(Json(summary))
}

async fn put_camera(
    State(store): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<CameraUpdate>, JsonRejection>,
) -> ServiceResult<Json<MutationResult>> {
    let session = store.get(&id)?;
    let req = body(req)?;
    let mut s = session.lock().expect("session lock");
    if req.revision != s.revision() {
        return Err(ServiceError::Conflict {
            expected: req.revision,
            current: s.revision(),
        });
    }
    let scene = s.scene();
    let k = match req.intrinsics {
        Some(j) => CameraIntrinsics::try_from(j).map_err(|e| ServiceError::Unprocessable {
            field: "intrinsics".into(),
            message: e.to_string(),
        })?,
        None => *scene.intrinsics(),
    };
    let poses = parse_poses(&req.poses, "poses")?;
    let camera = CameraTrack::new(k, poses).map_err(|e| ServiceError::Unprocessable {
        field: "poses".into(),
        message: e.to_string(),
    })?;
    let revision = s.set_camera(req.revision, camera).map_err(|e| match e {
        ServiceError::Core(e) => ServiceError::Unprocessable {
            field: "poses".into(),
            message: e.to_string(),
        },
        other => other,
    })?;
    Ok(Json(MutationResult {
        revision,
        dirty_frames: s.dirty_frames(),
    }))
}

async fn put_keyframes(
    State(store): State<AppState>,
    Path((id, oid)): Path<(String, String)>,
    req: Result<Json<KeyframesUpdate>, JsonRejection>,
) -> ServiceResult<Json<MutationResult>> {
    let session = store.get(&id)?;
    let req = body(req)?;
    let mut s = session.lock().expect("session lock");
    if req.revision != s.revision() {
        return Err(ServiceError::Conflict {
            expected: req.revision,
            current: s.revision(),
        });
    }
    let scene = s.scene();
    if !scene.objects().contains_key(&oid) {
        return Err(ServiceError::NotFound(format!("unknown object {oid:?}")));
    }
    let keys = parse_keys(&req.keys, scene.frame_count())?;
    let revision = s.set_keyframes(req.revision, &oid, keys)?;
    Ok(Json(MutationResult {
        revision,
        dirty_frames: s.dirty_frames(),
    }))
}

fn is_truthy(v: Option<&str>) -> ServiceResult<bool> {
    match v {
        None | Some("0") | Some("false") => Ok(false),
        Some("1") | Some("true") => Ok(true),
        Some(other) => Err(ServiceError::Unprocessable {
            field: "full".into(),
            message: format!("expected 0, 1, true or false, got {other:?}"),
        }),
    }
}

async fn render_preview(
    State(store): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<RenderQuery>, QueryRejection>,
) -> ServiceResult<Json<RenderResponse>> {
    let session = store.get(&id)?;
    let Query(q) = query.map_err(|e| ServiceError::Unprocessable {
        field: "query".into(),
        message: e.body_text(),
    })?;
    let full = is_truthy(q.full.as_deref())?;
    let key = PreviewKey {
        frame: q.frame,
        mode: q.mode,
        full,
    };
    let (revision, scene, cached) = {
        let mut s = session.lock().expect("session lock");
        let frames = s.scene().frame_count();
        if q.frame == 0 || q.frame > frames {
            return Err(ServiceError::Unprocessable {
                field: "frame".into(),
                message: format!("frame {} outside [1, {frames}]", q.frame),
            });
        }
        let scene = if full { s.scene() } else { s.preview_scene() };
        (s.revision(), scene, s.cached(&key))
    };
    let was_cached = cached.is_some();
    let encoded = match cached {
        Some(e) => e,
        None => {
            let snapshot = Arc::clone(&scene);
            let encoded = blocking(move || {
                let frame = render_control_frame(&snapshot, key.frame, key.mode, &RenderSettings::default())?;
                Ok(Arc::new(encode_control_frame(&frame)))
            })
            .await?;
            session
                .lock()
                .expect("session lock")
                .store_preview(revision, key, Arc::clone(&encoded));
            encoded
        }
    };
    let names = control_file_names(q.frame);
    let b64 = base64::engine::general_purpose::STANDARD;
    let maps = MAP_NAMES
        .iter()
        .zip(names)
        .zip(encoded.iter())
        .map(|((name, file_name), bytes)| EncodedMap {
            name: (*name).to_owned(),
            media_type: if file_name.ends_with(".png") { "image/png" } else { "image/x-portable-floatmap" }.to_owned(),
            file_name,
            data: b64.encode(bytes),
        })
        .collect();
    let k = scene.intrinsics();
    Ok(Json(RenderResponse {
        scene_id: id,
        revision,
        frame: q.frame,
        mode: q.mode,
        full_resolution: full,
        width: k.width,
        height: k.height,
        cached: was_cached,
        maps,
    }))
}

async fn export_scene(
    State(store): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<ExportRequest>, JsonRejection>,
) -> ServiceResult<Json<ExportResponse>> {
    let session = store.get(&id)?;
    let req = body(req)?;
    let (revision, scene) = {
        let s = session.lock().expect("session lock");
        (s.revision(), s.scene())
    };
    let frames = scene.frame_count();
    let paths = blocking(move || {
        let paths = export_sequence(&scene, req.mode, &req.out_dir)?;
        if let Some(dir) = &req.scene_dir {
            save_scene(&scene, dir)?;
        }
        Ok(paths)
    })
    .await?;
    Ok(Json(ExportResponse { revision, frames, paths }))
}

async fn eval(req: Result<Json<EvalRequest>, JsonRejection>) -> ServiceResult<Json<EvalReport>> {
    let req = body(req)?;
    let opts = EvalOptions {
        penalty: req.lambda.unwrap_or(DEFAULT_UNMATCHED_PENALTY),
        align: req.align,
    };
    if !(opts.penalty.is_finite() && opts.penalty >= 0.0) {
        return Err(ServiceError::Unprocessable {
            field: "lambda".into(),
            message: "lambda must be finite and non-negative".into(),
        });
    }
    Ok(Json(evaluate_pair(&req.gt, &req.pred, &opts)?))
}
