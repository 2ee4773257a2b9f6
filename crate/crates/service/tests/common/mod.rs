#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use geoctl_core::camera::{poses_to_json, rot_z, CameraIntrinsics, CameraPose};
use geoctl_core::grid::Grid;
use geoctl_core::io::{pfm, png};
use nalgebra::Vector3;
use tower::ServiceExt;

pub const W: usize = 64;
pub const H: usize = 48;
pub const FRAMES: usize = 6;

pub struct InputFiles {
    pub image: PathBuf,
    pub depth: PathBuf,
    pub masks: PathBuf,
    pub intrinsics: PathBuf,
    pub labels: PathBuf,
    pub poses: PathBuf,
}

pub fn intrinsics() -> CameraIntrinsics<f64> {
    CameraIntrinsics::new(60.0, 60.0, 31.5, 23.5, W, H).unwrap()
}

/// Camera sliding along +x with a slight roll.
pub fn poses() -> Vec<CameraPose<f64>> {
    (0..FRAMES)
        .map(|i| {
            let s = i as f64;
            CameraPose::new(rot_z(0.01 * s), Vector3::new(-0.05 * s, 0.0, 0.0)).unwrap()
        })
        .collect()
}

fn object_id_at(c: usize, r: usize) -> u16 {
    if (10..22).contains(&c) && (12..36).contains(&r) {
        1
    } else if (36..52).contains(&c) && (20..30).contains(&r) {
        2
    } else {
        0
    }
}

pub fn image_bytes() -> Vec<u8> {
    let img = Grid::from_fn(W, H, |c, r| {
        [
            ((c * 4) % 256) as f32 / 255.0,
            ((r * 5) % 256) as f32 / 255.0,
            ((c * r) % 256) as f32 / 255.0,
        ]
    });
    png::encode_rgb(&img)
}

pub fn depth_bytes() -> Vec<u8> {
    let d = Grid::from_fn(W, H, |c, r| match object_id_at(c, r) {
        0 if (c + r) % 23 == 0 => 0.0,
        0 => 4.0 + 0.01 * r as f32,
        1 => 2.5,
        _ => 3.0,
    });
    pfm::encode_pfm(&d)
}

pub fn mask_bytes() -> Vec<u8> {
    png::encode_ids(&Grid::from_fn(W, H, object_id_at))
}

pub fn intrinsics_json() -> String {
    let k = intrinsics();
    serde_json::json!({"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": W, "height": H}).to_string()
}

pub const LABELS: &str = r#"{"1": "person", "2": "car"}"#;

pub fn poses_json() -> String {
    serde_json::to_string(&poses_to_json(&poses())).unwrap()
}

pub fn write_inputs(dir: &Path) -> InputFiles {
    let f = InputFiles {
        image: dir.join("image.png"),
        depth: dir.join("depth.pfm"),
        masks: dir.join("masks.png"),
        intrinsics: dir.join("intrinsics.json"),
        labels: dir.join("labels.json"),
        poses: dir.join("poses.json"),
    };
    std::fs::write(&f.image, image_bytes()).unwrap();
    std::fs::write(&f.depth, depth_bytes()).unwrap();
    std::fs::write(&f.masks, mask_bytes()).unwrap();
    std::fs::write(&f.intrinsics, intrinsics_json()).unwrap();
    std::fs::write(&f.labels, LABELS).unwrap();
    std::fs::write(&f.poses, poses_json()).unwrap();
    f
}

pub const BOUNDARY: &str = "geoctl-test-boundary";

/// `multipart/form-data` body with the given (name, bytes) parts.
pub fn multipart(parts: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, bytes) in parts {
        out.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\nContent-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        out.extend_from_slice(bytes);
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    out
}

pub fn scene_parts() -> Vec<(&'static str, Vec<u8>)> {
    vec![
        ("image", image_bytes()),
        ("depth", depth_bytes()),
        ("masks", mask_bytes()),
        ("intrinsics", intrinsics_json().into_bytes()),
        ("labels", LABELS.as_bytes().to_vec()),
        ("poses", poses_json().into_bytes()),
    ]
}

pub async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let json = if bytes.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| serde_json::Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, json)
}

pub fn json_request(method: &str, uri: &str, body: &serde_json::Value) -> Request<Body> {
    Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

pub async fn create_scene(app: &axum::Router) -> String {
    let req = Request::builder()
        .method("POST")
        .uri("/v1/scenes")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(&scene_parts())))
        .unwrap();
    let (status, body) = send(app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["scene_id"].as_str().unwrap().to_owned()
}
