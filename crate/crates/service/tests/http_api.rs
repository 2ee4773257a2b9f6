mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine;
use common::*;
use geoctl::http::router;
use geoctl::ops::{build_scene_from_inputs, SceneInputs};
use geoctl::SessionStore;
use geoctl_core::io::export::encode_control_frame;
use geoctl_core::io::pfm;
use geoctl_core::{project, render_control_frame, RenderMode, RenderSettings};
use nalgebra::Point3;
use serde_json::{json, Value};

fn app() -> axum::Router {
    router(Arc::new(SessionStore::default()))
}

fn inputs() -> SceneInputs {
    SceneInputs {
        image: image_bytes(),
        depth: depth_bytes(),
        masks: mask_bytes(),
        intrinsics: serde_json::from_str(&intrinsics_json()).unwrap(),
        labels: serde_json::from_str(LABELS).unwrap(),
        poses: Some(serde_json::from_str(&poses_json()).unwrap()),
        frames: None,
        keyframes: vec![],
    }
}

fn decode_maps(body: &Value) -> Vec<Vec<u8>> {
    body["maps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| base64::engine::general_purpose::STANDARD.decode(m["data"].as_str().unwrap()).unwrap())
        .collect()
}

fn moved_keys(mu: [f64; 3]) -> Value {
    json!([
        {"frame": 1, "mu": [-0.8, 0.0, 2.5], "sigma": [0.01, 0, 0, 0, 0.04, 0, 0, 0, 0.01]},
        {"frame": FRAMES, "mu": mu, "sigma": [0.01, 0, 0, 0, 0.04, 0, 0, 0, 0.01]}
    ])
}

#[tokio::test]
async fn create_and_summarize() {
    let app = app();
    let id = create_scene(&app).await;
    let (status, body) = send(&app, Request::get(format!("/v1/scenes/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["revision"], 0);
    assert_eq!(body["frames"], FRAMES);
    assert_eq!(body["width"], W);
    let ids: Vec<&str> = body["objects"].as_array().unwrap().iter().map(|o| o["object_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["1", "2"]);
    assert_eq!(body["objects"][0]["label"], "person");
    assert_eq!(body["camera"].as_array().unwrap().len(), FRAMES);
    assert_eq!(body["dirty_frames"].as_array().unwrap().len(), FRAMES);
}

#[tokio::test]
async fn unknown_scene_is_404() {
    let app = app();
    let (status, body) = send(&app, Request::get("/v1/scenes/nope").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
    let (status, _) = send(&app, Request::post("/v1/scenes/nope/render?frame=1").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn missing_multipart_field_names_it() {
    let app = app();
    let parts: Vec<_> = scene_parts().into_iter().filter(|(n, _)| *n != "depth").collect();
    let req = Request::post("/v1/scenes")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(&parts)))
        .unwrap();
    let (status, body) = send(&app, req).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "depth");
}

#[tokio::test]
async fn keyframe_at_frame_zero_is_422_with_field_path() {
    let app = app();
    let id = create_scene(&app).await;
    let body = json!({"revision": 0, "keys": [{"frame": 0, "mu": [0, 0, 3], "sigma": [1, 0, 0, 0, 1, 0, 0, 0, 1]}]});
    let (status, resp) = send(&app, json_request("PUT", &format!("/v1/scenes/{id}/objects/1/keyframes"), &body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(resp["field"], "keys[0].frame");

    let body = json!({"revision": 0, "keys": [{"frame": 1, "mu": [0, 0, 3], "sigma": [1, 0, 0, 0, -1, 0, 0, 0, 1]}]});
    let (status, resp) = send(&app, json_request("PUT", &format!("/v1/scenes/{id}/objects/1/keyframes"), &body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(resp["field"], "keys[0].sigma");

    let body = json!({"revision": 0, "keys": [{"frame": FRAMES + 1, "mu": [0, 0, 3], "sigma": [1, 0, 0, 0, 1, 0, 0, 0, 1]}]});
    let (status, _) = send(&app, json_request("PUT", &format!("/v1/scenes/{id}/objects/1/keyframes"), &body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // nothing was applied
    let (_, summary) = send(&app, Request::get(format!("/v1/scenes/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(summary["revision"], 0);
}

#[tokio::test]
async fn unknown_object_is_404() {
    let app = app();
    let id = create_scene(&app).await;
    let body = json!({"revision": 0, "keys": [{"frame": 1, "mu": [0, 0, 3], "sigma": [1, 0, 0, 0, 1, 0, 0, 0, 1]}]});
    let (status, _) = send(&app, json_request("PUT", &format!("/v1/scenes/{id}/objects/9/keyframes"), &body)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_puts_with_same_base_revision() {
    for round in 0..20 {
        let app = app();
        let id = create_scene(&app).await;
        let uri = format!("/v1/scenes/{id}/objects/1/keyframes");
        let a = json!({"revision": 0, "keys": moved_keys([0.5, 0.0, 2.5])});
        let b = json!({"revision": 0, "keys": moved_keys([-0.5, 0.2, 3.0])});
        let (app_a, app_b) = (app.clone(), app.clone());
        let (ua, ub) = (uri.clone(), uri.clone());
        let ta = tokio::spawn(async move { send(&app_a, json_request("PUT", &ua, &a)).await });
        let tb = tokio::spawn(async move { send(&app_b, json_request("PUT", &ub, &b)).await });
        let ((sa, ba), (sb, bb)) = (ta.await.unwrap(), tb.await.unwrap());
        let mut statuses = [sa, sb];
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT], "round {round}");
        let conflict = if sa == StatusCode::CONFLICT { ba } else { bb };
        assert_eq!(conflict["error"], "conflict");
        assert_eq!(conflict["current_revision"], 1);
        let (_, summary) = send(&app, Request::get(format!("/v1/scenes/{id}")).body(Body::empty()).unwrap()).await;
        assert_eq!(summary["revision"], 1);
    }
}

#[tokio::test]
async fn stale_revision_is_rejected_not_merged() {
    let app = app();
    let id = create_scene(&app).await;
    let uri = format!("/v1/scenes/{id}/objects/2/keyframes");
    let (s1, r1) = send(&app, json_request("PUT", &uri, &json!({"revision": 0, "keys": moved_keys([0.3, 0.0, 3.0])}))).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(r1["revision"], 1);
    let (s2, _) = send(&app, json_request("PUT", &uri, &json!({"revision": 0, "keys": moved_keys([0.9, 0.0, 3.0])}))).await;
    assert_eq!(s2, StatusCode::CONFLICT);
    let (_, summary) = send(&app, Request::get(format!("/v1/scenes/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(summary["objects"][1]["keys"][1]["mu"], json!([0.3, 0.0, 3.0]));
    let (s3, r3) = send(&app, json_request("PUT", &uri, &json!({"revision": 1, "keys": moved_keys([0.9, 0.0, 3.0])}))).await;
    assert_eq!(s3, StatusCode::OK);
    assert_eq!(r3["revision"], 2);
}

#[tokio::test]
async fn camera_replacement_bumps_revision_and_validates() {
    let app = app();
    let id = create_scene(&app).await;
    let uri = format!("/v1/scenes/{id}/camera");
    let poses: Value = serde_json::from_str(&poses_json()).unwrap();
    let mut short = poses.clone();
    short.as_array_mut().unwrap().truncate(4);
    let (status, resp) = send(&app, json_request("PUT", &uri, &json!({"revision": 0, "poses": short}))).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    assert_eq!(resp["dirty_frames"], json!([1, 2, 3, 4]));

    let mut bad = poses.clone();
    bad[2]["R"] = json!([2, 0, 0, 0, 1, 0, 0, 0, 1]);
    let (status, resp) = send(&app, json_request("PUT", &uri, &json!({"revision": 1, "poses": bad}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(resp["field"], "poses[2]");
}

#[tokio::test]
async fn preview_defaults_to_half_resolution_and_frame_one_mask_is_empty() {
    let app = app();
    let id = create_scene(&app).await;
    let (status, body) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame=1")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!((body["width"].as_u64(), body["height"].as_u64()), (Some(W as u64 / 2), Some(H as u64 / 2)));
    assert_eq!(body["mode"], "joint");
    let maps = decode_maps(&body);
    let mask = geoctl_core::io::png::decode_gray(&maps[4]).unwrap();
    assert!(mask.as_slice().iter().all(|v| *v == 0.0));

    let (_, full) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame=2&full=1&mode=camera-only")).body(Body::empty()).unwrap()).await;
    assert_eq!(full["width"], W);
    assert_eq!(full["full_resolution"], true);
    let names: Vec<&str> = full["maps"].as_array().unwrap().iter().map(|m| m["file_name"].as_str().unwrap()).collect();
    assert_eq!(names, ["bg_rgb_0002.png", "bg_depth_0002.pfm", "traj_rgb_0002.png", "traj_depth_0002.pfm", "mask_0002.png"]);

    let (status, body) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame=0")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "frame");
    let (status, _) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame=2&mode=sideways")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn preview_after_edit_matches_fresh_render() {
    let app = app();
    let id = create_scene(&app).await;
    for t in 1..=FRAMES {
        let (_, first) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame={t}")).body(Body::empty()).unwrap()).await;
        assert_eq!(first["cached"], false);
    }
    let (_, again) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame=3")).body(Body::empty()).unwrap()).await;
    assert_eq!(again["cached"], true);
    let (_, summary) = send(&app, Request::get(format!("/v1/scenes/{id}")).body(Body::empty()).unwrap()).await;
    assert_eq!(summary["dirty_frames"], json!([]));

    let keys = moved_keys([0.6, 0.1, 2.5]);
    let (status, resp) = send(&app, json_request("PUT", &format!("/v1/scenes/{id}/objects/1/keyframes"), &json!({"revision": 0, "keys": keys}))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!resp["dirty_frames"].as_array().unwrap().is_empty());

    let mut scene = build_scene_from_inputs(&inputs()).unwrap();
    let track = geoctl::ops::parse_keys(&serde_json::from_value::<Vec<_>>(keys).unwrap(), FRAMES).unwrap();
    scene.set_keyframes("1", track).unwrap();
    let half = scene.half_resolution();
    for t in 1..=FRAMES {
        let (_, body) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame={t}")).body(Body::empty()).unwrap()).await;
        assert_eq!(body["revision"], 1);
        let expected = encode_control_frame(&render_control_frame(&half, t, RenderMode::Joint, &RenderSettings::default()).unwrap());
        assert_eq!(decode_maps(&body), expected.to_vec(), "frame {t}");
    }
}

#[tokio::test]
async fn edited_footprint_follows_projected_mean() {
    let app = app();
    let id = create_scene(&app).await;
    let mu = [0.4, -0.2, 2.5];
    let keys = moved_keys(mu);
    let (status, _) = send(&app, json_request("PUT", &format!("/v1/scenes/{id}/objects/1/keyframes"), &json!({"revision": 0, "keys": keys}))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, body) = send(&app, Request::post(format!("/v1/scenes/{id}/render?frame={FRAMES}&full=1&mode=joint")).body(Body::empty()).unwrap()).await;
    let depth = pfm::decode_pfm(decode_maps(&body)[3].as_slice()).unwrap();
    let pose = poses()[FRAMES - 1];
    let p = project(&Point3::new(mu[0], mu[1], mu[2]), &intrinsics(), &pose).unwrap();
    let (col, row) = (p.pixel.x.round() as usize, p.pixel.y.round() as usize);
    let d = *depth.get(col, row);
    assert!(d.is_finite() && d > 0.0 && (d as f64) < p.depth, "depth {d} at ({col}, {row})");
    let old = project(&Point3::new(-0.8, 0.0, 2.5), &intrinsics(), &pose).unwrap();
    let (oc, or) = (old.pixel.x.round() as usize, old.pixel.y.round() as usize);
    assert!(col.abs_diff(oc) > 20);
    assert_eq!(*depth.get(oc, or), f32::INFINITY);
}

#[tokio::test]
async fn eval_endpoint_on_identical_manifests_is_zero() {
    let app = app();
    let gt: Value = serde_json::from_str(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/eval/gt.json")).unwrap()).unwrap();
    let (status, body) = send(&app, json_request("POST", "/v1/eval", &json!({"gt": gt, "pred": gt}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["rot_err"], 0.0);
    assert_eq!(body["trans_err"], 0.0);
    assert_eq!(body["objmc"], 0.0);
    assert_eq!(body["lambda"], 10.0);

    let (status, body) = send(&app, json_request("POST", "/v1/eval", &json!({"gt": gt, "pred": gt, "lambda": -1.0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "lambda");
}

#[test]
fn openapi_lists_every_route() {
    let spec = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/openapi.yaml")).unwrap();
    assert!(spec.contains("url: http://127.0.0.1:8787/v1"));
    for path in [
        "/scenes:",
        "/scenes/{id}:",
        "/scenes/{id}/camera:",
        "/scenes/{id}/objects/{oid}/keyframes:",
        "/scenes/{id}/render:",
        "/scenes/{id}/export:",
        "/eval:",
    ] {
        assert!(spec.contains(&format!("\n  {path}\n")), "{path}");
    }
}
