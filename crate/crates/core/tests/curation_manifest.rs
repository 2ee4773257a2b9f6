use std::path::PathBuf;

use geoctl_core::curation::{
    assemble_manifest, extract_clip, filter_clip, ClipRecord, DirectoryProvider, FilterConfig, SamplePolicy,
    SceneCounts, SyntheticProvider,
};
use geoctl_core::Error;

fn clips() -> Vec<ClipRecord> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/curation/clips.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn counts(dynamic: usize, static_: usize) -> SceneCounts {
    SceneCounts {
        dynamic,
        static_,
        total: dynamic + static_,
    }
}

#[test]
fn fixture_clips_are_consistent() {
    for c in clips() {
        c.validate().unwrap();
        assert_eq!(extract_clip(c.shot.len(), SamplePolicy::Center, 0), Some(c.sampled));
    }
}

#[test]
fn manifest_counts_follow_labels() {
    let m = assemble_manifest(&clips(), &SyntheticProvider::default()).unwrap();
    assert_eq!(m.clips.len(), 10);
    assert_eq!(m.total, counts(5, 5));
    assert_eq!(m.by_split["train"], counts(3, 3));
    assert_eq!(m.by_split["test"], counts(2, 2));
    assert_eq!(m.by_split_and_source["train"]["sekai"], counts(2, 1));
    assert_eq!(m.by_split_and_source["train"]["spatialvid"], counts(1, 2));
    assert_eq!(m.by_split_and_source["test"]["sekai"], counts(1, 1));
    assert_eq!(m.by_split_and_source["test"]["spatialvid"], counts(1, 1));
    let ids: Vec<_> = m.clips.iter().map(|c| c.clip_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted, "manifest keeps input order");
    let json = serde_json::to_value(&m).unwrap();
    assert_eq!(json["total"]["static"], 5);
}

#[test]
fn empty_input_gives_empty_manifest() {
    let m = assemble_manifest(&[], &SyntheticProvider::default()).unwrap();
    assert!(m.clips.is_empty());
    assert_eq!(m.total, SceneCounts::default());
}

#[test]
fn missing_caption_names_clip_and_field() {
    let three = &clips()[..3];
    let provider = SyntheticProvider::default().without("clip_01", "caption");
    match assemble_manifest(three, &provider) {
        Err(Error::Manifest { clip, field, .. }) => {
            assert_eq!(clip, "clip_01");
            assert_eq!(field, "caption");
        }
        other => panic!("expected manifest error, got {other:?}"),
    }
}

#[test]
fn directory_provider_reads_convention() {
    let root = tempfile::tempdir().unwrap();
    let all = clips();
    let clip = &all[0];
    let dir = root.path().join(&clip.clip_id);
    for sub in ["depth", "masks", "trajectories", "control"] {
        std::fs::create_dir_all(dir.join(sub)).unwrap();
    }
    std::fs::write(dir.join("caption.txt"), "a red car drives past\n").unwrap();
    std::fs::write(dir.join("poses.json"), "[]").unwrap();
    std::fs::write(dir.join("depth/0001.pfm"), b"").unwrap();
    std::fs::write(dir.join("masks/0001.png"), b"").unwrap();
    std::fs::write(dir.join("trajectories/car.json"), "{}").unwrap();

    let provider = DirectoryProvider {
        root: root.path().to_path_buf(),
    };
    let m = assemble_manifest(std::slice::from_ref(clip), &provider).unwrap();
    let e = &m.clips[0];
    assert_eq!(e.caption, "a red car drives past");
    assert_eq!(e.camera_track, dir.join("poses.json"));
    assert_eq!(e.trajectories, vec![dir.join("trajectories/car.json")]);
    assert_eq!(e.control_dir.as_deref(), Some(dir.join("control").as_path()));

    std::fs::remove_file(dir.join("depth/0001.pfm")).unwrap();
    let err = assemble_manifest(std::slice::from_ref(clip), &provider).unwrap_err();
    assert!(matches!(err, Error::Manifest { ref field, .. } if field == "depth"), "{err}");
}

#[test]
fn fixture_clips_pass_the_filter_deterministically() {
    let cfg = FilterConfig::default();
    for c in clips() {
        let v = filter_clip(&c, &cfg);
        assert!(v.accepted, "{}: {:?}", c.clip_id, v.reasons);
        assert_eq!(filter_clip(&c, &cfg), v);
    }
}

#[test]
fn config_overrides_from_toml() {
    let cfg = FilterConfig::from_toml("max_objects = 3\nmin_aesthetic = 5.5\n").unwrap();
    assert_eq!(cfg.max_objects, 3);
    assert_eq!(cfg.min_aesthetic, 5.5);
    assert_eq!(cfg.max_area_fraction, 0.20);
    assert!(FilterConfig::from_toml("max_objects = \"many\"").is_err());
}
