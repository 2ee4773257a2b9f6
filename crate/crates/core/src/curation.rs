//! Dataset curation: clip extraction, quality filtering and manifest assembly
//! from precomputed upstream annotations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{rngs::StdRng, Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BoolGrid;

/// Frames per training clip.
pub const CLIP_LEN: usize = 81;

/// Inclusive frame span, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        other.start >= self.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplePolicy {
    #[default]
    Center,
    Random,
}

/// Picks an 81-frame sub-clip from a shot strictly longer than 81 frames.
///
/// `Center` starts at `(shot_len - 81) / 2`; `Random` draws the start
/// uniformly from a generator seeded with `seed`.
pub fn extract_clip(shot_len: usize, policy: SamplePolicy, seed: u64) -> Option<Span> {
    if shot_len <= CLIP_LEN {
        return None;
    }
    let slack = shot_len - CLIP_LEN;
    let start = match policy {
        SamplePolicy::Center => slack / 2,
        SamplePolicy::Random => StdRng::seed_from_u64(seed).random_range(0..=slack),
    };
    Some(Span {
        start,
        end: start + CLIP_LEN - 1,
    })
}

/// First-frame statistics of one instance mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectStats {
    pub label: String,
    pub area_fraction: f64,
    /// `[x0, y0, x1, y1]`, inclusive pixel bounds.
    pub bbox: [usize; 4],
    /// Bounding-box height over width.
    pub aspect_ratio: f64,
    pub touches_border: bool,
}

impl ObjectStats {
    pub fn from_mask(label: &str, mask: &BoolGrid) -> Result<Self> {
        let (w, h) = mask.dims();
        let mut area = 0usize;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut border = false;
        for row in 0..h {
            for col in 0..w {
                if *mask.get(col, row) {
                    area += 1;
                    x0 = x0.min(col);
                    y0 = y0.min(row);
                    x1 = x1.max(col);
                    y1 = y1.max(row);
                    border |= col == 0 || row == 0 || col + 1 == w || row + 1 == h;
                }
            }
        }
        if area == 0 {
            return Err(Error::Invalid(format!("mask for {label:?} is empty")));
        }
        Ok(Self {
            label: label.to_owned(),
            area_fraction: area as f64 / (w * h) as f64,
            bbox: [x0, y0, x1, y1],
            aspect_ratio: (y1 - y0 + 1) as f64 / (x1 - x0 + 1) as f64,
            touches_border: border,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneType {
    #[default]
    Dynamic,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub source_id: String,
    pub shot: Span,
    pub sampled: Span,
    pub objects: Vec<ObjectStats>,
    pub aesthetic: f64,
    /// Mean luma in `[0, 1]`.
    pub luminance: f64,
    #[serde(default)]
    pub scene_type: SceneType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl ClipRecord {
    pub fn validate(&self) -> Result<()> {
        if self.sampled.len() != CLIP_LEN || self.sampled.is_empty() {
            return Err(Error::Invalid(format!(
                "clip {:?}: sampled span must be {CLIP_LEN} frames",
                self.clip_id
            )));
        }
        if !self.shot.contains(&self.sampled) {
            return Err(Error::Invalid(format!("clip {:?}: sampled span outside shot", self.clip_id)));
        }
        if let Some(o) = self.objects.iter().find(|o| !(0.0..=1.0).contains(&o.area_fraction)) {
            return Err(Error::Invalid(format!(
                "clip {:?}: area fraction {} outside [0, 1]",
                self.clip_id, o.area_fraction
            )));
        }
        Ok(())
    }
}

/// Filter rule identifiers; declaration order is alphabetical so sorted
/// reason lists read alphabetically too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterRule {
    Area,
    Count,
    HumanAspect,
    HumanBorder,
    Quality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    pub max_area_fraction: f64,
    pub human_labels: Vec<String>,
    pub min_human_aspect: f64,
    pub max_human_aspect: f64,
    /// Not fixed upstream; LAION-style aesthetic scale.
    pub min_aesthetic: f64,
    pub min_luminance: f64,
    pub max_luminance: f64,
    /// Category prompts handed to the segmentation provider.
    pub controllable_labels: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_objects: 1,
            max_objects: 6,
            max_area_fraction: 0.20,
            human_labels: vec!["person".into(), "human".into()],
            min_human_aspect: 2.0,
            max_human_aspect: 4.0,
            min_aesthetic: 4.5,
            min_luminance: 20.0 / 255.0,
            max_luminance: 235.0 / 255.0,
            controllable_labels: vec!["person".into(), "human".into(), "car".into(), "animal".into()],
        }
    }
}

impl FilterConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("filter config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    fn is_human(&self, label: &str) -> bool {
        self.human_labels.iter().any(|h| h.eq_ignore_ascii_case(label))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub reasons: Vec<FilterRule>,
}

pub fn filter_clip(rec: &ClipRecord, cfg: &FilterConfig) -> FilterVerdict {
    let mut reasons = Vec::new();
    let n = rec.objects.len();
    if n < cfg.min_objects || n > cfg.max_objects {
        reasons.push(FilterRule::Count);
    }
    if rec.objects.iter().any(|o| o.area_fraction > cfg.max_area_fraction) {
        reasons.push(FilterRule::Area);
    }
    let humans = || rec.objects.iter().filter(|o| cfg.is_human(&o.label));
    if humans().any(|o| o.touches_border) {
        reasons.push(FilterRule::HumanBorder);
    }
    if humans().any(|o| !(cfg.min_human_aspect..=cfg.max_human_aspect).contains(&o.aspect_ratio)) {
        reasons.push(FilterRule::HumanAspect);
    }
    let lum_ok = (cfg.min_luminance..=cfg.max_luminance).contains(&rec.luminance);
    if !(rec.aesthetic >= cfg.min_aesthetic) || !lum_ok {
        reasons.push(FilterRule::Quality);
    }
    reasons.sort();
    reasons.dedup();
    FilterVerdict {
        accepted: reasons.is_empty(),
        reasons,
    }
}

/// Verdicts for many records, in input order.
pub fn filter_clips(records: &[ClipRecord], cfg: &FilterConfig) -> Vec<FilterVerdict> {
    records.par_iter().map(|r| filter_clip(r, cfg)).collect()
}

/// Annotation files for one clip; `None` means the upstream step produced nothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClipAnnotations {
    pub caption: Option<String>,
    pub depth_dir: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub masks_dir: Option<PathBuf>,
    pub trajectories: Vec<PathBuf>,
    pub control_dir: Option<PathBuf>,
}

/// Source of precomputed annotations (depth, masks, poses, captions).
pub trait AnnotationProvider: Sync {
    fn annotations(&self, clip: &ClipRecord) -> Result<ClipAnnotations>;
}

/// Reads `<root>/<clip_id>/{caption.txt, poses.json, depth/*.pfm, masks/*.png, trajectories/*.json, control/}`.
#[derive(Debug, Clone)]
pub struct DirectoryProvider {
    pub root: PathBuf,
}

fn dir_has_ext(dir: &Path, ext: &str) -> bool {
    std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok())
                .any(|e| e.path().extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)))
        })
        .unwrap_or(false)
}

impl AnnotationProvider for DirectoryProvider {
    fn annotations(&self, clip: &ClipRecord) -> Result<ClipAnnotations> {
        let dir = self.root.join(&clip.clip_id);
        let caption_path = dir.join("caption.txt");
        let caption = match std::fs::read_to_string(&caption_path) {
            Ok(t) if !t.trim().is_empty() => Some(t.trim().to_owned()),
            Ok(_) => None,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(Error::io(caption_path, e)),
        };
        let poses = Some(dir.join("poses.json")).filter(|p| p.is_file());
        let depth_dir = Some(dir.join("depth")).filter(|p| dir_has_ext(p, "pfm"));
        let masks_dir = Some(dir.join("masks")).filter(|p| dir_has_ext(p, "png"));
        let mut trajectories: Vec<PathBuf> = std::fs::read_dir(dir.join("trajectories"))
            .map(|it| {
                it.filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect()
            })
            .unwrap_or_default();
        trajectories.sort();
        let control_dir = Some(dir.join("control")).filter(|p| p.is_dir());
        Ok(ClipAnnotations {
            caption,
            depth_dir,
            poses,
            masks_dir,
            trajectories,
            control_dir,
        })
    }
}

/// In-memory provider for tests and dry runs; every field is present unless
/// listed in `missing` for that clip.
#[derive(Debug, Clone, Default)]
pub struct SyntheticProvider {
    pub missing: BTreeMap<String, Vec<String>>,
}

impl SyntheticProvider {
    pub fn without(mut self, clip_id: &str, field: &str) -> Self {
        self.missing.entry(clip_id.to_owned()).or_default().push(field.to_owned());
        self
    }
}

impl AnnotationProvider for SyntheticProvider {
    fn annotations(&self, clip: &ClipRecord) -> Result<ClipAnnotations> {
        let gone = |f: &str| self.missing.get(&clip.clip_id).is_some_and(|m| m.iter().any(|x| x == f));
        let base = PathBuf::from("synthetic").join(&clip.clip_id);
        let keep = |f: &str, p: PathBuf| if gone(f) { None } else { Some(p) };
        Ok(ClipAnnotations {
            caption: (!gone("caption")).then(|| format!("synthetic clip {} from {}", clip.clip_id, clip.source_id)),
            depth_dir: keep("depth", base.join("depth")),
            poses: keep("poses", base.join("poses.json")),
            masks_dir: keep("masks", base.join("masks")),
            trajectories: (0..clip.objects.len())
                .map(|i| base.join("trajectories").join(format!("object_{i}.json")))
                .collect(),
            control_dir: keep("control", base.join("control")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub source_id: String,
    pub split: String,
    pub scene_type: SceneType,
    pub sampled: Span,
    pub caption: String,
    pub camera_track: PathBuf,
    pub depth_dir: PathBuf,
    pub masks_dir: PathBuf,
    pub trajectories: Vec<PathBuf>,
    pub control_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneCounts {
    pub dynamic: usize,
    #[serde(rename = "static")]
    pub static_: usize,
    pub total: usize,
}

impl SceneCounts {
    fn add(&mut self, t: SceneType) {
        match t {
            SceneType::Dynamic => self.dynamic += 1,
            SceneType::Static => self.static_ += 1,
        }
        self.total += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub clips: Vec<ManifestEntry>,
    /// split -> source -> counts
    pub by_split_and_source: BTreeMap<String, BTreeMap<String, SceneCounts>>,
    pub by_split: BTreeMap<String, SceneCounts>,
    pub total: SceneCounts,
}

fn require<T>(clip: &ClipRecord, field: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::Manifest {
        clip: clip.clip_id.clone(),
        field: field.to_owned(),
        reason: "annotation missing".into(),
    })
}

/// Lists per-clip annotation paths and split statistics. Clips are resolved
/// in parallel and written in input order.
pub fn assemble_manifest(clips: &[ClipRecord], provider: &dyn AnnotationProvider) -> Result<DatasetManifest> {
    let entries: Vec<ManifestEntry> = clips
        .par_iter()
        .map(|clip| {
            let a = provider.annotations(clip)?;
            Ok(ManifestEntry {
                clip_id: clip.clip_id.clone(),
                source_id: clip.source_id.clone(),
                split: clip.split.clone().unwrap_or_else(|| "train".into()),
                scene_type: clip.scene_type,
                sampled: clip.sampled,
                caption: require(clip, "caption", a.caption)?,
                depth_dir: require(clip, "depth", a.depth_dir)?,
                camera_track: require(clip, "poses", a.poses)?,
                masks_dir: require(clip, "masks", a.masks_dir)?,
                trajectories: a.trajectories,
                control_dir: a.control_dir,
            })
        })
        .collect::<Result<_>>()?;

    let mut manifest = DatasetManifest::default();
    for e in &entries {
        manifest
            .by_split_and_source
            .entry(e.split.clone())
            .or_default()
            .entry(e.source_id.clone())
            .or_default()
            .add(e.scene_type);
        manifest.by_split.entry(e.split.clone()).or_default().add(e.scene_type);
        manifest.total.add(e.scene_type);
    }
    manifest.clips = entries;
    Ok(manifest)
}
