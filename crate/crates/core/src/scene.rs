//! The 4D world state: a static background cloud plus per-object clouds and
//! Gaussian trajectories in one world frame.

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector2};
use rayon::prelude::*;

use crate::camera::{back_project, project_camera, CameraIntrinsics, CameraPose, CameraTrack};
use crate::error::{Error, Result};
use crate::gaussian::{fit_gaussian, interpolate_track, trajectory_color, GaussianTrajectory, KeyframeTrack};
use crate::grid::{BoolGrid, DepthMap, Grid, RgbImage};

/// World-space splat size used when rendering point clouds (meters).
pub const DEFAULT_SPLAT_RADIUS: f64 = 0.01;

/// Points with per-point RGB. Positions are stored in single precision,
/// matching the on-disk PLY layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColoredPointCloud {
    points: Vec<Point3<f32>>,
    colors: Vec<[f32; 3]>,
}

impl ColoredPointCloud {
    pub fn new(points: Vec<Point3<f32>>, colors: Vec<[f32; 3]>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::Shape(format!(
                "{} points but {} colors",
                points.len(),
                colors.len()
            )));
        }
        if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::Invalid("point coordinates must be finite".into()));
        }
        Ok(Self { points, colors })
    }

    pub fn push(&mut self, p: Point3<f32>, color: [f32; 3]) {
        self.points.push(p);
        self.colors.push(color);
    }

    pub fn points(&self) -> &[Point3<f32>] {
        &self.points
    }

    pub fn colors(&self) -> &[[f32; 3]] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points_f64(&self) -> Vec<Point3<f64>> {
        self.points.iter().map(|p| p.cast::<f64>()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub object_id: String,
    pub label: String,
    pixels: BoolGrid,
}

impl InstanceMask {
    pub fn new(object_id: impl Into<String>, label: impl Into<String>, pixels: BoolGrid) -> Result<Self> {
        let object_id = object_id.into();
        if !pixels.as_slice().iter().any(|v| *v) {
            return Err(Error::Invalid(format!("mask {object_id:?} has no pixels")));
        }
        Ok(Self {
            object_id,
            label: label.into(),
            pixels,
        })
    }

    pub fn pixels(&self) -> &BoolGrid {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.as_slice().iter().filter(|v| **v).count()
    }
}

/// Splits an instance-id coded grid (0 = no object) into masks, one per id.
pub fn masks_from_id_grid(ids: &Grid<u16>, labels: &BTreeMap<String, String>) -> Vec<InstanceMask> {
    let mut present: Vec<u16> = ids.as_slice().iter().copied().filter(|v| *v != 0).collect();
    present.sort_unstable();
    present.dedup();
    present
        .into_iter()
        .filter_map(|id| {
            let oid = id.to_string();
            let label = labels.get(&oid).cloned().unwrap_or_else(|| "object".to_owned());
            InstanceMask::new(oid, label, ids.map(|v| *v == id)).ok()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub label: String,
    pub cloud: ColoredPointCloud,
    pub color: [f32; 3],
    keys: KeyframeTrack<f64>,
    trajectory: GaussianTrajectory<f64>,
}

impl SceneObject {
    pub fn keys(&self) -> &KeyframeTrack<f64> {
        &self.keys
    }

    pub fn trajectory(&self) -> &GaussianTrajectory<f64> {
        &self.trajectory
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    background: ColoredPointCloud,
    objects: BTreeMap<String, SceneObject>,
    camera: CameraTrack<f64>,
    first_frame: RgbImage,
}

impl SceneState {
    /// Assembles a scene from stored parts; trajectories are re-expanded from keys.
    pub fn from_parts(
        background: ColoredPointCloud,
        objects: Vec<(String, String, ColoredPointCloud, [f32; 3], KeyframeTrack<f64>)>,
        camera: CameraTrack<f64>,
        first_frame: RgbImage,
    ) -> Result<Self> {
        let k = &camera.intrinsics;
        if first_frame.dims() != (k.width, k.height) {
            return Err(Error::Shape(format!(
                "first frame is {}x{} but intrinsics say {}x{}",
                first_frame.width(),
                first_frame.height(),
                k.width,
                k.height
            )));
        }
        let frames = camera.len();
        let mut map = BTreeMap::new();
        for (id, label, cloud, color, keys) in objects {
            let trajectory = interpolate_track(&id, color, &keys, frames)?;
            map.insert(
                id,
                SceneObject {
                    label,
                    cloud,
                    color,
                    keys,
                    trajectory,
                },
            );
        }
        Ok(Self {
            background,
            objects: map,
            camera,
            first_frame,
        })
    }

    pub fn background(&self) -> &ColoredPointCloud {
        &self.background
    }

    pub fn objects(&self) -> &BTreeMap<String, SceneObject> {
        &self.objects
    }

    pub fn camera(&self) -> &CameraTrack<f64> {
        &self.camera
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics<f64> {
        &self.camera.intrinsics
    }

    pub fn first_frame(&self) -> &RgbImage {
        &self.first_frame
    }

    pub fn frame_count(&self) -> usize {
        self.camera.len()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &GaussianTrajectory<f64>> {
        self.objects.values().map(|o| &o.trajectory)
    }

    /// Replaces the camera track; trajectories are re-expanded to its length.
    pub fn set_camera(&mut self, camera: CameraTrack<f64>) -> Result<()> {
        let k = &camera.intrinsics;
        if (k.width, k.height) != self.first_frame.dims() {
            return Err(Error::Shape("camera intrinsics change the image size".into()));
        }
        let frames = camera.len();
        let mut objects = self.objects.clone();
        for (id, obj) in objects.iter_mut() {
            obj.trajectory = interpolate_track(id, obj.color, &obj.keys, frames)?;
        }
        self.objects = objects;
        self.camera = camera;
        Ok(())
    }

    /// Replaces one object's keyframes and re-interpolates its trajectory.
    pub fn set_keyframes(&mut self, object_id: &str, keys: KeyframeTrack<f64>) -> Result<()> {
        let frames = self.frame_count();
        let obj = self
            .objects
            .get_mut(object_id)
            .ok_or_else(|| Error::Invalid(format!("unknown object {object_id:?}")))?;
        obj.trajectory = interpolate_track(object_id, obj.color, &keys, frames)?;
        obj.keys = keys;
        Ok(())
    }

    /// Same scene rendered at half resolution.
    pub fn half_resolution(&self) -> Self {
        let img = crate::grid::downsample_rgb(&self.first_frame);
        let k = self.camera.intrinsics.scaled(0.5, img.width(), img.height());
        let mut k = k;
        k.cx = k.cx.clamp(0.0, (k.width as f64) - 1e-9);
        k.cy = k.cy.clamp(0.0, (k.height as f64) - 1e-9);
        let camera = CameraTrack::new(k, self.camera.poses().to_vec()).expect("scaled intrinsics stay valid");
        Self {
            background: self.background.clone(),
            objects: self.objects.clone(),
            camera,
            first_frame: img,
        }
    }
}

/// Back-projects the first frame and partitions it into per-object clouds and
/// the background cloud. The camera track starts with the single pose `pose`;
/// each object gets one keyframe at frame 1 holding its fitted Gaussian.
///
/// Pixels claimed by several masks go to the mask with the smaller area.
/// Pixels without valid depth are dropped.
pub fn build_scene(
    image: &RgbImage,
    depth: &DepthMap,
    masks: &[InstanceMask],
    k: &CameraIntrinsics<f64>,
    pose: &CameraPose<f64>,
) -> Result<SceneState> {
    let (w, h) = image.dims();
    if depth.dims() != (w, h) {
        return Err(Error::Shape(format!(
            "depth is {}x{} but image is {w}x{h}",
            depth.width(),
            depth.height()
        )));
    }
    if (k.width, k.height) != (w, h) {
        return Err(Error::Shape(format!(
            "intrinsics are {}x{} but image is {w}x{h}",
            k.width, k.height
        )));
    }
    for m in masks {
        if m.pixels().dims() != (w, h) {
            return Err(Error::Shape(format!("mask {:?} does not match the image size", m.object_id)));
        }
    }
    let mut ids: Vec<&str> = masks.iter().map(|m| m.object_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::Invalid("duplicate object ids in masks".into()));
    }

    // Owner per pixel: smallest-area mask wins, earlier mask on ties.
    let mut by_area: Vec<usize> = (0..masks.len()).collect();
    by_area.sort_by_key(|&i| (masks[i].area(), i));
    let mut owner: Grid<Option<usize>> = Grid::filled(w, h, None);
    for &i in by_area.iter().rev() {
        for (o, on) in owner.as_mut_slice().iter_mut().zip(masks[i].pixels().as_slice()) {
            if *on {
                *o = Some(i);
            }
        }
    }

    let mut background = ColoredPointCloud::default();
    let mut clouds = vec![ColoredPointCloud::default(); masks.len()];
    for row in 0..h {
        for col in 0..w {
            let Some(d) = depth.depth(col, row) else { continue };
            let p = back_project(&Vector2::new(col as f64, row as f64), d as f64, k, pose)?;
            let p = p.cast::<f32>();
            let c = *image.get(col, row);
            match owner.get(col, row) {
                Some(i) => clouds[*i].push(p, c),
                None => background.push(p, c),
            }
        }
    }

    let mut objects = Vec::with_capacity(masks.len());
    for (m, cloud) in masks.iter().zip(clouds) {
        if cloud.is_empty() {
            return Err(Error::EmptyObject(m.object_id.clone()));
        }
        let g = fit_gaussian(&cloud.points_f64())?;
        let color = trajectory_color(&m.object_id);
        objects.push((m.object_id.clone(), m.label.clone(), cloud, color, KeyframeTrack::single(1, g)?));
    }
    let camera = CameraTrack::new(*k, vec![*pose])?;
    SceneState::from_parts(background, objects, camera, image.clone())
}

/// Point splat settings for background rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatConfig {
    /// Splat size in world units; the on-screen square side is
    /// `max(1, round(radius * fx / z))` pixels.
    pub radius: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_SPLAT_RADIUS,
        }
    }
}

/// Square footprint `[x0, x1) x [y0, y1)` of a splat, clipped to the image,
/// together with the camera-space depth.
#[inline]
pub fn splat_footprint(
    p: &Point3<f32>,
    k: &CameraIntrinsics<f64>,
    pose: &CameraPose<f64>,
    cfg: &SplatConfig,
) -> Option<(usize, usize, usize, usize, f64)> {
    let x = pose.world_to_camera(&p.cast::<f64>());
    let proj = project_camera(&x, k).ok()?;
    let side = ((cfg.radius * k.fx / proj.depth).round()).max(1.0);
    let x0 = (proj.pixel.x - (side - 1.0) / 2.0).round();
    let y0 = (proj.pixel.y - (side - 1.0) / 2.0).round();
    let (x1, y1) = (x0 + side, y0 + side);
    let (w, h) = (k.width as f64, k.height as f64);
    if x1 <= 0.0 || y1 <= 0.0 || x0 >= w || y0 >= h || !x0.is_finite() || !y0.is_finite() {
        return None;
    }
    Some((
        x0.max(0.0) as usize,
        x1.min(w) as usize,
        y0.max(0.0) as usize,
        y1.min(h) as usize,
        proj.depth,
    ))
}

/// Rows per band; bands are rasterized independently.
const BAND_ROWS: usize = 16;

#[derive(Clone, Copy)]
struct Fragment {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    /// f32 depth bits in the high word, point index in the low word, so the
    /// smallest key is the nearest point and the earliest on ties.
    key: u64,
}

/// Z-buffered square-splat rendering of a colored cloud. Pixels hit by no
/// point are black with invalid depth. Depths compare in f32; on equal depth
/// the earlier point wins.
pub fn render_points(
    cloud: &ColoredPointCloud,
    k: &CameraIntrinsics<f64>,
    pose: &CameraPose<f64>,
    cfg: &SplatConfig,
) -> (RgbImage, DepthMap) {
    let (w, h) = (k.width, k.height);
    assert!(cloud.len() <= u32::MAX as usize, "cloud too large to index");
    let frags: Vec<Fragment> = cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (x0, x1, y0, y1, z) = splat_footprint(p, k, pose, cfg)?;
            let z = z as f32;
            if !(z.is_finite() && z > 0.0) {
                return None;
            }
            let bits = z.to_bits() as u64;
            Some(Fragment {
                x0,
                x1,
                y0,
                y1,
                key: bits << 32 | i as u64,
            })
        })
        .collect();

    // Bucket fragments by band (counting sort; splats may straddle bands).
    let bands = h.div_ceil(BAND_ROWS);
    let mut starts = vec![0usize; bands + 1];
    for f in &frags {
        for b in f.y0 / BAND_ROWS..=(f.y1 - 1) / BAND_ROWS {
            starts[b + 1] += 1;
        }
    }
    for b in 0..bands {
        starts[b + 1] += starts[b];
    }
    let mut cursor = starts.clone();
    let mut binned = vec![0u32; starts[bands]];
    for (fi, f) in frags.iter().enumerate() {
        for b in f.y0 / BAND_ROWS..=(f.y1 - 1) / BAND_ROWS {
            binned[cursor[b]] = fi as u32;
            cursor[b] += 1;
        }
    }

    let colors = cloud.colors();
    let mut rgb = vec![[0.0f32; 3]; w * h];
    let mut values = vec![f32::INFINITY; w * h];
    let mut valid = vec![false; w * h];
    let band_len = (BAND_ROWS * w).max(1);
    rgb.par_chunks_mut(band_len)
        .zip(values.par_chunks_mut(band_len))
        .zip(valid.par_chunks_mut(band_len))
        .enumerate()
        .for_each(|(b, ((rgb, values), valid))| {
            let row0 = b * BAND_ROWS;
            let rows = rgb.len() / w;
            let mut zbuf = vec![u64::MAX; rgb.len()];
            for &fi in &binned[starts[b]..starts[b + 1]] {
                let f = frags[fi as usize];
                for row in f.y0.max(row0)..f.y1.min(row0 + rows) {
                    let line = &mut zbuf[(row - row0) * w..(row - row0 + 1) * w];
                    for cell in &mut line[f.x0..f.x1] {
                        if f.key < *cell {
                            *cell = f.key;
                        }
                    }
                }
            }
            for (i, key) in zbuf.into_iter().enumerate() {
                if key != u64::MAX {
                    rgb[i] = colors[(key & 0xffff_ffff) as usize];
                    values[i] = f32::from_bits((key >> 32) as u32);
                    valid[i] = true;
                }
            }
        });
    let rgb = Grid::from_vec(w, h, rgb).expect("dims match");
    let depth = DepthMap::from_parts(
        Grid::from_vec(w, h, values).expect("dims match"),
        Grid::from_vec(w, h, valid).expect("dims match"),
    )
    .expect("splat depths are positive");
    (rgb, depth)
}

/// Background RGB and depth of 1-based frame `t` under the scene camera.
pub fn render_background_points(scene: &SceneState, t: usize, cfg: &SplatConfig) -> Result<(RgbImage, DepthMap)> {
    let pose = scene
        .camera()
        .pose(t)
        .ok_or_else(|| Error::Bounds(format!("frame {t} outside [1, {}]", scene.frame_count())))?;
    Ok(render_points(scene.background(), scene.intrinsics(), pose, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_k(w: usize, h: usize) -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, w, h).unwrap()
    }

    fn flat_scene_inputs(w: usize, h: usize) -> (RgbImage, DepthMap, CameraIntrinsics<f64>) {
        let img = Grid::from_fn(w, h, |c, r| [c as f32 / w as f32, r as f32 / h as f32, 0.5]);
        let depth = DepthMap::from_values(Grid::filled(w, h, 2.0));
        let k = CameraIntrinsics::new(10.0, 10.0, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h).unwrap();
        (img, depth, k)
    }

    fn mask(w: usize, h: usize, id: &str, px: &[(usize, usize)]) -> InstanceMask {
        let mut g = Grid::filled(w, h, false);
        for &(c, r) in px {
            g.set(c, r, true);
        }
        InstanceMask::new(id, "person", g).unwrap()
    }

    #[test]
    fn one_mask_on_two_by_two() {
        let (img, depth, k) = flat_scene_inputs(2, 2);
        let s = build_scene(&img, &depth, &[mask(2, 2, "a", &[(0, 0)])], &k, &CameraPose::identity()).unwrap();
        assert_eq!(s.background().len(), 3);
        assert_eq!(s.objects()["a"].cloud.len(), 1);
        assert_eq!(s.frame_count(), 1);
        assert_eq!(s.objects()["a"].trajectory().len(), 1);
    }

    #[test]
    fn no_masks_all_background() {
        let (img, mut depth, k) = flat_scene_inputs(3, 3);
        depth = DepthMap::from_values(Grid::from_fn(3, 3, |c, _| if c == 0 { 0.0 } else { depth.depth(c, 0).unwrap() }));
        let s = build_scene(&img, &depth, &[], &k, &CameraPose::identity()).unwrap();
        assert_eq!(s.background().len(), 6);
        assert!(s.objects().is_empty());
    }

    #[test]
    fn two_masks_with_invalid_pixel() {
        // Reference enumeration: 16 pixels, masks a = {(0,0),(1,0),(2,0)} and
        // b = {(0,3),(1,3),(2,3)}, invalid depth at (1,0).
        let (img, _, k) = flat_scene_inputs(4, 4);
        let depth = DepthMap::from_values(Grid::from_fn(4, 4, |c, r| if (c, r) == (1, 0) { f32::NAN } else { 2.0 }));
        let a = mask(4, 4, "a", &[(0, 0), (1, 0), (2, 0)]);
        let b = mask(4, 4, "b", &[(0, 3), (1, 3), (2, 3)]);
        let mut expected_bg = 0;
        for r in 0..4 {
            for c in 0..4 {
                let in_mask = *a.pixels().get(c, r) || *b.pixels().get(c, r);
                if !in_mask && depth.depth(c, r).is_some() {
                    expected_bg += 1;
                }
            }
        }
        assert_eq!(expected_bg, 10);
        let s = build_scene(&img, &depth, &[a, b], &k, &CameraPose::identity()).unwrap();
        assert_eq!(s.objects()["a"].cloud.len(), 2);
        assert_eq!(s.objects()["b"].cloud.len(), 3);
        assert_eq!(s.background().len(), expected_bg);
    }

    #[test]
    fn overlap_goes_to_smaller_mask() {
        let (img, depth, k) = flat_scene_inputs(4, 4);
        let big = mask(4, 4, "big", &[(0, 0), (1, 0), (2, 0), (3, 0)]);
        let small = mask(4, 4, "small", &[(1, 0)]);
        let s = build_scene(&img, &depth, &[big, small], &k, &CameraPose::identity()).unwrap();
        assert_eq!(s.objects()["big"].cloud.len(), 3);
        assert_eq!(s.objects()["small"].cloud.len(), 1);
    }

    #[test]
    fn errors() {
        let (img, depth, k) = flat_scene_inputs(4, 4);
        let invalid = DepthMap::from_values(Grid::from_fn(4, 4, |c, r| if (c, r) == (0, 0) { 0.0 } else { 1.0 }));
        let m = mask(4, 4, "a", &[(0, 0)]);
        assert!(matches!(
            build_scene(&img, &invalid, &[m.clone()], &k, &CameraPose::identity()),
            Err(Error::EmptyObject(_))
        ));
        let small_depth = DepthMap::from_values(Grid::filled(3, 4, 1.0));
        assert!(matches!(
            build_scene(&img, &small_depth, &[], &k, &CameraPose::identity()),
            Err(Error::Shape(_))
        ));
        let bad_mask = mask(3, 3, "b", &[(0, 0)]);
        assert!(matches!(
            build_scene(&img, &depth, &[bad_mask], &k, &CameraPose::identity()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn single_point_radius_zero() {
        let mut cloud = ColoredPointCloud::default();
        cloud.push(Point3::new(0.0, 0.0, 2.0), [1.0, 0.5, 0.25]);
        let k = CameraIntrinsics::new(1.0, 1.0, 1.0, 2.0, 3, 4).unwrap();
        let (rgb, depth) = render_points(&cloud, &k, &CameraPose::identity(), &SplatConfig { radius: 0.0 });
        assert_eq!(depth.valid_count(), 1);
        assert_eq!(depth.depth(1, 2), Some(2.0));
        assert_eq!(*rgb.get(1, 2), [1.0, 0.5, 0.25]);
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let mut cloud = ColoredPointCloud::default();
        cloud.push(Point3::new(0.0, 0.0, 3.0), [0.0, 0.0, 1.0]);
        cloud.push(Point3::new(0.0, 0.0, 2.0), [1.0, 0.0, 0.0]);
        let k = unit_k(1, 1);
        let (rgb, depth) = render_points(&cloud, &k, &CameraPose::identity(), &SplatConfig { radius: 0.0 });
        assert_eq!(depth.depth(0, 0), Some(2.0));
        assert_eq!(*rgb.get(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_cloud_renders_invalid() {
        let k = unit_k(2, 2);
        let (_, depth) = render_points(&ColoredPointCloud::default(), &k, &CameraPose::identity(), &SplatConfig::default());
        assert_eq!(depth.valid_count(), 0);
    }

    #[test]
    fn splat_side_scales_with_distance() {
        let k = CameraIntrinsics::new(500.0, 500.0, 50.0, 50.0, 100, 100).unwrap();
        let cfg = SplatConfig { radius: 0.01 };
        let near = splat_footprint(&Point3::new(0.0, 0.0, 1.0), &k, &CameraPose::identity(), &cfg).unwrap();
        assert_eq!((near.1 - near.0, near.3 - near.2), (5, 5));
        let far = splat_footprint(&Point3::new(0.0, 0.0, 100.0), &k, &CameraPose::identity(), &cfg).unwrap();
        assert_eq!((far.1 - far.0, far.3 - far.2), (1, 1));
    }

    #[test]
    fn instance_id_grid_split() {
        let ids = Grid::from_vec(3, 1, vec![0u16, 2, 5]).unwrap();
        let mut labels = BTreeMap::new();
        labels.insert("5".to_owned(), "car".to_owned());
        let masks = masks_from_id_grid(&ids, &labels);
        assert_eq!(masks.len(), 2);
        assert_eq!(masks[0].object_id, "2");
        assert_eq!(masks[0].label, "object");
        assert_eq!(masks[1].label, "car");
    }
}
