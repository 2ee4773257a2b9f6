//! Per-frame conditioning maps: background RGB/depth, trajectory RGB/depth
//! and the soft control mask.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{project_camera, CameraIntrinsics, CameraPose};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian3, DEFAULT_ISO_SCALE};
use crate::grid::{BoolGrid, DepthMap, Grid, RgbImage, ScalarGrid};
use crate::scene::{render_points, SceneState, SplatConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderMode {
    /// Trajectory channels are zeroed; only the camera moves.
    CameraOnly,
    /// The camera is held at the first pose; only objects move.
    ObjectOnly,
    Joint,
}

impl std::str::FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "camera-only" | "camera_only" => Ok(Self::CameraOnly),
            "object-only" | "object_only" => Ok(Self::ObjectOnly),
            "joint" => Ok(Self::Joint),
            other => Err(Error::Invalid(format!("unknown render mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for RenderMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::CameraOnly => "camera-only",
            Self::ObjectOnly => "object-only",
            Self::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub splat: SplatConfig,
    /// Ellipsoid iso-surface scale for trajectory depth.
    pub iso_scale: f64,
    /// Footprint cutoff in standard deviations.
    pub cutoff_sigma: f64,
    /// Footprint alpha above which a pixel counts as covered in the mask.
    pub alpha_threshold: f32,
    pub smoothing_sigma: f64,
    pub smoothing_radius: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            splat: SplatConfig::default(),
            iso_scale: DEFAULT_ISO_SCALE,
            cutoff_sigma: 3.0,
            alpha_threshold: 0.05,
            smoothing_sigma: 3.0,
            smoothing_radius: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlFrame {
    pub bg_rgb: RgbImage,
    pub bg_depth: DepthMap,
    pub traj_rgb: RgbImage,
    pub traj_depth: DepthMap,
    pub mask: ScalarGrid,
}

impl ControlFrame {
    pub fn dims(&self) -> (usize, usize) {
        self.bg_rgb.dims()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintRender {
    pub rgb: RgbImage,
    pub depth: DepthMap,
    /// Accumulated footprint opacity in `[0, 1]`.
    pub alpha: ScalarGrid,
}

/// Screen-space data for one Gaussian.
struct Splat {
    center: Vector2<f64>,
    conic: Matrix2<f64>,
    /// Camera-space mean and inverse covariance, for ray/ellipsoid hits.
    mean: Vector3<f64>,
    precision: Matrix3<f64>,
    /// `A m` and `mᵀ A m - k²` of the ray/ellipsoid quadratic.
    precision_mean: Vector3<f64>,
    offset: f64,
    color: [f32; 3],
    bbox: (usize, usize, usize, usize),
}

fn prepare_splat(
    g: &Gaussian3<f64>,
    color: [f32; 3],
    k: &CameraIntrinsics<f64>,
    pose: &CameraPose<f64>,
    settings: &RenderSettings,
) -> Option<Splat> {
    let r = pose.rotation();
    let mean = r * g.mean + pose.translation();
    let proj = project_camera(&mean, k).ok()?;
    let cov_cam = r * g.cov * r.transpose();
    let cov_cam = (cov_cam + cov_cam.transpose()) * 0.5;
    let z = mean.z;
    let jac = Matrix2x3::new(
        k.fx / z,
        0.0,
        -k.fx * mean.x / (z * z),
        0.0,
        k.fy / z,
        -k.fy * mean.y / (z * z),
    );
    let cov2 = jac * cov_cam * jac.transpose();
    let cov2 = (cov2 + cov2.transpose()) * 0.5;
    let conic = cov2.try_inverse()?;
    let precision = cov_cam.try_inverse()?;
    if cov2.determinant() <= 0.0 {
        return None;
    }

    let c = settings.cutoff_sigma;
    let (rx, ry) = (c * cov2[(0, 0)].sqrt(), c * cov2[(1, 1)].sqrt());
    let mut lo = Vector2::new(proj.pixel.x - rx, proj.pixel.y - ry);
    let mut hi = Vector2::new(proj.pixel.x + rx, proj.pixel.y + ry);

    // Extend by the projected iso-surface box so every ray hit is visited.
    let (w, h) = (k.width as f64, k.height as f64);
    let eig = cov_cam.symmetric_eigen();
    let mut all_front = true;
    for n in 0..8 {
        let mut corner = mean;
        for i in 0..3 {
            let sign = if n >> i & 1 == 1 { 1.0 } else { -1.0 };
            corner += eig.eigenvectors.column(i) * (sign * settings.iso_scale * eig.eigenvalues[i].max(0.0).sqrt());
        }
        match project_camera(&corner, k) {
            Ok(p) => {
                lo = lo.inf(&p.pixel);
                hi = hi.sup(&p.pixel);
            }
            Err(_) => all_front = false,
        }
    }
    if !all_front {
        lo = Vector2::new(-0.5, -0.5);
        hi = Vector2::new(w, h);
    }
    let x0 = (lo.x.floor().max(0.0)) as usize;
    let y0 = (lo.y.floor().max(0.0)) as usize;
    let x1 = (hi.x.ceil() + 1.0).clamp(0.0, w) as usize;
    let y1 = (hi.y.ceil() + 1.0).clamp(0.0, h) as usize;
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let precision_mean = precision * mean;
    Some(Splat {
        center: proj.pixel,
        conic,
        mean,
        precision,
        precision_mean,
        offset: mean.dot(&precision_mean) - settings.iso_scale * settings.iso_scale,
        color,
        bbox: (x0, x1, y0, y1),
    })
}

/// Nearest positive root of `a s² + b s + c = 0`, or the far root when the
/// origin is inside (`c < 0`).
#[inline]
fn nearest_hit(a: f64, b: f64, c: f64) -> Option<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable roots
    let q = -0.5 * (b + b.signum() * sq);
    let (r0, r1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let (near, far) = if r0 < r1 { (r0, r1) } else { (r1, r0) };
    if near > 0.0 {
        Some(near)
    } else if far > 0.0 {
        Some(far)
    } else {
        None
    }
}

/// Nearest positive ray parameter where the camera ray `s * dir` meets the
/// ellipsoid `(x - m)ᵀ A (x - m) = k²`. With `dir.z = 1` this is the depth.
pub fn ray_ellipsoid_depth(dir: &Vector3<f64>, mean: &Vector3<f64>, precision: &Matrix3<f64>, k: f64) -> Option<f64> {
    let ad = precision * dir;
    nearest_hit(dir.dot(&ad), -2.0 * ad.dot(mean), mean.dot(&(precision * mean)) - k * k)
}

/// Rows per band; bands render independently.
const BAND_ROWS: usize = 16;

/// Renders Gaussians as soft EWA footprints.
///
/// Alpha is `exp(-d²/2)` in the projected 2D Gaussian, zero beyond the cutoff;
/// colors are composited front to back per pixel, ordered by the ellipsoid hit
/// depth (or the mean depth where the ray misses the ellipsoid); depth is the
/// nearest ray hit on the `iso_scale` ellipsoid. Gaussians behind the camera
/// are skipped.
pub fn render_gaussian_footprints(
    gaussians: &[(Gaussian3<f64>, [f32; 3])],
    k: &CameraIntrinsics<f64>,
    pose: &CameraPose<f64>,
    settings: &RenderSettings,
) -> FootprintRender {
    let (w, h) = (k.width, k.height);
    let splats: Vec<Splat> = gaussians
        .iter()
        .filter_map(|(g, c)| prepare_splat(g, *c, k, pose, settings))
        .collect();
    let cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;

    let mut rgb = vec![[0.0f32; 3]; w * h];
    let mut alpha = vec![0.0f32; w * h];
    let mut values = vec![f32::INFINITY; w * h];
    let mut valid = vec![false; w * h];
    let band_len = (BAND_ROWS * w).max(1);
    rgb.par_chunks_mut(band_len)
        .zip(alpha.par_chunks_mut(band_len))
        .zip(values.par_chunks_mut(band_len).zip(valid.par_chunks_mut(band_len)))
        .enumerate()
        .for_each(|(b, ((rgb, alpha), (values, valid)))| {
            let row0 = b * BAND_ROWS;
            let rows = rgb.len() / w;
            // (sort key, splat index, alpha)
            let mut hits: Vec<(f64, usize, f32)> = Vec::with_capacity(splats.len());
            let mut active: Vec<usize> = Vec::with_capacity(splats.len());
            for row in row0..row0 + rows {
                active.clear();
                active.extend((0..splats.len()).filter(|&i| (splats[i].bbox.2..splats[i].bbox.3).contains(&row)));
                if active.is_empty() {
                    continue;
                }
                let dy = (row as f64 - k.cy) / k.fy;
                for col in 0..w {
                    hits.clear();
                    let mut nearest = f64::INFINITY;
                    let dir = Vector3::new((col as f64 - k.cx) / k.fx, dy, 1.0);
                    for &si in &active {
                        let s = &splats[si];
                        if col < s.bbox.0 || col >= s.bbox.1 {
                            continue;
                        }
                        let d = Vector2::new(col as f64 - s.center.x, row as f64 - s.center.y);
                        let m2 = d.dot(&(s.conic * d));
                        let ad = s.precision * dir;
                        let hit = nearest_hit(dir.dot(&ad), -2.0 * dir.dot(&s.precision_mean), s.offset);
                        if let Some(z) = hit {
                            nearest = nearest.min(z);
                        }
                        if m2 <= cutoff2 {
                            let a = (-0.5 * m2).exp();
                            if a > 0.0 {
                                hits.push((hit.unwrap_or(s.mean.z), si, a as f32));
                            }
                        }
                    }
                    let i = (row - row0) * w + col;
                    if nearest.is_finite() {
                        let zf = nearest as f32;
                        if zf > 0.0 && zf.is_finite() {
                            values[i] = zf;
                            valid[i] = true;
                        }
                    }
                    if hits.is_empty() {
                        continue;
                    }
                    hits.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let mut transmittance = 1.0f32;
                    let mut acc = [0.0f32; 3];
                    for &(_, si, a) in &hits {
                        let color = splats[si].color;
                        for c in 0..3 {
                            acc[c] += transmittance * a * color[c];
                        }
                        transmittance *= 1.0 - a;
                    }
                    rgb[i] = acc;
                    alpha[i] = 1.0 - transmittance;
                }
            }
        });
    let grid = |v| Grid::from_vec(w, h, v).expect("dims match");
    FootprintRender {
        rgb: Grid::from_vec(w, h, rgb).expect("dims match"),
        depth: DepthMap::from_parts(grid(values), Grid::from_vec(w, h, valid).expect("dims match"))
            .expect("hit depths are positive"),
        alpha: grid(alpha),
    }
}

/// Normalized 1D Gaussian kernel of `2 * radius + 1` taps.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable convolution with edge clamping, computed in double precision.
pub fn smooth(grid: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let (w, h) = grid.dims();
    let r = (kernel.len() / 2) as isize;
    let src = grid.as_slice();
    let mut tmp = vec![0.0f64; w * h];
    tmp.par_chunks_mut(w.max(1)).enumerate().for_each(|(row, out)| {
        let line = &src[row * w..(row + 1) * w];
        let padded: Vec<f64> = (-r..w as isize + r)
            .map(|c| line[c.clamp(0, w as isize - 1) as usize])
            .collect();
        for (col, o) in out.iter_mut().enumerate() {
            let window = &padded[col..col + kernel.len()];
            let mut acc = 0.0;
            for (kv, v) in kernel.iter().zip(window) {
                acc += kv * v;
            }
            *o = acc;
        }
    });
    let mut out = vec![0.0f64; w * h];
    out.par_chunks_mut(w.max(1)).enumerate().for_each(|(row, line)| {
        for (ki, kv) in kernel.iter().enumerate() {
            let r_src = (row as isize + ki as isize - r).clamp(0, h as isize - 1) as usize;
            let src_line = &tmp[r_src * w..(r_src + 1) * w];
            for (o, s) in line.iter_mut().zip(src_line) {
                *o += kv * s;
            }
        }
    });
    Grid::from_vec(w, h, out).expect("dims preserved")
}

/// Soft control mask: inverted background visibility merged with the
/// binarized footprint coverage, then Gaussian-smoothed and clamped to `[0, 1]`.
pub fn build_control_mask(bg_valid: &BoolGrid, footprint_alpha: &ScalarGrid, settings: &RenderSettings) -> Result<ScalarGrid> {
    if !bg_valid.same_dims(footprint_alpha) {
        return Err(Error::Shape(format!(
            "visibility is {:?} but footprint alpha is {:?}",
            bg_valid.dims(),
            footprint_alpha.dims()
        )));
    }
    let (w, h) = bg_valid.dims();
    let raw: Vec<f64> = bg_valid
        .as_slice()
        .iter()
        .zip(footprint_alpha.as_slice())
        .map(|(valid, a)| {
            let hole = if *valid { 0.0 } else { 1.0 };
            let fp = if *a > settings.alpha_threshold { 1.0 } else { 0.0 };
            f64::max(hole, fp)
        })
        .collect();
    let raw = Grid::from_vec(w, h, raw)?;
    let kernel = gaussian_kernel(settings.smoothing_sigma, settings.smoothing_radius);
    Ok(smooth(&raw, &kernel).map(|v| v.clamp(0.0, 1.0) as f32))
}

/// Renders 1-based frame `t`.
pub fn render_control_frame(scene: &SceneState, t: usize, mode: RenderMode, settings: &RenderSettings) -> Result<ControlFrame> {
    let frames = scene.frame_count();
    if t == 0 || t > frames {
        return Err(Error::Bounds(format!("frame {t} outside [1, {frames}]")));
    }
    let k = scene.intrinsics();
    let (w, h) = (k.width, k.height);
    let pose = match mode {
        RenderMode::ObjectOnly => scene.camera().poses()[0],
        _ => scene.camera().poses()[t - 1],
    };

    let (mut bg_rgb, bg_depth) = render_points(scene.background(), k, &pose, &settings.splat);
    if t == 1 {
        bg_rgb = scene.first_frame().clone();
    }

    let (traj_rgb, traj_depth, alpha) = match mode {
        RenderMode::CameraOnly => (
            Grid::filled(w, h, [0.0f32; 3]),
            DepthMap::zeroed(w, h),
            Grid::filled(w, h, 0.0f32),
        ),
        _ => {
            let gaussians: Vec<_> = scene
                .trajectories()
                .map(|tr| (tr.frames()[t - 1], tr.color))
                .collect();
            let fp = render_gaussian_footprints(&gaussians, k, &pose, settings);
            (fp.rgb, fp.depth, fp.alpha)
        }
    };

    let mask = if t == 1 {
        Grid::filled(w, h, 0.0f32)
    } else {
        build_control_mask(bg_depth.validity(), &alpha, settings)?
    };
    Ok(ControlFrame {
        bg_rgb,
        bg_depth,
        traj_rgb,
        traj_depth,
        mask,
    })
}

/// Renders every frame of the scene; frames are rendered in parallel.
pub fn render_control_sequence(scene: &SceneState, mode: RenderMode, settings: &RenderSettings) -> Result<Vec<ControlFrame>> {
    (1..=scene.frame_count())
        .into_par_iter()
        .map(|t| render_control_frame(scene, t, mode, settings))
        .collect()
}
