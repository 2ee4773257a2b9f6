//! Per-object 3D Gaussians: fitting, keyframe interpolation and the
//! box / centroid encodings derived from them.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Diagonal regularization added to every fitted covariance (m²).
pub const COVARIANCE_EPSILON: f64 = 1e-6;

/// Default iso-surface scale (in standard deviations) for ellipsoids and boxes.
pub const DEFAULT_ISO_SCALE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3<S: Real> {
    pub mean: Vector3<S>,
    pub cov: Matrix3<S>,
}

fn symmetry_tolerance<S: Real>(m: &Matrix3<S>) -> S {
    let scale = m.abs().max().max(S::one());
    let base: S = lit(1e-9);
    let eps = S::default_epsilon() * lit(64.0);
    base.max(eps) * scale
}

impl<S: Real> Gaussian3<S> {
    /// Validating constructor: `cov` must be symmetric and positive definite.
    pub fn new(mean: Vector3<S>, cov: Matrix3<S>) -> Result<Self> {
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(Error::Invalid("gaussian parameters must be finite".into()));
        }
        let tol = symmetry_tolerance(&cov);
        if (cov - cov.transpose()).abs().max() > tol {
            return Err(Error::Invalid("covariance is not symmetric".into()));
        }
        let sym = symmetrize(&cov);
        let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
        if !(min_eig > S::zero()) {
            return Err(Error::Invalid(format!(
                "covariance is not positive definite (min eigenvalue {min_eig})"
            )));
        }
        Ok(Self { mean, cov: sym })
    }

    /// Isotropic Gaussian with variance `var` on every axis.
    pub fn isotropic(mean: Vector3<S>, var: S) -> Result<Self> {
        Self::new(mean, Matrix3::identity() * var)
    }

    /// Inverse of [`to_oriented_box`]: Σ = A diag((h / k)²) Aᵀ.
    pub fn from_box(b: &OrientedBox3<S>, k: S) -> Result<Self> {
        let var = b.half_extents.map(|h| (h / k) * (h / k));
        let cov = b.axes * Matrix3::from_diagonal(&var) * b.axes.transpose();
        Self::new(b.center, symmetrize(&cov))
    }

    /// Rigid transform `x -> R x + t` applied to the distribution.
    pub fn transformed(&self, r: &Matrix3<S>, t: &Vector3<S>) -> Self {
        Self {
            mean: r * self.mean + t,
            cov: symmetrize(&(r * self.cov * r.transpose())),
        }
    }

    pub fn cast<T: Real>(&self) -> Gaussian3<T> {
        Gaussian3 {
            mean: self.mean.map(|v| lit(to_f64(v))),
            cov: self.cov.map(|v| lit(to_f64(v))),
        }
    }
}

fn symmetrize<S: Real>(m: &Matrix3<S>) -> Matrix3<S> {
    (m + m.transpose()) * lit::<S>(0.5)
}

/// Mean and population covariance (divided by N) plus `ε I`.
pub fn fit_gaussian<S: Real>(points: &[Point3<S>]) -> Result<Gaussian3<S>> {
    if points.is_empty() {
        return Err(Error::EmptyObject("fit_gaussian: empty point set".into()));
    }
    let n: S = lit(points.len() as f64);
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    cov += Matrix3::identity() * lit::<S>(COVARIANCE_EPSILON);
    Ok(Gaussian3 {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Symmetric matrix function via eigendecomposition.
fn sym_apply<S: Real>(m: &Matrix3<S>, f: impl Fn(S) -> S) -> Matrix3<S> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(f);
    symmetrize(&(eig.eigenvectors * Matrix3::from_diagonal(&d) * eig.eigenvectors.transpose()))
}

pub fn spd_log<S: Real>(m: &Matrix3<S>) -> Matrix3<S> {
    sym_apply(m, |v| v.ln())
}

pub fn sym_exp<S: Real>(m: &Matrix3<S>) -> Matrix3<S> {
    sym_apply(m, |v| v.exp())
}

/// RGB trajectory color derived from a hash of the object id (full saturation and value).
pub fn trajectory_color(object_id: &str) -> [f32; 3] {
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for b in object_id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    hsv_to_rgb((h % 360) as f32, 1.0, 1.0)
}

fn hsv_to_rgb(hue: f32, s: f32, v: f32) -> [f32; 3] {
    let c = v * s;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTrajectory<S: Real> {
    pub object_id: String,
    pub color: [f32; 3],
    frames: Vec<Gaussian3<S>>,
}

impl<S: Real> GaussianTrajectory<S> {
    pub fn new(object_id: impl Into<String>, color: [f32; 3], frames: Vec<Gaussian3<S>>) -> Result<Self> {
        let object_id = object_id.into();
        if frames.is_empty() {
            return Err(Error::Invalid(format!("trajectory {object_id:?} has no frames")));
        }
        Ok(Self {
            object_id,
            color,
            frames,
        })
    }

    /// Trajectory holding `g` for `frames` frames.
    pub fn constant(object_id: impl Into<String>, color: [f32; 3], g: Gaussian3<S>, frames: usize) -> Result<Self> {
        Self::new(object_id, color, vec![g; frames])
    }

    pub fn frames(&self) -> &[Gaussian3<S>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Gaussian at 1-based frame `t`.
    pub fn at(&self, t: usize) -> Option<&Gaussian3<S>> {
        t.checked_sub(1).and_then(|i| self.frames.get(i))
    }

    /// Centered moving average of means and log-covariances over `window`
    /// frames (odd); the window shrinks at the ends.
    pub fn smoothed(&self, window: usize) -> Self {
        if window <= 1 {
            return self.clone();
        }
        let half = window / 2;
        let logs: Vec<_> = self.frames.iter().map(|g| spd_log(&g.cov)).collect();
        let n = self.frames.len();
        let frames = (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(half), (i + half).min(n - 1));
                let m: S = lit((hi - lo + 1) as f64);
                let mut mean = Vector3::zeros();
                let mut log = Matrix3::zeros();
                for j in lo..=hi {
                    mean += self.frames[j].mean;
                    log += logs[j];
                }
                Gaussian3 {
                    mean: mean / m,
                    cov: sym_exp(&(log / m)),
                }
            })
            .collect();
        Self {
            object_id: self.object_id.clone(),
            color: self.color,
            frames,
        }
    }
}

/// Connects independent per-frame fits into one trajectory.
pub fn trajectory_from_fits<S: Real>(
    object_id: &str,
    per_frame_points: &[Vec<Point3<S>>],
) -> Result<GaussianTrajectory<S>> {
    let frames = per_frame_points
        .iter()
        .enumerate()
        .map(|(i, pts)| {
            fit_gaussian(pts).map_err(|_| Error::EmptyObject(format!("{object_id} (frame {})", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianTrajectory::new(object_id, trajectory_color(object_id), frames)
}

/// Sparse user keyframes, 1-based frame indices in strictly increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeTrack<S: Real> {
    keys: Vec<(usize, Gaussian3<S>)>,
}

impl<S: Real> KeyframeTrack<S> {
    pub fn new(keys: Vec<(usize, Gaussian3<S>)>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::Invalid("keyframe track needs at least one key".into()));
        }
        for (i, (frame, _)) in keys.iter().enumerate() {
            if *frame == 0 {
                return Err(Error::Bounds(format!("keys[{i}].frame must be >= 1")));
            }
            if i > 0 && *frame <= keys[i - 1].0 {
                return Err(Error::Invalid(format!(
                    "keys[{i}].frame must be strictly increasing"
                )));
            }
        }
        Ok(Self { keys })
    }

    pub fn single(frame: usize, g: Gaussian3<S>) -> Result<Self> {
        Self::new(vec![(frame, g)])
    }

    pub fn keys(&self) -> &[(usize, Gaussian3<S>)] {
        &self.keys
    }

    pub fn last_frame(&self) -> usize {
        self.keys.last().map(|k| k.0).unwrap_or(1)
    }
}

/// Expands keyframes into a dense trajectory of `frames` frames.
///
/// Means are interpolated linearly and covariances in the matrix-log domain;
/// values before the first and after the last key are held constant.
pub fn interpolate_track<S: Real>(
    object_id: &str,
    color: [f32; 3],
    track: &KeyframeTrack<S>,
    frames: usize,
) -> Result<GaussianTrajectory<S>> {
    if frames == 0 {
        return Err(Error::Invalid("frame count must be >= 1".into()));
    }
    if let Some((i, (f, _))) = track.keys.iter().enumerate().find(|(_, (f, _))| *f > frames) {
        return Err(Error::Bounds(format!(
            "keys[{i}].frame = {f} outside [1, {frames}]"
        )));
    }
    let logs: Vec<Matrix3<S>> = track.keys.iter().map(|(_, g)| spd_log(&g.cov)).collect();
    let keys = &track.keys;
    let mut out = Vec::with_capacity(frames);
    let mut seg = 0usize;
    for t in 1..=frames {
        if t <= keys[0].0 {
            out.push(keys[0].1);
            continue;
        }
        if t >= keys[keys.len() - 1].0 {
            out.push(keys[keys.len() - 1].1);
            continue;
        }
        while keys[seg + 1].0 < t {
            seg += 1;
        }
        let (f0, g0) = &keys[seg];
        let (f1, g1) = &keys[seg + 1];
        if t == *f0 {
            out.push(*g0);
            continue;
        }
        if t == *f1 {
            out.push(*g1);
            continue;
        }
        let s: S = lit((t - f0) as f64 / (f1 - f0) as f64);
        let mean = g0.mean + (g1.mean - g0.mean) * s;
        let log = logs[seg] * (S::one() - s) + logs[seg + 1] * s;
        out.push(Gaussian3 {
            mean,
            cov: sym_exp(&log),
        });
    }
    GaussianTrajectory::new(object_id, color, out)
}

/// Oriented box whose axes follow the principal directions of a Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3<S: Real> {
    pub center: Vector3<S>,
    /// Columns are the box axes, ordered by decreasing extent.
    pub axes: Matrix3<S>,
    pub half_extents: Vector3<S>,
}

impl<S: Real> OrientedBox3<S> {
    /// Whether `p` lies inside the box (boundary inclusive).
    pub fn contains(&self, p: &Vector3<S>) -> bool {
        let local = self.axes.transpose() * (p - self.center);
        (0..3).all(|i| local[i].abs() <= self.half_extents[i])
    }

    pub fn corners(&self) -> [Vector3<S>; 8] {
        let mut out = [self.center; 8];
        for (n, c) in out.iter_mut().enumerate() {
            for i in 0..3 {
                let sign = if n >> i & 1 == 1 { S::one() } else { -S::one() };
                *c += self.axes.column(i) * (self.half_extents[i] * sign);
            }
        }
        out
    }
}

/// Principal axes of a symmetric matrix: eigenvalues descending, each axis
/// signed so that its largest-magnitude component is positive, third axis
/// replaced by the cross product of the first two.
pub fn principal_axes<S: Real>(cov: &Matrix3<S>) -> (Vector3<S>, Matrix3<S>) {
    let eig = SymmetricEigen::new(symmetrize(cov));
    let dominant = |v: &Vector3<S>| {
        let mut best = 0;
        for i in 1..3 {
            if v[i].abs() > v[best].abs() {
                best = i;
            }
        }
        best
    };
    let mut order = [0usize, 1, 2];
    let tie: S = lit::<S>(1e-12).max(S::default_epsilon() * lit(8.0));
    order.sort_by(|&a, &b| {
        let (la, lb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        let scale = la.abs().max(lb.abs()).max(S::one());
        if (la - lb).abs() <= tie * scale {
            let va: Vector3<S> = eig.eigenvectors.column(a).into();
            let vb: Vector3<S> = eig.eigenvectors.column(b).into();
            dominant(&va).cmp(&dominant(&vb))
        } else {
            lb.partial_cmp(&la).unwrap_or(std::cmp::Ordering::Equal)
        }
    });
    let mut axes = [Vector3::zeros(); 3];
    let mut values = Vector3::zeros();
    for (slot, &i) in order.iter().enumerate() {
        let mut v: Vector3<S> = eig.eigenvectors.column(i).normalize();
        if v[dominant(&v)] < S::zero() {
            v = -v;
        }
        axes[slot] = v;
        values[slot] = eig.eigenvalues[i];
    }
    let second = (axes[1] - axes[0] * axes[0].dot(&axes[1])).normalize();
    let third = axes[0].cross(&second);
    (values, Matrix3::from_columns(&[axes[0], second, third]))
}

/// Oriented box with half extents `k √λᵢ` along the principal axes.
pub fn to_oriented_box<S: Real>(g: &Gaussian3<S>, k: S) -> OrientedBox3<S> {
    let (values, axes) = principal_axes(&g.cov);
    OrientedBox3 {
        center: g.mean,
        axes,
        half_extents: values.map(|l| k * l.max(S::zero()).sqrt()),
    }
}

/// Centroid-only encoding: the per-frame means.
pub fn to_point_trajectory<S: Real>(traj: &GaussianTrajectory<S>) -> Vec<Vector3<S>> {
    traj.frames().iter().map(|g| g.mean).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyJson {
    pub frame: usize,
    pub mu: [f64; 3],
    pub sigma: [f64; 9],
}

impl KeyJson {
    /// `sigma` is row-major.
    pub fn to_gaussian(&self) -> Result<Gaussian3<f64>> {
        Gaussian3::new(Vector3::from(self.mu), Matrix3::from_row_slice(&self.sigma))
    }
}

/// `{ "object_id", "color": [r, g, b], "keys": [...] }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryJson {
    pub object_id: String,
    pub color: [f32; 3],
    pub keys: Vec<KeyJson>,
}

impl TrajectoryJson {
    pub fn from_track(object_id: &str, color: [f32; 3], track: &KeyframeTrack<f64>) -> Self {
        let keys = track
            .keys()
            .iter()
            .map(|(frame, g)| {
                let mut sigma = [0.0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        sigma[i * 3 + j] = g.cov[(i, j)];
                    }
                }
                KeyJson {
                    frame: *frame,
                    mu: [g.mean.x, g.mean.y, g.mean.z],
                    sigma,
                }
            })
            .collect();
        Self {
            object_id: object_id.to_owned(),
            color,
            keys,
        }
    }

    /// Parses the keys, reporting the offending field path on failure.
    pub fn to_track(&self) -> Result<KeyframeTrack<f64>> {
        let keys = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let g = k
                    .to_gaussian()
                    .map_err(|e| Error::Invalid(format!("keys[{i}].sigma: {}", e.detail())))?;
                Ok((k.frame, g))
            })
            .collect::<Result<Vec<_>>>()?;
        KeyframeTrack::new(keys)
    }
}
