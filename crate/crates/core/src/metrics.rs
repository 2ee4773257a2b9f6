//! Camera and object-motion control metrics: RotErr, TransErr and ObjMC.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::assignment::solve_assignment;
use crate::camera::{poses_from_json, poses_to_json, CameraPose, IntrinsicsJson, PoseJson};
use crate::error::{Error, Result};
use crate::gaussian::GaussianTrajectory;
use crate::scalar::{lit, Real};

/// Penalty for unmatched objects (meters).
pub const DEFAULT_UNMATCHED_PENALTY: f64 = 10.0;

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} ground-truth frames vs {b} generated")));
    }
    Ok(())
}

/// Geodesic angle between two rotations, `arccos((tr(A Bᵀ) - 1) / 2)`.
///
/// Evaluated as `atan2(|axis|, tr - 1)` on `M = A Bᵀ`, where `axis` is the
/// skew part of `M`. Same angle in `[0, π]`, but exact for `A = B` and accurate
/// for small angles where the arccos form loses half its digits.
pub fn rotation_angle<S: Real>(a: &Matrix3<S>, b: &Matrix3<S>) -> S {
    let m = a * b.transpose();
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    axis.norm().atan2(m.trace() - S::one())
}

pub fn rot_err_per_frame<S: Real>(gt: &[CameraPose<S>], gen: &[CameraPose<S>]) -> Result<Vec<S>> {
    check_lengths(gt.len(), gen.len(), "RotErr")?;
    Ok(gt
        .iter()
        .zip(gen)
        .map(|(g, p)| rotation_angle(p.rotation(), g.rotation()))
        .collect())
}

/// Sum over frames of the rotation geodesic between generated and ground truth (radians).
pub fn rot_err<S: Real>(gt: &[CameraPose<S>], gen: &[CameraPose<S>]) -> Result<S> {
    Ok(rot_err_per_frame(gt, gen)?
        .into_iter()
        .fold(S::zero(), |acc, v| acc + v))
}

pub fn trans_err_per_frame<S: Real>(gt: &[CameraPose<S>], gen: &[CameraPose<S>]) -> Result<Vec<S>> {
    check_lengths(gt.len(), gen.len(), "TransErr")?;
    Ok(gt
        .iter()
        .zip(gen)
        .map(|(g, p)| (g.translation() - p.translation()).norm())
        .collect())
}

/// Sum over frames of the Euclidean distance between translations.
pub fn trans_err<S: Real>(gt: &[CameraPose<S>], gen: &[CameraPose<S>]) -> Result<S> {
    Ok(trans_err_per_frame(gt, gen)?
        .into_iter()
        .fold(S::zero(), |acc, v| acc + v))
}

/// Per-frame object centres, the only part of a trajectory ObjMC looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack<S: Real> {
    pub object_id: String,
    pub means: Vec<Vector3<S>>,
}

impl<S: Real> From<&GaussianTrajectory<S>> for ObjectTrack<S> {
    fn from(t: &GaussianTrajectory<S>) -> Self {
        Self {
            object_id: t.object_id.clone(),
            means: t.frames().iter().map(|g| g.mean).collect(),
        }
    }
}

/// Mean over frames of the distance between two centre tracks.
pub fn trajectory_distance<S: Real>(gt: &ObjectTrack<S>, pred: &ObjectTrack<S>) -> S {
    let sum = gt
        .means
        .iter()
        .zip(&pred.means)
        .fold(S::zero(), |acc, (a, b)| acc + (b - a).norm());
    sum / lit(gt.means.len() as f64)
}

/// Square cost matrix of side `max(N_gt, N_pred)`; rows are ground-truth
/// objects, columns predictions, dummy rows and columns hold `penalty`.
pub fn padded_cost_matrix<S: Real>(gt: &[ObjectTrack<S>], pred: &[ObjectTrack<S>], penalty: S) -> (Vec<S>, usize) {
    let n = gt.len().max(pred.len());
    let mut cost = vec![penalty; n * n];
    for (o, g) in gt.iter().enumerate() {
        for (k, p) in pred.iter().enumerate() {
            cost[o * n + k] = trajectory_distance(g, p);
        }
    }
    (cost, n)
}

/// Per-ground-truth error from a padded assignment, averaged in row order.
pub fn objmc_from_assignment<S: Real>(cost: &[S], n: usize, n_gt: usize, n_pred: usize, assignment: &[usize], penalty: S) -> (S, Vec<S>) {
    let per: Vec<S> = (0..n_gt)
        .map(|o| {
            let k = assignment[o];
            if k < n_pred {
                cost[o * n + k]
            } else {
                penalty
            }
        })
        .collect();
    let total = per.iter().fold(S::zero(), |acc, v| acc + *v);
    (total / lit(n_gt as f64), per)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjmcResult<S: Real> {
    pub objmc: S,
    /// `(gt_id, matched pred_id)` in ground-truth order.
    pub matching: Vec<(String, Option<String>)>,
    /// Error per ground-truth object, in ground-truth order.
    pub per_object: Vec<(String, S)>,
}

/// ObjMC with λ-padded optimal matching. Spurious predictions only affect
/// which ground-truth objects get matched; the score averages over ground truth.
pub fn objmc<S: Real>(gt: &[ObjectTrack<S>], pred: &[ObjectTrack<S>], penalty: S) -> Result<ObjmcResult<S>> {
    if gt.is_empty() {
        return Err(Error::Domain("ObjMC needs at least one ground-truth object".into()));
    }
    if !(penalty >= S::zero()) || !penalty.is_finite() {
        return Err(Error::Domain(format!("unmatched penalty must be finite and >= 0, got {penalty}")));
    }
    let frames = gt[0].means.len();
    if frames == 0 {
        return Err(Error::Shape("trajectories have no frames".into()));
    }
    for t in gt.iter().chain(pred) {
        if t.means.len() != frames {
            return Err(Error::Shape(format!(
                "object {:?} has {} frames, expected {frames}",
                t.object_id,
                t.means.len()
            )));
        }
    }
    let (cost, n) = padded_cost_matrix(gt, pred, penalty);
    let assignment = solve_assignment(&cost, n)?;
    let (score, per) = objmc_from_assignment(&cost, n, gt.len(), pred.len(), &assignment, penalty);
    let matching = gt
        .iter()
        .enumerate()
        .map(|(o, g)| {
            let k = assignment[o];
            (g.object_id.clone(), pred.get(k).map(|p| p.object_id.clone()))
        })
        .collect();
    let per_object = gt.iter().zip(per).map(|(g, e)| (g.object_id.clone(), e)).collect();
    Ok(ObjmcResult {
        objmc: score,
        matching,
        per_object,
    })
}

/// ObjMC over full Gaussian trajectories (only the means are used).
pub fn objmc_trajectories<S: Real>(gt: &[GaussianTrajectory<S>], pred: &[GaussianTrajectory<S>], penalty: S) -> Result<ObjmcResult<S>> {
    let gt: Vec<ObjectTrack<S>> = gt.iter().map(ObjectTrack::from).collect();
    let pred: Vec<ObjectTrack<S>> = pred.iter().map(ObjectTrack::from).collect();
    objmc(&gt, &pred, penalty)
}

/// Similarity transform `x -> s R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x * self.scale + self.translation
    }

    /// Re-expresses a world-to-camera pose in the aligned world frame,
    /// keeping the camera's orientation and moving its centre.
    pub fn apply_pose(&self, pose: &CameraPose<f64>) -> CameraPose<f64> {
        let center = self.apply(&pose.center());
        let r = pose.rotation() * self.rotation.transpose();
        CameraPose::new(r, -(r * center)).unwrap_or(*pose)
    }
}

/// Least-squares similarity mapping `src` onto `dst` (Umeyama).
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Similarity> {
    check_lengths(dst.len(), src.len(), "alignment")?;
    if src.len() < 2 {
        return Err(Error::Domain("alignment needs at least two frames".into()));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let var_s = src.iter().map(|s| (s - mu_s).norm_squared()).sum::<f64>() / n;
    if var_s <= 1e-18 {
        return Err(Error::Domain("cannot align a stationary trajectory".into()));
    }
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (d - mu_d) * (s - mu_s).transpose();
    }
    cov /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let rotation = u * sign * vt;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * sign).trace() / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    #[default]
    None,
    Sim3,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "sim3" => Ok(Self::Sim3),
            other => Err(Error::Invalid(format!("unknown alignment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub penalty: f64,
    pub align: Alignment,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            penalty: DEFAULT_UNMATCHED_PENALTY,
            align: Alignment::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectJson {
    pub object_id: String,
    pub mu: Vec<[f64; 3]>,
}

/// `eval.json`: camera poses, optional intrinsics and per-object centre tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub poses: Vec<PoseJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<IntrinsicsJson>,
    #[serde(default)]
    pub objects: Vec<ObjectJson>,
}

impl EvalManifest {
    pub fn new(poses: &[CameraPose<f64>], intrinsics: Option<IntrinsicsJson>, objects: &[ObjectTrack<f64>]) -> Self {
        Self {
            poses: poses_to_json(poses),
            intrinsics,
            objects: objects
                .iter()
                .map(|o| ObjectJson {
                    object_id: o.object_id.clone(),
                    mu: o.means.iter().map(|m| [m.x, m.y, m.z]).collect(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn camera_poses(&self) -> Result<Vec<CameraPose<f64>>> {
        poses_from_json(&self.poses)
    }

    pub fn object_tracks(&self) -> Vec<ObjectTrack<f64>> {
        self.objects
            .iter()
            .map(|o| ObjectTrack {
                object_id: o.object_id.clone(),
                means: o.mu.iter().map(|m| Vector3::from(*m)).collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub gt_id: String,
    pub pred_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Radians, summed over frames.
    pub rot_err: f64,
    /// Meters, summed over frames.
    pub trans_err: f64,
    /// Meters, mean over ground-truth objects; absent when the ground truth has no objects.
    pub objmc: Option<f64>,
    pub matching: Vec<MatchEntry>,
    pub per_object_errors: BTreeMap<String, f64>,
    pub rot_err_mean: f64,
    pub trans_err_mean: f64,
    pub frames: usize,
    pub lambda: f64,
    pub align: Alignment,
}

impl EvalReport {
    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>14} {:>14}\n", "metric", "total", "per-frame"));
        out.push_str(&format!("{:<12} {:>14.6} {:>14.6}\n", "RotErr", self.rot_err, self.rot_err_mean));
        out.push_str(&format!("{:<12} {:>14.6} {:>14.6}\n", "TransErr", self.trans_err, self.trans_err_mean));
        match self.objmc {
            Some(v) => out.push_str(&format!("{:<12} {:>14.6} {:>14}\n", "ObjMC", v, "-")),
            None => out.push_str(&format!("{:<12} {:>14} {:>14}\n", "ObjMC", "n/a", "-")),
        }
        if !self.matching.is_empty() {
            out.push_str(&format!("\n{:<16} {:<16} {:>12}\n", "gt_object", "pred_object", "error_m"));
            for m in &self.matching {
                let err = self.per_object_errors.get(&m.gt_id).copied().unwrap_or(f64::NAN);
                out.push_str(&format!(
                    "{:<16} {:<16} {:>12.6}\n",
                    m.gt_id,
                    m.pred_id.as_deref().unwrap_or("(unmatched)"),
                    err
                ));
            }
        }
        out
    }
}

/// Bundles RotErr, TransErr and ObjMC for one ground-truth / prediction pair.
pub fn evaluate_pair(gt: &EvalManifest, pred: &EvalManifest, opts: &EvalOptions) -> Result<EvalReport> {
    let gt_poses = gt.camera_poses()?;
    let mut pred_poses = pred.camera_poses()?;
    check_lengths(gt_poses.len(), pred_poses.len(), "poses")?;
    let gt_objects = gt.object_tracks();
    let mut pred_objects = pred.object_tracks();

    if opts.align == Alignment::Sim3 {
        let src: Vec<_> = pred_poses.iter().map(|p| p.center()).collect();
        let dst: Vec<_> = gt_poses.iter().map(|p| p.center()).collect();
        let sim = umeyama(&src, &dst)?;
        pred_poses = pred_poses.iter().map(|p| sim.apply_pose(p)).collect();
        for o in &mut pred_objects {
            for m in &mut o.means {
                *m = sim.apply(m);
            }
        }
    }

    let rot = rot_err_per_frame(&gt_poses, &pred_poses)?;
    let trans = trans_err_per_frame(&gt_poses, &pred_poses)?;
    let n = gt_poses.len().max(1) as f64;
    let rot_total: f64 = rot.iter().sum();
    let trans_total: f64 = trans.iter().sum();

    let (objmc_value, matching, per_object_errors) = if gt_objects.is_empty() {
        (None, Vec::new(), BTreeMap::new())
    } else {
        let r = objmc(&gt_objects, &pred_objects, opts.penalty)?;
        let matching = r
            .matching
            .into_iter()
            .map(|(gt_id, pred_id)| MatchEntry { gt_id, pred_id })
            .collect();
        (Some(r.objmc), matching, r.per_object.into_iter().collect())
    };
    Ok(EvalReport {
        rot_err: rot_total,
        trans_err: trans_total,
        objmc: objmc_value,
        matching,
        per_object_errors,
        rot_err_mean: rot_total / n,
        trans_err_mean: trans_total / n,
        frames: gt_poses.len(),
        lambda: opts.penalty,
        align: opts.align,
    })
}

/// [`evaluate_pair`] on manifest files; errors carry the offending path.
pub fn evaluate_files(gt: &Path, pred: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let g = EvalManifest::load(gt)?;
    let p = EvalManifest::load(pred)?;
    g.camera_poses().map_err(|e| Error::parse(gt, e))?;
    p.camera_poses().map_err(|e| Error::parse(pred, e))?;
    evaluate_pair(&g, &p, opts).map_err(|e| match e {
        Error::Shape(msg) => Error::Shape(format!("{} vs {}: {msg}", gt.display(), pred.display())),
        other => other,
    })
}
