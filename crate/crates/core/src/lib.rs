//! Geometric control toolkit: a static background point cloud plus per-object
//! 3D Gaussian trajectories, rendered into per-frame control maps, packed into
//! latent-aligned tensors, and scored with RotErr / TransErr / ObjMC.
//!
//! Math types are generic over the scalar (`f32` / `f64`); the aliases below
//! fix the double-precision instantiation used throughout the pipeline.

pub mod assignment;
pub mod camera;
pub mod curation;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod packing;
pub mod render;
pub mod scalar;
pub mod scene;

pub use camera::{back_project, project, BehindCamera, CameraIntrinsics, CameraPose, CameraTrack, Projection};
pub use error::{Error, Result};
pub use gaussian::{
    fit_gaussian, interpolate_track, to_oriented_box, Gaussian3, GaussianTrajectory, KeyframeTrack, OrientedBox3,
};
pub use grid::{DepthMap, Grid, RgbImage, ScalarGrid};
pub use metrics::{evaluate_pair, objmc, rot_err, trans_err, EvalManifest, EvalOptions, EvalReport};
pub use packing::{rearrange_mask, unpack_mask, PackedMask, StrideConfig, Tensor4};
pub use render::{render_control_frame, render_control_sequence, ControlFrame, RenderMode, RenderSettings};
pub use scalar::Real;
pub use scene::{build_scene, ColoredPointCloud, InstanceMask, SceneState};

pub type Intrinsics = CameraIntrinsics<f64>;
pub type Pose = CameraPose<f64>;
pub type Track = CameraTrack<f64>;
pub type Gaussian = Gaussian3<f64>;
pub type Trajectory = GaussianTrajectory<f64>;
pub type Keyframes = KeyframeTrack<f64>;
pub type OrientedBox = OrientedBox3<f64>;
