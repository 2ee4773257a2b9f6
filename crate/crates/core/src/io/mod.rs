//! File formats: PLY clouds, PFM depth, PNG images, scene directories and
//! control-map exports.

pub mod export;
pub mod pfm;
pub mod ply;
pub mod png;
pub mod scene_dir;

pub use export::{control_file_names, write_control_frame, write_control_sequence};
pub use pfm::{read_pfm, write_pfm};
pub use ply::{read_ply, write_ply};
pub use scene_dir::{load_scene, save_scene};
