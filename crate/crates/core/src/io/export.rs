//! Writes rendered control frames as `bg_rgb_%04d.png`, `bg_depth_%04d.pfm`,
//! `traj_rgb_%04d.png`, `traj_depth_%04d.pfm` and `mask_%04d.png` (1-based).
//!
//! Depth is float32 PFM with `+inf` where invalid; a disabled trajectory
//! channel (camera-only mode) is written as zeros.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{pfm, png};
use crate::error::{Error, Result};
use crate::render::ControlFrame;

pub fn control_file_names(t: usize) -> [String; 5] {
    [
        format!("bg_rgb_{t:04}.png"),
        format!("bg_depth_{t:04}.pfm"),
        format!("traj_rgb_{t:04}.png"),
        format!("traj_depth_{t:04}.pfm"),
        format!("mask_{t:04}.png"),
    ]
}

/// Encoded bytes of the five maps, in [`control_file_names`] order.
pub fn encode_control_frame(frame: &ControlFrame) -> [Vec<u8>; 5] {
    [
        png::encode_rgb(&frame.bg_rgb),
        pfm::encode_pfm(frame.bg_depth.values()),
        png::encode_rgb(&frame.traj_rgb),
        pfm::encode_pfm(frame.traj_depth.values()),
        png::encode_gray(&frame.mask),
    ]
}

pub fn write_control_frame(frame: &ControlFrame, t: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let names = control_file_names(t);
    let blobs = encode_control_frame(frame);
    names
        .iter()
        .zip(blobs.iter())
        .map(|(name, bytes)| {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Writes every frame (1-based numbering) and returns the paths in frame order.
pub fn write_control_sequence(frames: &[ControlFrame], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let per_frame: Vec<Vec<PathBuf>> = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| write_control_frame(f, i + 1, dir))
        .collect::<Result<_>>()?;
    Ok(per_frame.into_iter().flatten().collect())
}
