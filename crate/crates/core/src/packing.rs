//! Folding the soft control mask onto the video latent grid and assembling
//! the channel-stacked geometry tensor.
//!
//! The spatial fold maps each `s_h x s_w` cell into channels, row-major:
//! `out[r * s_w + q, t', i, j] = mask[0, τ(t'), i * s_h + r, j * s_w + q]`.
//! Temporal downsampling keeps frame `τ(t') = min(round(t' (T-1) / max(T'-1, 1)), T-1)`
//! with `T' = (T + s_t - 1) / s_t`, so the first and last frames are always kept.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

/// Dense `d0 x d1 x d2 x d3` float tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "tensor {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Stacks per-frame grids into a `1 x T x H x W` tensor.
    pub fn from_frames(frames: &[ScalarGrid]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Shape("no frames to stack".into()))?;
        let (w, h) = first.dims();
        let mut data = Vec::with_capacity(frames.len() * w * h);
        for (i, f) in frames.iter().enumerate() {
            if f.dims() != (w, h) {
                return Err(Error::Shape(format!("frame {} is {:?}, expected {:?}", i + 1, f.dims(), (w, h))));
            }
            data.extend_from_slice(f.as_slice());
        }
        Self::from_vec([1, frames.len(), h, w], data)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn offset(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> usize {
        let [_, d1, d2, d3] = self.dims;
        ((i0 * d1 + i1) * d2 + i2) * d3 + i3
    }

    #[inline]
    pub fn get(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> f32 {
        self.data[self.offset(i0, i1, i2, i3)]
    }

    #[inline]
    pub fn set(&mut self, i0: usize, i1: usize, i2: usize, i3: usize, v: f32) {
        let o = self.offset(i0, i1, i2, i3);
        self.data[o] = v;
    }

    /// Copy of channels `[lo, hi)`.
    pub fn channels(&self, lo: usize, hi: usize) -> Tensor4 {
        let plane = self.dims[1] * self.dims[2] * self.dims[3];
        Tensor4 {
            dims: [hi - lo, self.dims[1], self.dims[2], self.dims[3]],
            data: self.data[lo * plane..hi * plane].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StrideConfig {
    pub temporal: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for StrideConfig {
    fn default() -> Self {
        Self {
            temporal: 4,
            height: 8,
            width: 8,
        }
    }
}

impl StrideConfig {
    pub fn new(temporal: usize, height: usize, width: usize) -> Result<Self> {
        if temporal == 0 || height == 0 || width == 0 {
            return Err(Error::Invalid("strides must be positive".into()));
        }
        Ok(Self {
            temporal,
            height,
            width,
        })
    }

    pub fn mask_channels(&self) -> usize {
        self.height * self.width
    }

    /// Latent frame count `(T + s_t - 1) / s_t`.
    pub fn latent_frames(&self, frames: usize) -> usize {
        (frames + self.temporal - 1) / self.temporal
    }
}

impl std::str::FromStr for StrideConfig {
    type Err = Error;

    /// Parses `"t,h,w"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Invalid(format!("strides {s:?}: {e}")))?;
        match parts.as_slice() {
            [t, h, w] => Self::new(*t, *h, *w),
            _ => Err(Error::Invalid(format!("strides {s:?}: expected three comma-separated integers"))),
        }
    }
}

/// Source frame (0-based) kept for each latent frame.
pub fn temporal_indices(frames: usize, latent: usize) -> Vec<usize> {
    let denom = latent.saturating_sub(1).max(1) as f64;
    (0..latent)
        .map(|tp| {
            let pos = (tp as f64 * (frames as f64 - 1.0) / denom).round() as usize;
            pos.min(frames - 1)
        })
        .collect()
}

/// `C_M x T' x H' x W'` mask tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedMask {
    pub tensor: Tensor4,
    pub strides: StrideConfig,
}

/// Folds a `1 x T x H x W` mask onto the latent grid.
pub fn rearrange_mask(mask: &Tensor4, strides: &StrideConfig) -> Result<PackedMask> {
    let [c, frames, h, w] = mask.dims();
    if c != 1 {
        return Err(Error::Shape(format!("mask must have one channel, got {c}")));
    }
    if frames == 0 {
        return Err(Error::Shape("mask has no frames".into()));
    }
    let (sh, sw) = (strides.height, strides.width);
    if h % sh != 0 || w % sw != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} is not divisible by spatial strides {sh}x{sw}"
        )));
    }
    let latent = strides.latent_frames(frames);
    let (hp, wp) = (h / sh, w / sw);
    let keep = temporal_indices(frames, latent);
    let mut out = Tensor4::zeros([sh * sw, latent, hp, wp]);
    for (tp, &src_t) in keep.iter().enumerate() {
        for y in 0..h {
            let (i, r) = (y / sh, y % sh);
            for x in 0..w {
                let (j, q) = (x / sw, x % sw);
                out.set(r * sw + q, tp, i, j, mask.get(0, src_t, y, x));
            }
        }
    }
    Ok(PackedMask {
        tensor: out,
        strides: *strides,
    })
}

/// Inverts the spatial fold, giving `1 x T' x H x W`. Temporal downsampling
/// is not undone.
pub fn unpack_mask(packed: &PackedMask) -> Tensor4 {
    let [_, latent, hp, wp] = packed.tensor.dims();
    let (sh, sw) = (packed.strides.height, packed.strides.width);
    let (h, w) = (hp * sh, wp * sw);
    let mut out = Tensor4::zeros([1, latent, h, w]);
    for tp in 0..latent {
        for y in 0..h {
            for x in 0..w {
                let v = packed.tensor.get((y % sh) * sw + x % sw, tp, y / sh, x / sw);
                out.set(0, tp, y, x, v);
            }
        }
    }
    out
}

/// Channel-wise concatenation in the order
/// `[bg_rgb, bg_depth, traj_rgb, traj_depth, mask]`.
pub fn assemble_geometry_tensor(
    bg_rgb: &Tensor4,
    bg_depth: &Tensor4,
    traj_rgb: &Tensor4,
    traj_depth: &Tensor4,
    mask: &PackedMask,
) -> Result<Tensor4> {
    let parts = [bg_rgb, bg_depth, traj_rgb, traj_depth, &mask.tensor];
    let names = ["bg_rgb", "bg_depth", "traj_rgb", "traj_depth", "mask"];
    let [_, t, h, w] = mask.tensor.dims();
    for (p, name) in parts.iter().zip(names) {
        let d = p.dims();
        if d[1..] != [t, h, w] {
            return Err(Error::Shape(format!(
                "{name} has latent grid {:?}, expected {:?}",
                &d[1..],
                [t, h, w]
            )));
        }
    }
    let channels: usize = parts.iter().map(|p| p.dims()[0]).sum();
    let mut data = Vec::with_capacity(channels * t * h * w);
    for p in parts {
        data.extend_from_slice(p.as_slice());
    }
    Tensor4::from_vec([channels, t, h, w], data)
}

pub const GT4D_MAGIC: [u8; 4] = *b"GT4D";
pub const GT4D_DTYPE_F32: u32 = 1;
pub const GT4D_HEADER_LEN: usize = 32;

/// Writes a `.gt4d` file: 32-byte header (magic `GT4D`, u32 dtype code,
/// four u32 dims, eight reserved zero bytes; all little-endian) followed by
/// the float32 payload in row-major order.
pub fn write_gt4d(w: &mut impl Write, t: &Tensor4) -> std::io::Result<()> {
    let mut header = [0u8; GT4D_HEADER_LEN];
    header[0..4].copy_from_slice(&GT4D_MAGIC);
    header[4..8].copy_from_slice(&GT4D_DTYPE_F32.to_le_bytes());
    for (i, d) in t.dims().iter().enumerate() {
        header[8 + 4 * i..12 + 4 * i].copy_from_slice(&(*d as u32).to_le_bytes());
    }
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(t.as_slice().len() * 4);
    for v in t.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_gt4d(r: &mut impl Read) -> Result<Tensor4> {
    let mut header = [0u8; GT4D_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("gt4d header: {e}")))?;
    if header[0..4] != GT4D_MAGIC {
        return Err(Error::Format("not a gt4d file (bad magic)".into()));
    }
    let dtype = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if dtype != GT4D_DTYPE_F32 {
        return Err(Error::Format(format!("unsupported gt4d dtype code {dtype}")));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    }
    let n: usize = dims.iter().product();
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("gt4d payload: {e}")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor4::from_vec(dims, data)
}

pub fn save_gt4d(path: &Path, t: &Tensor4) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_gt4d(&mut w, t).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_gt4d(path: &Path) -> Result<Tensor4> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_gt4d(&mut std::io::BufReader::new(f))
}
