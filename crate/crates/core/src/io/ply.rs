//! Binary little-endian PLY point clouds (`x y z` float32, `red green blue` uchar).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::grid::quantize_unit;
use crate::scene::ColoredPointCloud;

pub fn encode_ply(cloud: &ColoredPointCloud) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    );
    let mut out = header.into_bytes();
    out.reserve(cloud.len() * 15);
    for (p, c) in cloud.points().iter().zip(cloud.colors()) {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(c.iter().map(|v| quantize_unit(*v)));
    }
    out
}

pub fn write_ply(path: &Path, cloud: &ColoredPointCloud) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ply(cloud)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "uchar" | "uint8" => Self::U8,
            "char" | "int8" => Self::I8,
            "ushort" | "uint16" => Self::U16,
            "short" | "int16" => Self::I16,
            "uint" | "uint32" => Self::U32,
            "int" | "int32" => Self::I32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::U8 | Self::I8 => 1,
            Self::U16 | Self::I16 => 2,
            Self::U32 | Self::I32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::U8 => b[0] as f64,
            Self::I8 => b[0] as i8 as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Decodes a binary little-endian PLY with a `vertex` element carrying
/// `x y z` and optionally `red green blue` (uchar, or float in `[0, 1]`).
/// Missing colors default to mid grey.
pub fn decode_ply(r: impl Read) -> Result<ColoredPointCloud> {
    let bad = |m: &str| Error::Format(format!("ply: {m}"));
    let mut r = BufReader::new(r);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<_>| -> Result<String> {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| bad(&e.to_string()))?;
        if n == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(line.trim().to_owned())
    };
    if next_line(&mut r)? != "ply" {
        return Err(bad("missing magic"));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next_line(&mut r)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(bad(&format!("unsupported format {fmt}")));
                }
            }
            ["element", name, n] => {
                if count.is_some() && in_vertex {
                    return Err(bad("only a single vertex element is supported"));
                }
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
                } else if count.is_none() {
                    return Err(bad("vertex element must come first"));
                }
            }
            ["property", "list", ..] if in_vertex => return Err(bad("list properties on vertices are not supported")),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| bad(&format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            _ => {}
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let idx = |n: &str| props.iter().position(|(p, _)| p == n);
    let (xi, yi, zi) = match (idx("x"), idx("y"), idx("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(bad("vertex needs x, y, z")),
    };
    let color_idx = match (idx("red"), idx("green"), idx("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let mut offsets = Vec::with_capacity(props.len());
    let mut stride = 0;
    for (_, s) in &props {
        offsets.push(stride);
        stride += s.size();
    }
    let mut bytes = vec![0u8; stride * count];
    r.read_exact(&mut bytes).map_err(|_| bad("truncated vertex data"))?;
    let mut cloud = ColoredPointCloud::default();
    for v in bytes.chunks_exact(stride) {
        let get = |i: usize| props[i].1.read(&v[offsets[i]..]);
        let p = Point3::new(get(xi) as f32, get(yi) as f32, get(zi) as f32);
        let c = match color_idx {
            Some(ci) => ci.map(|i| match props[i].1 {
                Scalar::F32 | Scalar::F64 => get(i) as f32,
                _ => get(i) as f32 / 255.0,
            }),
            None => [0.5; 3],
        };
        cloud.push(p, c);
    }
    ColoredPointCloud::new(cloud.points().to_vec(), cloud.colors().to_vec())
}

pub fn read_ply(path: &Path) -> Result<ColoredPointCloud> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_ply(f).map_err(|e| Error::parse(path, e))
}
