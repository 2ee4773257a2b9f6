//! Single-channel PFM (`Pf`), little-endian float32, rows stored bottom to top.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub fn encode_pfm(grid: &Grid<f32>) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            out.extend_from_slice(&grid.get(col, row).to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, grid: &Grid<f32>) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pfm(grid)).map_err(|e| Error::io(path, e))
}

fn header_token(r: &mut impl BufRead) -> std::io::Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(String::from_utf8_lossy(&tok).into_owned());
        }
        tok.push(byte[0]);
    }
}

/// Decodes a PFM stream. Colour (`PF`) files keep only their first channel.
pub fn decode_pfm(r: impl Read) -> Result<Grid<f32>> {
    let mut r = BufReader::new(r);
    let bad = |m: String| Error::Format(format!("pfm: {m}"));
    let magic = header_token(&mut r).map_err(|e| bad(e.to_string()))?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(bad(format!("bad magic {other:?}"))),
    };
    let mut num = || -> Result<String> { header_token(&mut r).map_err(|e| bad(e.to_string())) };
    let w: usize = num()?.parse().map_err(|e| bad(format!("width: {e}")))?;
    let h: usize = num()?.parse().map_err(|e| bad(format!("height: {e}")))?;
    let scale: f32 = num()?.parse().map_err(|e| bad(format!("scale: {e}")))?;
    let little = scale < 0.0;
    let mut bytes = vec![0u8; w * h * channels * 4];
    r.read_exact(&mut bytes).map_err(|e| bad(format!("payload: {e}")))?;
    let mut data = vec![0.0f32; w * h];
    for row in 0..h {
        let src_row = h - 1 - row;
        for col in 0..w {
            let o = ((src_row * w + col) * channels) * 4;
            let b: [u8; 4] = bytes[o..o + 4].try_into().unwrap();
            data[row * w + col] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Grid::from_vec(w, h, data)
}

pub fn read_pfm(path: &Path) -> Result<Grid<f32>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(f).map_err(|e| Error::parse(path, e))
}
