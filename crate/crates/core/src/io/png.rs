//! 8-bit PNG encode/decode for RGB images, masks and instance-id maps.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::grid::{quantize_unit, Grid, RgbImage, ScalarGrid};

fn encode(img: DynamicImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory png encoding cannot fail");
    buf.into_inner()
}

pub fn encode_rgb(img: &RgbImage) -> Vec<u8> {
    let bytes: Vec<u8> = img
        .as_slice()
        .iter()
        .flat_map(|p| p.map(quantize_unit))
        .collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer size matches");
    encode(DynamicImage::ImageRgb8(buf))
}

/// Grayscale PNG with value `round(255 * v)`.
pub fn encode_gray(grid: &ScalarGrid) -> Vec<u8> {
    let bytes: Vec<u8> = grid.as_slice().iter().map(|v| quantize_unit(*v)).collect();
    let buf = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, bytes)
        .expect("buffer size matches");
    encode(DynamicImage::ImageLuma8(buf))
}

fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png)
        .decode()
        .map_err(|e| Error::Format(format!("png: {e}")))
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let img = decode(bytes)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| p.0.map(|v| v as f32 / 255.0))
        .collect();
    Grid::from_vec(w, h, data)
}

pub fn decode_gray(bytes: &[u8]) -> Result<ScalarGrid> {
    let img = decode(bytes)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Grid::from_vec(w, h, img.pixels().map(|p| p.0[0] as f32 / 255.0).collect())
}

/// Instance-id coded mask (8- or 16-bit grayscale); 0 means background.
pub fn decode_ids(bytes: &[u8]) -> Result<Grid<u16>> {
    let (w, h, data): (usize, usize, Vec<u16>) = match decode(bytes)? {
        DynamicImage::ImageLuma8(g) => (
            g.width() as usize,
            g.height() as usize,
            g.pixels().map(|p| p.0[0] as u16).collect(),
        ),
        DynamicImage::ImageLuma16(g) => (g.width() as usize, g.height() as usize, g.into_raw()),
        other => {
            return Err(Error::Format(format!(
                "instance mask must be grayscale, got {:?}",
                other.color()
            )))
        }
    };
    Grid::from_vec(w, h, data)
}

pub fn encode_ids(ids: &Grid<u16>) -> Vec<u8> {
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        ids.width() as u32,
        ids.height() as u32,
        ids.as_slice().to_vec(),
    )
    .expect("buffer size matches");
    encode(DynamicImage::ImageLuma16(buf))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    decode_rgb(&read(path)?).map_err(|e| Error::parse(path, e))
}

pub fn read_gray(path: &Path) -> Result<ScalarGrid> {
    decode_gray(&read(path)?).map_err(|e| Error::parse(path, e))
}

pub fn read_ids(path: &Path) -> Result<Grid<u16>> {
    decode_ids(&read(path)?).map_err(|e| Error::parse(path, e))
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    write(path, &encode_rgb(img))
}

pub fn write_gray(path: &Path, grid: &ScalarGrid) -> Result<()> {
    write(path, &encode_gray(grid))
}

pub fn write_ids(path: &Path, ids: &Grid<u16>) -> Result<()> {
    write(path, &encode_ids(ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_roundtrip_is_exact_on_bytes() {
        let img = Grid::from_fn(5, 3, |c, r| [c as f32 * 51.0 / 255.0, r as f32 * 100.0 / 255.0, 1.0]);
        assert_eq!(decode_rgb(&encode_rgb(&img)).unwrap(), img);
    }

    #[test]
    fn ids_roundtrip_8_and_16_bit() {
        let ids = Grid::from_vec(3, 1, vec![0u16, 3, 300]).unwrap();
        assert_eq!(decode_ids(&encode_ids(&ids)).unwrap(), ids);
        let gray = Grid::from_vec(2, 1, vec![0.0f32, 2.0 / 255.0]).unwrap();
        let ids8 = decode_ids(&encode_gray(&gray)).unwrap();
        assert_eq!(ids8.as_slice(), &[0, 2]);
    }
}
