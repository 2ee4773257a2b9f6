//! Dense row-major image grids used for inputs and rendered maps.

use crate::error::{Error, Result};

/// Row-major `height x width` grid of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "grid of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, col: usize, row: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }
}

/// RGB image with channels in `[0, 1]`.
pub type RgbImage = Grid<[f32; 3]>;

/// Per-pixel scalar map (masks, alphas).
pub type ScalarGrid = Grid<f32>;

pub type BoolGrid = Grid<bool>;

/// Metric depth with an explicit validity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Grid<f32>,
    valid: BoolGrid,
}

impl DepthMap {
    /// A map with every pixel invalid.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            values: Grid::filled(width, height, f32::INFINITY),
            valid: Grid::filled(width, height, false),
        }
    }

    /// A disabled channel: every pixel invalid and every stored value zero.
    pub fn zeroed(width: usize, height: usize) -> Self {
        Self {
            values: Grid::filled(width, height, 0.0),
            valid: Grid::filled(width, height, false),
        }
    }

    /// Builds a depth map from raw values; non-finite or non-positive values are invalid.
    pub fn from_values(values: Grid<f32>) -> Self {
        let valid = values.map(|d| d.is_finite() && *d > 0.0);
        let values = Grid::from_fn(values.width(), values.height(), |c, r| {
            if *valid.get(c, r) {
                *values.get(c, r)
            } else {
                f32::INFINITY
            }
        });
        Self { values, valid }
    }

    pub fn from_parts(values: Grid<f32>, valid: BoolGrid) -> Result<Self> {
        if !values.same_dims(&valid) {
            return Err(Error::Shape("depth values and validity differ in size".into()));
        }
        for (d, v) in values.as_slice().iter().zip(valid.as_slice()) {
            if *v && !(d.is_finite() && *d > 0.0) {
                return Err(Error::Invalid(format!("valid depth must be positive, got {d}")));
            }
        }
        Ok(Self { values, valid })
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    /// Depth at a pixel, `None` where invalid.
    #[inline]
    pub fn depth(&self, col: usize, row: usize) -> Option<f32> {
        if *self.valid.get(col, row) {
            Some(*self.values.get(col, row))
        } else {
            None
        }
    }

    pub fn validity(&self) -> &BoolGrid {
        &self.valid
    }

    /// Raw values; invalid pixels hold `+inf`.
    pub fn values(&self) -> &Grid<f32> {
        &self.values
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|v| **v).count()
    }
}

/// Quantizes a unit-range channel to 8 bits.
#[inline]
pub fn quantize_unit(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 2x2 box downsample used for half-resolution previews.
pub fn downsample_rgb(img: &RgbImage) -> RgbImage {
    let (w, h) = ((img.width() / 2).max(1), (img.height() / 2).max(1));
    Grid::from_fn(w, h, |c, r| {
        let mut acc = [0.0f32; 3];
        let mut n = 0.0f32;
        for dr in 0..2 {
            for dc in 0..2 {
                let (sc, sr) = (2 * c + dc, 2 * r + dr);
                if sc < img.width() && sr < img.height() {
                    let p = img.get(sc, sr);
                    for k in 0..3 {
                        acc[k] += p[k];
                    }
                    n += 1.0;
                }
            }
        }
        acc.map(|v| v / n)
    })
}
