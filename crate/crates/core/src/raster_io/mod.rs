//! Image and disparity rasters, their on-disk formats, and a synthetic
//! random-dot stereogram generator used as ground-truth oracle.

mod pfm;
mod png;
mod synth;

pub use pfm::{read_pfm, write_pfm};
pub use png::{read_image, read_kitti_png, write_image, write_kitti_png};
pub use synth::{generate_stereogram, DisparityModel, Stereogram, StereogramSpec};

use crate::{Error, Result};

/// Single-channel intensity image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidData(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from `f(x, y)`, clamping every value into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Mirror image about the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            crate::grid::flip_horizontal(&self.data, self.width),
        )
    }

    /// Sub-image starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height || width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let data = (y0..y0 + height)
            .flat_map(|y| {
                self.data[y * self.width + x0..y * self.width + x0 + width]
                    .iter()
                    .copied()
            })
            .collect();
        Ok(Self::from_raw(width, height, data))
    }

    /// Applies `f` to every intensity and clamps the result into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        )
    }
}

/// Disparity map in pixels; `NaN` marks an invalid pixel.
#[derive(Clone, Debug)]
pub struct DisparityRaster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DisparityRaster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_nan() && !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidData(format!(
                "disparity {v} is negative or infinite"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        !self.get(x, y).is_nan()
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    /// Errors if any valid value is at or beyond `d_max`.
    pub fn check_range(&self, d_max: f64) -> Result<()> {
        match self.data.iter().find(|v| !v.is_nan() && **v >= d_max) {
            Some(v) => Err(Error::InvalidData(format!(
                "disparity {v} >= d_max {d_max}"
            ))),
            None => Ok(()),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            crate::grid::flip_horizontal(&self.data, self.width),
        )
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidParameter("crop outside raster".into()));
        }
        let data = (y0..y0 + height)
            .flat_map(|y| {
                self.data[y * self.width + x0..y * self.width + x0 + width]
                    .iter()
                    .copied()
            })
            .collect();
        Ok(Self::from_raw(width, height, data))
    }

    /// Bit-level equality, treating every NaN as equal to every other NaN.
    pub fn same_bits(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

/// Pinhole stereo rig parameters used for triangulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationInfo {
    /// Focal length in pixels.
    pub focal_length: f64,
    /// Baseline in metres.
    pub baseline: f64,
}

impl CalibrationInfo {
    pub fn new(focal_length: f64, baseline: f64) -> Result<Self> {
        if !(focal_length > 0.0 && baseline > 0.0) {
            return Err(Error::InvalidParameter(
                "focal length and baseline must be strictly positive".into(),
            ));
        }
        Ok(Self {
            focal_length,
            baseline,
        })
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ShapeMismatch(format!(
            "empty raster {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::ShapeMismatch(format!(
            "{width}x{height} raster with {len} values"
        )));
    }
    Ok(())
}
