//! PNG input/output: KITTI 16-bit disparity encoding and plain grayscale
//! images.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};

use super::{DisparityRaster, RasterImage};
use crate::{Error, Result};

/// KITTI disparity PNGs store `round(256 * d)`; zero means "no data".
const KITTI_SCALE: f64 = 256.0;

pub fn read_kitti_png(path: impl AsRef<Path>) -> Result<DisparityRaster> {
    let path = path.as_ref();
    let img = decode(path)?;
    let buf = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: KITTI disparity must be 16-bit grayscale, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = buf.dimensions();
    let data = buf
        .pixels()
        .map(|p| match p.0[0] {
            0 => f64::NAN,
            v => v as f64 / KITTI_SCALE,
        })
        .collect();
    DisparityRaster::new(w as usize, h as usize, data)
}

/// Encodes with round-to-nearest. Values below 1/512 px round to zero and
/// therefore read back as invalid.
pub fn write_kitti_png(raster: &DisparityRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = encode_kitti(raster)?;
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub(crate) fn encode_kitti(raster: &DisparityRaster) -> Result<ImageBuffer<Luma<u16>, Vec<u16>>> {
    let mut values = Vec::with_capacity(raster.data().len());
    for &d in raster.data() {
        if d.is_nan() {
            values.push(0u16);
            continue;
        }
        let stored = (d * KITTI_SCALE).round();
        if stored > u16::MAX as f64 {
            return Err(Error::InvalidData(format!(
                "disparity {d} exceeds the KITTI 16-bit range"
            )));
        }
        values.push(stored as u16);
    }
    Ok(
        ImageBuffer::from_raw(raster.width() as u32, raster.height() as u32, values)
            .expect("buffer length matches dimensions"),
    )
}

/// Loads any PNG as a `[0, 1]` intensity image. Colour images are reduced
/// to the mean of their RGB channels.
pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLumaA16(_) => {
            img.to_luma32f().pixels().map(|p| p.0[0] as f64).collect()
        }
        _ => img
            .to_rgb32f()
            .pixels()
            .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / 3.0)
            .collect(),
    };
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    RasterImage::new(w, h, data)
}

/// Writes a 16-bit grayscale PNG.
pub fn write_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let values: Vec<u16> = image
        .data()
        .iter()
        .map(|v| (v * u16::MAX as f64).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(image.width() as u32, image.height() as u32, values)
            .expect("buffer length matches dimensions");
    buf.save(path).map_err(|e| Error::image(path, e))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::image(path, e))
}
