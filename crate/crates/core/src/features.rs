//! Hand-crafted per-pixel features (census signs plus optional Sobel
//! gradients) and box-filter image pyramids.

use crate::par;
use crate::raster_io::RasterImage;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureConfig {
    /// Census window radius `r`; the window is `(2r+1)²` pixels.
    pub census_radius: usize,
    /// Append normalised x/y Sobel gradients after the census channels.
    pub include_gradients: bool,
    /// Number of channel groups used by the group-wise correlation.
    pub group_count: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            census_radius: 3,
            include_gradients: false,
            group_count: 8,
        }
    }
}

impl FeatureConfig {
    pub fn channel_count(&self) -> usize {
        let side = 2 * self.census_radius + 1;
        side * side - 1 + if self.include_gradients { 2 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.census_radius < 1 {
            return Err(Error::InvalidParameter("census radius must be >= 1".into()));
        }
        let c = self.channel_count();
        if self.group_count == 0 || !c.is_multiple_of(self.group_count) {
            return Err(Error::InvalidParameter(format!(
                "{} groups do not divide {c} feature channels",
                self.group_count
            )));
        }
        Ok(())
    }
}

/// Row-major per-pixel feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    group_count: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        group_count: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} feature map with {} values",
                data.len()
            )));
        }
        if group_count == 0 || !channels.is_multiple_of(group_count) {
            return Err(Error::InvalidParameter(format!(
                "{group_count} groups do not divide {channels} channels"
            )));
        }
        if data.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::InvalidData("feature value outside [-1, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            group_count,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub(crate) fn row(&self, y: usize) -> &[f64] {
        let n = self.width * self.channels;
        &self.data[y * n..(y + 1) * n]
    }
}

/// Census signs over a `(2r+1)²` window: `+1` where the neighbour is
/// strictly brighter than the centre, `-1` otherwise. Neighbours are read
/// with clamped coordinates; the channel order is row-major over the
/// window with the centre skipped.
pub fn census_transform(image: &RasterImage, config: &FeatureConfig) -> Result<FeatureMap> {
    config.validate()?;
    let side = 2 * config.census_radius + 1;
    if side > image.width() || side > image.height() {
        return Err(Error::InvalidParameter(format!(
            "census window {side}x{side} larger than image {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(census_unchecked(image, config))
}

/// Census without the window-size check, for pyramid levels that may be
/// smaller than the window.
pub(crate) fn census_unchecked(image: &RasterImage, config: &FeatureConfig) -> FeatureMap {
    let (w, h) = (image.width(), image.height());
    let r = config.census_radius as i64;
    let channels = config.channel_count();
    let mut data = vec![0.0; w * h * channels];
    let src = image.data();
    let at = |x: i64, y: i64| {
        let xx = x.clamp(0, w as i64 - 1) as usize;
        let yy = y.clamp(0, h as i64 - 1) as usize;
        src[yy * w + xx]
    };
    par::for_each_chunk_mut(&mut data, w * channels, |y, row| {
        let y = y as i64;
        for x in 0..w {
            let out = &mut row[x * channels..(x + 1) * channels];
            let centre = at(x as i64, y);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    out[k] = if at(x as i64 + dx, y + dy) > centre {
                        1.0
                    } else {
                        -1.0
                    };
                    k += 1;
                }
            }
            if config.include_gradients {
                // Sobel responses peak at 4 for intensities in [0, 1].
                let xi = x as i64;
                let gx = (at(xi + 1, y - 1) + 2.0 * at(xi + 1, y) + at(xi + 1, y + 1))
                    - (at(xi - 1, y - 1) + 2.0 * at(xi - 1, y) + at(xi - 1, y + 1));
                let gy = (at(xi - 1, y + 1) + 2.0 * at(xi, y + 1) + at(xi + 1, y + 1))
                    - (at(xi - 1, y - 1) + 2.0 * at(xi, y - 1) + at(xi + 1, y - 1));
                out[k] = (gx / 4.0).clamp(-1.0, 1.0);
                out[k + 1] = (gy / 4.0).clamp(-1.0, 1.0);
            }
        }
    });
    FeatureMap {
        width: w,
        height: h,
        channels,
        group_count: config.group_count,
        data,
    }
}

/// Level `i` has dimensions `ceil(dims / 2^i)`; level 0 is the input.
#[derive(Clone, Debug)]
pub struct ImagePyramid {
    pub levels: Vec<RasterImage>,
}

impl ImagePyramid {
    pub fn level(&self, i: usize) -> &RasterImage {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Repeated 2×2 box averaging. Odd dimensions round up; the missing
/// neighbours of the last row/column are taken from the edge.
pub fn build_pyramid(image: &RasterImage, num_levels: usize) -> Result<ImagePyramid> {
    if num_levels == 0 {
        return Err(Error::InvalidParameter(
            "pyramid needs at least one level".into(),
        ));
    }
    let shrink = 1usize << (num_levels - 1);
    if image.width() < shrink || image.height() < shrink {
        return Err(Error::InvalidParameter(format!(
            "{num_levels} levels would shrink {}x{} below 1x1",
            image.width(),
            image.height()
        )));
    }
    let mut levels = vec![image.clone()];
    for _ in 1..num_levels {
        let next = downsample(levels.last().unwrap());
        levels.push(next);
    }
    Ok(ImagePyramid { levels })
}

fn downsample(img: &RasterImage) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = vec![0.0; nw * nh];
    par::for_each_chunk_mut(&mut out, nw, |y, row| {
        let y0 = 2 * y;
        let y1 = (y0 + 1).min(h - 1);
        for (x, px) in row.iter_mut().enumerate() {
            let x0 = 2 * x;
            let x1 = (x0 + 1).min(w - 1);
            let s = img.get(x0, y0) + img.get(x1, y0) + img.get(x0, y1) + img.get(x1, y1);
            *px = (s * 0.25).clamp(0.0, 1.0);
        }
    });
    RasterImage::from_raw(nw, nh, out)
}
