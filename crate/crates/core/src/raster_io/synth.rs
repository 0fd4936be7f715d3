//! Random-dot stereogram generator.
//!
//! The left image is a random dot texture. Every right pixel looks up the
//! nearest visible surface along its scanline and copies the left intensity
//! it sees, so `right(x - gt(x, y), y) == left(x, y)` holds on every
//! non-occluded left pixel (exactly for integer disparities, through linear
//! interpolation for fractional ones). Right pixels that see no left
//! surface are filled with fresh dots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DisparityRaster, RasterImage};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DisparityModel {
    Constant(f64),
    /// `d(x, y) = a*x + b*y + c`, with `a < 1`.
    SlantedPlane {
        a: f64,
        b: f64,
        c: f64,
    },
    /// A fronto-parallel box at `foreground` disparity over a background
    /// plane at `background`. The box is given in left-image pixels.
    TwoLayer {
        foreground: f64,
        background: f64,
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
}

impl DisparityModel {
    fn in_box(&self, x: f64, y: usize) -> bool {
        match *self {
            DisparityModel::TwoLayer {
                x: bx,
                y: by,
                width,
                height,
                ..
            } => y >= by && y < by + height && x >= bx as f64 && x <= (bx + width) as f64 - 1.0,
            _ => false,
        }
    }

    /// Ground-truth disparity of left pixel `(x, y)`.
    pub fn disparity_at(&self, x: usize, y: usize) -> f64 {
        match *self {
            DisparityModel::Constant(d) => d,
            DisparityModel::SlantedPlane { a, b, c } => a * x as f64 + b * y as f64 + c,
            DisparityModel::TwoLayer {
                foreground,
                background,
                ..
            } => {
                if self.in_box(x as f64, y) {
                    foreground
                } else {
                    background
                }
            }
        }
    }

    /// Left-image x coordinate visible from right pixel `xr` on row `y`, if
    /// any surface projects there.
    fn visible_source(&self, xr: f64, y: usize, width: usize) -> Option<f64> {
        let inside = |xs: f64| xs >= 0.0 && xs <= (width - 1) as f64;
        match *self {
            DisparityModel::Constant(d) => Some(xr + d).filter(|&xs| inside(xs)),
            DisparityModel::SlantedPlane { a, b, c } => {
                Some((xr + b * y as f64 + c) / (1.0 - a)).filter(|&xs| inside(xs))
            }
            DisparityModel::TwoLayer {
                foreground,
                background,
                ..
            } => {
                let fg = xr + foreground;
                if inside(fg) && self.in_box(fg, y) {
                    return Some(fg);
                }
                let bg = xr + background;
                (inside(bg) && !self.in_box(bg, y)).then_some(bg)
            }
        }
    }

    fn validate(&self, width: usize, height: usize, d_max: f64) -> Result<()> {
        let extremes: Vec<f64> = match *self {
            DisparityModel::Constant(d) => vec![d],
            DisparityModel::SlantedPlane { a, .. } => {
                if a >= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "slanted plane needs a < 1, got {a}"
                    )));
                }
                let (w, h) = (width - 1, height - 1);
                vec![
                    self.disparity_at(0, 0),
                    self.disparity_at(w, 0),
                    self.disparity_at(0, h),
                    self.disparity_at(w, h),
                ]
            }
            DisparityModel::TwoLayer {
                foreground,
                background,
                x,
                y,
                width: bw,
                height: bh,
            } => {
                if bw == 0 || bh == 0 || x + bw > width || y + bh > height {
                    return Err(Error::InvalidParameter(
                        "foreground box outside image".into(),
                    ));
                }
                if foreground < background {
                    return Err(Error::InvalidParameter(
                        "foreground must be nearer (larger disparity) than background".into(),
                    ));
                }
                vec![foreground, background]
            }
        };
        for d in extremes {
            if !(d >= 0.0 && d < d_max) {
                return Err(Error::InvalidParameter(format!(
                    "model disparity {d} outside [0, {d_max})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereogramSpec {
    pub width: usize,
    pub height: usize,
    pub model: DisparityModel,
    /// Fraction of pixels carrying a dot, in `(0, 1]`.
    pub dot_density: f64,
    /// Standard deviation of independent Gaussian noise per image.
    pub noise_sigma: f64,
    /// Added to every right-image intensity before clamping.
    pub brightness_offset_right: f64,
    pub seed: u64,
    pub d_max: f64,
}

impl StereogramSpec {
    pub fn new(width: usize, height: usize, model: DisparityModel) -> Self {
        Self {
            width,
            height,
            model,
            dot_density: 0.5,
            noise_sigma: 0.0,
            brightness_offset_right: 0.0,
            seed: 0,
            d_max: 256.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.brightness_offset_right = offset;
        self
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.dot_density = density;
        self
    }

    pub fn with_d_max(mut self, d_max: f64) -> Self {
        self.d_max = d_max;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Stereogram {
    pub left: RasterImage,
    pub right: RasterImage,
    pub gt: DisparityRaster,
    /// `true` where the left pixel is visible in the right image.
    pub nonoccluded: Vec<bool>,
}

impl Stereogram {
    /// Ground truth restricted to non-occluded pixels.
    pub fn gt_nonoccluded(&self) -> DisparityRaster {
        let data = self
            .gt
            .data()
            .iter()
            .zip(&self.nonoccluded)
            .map(|(&d, &vis)| if vis { d } else { f64::NAN })
            .collect();
        DisparityRaster::from_raw(self.gt.width(), self.gt.height(), data)
    }
}

pub fn generate_stereogram(spec: &StereogramSpec) -> Result<Stereogram> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidParameter("empty stereogram".into()));
    }
    if !(spec.dot_density > 0.0 && spec.dot_density <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dot density {} outside (0, 1]",
            spec.dot_density
        )));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
    }
    spec.model.validate(w, h, spec.d_max)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dot = |rng: &mut ChaCha8Rng| {
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        if u < spec.dot_density {
            v
        } else {
            0.0
        }
    };

    let left: Vec<f64> = (0..w * h).map(|_| dot(&mut rng)).collect();
    let gt: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| spec.model.disparity_at(x, y))
        .collect();

    let mut right = vec![0.0; w * h];
    for y in 0..h {
        let row = &left[y * w..(y + 1) * w];
        for xr in 0..w {
            right[y * w + xr] = match spec.model.visible_source(xr as f64, y, w) {
                Some(xs) => sample_row(row, xs),
                None => dot(&mut rng),
            };
        }
    }

    let mut nonoccluded = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let xr = x as f64 - gt[y * w + x];
            nonoccluded[y * w + x] = xr >= 0.0
                && spec
                    .model
                    .visible_source(xr, y, w)
                    .is_some_and(|xs| (xs - x as f64).abs() < 1e-9);
        }
    }

    let (mut left, mut right) = (left, right);
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in left.iter_mut().chain(right.iter_mut()) {
            *v += normal.sample(&mut rng);
        }
    }
    for v in right.iter_mut() {
        *v += spec.brightness_offset_right;
    }
    let clamp = |v: Vec<f64>| v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect();

    Ok(Stereogram {
        left: RasterImage::from_raw(w, h, clamp(left)),
        right: RasterImage::from_raw(w, h, clamp(right)),
        gt: DisparityRaster::from_raw(w, h, gt),
        nonoccluded,
    })
}

fn sample_row(row: &[f64], xs: f64) -> f64 {
    let x0 = xs.floor() as usize;
    let t = xs - x0 as f64;
    if t == 0.0 || x0 + 1 >= row.len() {
        row[x0.min(row.len() - 1)]
    } else {
        row[x0] + t * (row[x0 + 1] - row[x0])
    }
}
