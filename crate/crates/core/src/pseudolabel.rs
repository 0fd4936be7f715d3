//! Pseudo-label generation from disparity and its uncertainty.
//!
//! Two filters are provided: a pixel-level one thresholding `√U`, and an
//! area-level one that first spreads `√U` over a cross-bilateral window
//! (similar intensity and similar disparity get high weight) and squashes
//! the result into `(0, 1)`. A left-right consistency check is included as
//! the classical baseline.

use crate::cascade::{DisparityField, UncertaintyField};
use crate::eval::is_d1_outlier;
use crate::par;
use crate::raster_io::{DisparityRaster, RasterImage};
use crate::{Error, Result};

/// Margin keeping area uncertainty strictly inside `(0, 1)`.
pub const AREA_EPS: f64 = 1e-9;
/// Area thresholds at or above one are clamped to `1 - THRESHOLD_EPS`,
/// which every area uncertainty passes.
pub const THRESHOLD_EPS: f64 = 1e-12;

/// Default `√U` threshold for pixel-level labels.
pub const DEFAULT_T_PIXEL: f64 = 0.9;
/// Default area-uncertainty threshold.
pub const DEFAULT_T_AREA: f64 = 0.2;
/// Default error threshold of the ground-truth uncertainty mask.
pub const DEFAULT_MASK_DELTA: f64 = 1.0;

/// Sparse disparity labels; invalid pixels hold `NaN`.
#[derive(Clone, Debug)]
pub struct SparseLabelMap {
    width: usize,
    height: usize,
    disparity: Vec<f64>,
    valid: Vec<bool>,
}

impl SparseLabelMap {
    /// Keeps `values[i]` where `keep[i]`, and marks the rest invalid.
    pub fn from_mask(width: usize, height: usize, values: &[f64], keep: &[bool]) -> Result<Self> {
        if values.len() != width * height || keep.len() != width * height {
            return Err(Error::ShapeMismatch("label values vs mask".into()));
        }
        let valid: Vec<bool> = values
            .iter()
            .zip(keep)
            .map(|(v, &k)| k && !v.is_nan())
            .collect();
        let disparity = values
            .iter()
            .zip(&valid)
            .map(|(&v, &ok)| if ok { v } else { f64::NAN })
            .collect();
        Ok(Self {
            width,
            height,
            disparity,
            valid,
        })
    }

    pub fn from_raster(raster: &DisparityRaster) -> Self {
        let keep = vec![true; raster.data().len()];
        Self::from_mask(raster.width(), raster.height(), raster.data(), &keep)
            .expect("matching shapes")
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            disparity: vec![f64::NAN; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn disparity(&self) -> &[f64] {
        &self.disparity
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn density(&self) -> f64 {
        self.valid_count() as f64 / self.valid.len() as f64
    }

    /// Pixels valid in both maps, with `self`'s values.
    pub fn intersect(&self, other: &SparseLabelMap) -> Result<SparseLabelMap> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch("label maps differ in size".into()));
        }
        let keep: Vec<bool> = self
            .valid
            .iter()
            .zip(&other.valid)
            .map(|(a, b)| *a && *b)
            .collect();
        SparseLabelMap::from_mask(self.width, self.height, &self.disparity, &keep)
    }

    pub fn crop(
        &self,
        x0: usize,
        y0: usize,
        width: usize,
        height: usize,
    ) -> Result<SparseLabelMap> {
        let r = self.to_raster().crop(x0, y0, width, height)?;
        Ok(SparseLabelMap::from_raster(&r))
    }

    pub fn to_raster(&self) -> DisparityRaster {
        DisparityRaster::from_raw(self.width, self.height, self.disparity.clone())
    }
}

/// Area-level uncertainty, strictly inside `(0, 1)`; higher means more
/// likely wrong.
#[derive(Clone, Debug, PartialEq)]
pub struct AreaUncertaintyField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaFilterConfig {
    pub radius: usize,
    pub sigma_color: f64,
    pub sigma_disparity: f64,
    /// Aggregated `√U` mapped to 0.5.
    pub midpoint: f64,
    pub slope: f64,
}

impl Default for AreaFilterConfig {
    fn default() -> Self {
        Self {
            radius: 7,
            sigma_color: 0.1,
            sigma_disparity: 3.0,
            midpoint: 1.5,
            slope: 2.0,
        }
    }
}

impl AreaFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidParameter("area radius must be >= 1".into()));
        }
        if !(self.sigma_color > 0.0 && self.sigma_disparity > 0.0) {
            return Err(Error::InvalidParameter("area sigmas must be > 0".into()));
        }
        if !(self.slope > 0.0 && self.slope.is_finite() && self.midpoint.is_finite()) {
            return Err(Error::InvalidParameter("area slope must be > 0".into()));
        }
        Ok(())
    }

    /// The logistic squash applied to an aggregated `√U`.
    pub fn squash(&self, aggregated: f64) -> f64 {
        let v = 1.0 / (1.0 + (-self.slope * (aggregated - self.midpoint)).exp());
        v.clamp(AREA_EPS, 1.0 - AREA_EPS)
    }
}

/// Ternary mask: `Some(true)` where the estimate is off by more than the
/// threshold, `None` where ground truth is missing.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<bool>>,
}

impl BinaryMask {
    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Keeps pixels with `√U < t`.
pub fn filter_by_pixel_uncertainty(
    disp: &DisparityField,
    unc: &UncertaintyField,
    t: f64,
) -> Result<SparseLabelMap> {
    if disp.width != unc.width || disp.height != unc.height {
        return Err(Error::ShapeMismatch("disparity vs uncertainty".into()));
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("threshold {t}")));
    }
    let keep: Vec<bool> = unc.values.iter().map(|u| u.sqrt() < t).collect();
    SparseLabelMap::from_mask(disp.width, disp.height, &disp.values, &keep)
}

/// Cross-bilateral aggregation of `√U` guided by the left image and the
/// disparity, followed by `logistic(s·(agg − m))`.
pub fn area_uncertainty(
    disp: &DisparityField,
    unc_pixel: &UncertaintyField,
    left: &RasterImage,
    config: &AreaFilterConfig,
) -> Result<AreaUncertaintyField> {
    config.validate()?;
    let (w, h) = (disp.width, disp.height);
    if unc_pixel.width != w || unc_pixel.height != h || left.width() != w || left.height() != h {
        return Err(Error::ShapeMismatch(
            "area uncertainty inputs differ in size".into(),
        ));
    }
    let std = unc_pixel.std_dev();
    let r = config.radius as i64;
    let kc = 1.0 / (2.0 * config.sigma_color * config.sigma_color);
    let kd = 1.0 / (2.0 * config.sigma_disparity * config.sigma_disparity);
    let img = left.data();
    let mut values = vec![0.0; w * h];
    par::for_each_chunk_mut(&mut values, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let (ic, dc) = (img[i], disp.values[i]);
            let (mut num, mut den) = (0.0, 0.0);
            for yy in (y as i64 - r).max(0)..=(y as i64 + r).min(h as i64 - 1) {
                for xx in (x as i64 - r).max(0)..=(x as i64 + r).min(w as i64 - 1) {
                    let j = yy as usize * w + xx as usize;
                    let di = img[j] - ic;
                    let dd = disp.values[j] - dc;
                    let wgt = (-(di * di) * kc - (dd * dd) * kd).exp();
                    num += wgt * std[j];
                    den += wgt;
                }
            }
            *out = config.squash(num / den);
        }
    });
    Ok(AreaUncertaintyField {
        width: w,
        height: h,
        values,
    })
}

/// Keeps pixels with `U_area < t`; `t >= 1` passes everything.
pub fn filter_by_area_uncertainty(
    disp: &DisparityField,
    u_area: &AreaUncertaintyField,
    t: f64,
) -> Result<SparseLabelMap> {
    if disp.width != u_area.width || disp.height != u_area.height {
        return Err(Error::ShapeMismatch("disparity vs area uncertainty".into()));
    }
    if t.is_nan() {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    let t = t.min(1.0 - THRESHOLD_EPS);
    let keep: Vec<bool> = u_area.values.iter().map(|&u| u < t).collect();
    SparseLabelMap::from_mask(disp.width, disp.height, &disp.values, &keep)
}

/// Left-right discrepancy `|d_L(x) − d_R(round(x − d_L(x)))|`; infinite
/// where the lookup leaves the image or either side is invalid.
pub fn lrc_score(disp_left: &DisparityRaster, disp_right: &DisparityRaster) -> Result<Vec<f64>> {
    let (w, h) = (disp_left.width(), disp_left.height());
    if disp_right.width() != w || disp_right.height() != h {
        return Err(Error::ShapeMismatch(
            "left/right disparity sizes differ".into(),
        ));
    }
    Ok(par::map_range(w * h, |i| {
        let (x, y) = (i % w, i / w);
        let dl = disp_left.get(x, y);
        if dl.is_nan() {
            return f64::INFINITY;
        }
        let xr = (x as f64 - dl).round();
        if xr < 0.0 || xr > (w - 1) as f64 {
            return f64::INFINITY;
        }
        let dr = disp_right.get(xr as usize, y);
        if dr.is_nan() {
            f64::INFINITY
        } else {
            (dl - dr).abs()
        }
    }))
}

/// Keeps left disparities whose right-view counterpart agrees within `tol`.
pub fn lrc_check(
    disp_left: &DisparityRaster,
    disp_right: &DisparityRaster,
    tol: f64,
) -> Result<SparseLabelMap> {
    let score = lrc_score(disp_left, disp_right)?;
    let keep: Vec<bool> = score.iter().map(|&s| s < tol).collect();
    SparseLabelMap::from_mask(
        disp_left.width(),
        disp_left.height(),
        disp_left.data(),
        &keep,
    )
}

/// `1` where `|gt − d| > delta`, `0` otherwise, undefined without ground
/// truth or estimate.
pub fn gt_uncertainty_mask(
    disp: &DisparityRaster,
    gt: &DisparityRaster,
    delta: f64,
) -> Result<BinaryMask> {
    if disp.width() != gt.width() || disp.height() != gt.height() {
        return Err(Error::ShapeMismatch("disparity vs ground truth".into()));
    }
    let values = disp
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&d, &g)| (!d.is_nan() && !g.is_nan()).then(|| (g - d).abs() > delta))
        .collect();
    Ok(BinaryMask {
        width: disp.width(),
        height: disp.height(),
        values,
    })
}

/// Label quality against ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelStats {
    /// D1 outlier rate on pixels valid in both.
    pub d1: f64,
    /// Valid labels over all pixels.
    pub density: f64,
    /// Ground-truth pixels that also carry a label.
    pub overlap: f64,
}

pub fn label_stats(label: &SparseLabelMap, gt: &DisparityRaster) -> Result<LabelStats> {
    if label.width != gt.width() || label.height != gt.height() {
        return Err(Error::ShapeMismatch("label vs ground truth".into()));
    }
    let (mut joint, mut outliers, mut gt_valid) = (0usize, 0usize, 0usize);
    for (i, &g) in gt.data().iter().enumerate() {
        if g.is_nan() {
            continue;
        }
        gt_valid += 1;
        if label.valid[i] {
            joint += 1;
            if is_d1_outlier((label.disparity[i] - g).abs(), g) {
                outliers += 1;
            }
        }
    }
    if joint == 0 {
        return Err(Error::EmptyIntersection);
    }
    Ok(LabelStats {
        d1: outliers as f64 / joint as f64,
        density: label.density(),
        overlap: joint as f64 / gt_valid as f64,
    })
}
