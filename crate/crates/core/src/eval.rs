//! Disparity metrics, sparsification curves, training losses and
//! triangulation.
//!
//! Every reduction walks pixels in row-major order on one thread, so the
//! numbers do not depend on the thread pool.

use std::fmt::Write as _;

use crate::pseudolabel::{AreaUncertaintyField, BinaryMask, SparseLabelMap};
use crate::raster_io::{CalibrationInfo, DisparityRaster};
use crate::{Error, Result};

/// KITTI outlier rule: more than 3 px and more than 5 % of the true value.
#[inline]
pub fn is_d1_outlier(abs_err: f64, gt: f64) -> bool {
    abs_err > 3.0 && abs_err > 0.05 * gt
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    /// Mean absolute error in pixels.
    pub epe: f64,
    pub d1_all: f64,
    pub bad1: f64,
    pub bad2: f64,
    pub valid_count: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "epe,d1_all,bad1,bad2,valid_count";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.epe,
            self.d1_all,
            self.bad1,
            self.bad2,
            self.valid_count
        )
    }
}

/// Metrics over pixels valid in both rasters.
pub fn compute_metrics(disp: &DisparityRaster, gt: &DisparityRaster) -> Result<MetricReport> {
    check_same(disp, gt)?;
    let (mut n, mut sum, mut d1, mut b1, mut b2) = (0usize, 0.0, 0usize, 0usize, 0usize);
    for (&d, &g) in disp.data().iter().zip(gt.data()) {
        if d.is_nan() || g.is_nan() {
            continue;
        }
        let e = (d - g).abs();
        n += 1;
        sum += e;
        d1 += is_d1_outlier(e, g) as usize;
        b1 += (e > 1.0) as usize;
        b2 += (e > 2.0) as usize;
    }
    if n == 0 {
        return Err(Error::EmptyIntersection);
    }
    let f = n as f64;
    Ok(MetricReport {
        epe: sum / f,
        d1_all: d1 as f64 / f,
        bad1: b1 as f64 / f,
        bad2: b2 as f64 / f,
        valid_count: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub removed_fraction: f64,
    pub density: f64,
    pub d1: f64,
}

/// D1 as the most uncertain pixels are removed, from full density down.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Trapezoidal area under D1 over the removed fraction, divided by the
    /// span of removed fractions.
    pub auc: f64,
}

impl RocCurve {
    pub const CSV_HEADER: &'static str = "removed_fraction,density,d1";

    pub fn d1_sequence(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.d1).collect()
    }

    /// Header, one row per point, then a `# auc,<value>` footer.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.removed_fraction, p.density, p.d1);
        }
        let _ = writeln!(s, "# auc,{}", self.auc);
        s
    }
}

/// Sparsification curve: pixels are sorted by decreasing uncertainty (ties
/// by pixel index) and removed `step` of the valid set at a time. Points
/// run from 0 removed to `1 - step` removed; `NaN` uncertainty counts as
/// the most uncertain.
pub fn roc_curve(
    disp: &DisparityRaster,
    gt: &DisparityRaster,
    uncertainty: &[f64],
    step: f64,
) -> Result<RocCurve> {
    check_same(disp, gt)?;
    if uncertainty.len() != disp.data().len() {
        return Err(Error::ShapeMismatch("uncertainty vs disparity".into()));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "step {step} outside (0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..disp.data().len())
        .filter(|&i| !disp.data()[i].is_nan() && !gt.data()[i].is_nan())
        .collect();
    if order.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let key = |i: usize| {
        let u = uncertainty[i];
        if u.is_nan() {
            f64::INFINITY
        } else {
            u
        }
    };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    let outlier: Vec<bool> = order
        .iter()
        .map(|&i| is_d1_outlier((disp.data()[i] - gt.data()[i]).abs(), gt.data()[i]))
        .collect();
    // suffix counts of outliers: remaining[k] = outliers among order[k..]
    let n = order.len();
    let mut remaining = vec![0usize; n + 1];
    for k in (0..n).rev() {
        remaining[k] = remaining[k + 1] + outlier[k] as usize;
    }
    let steps = (1.0 / step).round().max(1.0) as usize;
    let mut points = Vec::with_capacity(steps);
    for k in 0..steps {
        let frac = k as f64 * step;
        let removed = ((frac * n as f64).round() as usize).min(n - 1);
        let kept = n - removed;
        points.push(RocPoint {
            removed_fraction: frac,
            density: kept as f64 / n as f64,
            d1: remaining[removed] as f64 / kept as f64,
        });
    }
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    if points.len() < 2 {
        return points.first().map_or(0.0, |p| p.d1);
    }
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[0].d1 + w[1].d1) * (w[1].removed_fraction - w[0].removed_fraction))
        .sum();
    let span = points.last().unwrap().removed_fraction - points[0].removed_fraction;
    area / span
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub silog_lambda: f64,
    pub bce_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            silog_lambda: 0.85,
            bce_epsilon: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.silog_lambda) {
            return Err(Error::InvalidParameter("lambda outside [0, 1]".into()));
        }
        if !(self.bce_epsilon > 0.0 && self.bce_epsilon < 0.5) {
            return Err(Error::InvalidParameter("epsilon outside (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// `0.5x²` for `|x| < 1`, `|x| - 0.5` otherwise.
#[inline]
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

fn joint_pairs<'a>(
    pred: &'a [f64],
    labels: &'a SparseLabelMap,
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if pred.len() != labels.disparity().len() {
        return Err(Error::ShapeMismatch("prediction vs labels".into()));
    }
    Ok(pred
        .iter()
        .zip(labels.disparity())
        .zip(labels.valid())
        .filter(|((p, _), ok)| **ok && !p.is_nan())
        .map(|((p, l), _)| (*p, *l)))
}

/// Mean smooth-L1 of `label - pred` over valid labels.
pub fn smooth_l1_loss(pred: &[f64], labels: &SparseLabelMap) -> Result<f64> {
    let (sum, n) = smooth_l1_sum(pred, labels)?;
    if n == 0 {
        return Err(Error::EmptyIntersection);
    }
    Ok(sum / n as f64)
}

/// Sum and count behind [`smooth_l1_loss`], for pooling across images.
pub fn smooth_l1_sum(pred: &[f64], labels: &SparseLabelMap) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut n = 0;
    for (p, l) in joint_pairs(pred, labels)? {
        sum += smooth_l1(l - p);
        n += 1;
    }
    Ok((sum, n))
}

/// Scale-invariant log loss `sqrt(mean d² − λ mean(d)²)` with
/// `d = ln pred − ln label`.
pub fn silog_loss(pred: &[f64], labels: &SparseLabelMap, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    let (mut s1, mut s2, mut n) = (0.0, 0.0, 0usize);
    for (p, l) in joint_pairs(pred, labels)? {
        if !(p > 0.0 && l > 0.0) {
            return Err(Error::InvalidData(format!(
                "log loss needs positive disparities, got {p} vs {l}"
            )));
        }
        let d = p.ln() - l.ln();
        s1 += d;
        s2 += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyIntersection);
    }
    let f = n as f64;
    let mean = s1 / f;
    Ok((s2 / f - config.silog_lambda * mean * mean).max(0.0).sqrt())
}

/// Binary cross-entropy of the area uncertainty against the ground-truth
/// error mask, over pixels where the mask is defined.
pub fn bce_uncertainty_loss(
    u_area: &AreaUncertaintyField,
    mask: &BinaryMask,
    config: &LossConfig,
) -> Result<f64> {
    config.validate()?;
    if u_area.values.len() != mask.values.len() {
        return Err(Error::ShapeMismatch("area uncertainty vs mask".into()));
    }
    let eps = config.bce_epsilon;
    let (mut sum, mut n) = (0.0, 0usize);
    for (&u, m) in u_area.values.iter().zip(&mask.values) {
        let Some(bad) = *m else { continue };
        let u = u.clamp(eps, 1.0 - eps);
        sum += if bad { u.ln() } else { (1.0 - u).ln() };
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyIntersection);
    }
    Ok(-sum / n as f64)
}

/// Depth `f·B/d` in metres; non-positive or invalid disparity gives `NaN`.
pub fn disparity_to_depth(disp: &DisparityRaster, calib: &CalibrationInfo) -> DisparityRaster {
    let fb = calib.focal_length * calib.baseline;
    let data = disp
        .data()
        .iter()
        .map(|&d| if d > 0.0 { fb / d } else { f64::NAN })
        .collect();
    DisparityRaster::from_raw(disp.width(), disp.height(), data)
}

/// Inverse of [`disparity_to_depth`].
pub fn depth_to_disparity(depth: &DisparityRaster, calib: &CalibrationInfo) -> DisparityRaster {
    // f·B/z has the same form as the forward map
    disparity_to_depth(depth, calib)
}

fn check_same(a: &DisparityRaster, b: &DisparityRaster) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}
