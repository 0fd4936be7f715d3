//! Coarse-to-fine disparity estimation driven by per-pixel uncertainty.
//!
//! Dense volumes at 1/8, 1/16 and 1/32 resolution are fused into a 1/8
//! volume whose soft-argmin and variance seed the refinement. Each finer
//! stage samples its hypotheses uniformly inside `d ± ((α+1)√U + β)`,
//! upsampled and rescaled from the previous stage. The full-resolution
//! output is the bilinear upsampling of the 1/2 stage.

use std::sync::Arc;

use crate::costvolume::{
    aggregate, build_cost_volume, fuse_dense_volumes, softmin_probabilities, AggregationConfig,
    CostVolume, HypothesisSet, ProbabilityVolume,
};
use crate::features::{build_pyramid, census_unchecked, FeatureConfig, FeatureMap};
use crate::grid;
use crate::par;
use crate::raster_io::{DisparityRaster, RasterImage};
use crate::{Error, Result};

/// Scales whose dense volumes are fused, finest first.
pub const FUSED_SCALES: [u32; 3] = [3, 4, 5];
const PYRAMID_LEVELS: usize = 6;
/// Smallest image side for which the 1/32 level still exists.
pub const MIN_IMAGE_SIDE: usize = 32;

/// Disparity in pixels of the stage's own resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityField {
    pub width: usize,
    pub height: usize,
    pub stage: u32,
    pub values: Vec<f64>,
}

/// Variance of the matching distribution, in squared stage pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyField {
    pub width: usize,
    pub height: usize,
    pub stage: u32,
    pub values: Vec<f64>,
}

/// Per-pixel search interval for a stage.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeField {
    pub width: usize,
    pub height: usize,
    pub stage: u32,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl DisparityField {
    pub fn new(width: usize, height: usize, stage: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch("disparity field size".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidData(
                "disparity must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            stage,
            values,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn to_raster(&self) -> DisparityRaster {
        DisparityRaster::from_raw(self.width, self.height, self.values.clone())
    }
}

impl UncertaintyField {
    pub fn new(width: usize, height: usize, stage: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch("uncertainty field size".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidData(
                "uncertainty must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            stage,
            values,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// `√U` per pixel, in stage pixels.
    pub fn std_dev(&self) -> Vec<f64> {
        self.values.iter().map(|u| u.sqrt()).collect()
    }
}

impl RangeField {
    /// The same `[lo, hi]` interval at every pixel.
    pub fn uniform(width: usize, height: usize, stage: u32, lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && lo <= hi) {
            return Err(Error::InvalidParameter(format!("range [{lo}, {hi}]")));
        }
        Ok(Self {
            width,
            height,
            stage,
            min: vec![lo; width * height],
            max: vec![hi; width * height],
        })
    }

    pub fn contains(&self, x: usize, y: usize, d: f64) -> bool {
        let i = y * self.width + x;
        d >= self.min[i] && d <= self.max[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeParams {
    /// Full-resolution disparity search range; a multiple of 32.
    pub d_max: usize,
    pub planes_stage2: usize,
    pub planes_stage1: usize,
    /// Range scale factors, indexed `[stage 3, stage 2]`.
    pub alpha: [f64; 2],
    /// Range offsets in stage pixels, indexed `[stage 3, stage 2]`.
    pub beta: [f64; 2],
    pub aggregation: AggregationConfig,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self {
            d_max: 256,
            planes_stage2: 16,
            planes_stage1: 12,
            alpha: [0.0; 2],
            beta: [0.0; 2],
            aggregation: AggregationConfig::default(),
        }
    }
}

impl CascadeParams {
    pub fn with_d_max(mut self, d_max: usize) -> Self {
        self.d_max = d_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_max < 32 || !self.d_max.is_multiple_of(32) {
            return Err(Error::InvalidParameter(format!(
                "d_max {} must be a positive multiple of 32",
                self.d_max
            )));
        }
        if self.planes_stage1 < 2 || self.planes_stage2 < 2 {
            return Err(Error::InvalidParameter("plane counts must be >= 2".into()));
        }
        for (&a, &b) in self.alpha.iter().zip(&self.beta) {
            if !(a >= -1.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("alpha {a} < -1")));
            }
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!("beta {b} < 0")));
            }
        }
        self.aggregation.validate()
    }

    /// Largest hypothesis allowed at `stage`: the last dense plane.
    pub fn max_hypothesis(&self, stage: u32) -> f64 {
        (self.d_max >> stage) as f64 - 1.0
    }

    fn range_coefficients(&self, stage: u32) -> Result<(f64, f64)> {
        match stage {
            3 => Ok((self.alpha[0], self.beta[0])),
            2 => Ok((self.alpha[1], self.beta[1])),
            s => Err(Error::InvalidParameter(format!(
                "no range coefficients for stage {s}"
            ))),
        }
    }

    fn planes_for(&self, stage: u32) -> usize {
        if stage == 2 {
            self.planes_stage2
        } else {
            self.planes_stage1
        }
    }
}

/// `d̂ = Σ_n d_n p_n` per pixel. The returned field is tagged stage 0;
/// use [`DisparityField::stage`] to retag.
pub fn soft_argmin(prob: &ProbabilityVolume, hyp: &HypothesisSet) -> Result<DisparityField> {
    check_prob_shape(prob, hyp)?;
    let values = par::map_range(prob.width() * prob.height(), |i| {
        let n = prob.planes();
        let p = &prob.probs()[i * n..(i + 1) * n];
        let d = &hyp.values()[i * n..(i + 1) * n];
        let e: f64 = p.iter().zip(d).map(|(p, d)| p * d).sum();
        // keep the expectation inside the hypothesis hull despite rounding
        e.clamp(d[0], d[n - 1])
    });
    Ok(DisparityField {
        width: prob.width(),
        height: prob.height(),
        stage: 0,
        values,
    })
}

/// `U = Σ_n (d_n - d̂)² p_n` per pixel.
pub fn pixel_uncertainty(
    prob: &ProbabilityVolume,
    hyp: &HypothesisSet,
    disp: &DisparityField,
) -> Result<UncertaintyField> {
    check_prob_shape(prob, hyp)?;
    if disp.width != prob.width() || disp.height != prob.height() {
        return Err(Error::ShapeMismatch(
            "disparity vs probability volume".into(),
        ));
    }
    let values = par::map_range(prob.width() * prob.height(), |i| {
        let n = prob.planes();
        let p = &prob.probs()[i * n..(i + 1) * n];
        let d = &hyp.values()[i * n..(i + 1) * n];
        let mean = disp.values[i];
        p.iter()
            .zip(d)
            .map(|(p, d)| (d - mean) * (d - mean) * p)
            .sum()
    });
    Ok(UncertaintyField {
        width: disp.width,
        height: disp.height,
        stage: disp.stage,
        values,
    })
}

fn check_prob_shape(prob: &ProbabilityVolume, hyp: &HypothesisSet) -> Result<()> {
    if prob.width() != hyp.width() || prob.height() != hyp.height() || prob.planes() != hyp.planes()
    {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {}x{}x{} vs hypotheses {}x{}x{}",
            prob.width(),
            prob.height(),
            prob.planes(),
            hyp.width(),
            hyp.height(),
            hyp.planes()
        )));
    }
    Ok(())
}

/// Search range for stage `i-1` from the stage-`i` estimate.
///
/// Bounds `d̂ ± ((α+1)√U + β)` are formed at stage-`i` resolution,
/// bilinearly upsampled to `target_width`×`target_height`, doubled into
/// stage-`i-1` pixels and clamped to `[0, d_max/2^(i-1) - 1]`.
pub fn next_stage_range(
    disp: &DisparityField,
    unc: &UncertaintyField,
    params: &CascadeParams,
    target_width: usize,
    target_height: usize,
) -> Result<RangeField> {
    if disp.width != unc.width || disp.height != unc.height || disp.stage != unc.stage {
        return Err(Error::ShapeMismatch("disparity vs uncertainty".into()));
    }
    if disp.stage == 0 {
        return Err(Error::InvalidParameter("stage 0 has no next stage".into()));
    }
    let (alpha, beta) = params.range_coefficients(disp.stage)?;
    let half: Vec<f64> = unc
        .values
        .iter()
        .map(|u| (alpha + 1.0) * u.sqrt() + beta)
        .collect();
    let lo: Vec<f64> = disp.values.iter().zip(&half).map(|(d, r)| d - r).collect();
    let hi: Vec<f64> = disp.values.iter().zip(&half).map(|(d, r)| d + r).collect();
    let (w, h) = (disp.width, disp.height);
    let stage = disp.stage - 1;
    let limit = params.max_hypothesis(stage);
    let scale = |v: Vec<f64>| -> Vec<f64> {
        grid::upsample(&v, w, h, target_width, target_height)
            .into_iter()
            .map(|b| (2.0 * b).clamp(0.0, limit))
            .collect()
    };
    Ok(RangeField {
        width: target_width,
        height: target_height,
        stage,
        min: scale(lo),
        max: scale(hi),
    })
}

/// `d_n = d_min + n (d_max - d_min) / (N - 1)` for `n = 0..N`.
pub fn sample_hypotheses(range: &RangeField, planes: usize) -> Result<HypothesisSet> {
    if planes < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 hypotheses, got {planes}"
        )));
    }
    let mut values = vec![0.0; range.width * range.height * planes];
    let denom = (planes - 1) as f64;
    par::for_each_chunk_mut(&mut values, planes, |i, out| {
        let (lo, hi) = (range.min[i], range.max[i]);
        let step = (hi - lo) / denom;
        for (n, v) in out.iter_mut().enumerate() {
            *v = lo + n as f64 * step;
        }
        // pin the last sample to the bound so rounding cannot leave the range
        out[planes - 1] = hi;
    });
    Ok(HypothesisSet::from_raw(
        range.width,
        range.height,
        planes,
        values,
    ))
}

/// Everything a stage produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutput {
    pub stage: u32,
    /// Range the hypotheses were sampled from; `None` for the dense stage.
    pub range: Option<RangeField>,
    pub hypotheses: HypothesisSet,
    pub probabilities: Arc<ProbabilityVolume>,
    pub disparity: DisparityField,
    pub uncertainty: UncertaintyField,
}

/// Stages 3, 2, 1 in order plus the full-resolution result.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTrace {
    pub stages: Vec<StageOutput>,
    pub disparity: DisparityField,
    pub uncertainty: UncertaintyField,
}

impl StageTrace {
    pub fn stage(&self, stage: u32) -> Option<&StageOutput> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// Aggregate, softmin and regress an already built volume.
pub fn solve_volume(
    volume: &CostVolume,
    aggregation: &AggregationConfig,
    stage: u32,
    range: Option<RangeField>,
) -> Result<StageOutput> {
    let aggregated = aggregate(volume, aggregation)?;
    let prob = softmin_probabilities(&aggregated, aggregation.temperature)?;
    let hyp = aggregated.hypotheses().clone();
    let mut disparity = soft_argmin(&prob, &hyp)?;
    disparity.stage = stage;
    let uncertainty = pixel_uncertainty(&prob, &hyp, &disparity)?;
    Ok(StageOutput {
        stage,
        range,
        hypotheses: hyp,
        probabilities: Arc::new(prob),
        disparity,
        uncertainty,
    })
}

/// Plain dense matcher over integer hypotheses `0..planes`.
pub fn match_dense(
    left: &FeatureMap,
    right: &FeatureMap,
    planes: usize,
    aggregation: &AggregationConfig,
    stage: u32,
) -> Result<StageOutput> {
    let hyp = HypothesisSet::dense(left.width(), left.height(), planes);
    let volume = build_cost_volume(left, right, &hyp)?;
    solve_volume(&volume, aggregation, stage, None)
}

/// One refinement stage: sample `planes` hypotheses inside `range` and
/// match them.
pub fn match_in_range(
    left: &FeatureMap,
    right: &FeatureMap,
    range: RangeField,
    planes: usize,
    aggregation: &AggregationConfig,
) -> Result<StageOutput> {
    let hyp = sample_hypotheses(&range, planes)?;
    let volume = build_cost_volume(left, right, &hyp)?;
    let stage = range.stage;
    solve_volume(&volume, aggregation, stage, Some(range))
}

/// Census features for one pyramid level, shrinking the window when the
/// level is smaller than it.
pub fn level_features(image: &RasterImage, config: &FeatureConfig) -> FeatureMap {
    let side = image.width().min(image.height());
    let fit = (side.saturating_sub(1) / 2).max(1);
    let mut cfg = FeatureConfig {
        census_radius: config.census_radius.min(fit),
        ..*config
    };
    // a shrunken window has fewer channels; keep the groups dividing them
    let channels = cfg.channel_count();
    while !channels.is_multiple_of(cfg.group_count) {
        cfg.group_count -= 1;
    }
    census_unchecked(image, &cfg)
}

/// Full pipeline on a rectified pair.
pub fn run_cascade(
    left: &RasterImage,
    right: &RasterImage,
    feature_config: &FeatureConfig,
    params: &CascadeParams,
) -> Result<StageTrace> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::ShapeMismatch(format!(
            "left {}x{} vs right {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    if left.width() < MIN_IMAGE_SIDE || left.height() < MIN_IMAGE_SIDE {
        return Err(Error::InvalidParameter(format!(
            "image {}x{} smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}",
            left.width(),
            left.height()
        )));
    }
    feature_config.validate()?;
    params.validate()?;

    let (pl, pr) = par::join(
        || build_pyramid(left, PYRAMID_LEVELS),
        || build_pyramid(right, PYRAMID_LEVELS),
    );
    let (pl, pr) = (pl?, pr?);
    let features: Vec<(FeatureMap, FeatureMap)> = par::map_range(PYRAMID_LEVELS, |i| {
        if i == 0 {
            // full resolution is never matched
            let empty = || census_unchecked(&RasterImage::constant(1, 1, 0.0), feature_config);
            return (empty(), empty());
        }
        (
            level_features(pl.level(i), feature_config),
            level_features(pr.level(i), feature_config),
        )
    });

    let dense: Vec<CostVolume> = par::map_slice(&FUSED_SCALES, |&s| {
        let (fl, fr) = &features[s as usize];
        let hyp = HypothesisSet::dense(fl.width(), fl.height(), params.d_max >> s);
        build_cost_volume(fl, fr, &hyp)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let fused = fuse_dense_volumes(&dense)?;
    let mut stages = vec![solve_volume(&fused, &params.aggregation, 3, None)?];

    for stage in [2u32, 1] {
        let prev = stages.last().unwrap();
        let (fl, fr) = &features[stage as usize];
        let range = next_stage_range(
            &prev.disparity,
            &prev.uncertainty,
            params,
            fl.width(),
            fl.height(),
        )?;
        stages.push(match_in_range(
            fl,
            fr,
            range,
            params.planes_for(stage),
            &params.aggregation,
        )?);
    }

    let last = stages.last().unwrap();
    let (w, h) = (left.width(), left.height());
    let (lw, lh) = (last.disparity.width, last.disparity.height);
    let disparity = DisparityField {
        width: w,
        height: h,
        stage: 0,
        values: grid::upsample(&last.disparity.values, lw, lh, w, h)
            .into_iter()
            .map(|d| 2.0 * d)
            .collect(),
    };
    let uncertainty = UncertaintyField {
        width: w,
        height: h,
        stage: 0,
        values: grid::upsample(&last.uncertainty.values, lw, lh, w, h)
            .into_iter()
            .map(|u| 4.0 * u)
            .collect(),
    };
    Ok(StageTrace {
        stages,
        disparity,
        uncertainty,
    })
}

/// Disparity of the right view, by matching the mirrored pair.
pub fn run_cascade_right_view(
    left: &RasterImage,
    right: &RasterImage,
    feature_config: &FeatureConfig,
    params: &CascadeParams,
) -> Result<StageTrace> {
    let mut trace = run_cascade(
        &right.flip_horizontal(),
        &left.flip_horizontal(),
        feature_config,
        params,
    )?;
    let w = trace.disparity.width;
    trace.disparity.values = grid::flip_horizontal(&trace.disparity.values, w);
    trace.uncertainty.values = grid::flip_horizontal(&trace.uncertainty.values, w);
    Ok(trace)
}

/// 3×3 median followed by a 5×5 bilateral pass (spatial σ 1.5 px, range
/// σ 1 px). Output stays within the input's value range.
pub fn refine_disparity(disp: &DisparityField) -> DisparityField {
    const RADIUS: i64 = 2;
    const SIGMA_SPACE: f64 = 1.5;
    const SIGMA_RANGE: f64 = 1.0;
    let (w, h) = (disp.width, disp.height);
    let med = grid::median3x3(&disp.values, w, h);
    let mut out = vec![0.0; w * h];
    par::for_each_chunk_mut(&mut out, w, |y, row| {
        for (x, px) in row.iter_mut().enumerate() {
            let c = med[y * w + x];
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -RADIUS..=RADIUS {
                let yy = y as i64 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -RADIUS..=RADIUS {
                    let xx = x as i64 + dx;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    let v = med[yy as usize * w + xx as usize];
                    let ds = (dx * dx + dy * dy) as f64 / (2.0 * SIGMA_SPACE * SIGMA_SPACE);
                    let dr = (v - c) * (v - c) / (2.0 * SIGMA_RANGE * SIGMA_RANGE);
                    let wgt = (-ds - dr).exp();
                    num += wgt * v;
                    den += wgt;
                }
            }
            *px = if (num / den - c).abs() < 1e-12 {
                c
            } else {
                num / den
            };
        }
    });
    DisparityField {
        width: w,
        height: h,
        stage: disp.stage,
        values: out,
    }
}
