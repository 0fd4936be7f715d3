//! Self-adaptation of the pipeline's free parameters against its own
//! filtered pseudo-labels.
//!
//! Each iteration matches every pair with the current parameters, freezes
//! the area-filtered labels, then runs one coordinate-descent pass over a
//! finite grid. A candidate is scored by matching deterministic augmented
//! views of each pair (cropped, with a small photometric change on the
//! right image) and taking the pooled smooth-L1 distance to the frozen
//! labels. Without the augmentation the current parameters would
//! reproduce their own labels exactly and nothing could ever move.
//! Ground truth is never an input.

use std::fmt::Write as _;

use crate::cascade::{run_cascade, DisparityField, StageTrace, UncertaintyField};
use crate::config::PipelineConfig;
use crate::costvolume::Aggregation;
use crate::eval::smooth_l1_sum;
use crate::par;
use crate::pseudolabel::{area_uncertainty, filter_by_area_uncertainty, SparseLabelMap};
use crate::raster_io::RasterImage;
use crate::{Error, Result};

/// Iterations beyond this stop paying off and are rejected.
pub const MAX_ITERATIONS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct StereoPair {
    pub left: RasterImage,
    pub right: RasterImage,
}

impl StereoPair {
    pub fn new(left: RasterImage, right: RasterImage) -> Result<Self> {
        if left.width() != right.width() || left.height() != right.height() {
            return Err(Error::ShapeMismatch("stereo pair sizes differ".into()));
        }
        Ok(Self { left, right })
    }
}

/// The parameters adaptation may change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunableParams {
    /// `[stage 3, stage 2]`.
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub tau: f64,
    pub p1: f64,
    pub p2: f64,
    /// Logistic midpoint of the area filter.
    pub area_m: f64,
}

impl TunableParams {
    /// Reads the tunable values out of `config`. Box aggregation has no
    /// penalties; the SGM defaults are reported instead.
    pub fn from_config(config: &PipelineConfig) -> Self {
        let agg = config.cascade.aggregation;
        let (p1, p2) = match agg.method {
            Aggregation::Sgm { p1, p2, .. } => (p1, p2),
            Aggregation::Box { .. } => match crate::costvolume::AggregationConfig::default().method
            {
                Aggregation::Sgm { p1, p2, .. } => (p1, p2),
                Aggregation::Box { .. } => (0.0, 0.0),
            },
        };
        Self {
            alpha: config.cascade.alpha,
            beta: config.cascade.beta,
            tau: agg.temperature,
            p1,
            p2,
            area_m: config.area.midpoint,
        }
    }

    /// `base` with these values written in.
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = *base;
        cfg.cascade.alpha = self.alpha;
        cfg.cascade.beta = self.beta;
        cfg.cascade.aggregation.temperature = self.tau;
        if let Aggregation::Sgm { p1, p2, .. } = &mut cfg.cascade.aggregation.method {
            *p1 = self.p1;
            *p2 = self.p2;
        }
        cfg.area.midpoint = self.area_m;
        cfg
    }

    pub fn validate(&self, base: &PipelineConfig) -> Result<()> {
        self.apply(base).validate()
    }
}

/// Parameters visited by coordinate descent, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coordinate {
    Alpha3,
    Alpha2,
    Beta3,
    Beta2,
    Tau,
    P1,
    P2,
    AreaMidpoint,
}

impl Coordinate {
    pub const ORDER: [Coordinate; 8] = [
        Coordinate::Alpha3,
        Coordinate::Alpha2,
        Coordinate::Beta3,
        Coordinate::Beta2,
        Coordinate::Tau,
        Coordinate::P1,
        Coordinate::P2,
        Coordinate::AreaMidpoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Coordinate::Alpha3 => "alpha_3",
            Coordinate::Alpha2 => "alpha_2",
            Coordinate::Beta3 => "beta_3",
            Coordinate::Beta2 => "beta_2",
            Coordinate::Tau => "tau",
            Coordinate::P1 => "sgm_p1",
            Coordinate::P2 => "sgm_p2",
            Coordinate::AreaMidpoint => "area_m",
        }
    }

    fn get(self, p: &TunableParams) -> f64 {
        match self {
            Coordinate::Alpha3 => p.alpha[0],
            Coordinate::Alpha2 => p.alpha[1],
            Coordinate::Beta3 => p.beta[0],
            Coordinate::Beta2 => p.beta[1],
            Coordinate::Tau => p.tau,
            Coordinate::P1 => p.p1,
            Coordinate::P2 => p.p2,
            Coordinate::AreaMidpoint => p.area_m,
        }
    }

    fn set(self, p: &mut TunableParams, v: f64) {
        match self {
            Coordinate::Alpha3 => p.alpha[0] = v,
            Coordinate::Alpha2 => p.alpha[1] = v,
            Coordinate::Beta3 => p.beta[0] = v,
            Coordinate::Beta2 => p.beta[1] = v,
            Coordinate::Tau => p.tau = v,
            Coordinate::P1 => p.p1 = v,
            Coordinate::P2 => p.p2 = v,
            Coordinate::AreaMidpoint => p.area_m = v,
        }
    }
}

/// Candidate values per coordinate; α and β lists serve both stages. An
/// empty list leaves that coordinate fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub area_m: Vec<f64>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            alpha: vec![-0.5, 0.0, 1.0, 2.0],
            beta: vec![0.0, 0.5, 1.0, 2.0],
            tau: vec![0.1, 0.25, 0.5, 1.0],
            p1: vec![0.1, 0.3, 0.5],
            p2: vec![0.75, 1.5, 3.0],
            area_m: vec![1.0, 1.25, 1.5, 2.0],
        }
    }
}

impl SearchGrid {
    fn values(&self, c: Coordinate) -> &[f64] {
        match c {
            Coordinate::Alpha3 | Coordinate::Alpha2 => &self.alpha,
            Coordinate::Beta3 | Coordinate::Beta2 => &self.beta,
            Coordinate::Tau => &self.tau,
            Coordinate::P1 => &self.p1,
            Coordinate::P2 => &self.p2,
            Coordinate::AreaMidpoint => &self.area_m,
        }
    }
}

/// One deterministic view used to score a candidate: the pair cropped to
/// start at `(crop_x, crop_y)`, the right image mapped through
/// `gain·v + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentView {
    pub crop_x: usize,
    pub crop_y: usize,
    pub right_gain: f64,
    pub right_offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub views: Vec<AugmentView>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            views: vec![
                AugmentView {
                    crop_x: 3,
                    crop_y: 5,
                    right_gain: 0.95,
                    right_offset: 0.03,
                },
                AugmentView {
                    crop_x: 10,
                    crop_y: 2,
                    right_gain: 1.05,
                    right_offset: -0.03,
                },
            ],
        }
    }
}

/// Objective of every candidate tried for one coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateStep {
    pub coordinate: Coordinate,
    pub candidates: Vec<(f64, f64)>,
    pub chosen: f64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Frozen labels per pair, empty maps for skipped pairs.
    pub labels: Vec<SparseLabelMap>,
    pub skipped_pairs: Vec<usize>,
    /// `false` when the regenerated labels scored worse at the incoming
    /// parameters and the previous iteration's labels were kept.
    pub labels_refreshed: bool,
    /// Mean label density over all pairs.
    pub label_density: f64,
    pub initial_objective: f64,
    pub objective: f64,
    pub params: TunableParams,
    pub steps: Vec<CoordinateStep>,
}

#[derive(Clone, Debug)]
pub struct AdaptReport {
    pub iterations: Vec<IterationRecord>,
}

impl AdaptReport {
    pub const CSV_HEADER: &'static str =
        "iteration,label_density,skipped_pairs,labels_refreshed,initial_objective,objective,alpha_3,alpha_2,beta_3,beta_2,tau,sgm_p1,sgm_p2,area_m";

    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.objective).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.iterations {
            let p = &r.params;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.label_density,
                r.skipped_pairs.len(),
                r.labels_refreshed,
                r.initial_objective,
                r.objective,
                p.alpha[0],
                p.alpha[1],
                p.beta[0],
                p.beta[1],
                p.tau,
                p.p1,
                p.p2,
                p.area_m
            );
        }
        s
    }
}

fn match_pair(pair: &StereoPair, cfg: &PipelineConfig) -> Result<StageTrace> {
    run_cascade(&pair.left, &pair.right, &cfg.features, &cfg.cascade)
}

/// Area-filtered labels for `left` at `cfg`'s threshold and filter.
pub fn area_labels(
    disp: &DisparityField,
    unc: &UncertaintyField,
    left: &RasterImage,
    cfg: &PipelineConfig,
) -> Result<SparseLabelMap> {
    let u_area = area_uncertainty(disp, unc, left, &cfg.area)?;
    filter_by_area_uncertainty(disp, &u_area, cfg.t_area)
}

struct Supervision<'a> {
    pair: &'a StereoPair,
    labels: SparseLabelMap,
}

fn augment(pair: &StereoPair, view: &AugmentView) -> Result<StereoPair> {
    let (w, h) = (pair.left.width(), pair.left.height());
    if view.crop_x >= w || view.crop_y >= h {
        return Err(Error::InvalidParameter(
            "augment crop exceeds the image".into(),
        ));
    }
    let (cw, ch) = (w - view.crop_x, h - view.crop_y);
    let left = pair.left.crop(view.crop_x, view.crop_y, cw, ch)?;
    let right = pair
        .right
        .crop(view.crop_x, view.crop_y, cw, ch)?
        .map(|v| view.right_gain * v + view.right_offset);
    Ok(StereoPair { left, right })
}

/// Pooled mean smooth-L1 between the disparity `params` produce on every
/// augmented view and the matching crop of the frozen labels.
fn view_objective(
    views: &[(StereoPair, SparseLabelMap)],
    base: &PipelineConfig,
    params: &TunableParams,
) -> Result<f64> {
    let cfg = params.apply(base);
    let parts = par::map_slice(views, |(pair, labels)| -> Result<(f64, usize)> {
        let trace = match_pair(pair, &cfg)?;
        smooth_l1_sum(&trace.disparity.values, labels)
    });
    let (mut sum, mut n) = (0.0, 0usize);
    for p in parts {
        let (s, c) = p?;
        sum += s;
        n += c;
    }
    if n == 0 {
        return Err(Error::NoSupervision(
            "augmented views cover no labels".into(),
        ));
    }
    Ok(sum / n as f64)
}

fn build_views(
    supervision: &[Supervision<'_>],
    augment_cfg: &AugmentConfig,
) -> Result<Vec<(StereoPair, SparseLabelMap)>> {
    let mut views = Vec::new();
    for s in supervision {
        for v in &augment_cfg.views {
            let pair = augment(s.pair, v)?;
            let labels =
                s.labels
                    .crop(v.crop_x, v.crop_y, pair.left.width(), pair.left.height())?;
            views.push((pair, labels));
        }
    }
    Ok(views)
}

/// Frozen-label objective of `params` over `pairs`, exactly as scored
/// inside [`adapt_params`]. Pairs whose label map is empty are ignored.
pub fn adaptation_objective(
    pairs: &[StereoPair],
    labels: &[SparseLabelMap],
    base: &PipelineConfig,
    params: &TunableParams,
    augment_cfg: &AugmentConfig,
) -> Result<f64> {
    if pairs.len() != labels.len() {
        return Err(Error::ShapeMismatch("one label map per pair".into()));
    }
    let supervision: Vec<Supervision<'_>> = pairs
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.valid_count() > 0)
        .map(|(pair, l)| Supervision {
            pair,
            labels: l.clone(),
        })
        .collect();
    view_objective(&build_views(&supervision, augment_cfg)?, base, params)
}

/// Tunes `init` against self-generated labels on `pairs`.
///
/// `base` supplies everything that is not tuned (D_max, plane counts,
/// features, area filter window and the label thresholds). Pairs that
/// yield no labels are skipped with a warning; if none yield labels the
/// call fails with [`Error::NoSupervision`].
pub fn adapt_params(
    pairs: &[StereoPair],
    base: &PipelineConfig,
    init: TunableParams,
    iterations: usize,
    grid: &SearchGrid,
    augment_cfg: &AugmentConfig,
) -> Result<(TunableParams, AdaptReport)> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("need at least one pair".into()));
    }
    if !(1..=MAX_ITERATIONS).contains(&iterations) {
        return Err(Error::InvalidParameter(format!(
            "iterations {iterations} outside 1..={MAX_ITERATIONS}"
        )));
    }
    if augment_cfg.views.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one augmented view".into(),
        ));
    }
    init.validate(base)?;

    let mut params = init;
    let mut records: Vec<IterationRecord> = Vec::with_capacity(iterations);
    let mut frozen: Option<Frozen> = None;
    for iteration in 1..=iterations {
        let fresh = freeze_labels(pairs, base, &params, augment_cfg, iteration)?;
        let fresh_objective = view_objective(&fresh.views, base, &params)?;
        // a refresh that scores worse at the current parameters is dropped
        let (state, initial_objective, labels_refreshed) = match (frozen.take(), records.last()) {
            (Some(prev), Some(last)) if fresh_objective > last.objective => {
                log::info!(
                    "iteration {iteration}: refreshed labels score {fresh_objective:.5} > {:.5}, keeping the previous labels",
                    last.objective
                );
                (prev, last.objective, false)
            }
            _ => (fresh, fresh_objective, true),
        };
        let Frozen {
            traces,
            labels,
            skipped,
            views,
        } = &state;
        let label_density =
            labels.iter().map(SparseLabelMap::density).sum::<f64>() / labels.len() as f64;

        let mut current = initial_objective;
        let mut steps = Vec::new();
        for coord in Coordinate::ORDER {
            if coord == Coordinate::AreaMidpoint {
                continue;
            }
            let now = coord.get(&params);
            let candidates: Vec<TunableParams> = grid
                .values(coord)
                .iter()
                .filter(|&&v| v != now)
                .map(|&v| {
                    let mut p = params;
                    coord.set(&mut p, v);
                    p
                })
                .filter(|p| p.validate(base).is_ok())
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let scores = par::map_slice(&candidates, |p| view_objective(views, base, p));
            let mut tried = vec![(now, current)];
            let mut best = (params, current);
            for (p, s) in candidates.iter().zip(scores) {
                let s = s?;
                tried.push((coord.get(p), s));
                // strict improvement only, so ties stay at the current value
                if s < best.1 {
                    best = (*p, s);
                }
            }
            params = best.0;
            current = best.1;
            steps.push(CoordinateStep {
                coordinate: coord,
                candidates: tried,
                chosen: coord.get(&params),
                objective: current,
            });
        }

        if let Some(step) =
            tune_area_midpoint(pairs, traces, labels, base, &mut params, grid, views)?
        {
            steps.push(step);
        }

        log::info!(
            "iteration {iteration}: objective {initial_objective:.5} -> {current:.5}, label density {label_density:.4}"
        );
        records.push(IterationRecord {
            iteration,
            labels: labels.clone(),
            skipped_pairs: skipped.clone(),
            labels_refreshed,
            label_density,
            initial_objective,
            objective: current,
            params,
            steps,
        });
        frozen = Some(state);
    }
    Ok((
        params,
        AdaptReport {
            iterations: records,
        },
    ))
}

/// Matches, labels and augmented views frozen for one iteration.
struct Frozen {
    traces: Vec<StageTrace>,
    labels: Vec<SparseLabelMap>,
    skipped: Vec<usize>,
    views: Vec<(StereoPair, SparseLabelMap)>,
}

fn freeze_labels(
    pairs: &[StereoPair],
    base: &PipelineConfig,
    params: &TunableParams,
    augment_cfg: &AugmentConfig,
    iteration: usize,
) -> Result<Frozen> {
    let cfg = params.apply(base);
    let traces: Vec<StageTrace> = par::map_slice(pairs, |p| match_pair(p, &cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let labels: Vec<SparseLabelMap> = pairs
        .iter()
        .zip(&traces)
        .map(|(p, t)| area_labels(&t.disparity, &t.uncertainty, &p.left, &cfg))
        .collect::<Result<_>>()?;
    let mut skipped = Vec::new();
    let mut supervision = Vec::new();
    for (i, (pair, l)) in pairs.iter().zip(&labels).enumerate() {
        if l.valid_count() == 0 {
            log::warn!("pair {i}: no pseudo-labels survive filtering, skipped");
            skipped.push(i);
        } else {
            supervision.push(Supervision {
                pair,
                labels: l.clone(),
            });
        }
    }
    if supervision.is_empty() {
        return Err(Error::NoSupervision(format!(
            "iteration {iteration}: every pair has empty pseudo-labels"
        )));
    }
    let views = build_views(&supervision, augment_cfg)?;
    Ok(Frozen {
        traces,
        labels,
        skipped,
        views,
    })
}

/// Picks the area midpoint whose labels, rebuilt from the frozen matches,
/// agree best with the adapted matches while keeping at least the frozen
/// label density.
fn tune_area_midpoint(
    pairs: &[StereoPair],
    traces: &[StageTrace],
    frozen: &[SparseLabelMap],
    base: &PipelineConfig,
    params: &mut TunableParams,
    grid: &SearchGrid,
    views: &[(StereoPair, SparseLabelMap)],
) -> Result<Option<CoordinateStep>> {
    if grid.area_m.is_empty() || views.is_empty() {
        return Ok(None);
    }
    let adapted_cfg = params.apply(base);
    let adapted: Vec<Vec<f64>> = par::map_slice(pairs, |p| match_pair(p, &adapted_cfg))
        .into_iter()
        .map(|t| t.map(|t| t.disparity.values))
        .collect::<Result<_>>()?;
    let frozen_count: usize = frozen.iter().map(SparseLabelMap::valid_count).sum();

    let score = |m: f64| -> Result<Option<f64>> {
        let mut p = *params;
        p.area_m = m;
        let cfg = p.apply(base);
        let (mut sum, mut n, mut count) = (0.0, 0usize, 0usize);
        for ((pair, trace), pred) in pairs.iter().zip(traces).zip(&adapted) {
            let l = area_labels(&trace.disparity, &trace.uncertainty, &pair.left, &cfg)?;
            count += l.valid_count();
            let (s, c) = smooth_l1_sum(pred, &l)?;
            sum += s;
            n += c;
        }
        Ok((count >= frozen_count && n > 0).then(|| sum / n as f64))
    };

    let now = params.area_m;
    let candidates: Vec<f64> = grid
        .area_m
        .iter()
        .copied()
        .filter(|&m| m != now)
        .filter(|&m| {
            let mut p = *params;
            p.area_m = m;
            p.validate(base).is_ok()
        })
        .collect();
    let current = score(now)?;
    let scores = par::map_slice(&candidates, |&m| score(m));
    let mut tried = vec![(now, current.unwrap_or(f64::INFINITY))];
    let mut best = (now, current.unwrap_or(f64::INFINITY));
    for (&m, s) in candidates.iter().zip(scores) {
        let s = s?.unwrap_or(f64::INFINITY);
        tried.push((m, s));
        if s < best.1 {
            best = (m, s);
        }
    }
    params.area_m = best.0;
    Ok(Some(CoordinateStep {
        coordinate: Coordinate::AreaMidpoint,
        candidates: tried,
        chosen: best.0,
        objective: best.1,
    }))
}
