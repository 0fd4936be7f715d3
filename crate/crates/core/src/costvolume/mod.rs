//! Matching-cost volumes over explicit per-pixel disparity hypotheses.
//!
//! Storage is pixel-major: the `N` planes of a pixel are contiguous, which
//! keeps softmin and soft-argmin reductions cache friendly and lets every
//! pixel carry its own hypothesis list.

mod aggregate;
mod fuse;

pub use aggregate::{aggregate, Aggregation, AggregationConfig, SgmPaths};
pub use fuse::{expand_planes, fuse_dense_volumes};

use crate::features::FeatureMap;
use crate::par;
use crate::{Error, Result};

/// Per-pixel sorted lists of `planes` candidate disparities.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisSet {
    width: usize,
    height: usize,
    planes: usize,
    values: Vec<f64>,
}

impl HypothesisSet {
    pub fn new(width: usize, height: usize, planes: usize, values: Vec<f64>) -> Result<Self> {
        if planes == 0 {
            return Err(Error::InvalidParameter(
                "hypothesis set needs >= 1 plane".into(),
            ));
        }
        if values.len() != width * height * planes {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{planes} hypotheses with {} values",
                values.len()
            )));
        }
        for px in values.chunks(planes) {
            if px.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return Err(Error::InvalidData(
                    "hypothesis must be finite and >= 0".into(),
                ));
            }
            if px.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidData(
                    "per-pixel hypotheses must be sorted".into(),
                ));
            }
        }
        Ok(Self {
            width,
            height,
            planes,
            values,
        })
    }

    pub(crate) fn from_raw(width: usize, height: usize, planes: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height * planes);
        Self {
            width,
            height,
            planes,
            values,
        }
    }

    /// Integer hypotheses `0..planes` at every pixel.
    pub fn dense(width: usize, height: usize, planes: usize) -> Self {
        let values = (0..width * height)
            .flat_map(|_| (0..planes).map(|n| n as f64))
            .collect();
        Self::from_raw(width, height, planes, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.planes;
        &self.values[i..i + self.planes]
    }

    pub fn is_dense(&self) -> bool {
        self.values
            .chunks(self.planes)
            .all(|px| px.iter().enumerate().all(|(n, &d)| d == n as f64))
    }

    /// Checks every hypothesis lies in `[0, d_max)`.
    pub fn check_range(&self, d_max: f64) -> Result<()> {
        match self.values.iter().find(|&&d| d >= d_max) {
            Some(d) => Err(Error::InvalidData(format!("hypothesis {d} >= {d_max}"))),
            None => Ok(()),
        }
    }
}

/// Matching costs, lower is better, indexed by a [`HypothesisSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    hypotheses: HypothesisSet,
    costs: Vec<f64>,
}

impl CostVolume {
    pub fn new(hypotheses: HypothesisSet, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != hypotheses.values.len() {
            return Err(Error::ShapeMismatch(
                "cost and hypothesis counts differ".into(),
            ));
        }
        if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidData("costs must be finite and >= 0".into()));
        }
        Ok(Self { hypotheses, costs })
    }

    pub(crate) fn from_raw(hypotheses: HypothesisSet, costs: Vec<f64>) -> Self {
        debug_assert_eq!(costs.len(), hypotheses.values.len());
        Self { hypotheses, costs }
    }

    pub fn hypotheses(&self) -> &HypothesisSet {
        &self.hypotheses
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn width(&self) -> usize {
        self.hypotheses.width
    }

    pub fn height(&self) -> usize {
        self.hypotheses.height
    }

    pub fn planes(&self) -> usize {
        self.hypotheses.planes
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let n = self.planes();
        let i = (y * self.width() + x) * n;
        &self.costs[i..i + n]
    }

    pub fn into_parts(self) -> (HypothesisSet, Vec<f64>) {
        (self.hypotheses, self.costs)
    }
}

/// Per-pixel matching distribution over the planes of a cost volume.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    width: usize,
    height: usize,
    planes: usize,
    probs: Vec<f64>,
}

impl ProbabilityVolume {
    /// Validates that every pixel holds a distribution (sum 1 ± 1e-6).
    pub fn new(width: usize, height: usize, planes: usize, probs: Vec<f64>) -> Result<Self> {
        if planes == 0 || probs.len() != width * height * planes {
            return Err(Error::ShapeMismatch("probability volume shape".into()));
        }
        for px in probs.chunks(planes) {
            if px.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidData("probability outside [0, 1]".into()));
            }
            let s: f64 = px.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidData(format!("probabilities sum to {s}")));
            }
        }
        Ok(Self {
            width,
            height,
            planes,
            probs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.planes;
        &self.probs[i..i + self.planes]
    }
}

/// Group-wise correlation cost.
///
/// For hypothesis `d` the right features are read at `x - d` (linear
/// interpolation between columns, coordinate clamped to the image). Each
/// group's correlation is the mean channel product, in `[-1, 1]`; the cost
/// is `(1 - corr) / 2` averaged over groups, so identical features cost 0
/// and complementary census vectors cost 1.
pub fn build_cost_volume(
    left: &FeatureMap,
    right: &FeatureMap,
    hyp: &HypothesisSet,
) -> Result<CostVolume> {
    if left.width() != right.width()
        || left.height() != right.height()
        || left.channels() != right.channels()
    {
        return Err(Error::ShapeMismatch(
            "left/right feature maps differ".into(),
        ));
    }
    if left.group_count() != right.group_count() {
        return Err(Error::ShapeMismatch("mismatched feature grouping".into()));
    }
    if hyp.width() != left.width() || hyp.height() != left.height() {
        return Err(Error::ShapeMismatch(format!(
            "hypotheses {}x{} vs features {}x{}",
            hyp.width(),
            hyp.height(),
            left.width(),
            left.height()
        )));
    }
    let (w, planes) = (left.width(), hyp.planes());
    let channels = left.channels();
    let groups = left.group_count();
    let per_group = channels / groups;
    let max_x = (w - 1) as f64;
    let mut costs = vec![0.0; hyp.values().len()];

    par::for_each_chunk_mut(&mut costs, w * planes, |y, row| {
        let frow = right.row(y);
        let mut sampled = vec![0.0; channels];
        for x in 0..w {
            let fl = left.pixel(x, y);
            for (n, &d) in hyp.at(x, y).iter().enumerate() {
                let xs = (x as f64 - d).clamp(0.0, max_x);
                let x0 = xs.floor() as usize;
                let t = xs - x0 as f64;
                let a = &frow[x0 * channels..(x0 + 1) * channels];
                if t == 0.0 || x0 + 1 >= w {
                    sampled.copy_from_slice(a);
                } else {
                    let b = &frow[(x0 + 1) * channels..(x0 + 2) * channels];
                    for ((s, &va), &vb) in sampled.iter_mut().zip(a).zip(b) {
                        *s = va + t * (vb - va);
                    }
                }
                let mut total = 0.0;
                for g in 0..groups {
                    let r = g * per_group..(g + 1) * per_group;
                    let dot: f64 = fl[r.clone()]
                        .iter()
                        .zip(&sampled[r])
                        .map(|(p, q)| p * q)
                        .sum();
                    let corr = dot / per_group as f64;
                    total += 0.5 * (1.0 - corr);
                }
                row[x * planes + n] = (total / groups as f64).max(0.0);
            }
        }
    });
    Ok(CostVolume::from_raw(hyp.clone(), costs))
}

/// `p(n) = exp(-c(n)/τ) / Σ exp(-c(m)/τ)`, evaluated after subtracting the
/// per-pixel minimum cost.
pub fn softmin_probabilities(volume: &CostVolume, tau: f64) -> Result<ProbabilityVolume> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "temperature {tau} must be > 0"
        )));
    }
    let planes = volume.planes();
    let mut probs = vec![0.0; volume.costs.len()];
    par::for_each_chunk_mut(&mut probs, planes, |i, out| {
        let c = &volume.costs[i * planes..(i + 1) * planes];
        let min = c.iter().copied().fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for (p, &ci) in out.iter_mut().zip(c) {
            *p = (-(ci - min) / tau).exp();
            sum += *p;
        }
        for p in out.iter_mut() {
            *p /= sum;
        }
    });
    Ok(ProbabilityVolume {
        width: volume.width(),
        height: volume.height(),
        planes,
        probs,
    })
}
