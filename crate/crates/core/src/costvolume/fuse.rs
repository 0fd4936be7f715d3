//! Multi-scale fusion of dense cost volumes.

use super::{CostVolume, HypothesisSet};
use crate::grid;
use crate::{Error, Result};

/// Doubles the plane count of one pixel's costs: fine plane `j` reads the
/// coarse curve at position `j / 2`, linearly interpolated and clamped at
/// the last coarse plane.
pub fn expand_planes(coarse: &[f64]) -> Vec<f64> {
    let n = coarse.len();
    (0..2 * n)
        .map(|j| {
            let k = j / 2;
            if j % 2 == 0 || k + 1 >= n {
                coarse[k]
            } else {
                0.5 * (coarse[k] + coarse[k + 1])
            }
        })
        .collect()
}

/// Brings a dense volume one octave finer: bilinear spatial upsampling to
/// `tw`×`th` followed by plane doubling.
fn upsample_volume(v: &CostVolume, tw: usize, th: usize) -> CostVolume {
    let (w, h, n) = (v.width(), v.height(), v.planes());
    let mut planes_up = Vec::with_capacity(n);
    for k in 0..n {
        let plane: Vec<f64> = v.costs().iter().skip(k).step_by(n).copied().collect();
        planes_up.push(grid::upsample(&plane, w, h, tw, th));
    }
    let mut costs = Vec::with_capacity(tw * th * 2 * n);
    let mut px = vec![0.0; n];
    for i in 0..tw * th {
        for (p, plane) in px.iter_mut().zip(&planes_up) {
            *p = plane[i];
        }
        costs.extend(expand_planes(&px));
    }
    CostVolume::from_raw(HypothesisSet::dense(tw, th, 2 * n), costs)
}

/// Averages dense volumes given finest first (e.g. scales 3, 4, 5) into the
/// finest one. Each volume must be exactly one octave coarser than the
/// previous: `ceil` half the size and half the planes.
pub fn fuse_dense_volumes(volumes: &[CostVolume]) -> Result<CostVolume> {
    let first = volumes
        .first()
        .ok_or_else(|| Error::InvalidParameter("no volumes to fuse".into()))?;
    for v in volumes {
        if !v.hypotheses().is_dense() {
            return Err(Error::InvalidParameter("fusion needs dense volumes".into()));
        }
    }
    for pair in volumes.windows(2) {
        let (fine, coarse) = (&pair[0], &pair[1]);
        if coarse.width() != fine.width().div_ceil(2)
            || coarse.height() != fine.height().div_ceil(2)
            || fine.planes() != 2 * coarse.planes()
        {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent scale chain: {}x{}x{} then {}x{}x{}",
                fine.width(),
                fine.height(),
                fine.planes(),
                coarse.width(),
                coarse.height(),
                coarse.planes()
            )));
        }
    }
    if volumes.len() == 1 {
        return Ok(first.clone());
    }
    let mut sum = first.costs().to_vec();
    for (i, v) in volumes.iter().enumerate().skip(1) {
        let mut up = v.clone();
        for target in volumes[..i].iter().rev() {
            up = upsample_volume(&up, target.width(), target.height());
        }
        for (s, c) in sum.iter_mut().zip(up.costs()) {
            *s += c;
        }
    }
    let count = volumes.len() as f64;
    for s in sum.iter_mut() {
        *s /= count;
    }
    Ok(CostVolume::from_raw(first.hypotheses().clone(), sum))
}
