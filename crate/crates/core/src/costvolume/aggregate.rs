//! Spatial cost aggregation: per-plane box filtering and a 4-path
//! semi-global recurrence over plane indices.

use super::CostVolume;
use crate::par;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgmPaths {
    /// Left-to-right and right-to-left only.
    Horizontal,
    /// Both horizontal and both vertical directions.
    Four,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Aggregation {
    Box { radius: usize },
    Sgm { p1: f64, p2: f64, paths: SgmPaths },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregationConfig {
    pub method: Aggregation,
    /// Softmin temperature τ applied after aggregation.
    pub temperature: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            method: Aggregation::Sgm {
                p1: 0.3,
                p2: 1.5,
                paths: SgmPaths::Four,
            },
            temperature: 0.25,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter("temperature must be > 0".into()));
        }
        if let Aggregation::Sgm { p1, p2, .. } = self.method {
            if !(p1 >= 0.0 && p2 >= 0.0 && p1.is_finite() && p2.is_finite()) {
                return Err(Error::InvalidParameter("SGM penalties must be >= 0".into()));
            }
            if p1 > p2 {
                return Err(Error::InvalidParameter(format!("P1 {p1} > P2 {p2}")));
            }
        }
        Ok(())
    }
}

pub fn aggregate(volume: &CostVolume, config: &AggregationConfig) -> Result<CostVolume> {
    config.validate()?;
    let costs = match config.method {
        Aggregation::Box { radius } => box_filter(volume, radius),
        Aggregation::Sgm { p1, p2, paths } => sgm(volume, p1, p2, paths),
    };
    Ok(CostVolume::from_raw(volume.hypotheses().clone(), costs))
}

fn box_filter(volume: &CostVolume, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return volume.costs().to_vec();
    }
    let (w, h, n) = (volume.width(), volume.height(), volume.planes());
    let src = volume.costs();
    let r = radius as i64;
    let mut horiz = vec![0.0; src.len()];
    par::for_each_chunk_mut(&mut horiz, w * n, |y, row| {
        for x in 0..w {
            let lo = (x as i64 - r).max(0) as usize;
            let hi = (x as i64 + r).min(w as i64 - 1) as usize;
            let count = (hi - lo + 1) as f64;
            for k in 0..n {
                let s: f64 = (lo..=hi).map(|xx| src[(y * w + xx) * n + k]).sum();
                row[x * n + k] = s / count;
            }
        }
    });
    let mut out = vec![0.0; src.len()];
    par::for_each_chunk_mut(&mut out, w * n, |y, row| {
        let lo = (y as i64 - r).max(0) as usize;
        let hi = (y as i64 + r).min(h as i64 - 1) as usize;
        let count = (hi - lo + 1) as f64;
        for (i, v) in row.iter_mut().enumerate() {
            let s: f64 = (lo..=hi).map(|yy| horiz[yy * w * n + i]).sum();
            *v = s / count;
        }
    });
    out
}

/// One step of the semi-global recurrence: `cur = c + min(prev[k],
/// prev[k±1] + P1, min(prev) + P2) - min(prev)`.
#[inline]
fn sgm_step(c: &[f64], prev: &[f64], cur: &mut [f64], p1: f64, p2: f64) {
    let n = c.len();
    let min_prev = prev.iter().copied().fold(f64::INFINITY, f64::min);
    let jump = min_prev + p2;
    for k in 0..n {
        let mut best = prev[k].min(jump);
        if k > 0 {
            best = best.min(prev[k - 1] + p1);
        }
        if k + 1 < n {
            best = best.min(prev[k + 1] + p1);
        }
        cur[k] = c[k] + (best - min_prev);
    }
}

fn horizontal_path(volume: &CostVolume, p1: f64, p2: f64, forward: bool) -> Vec<f64> {
    let (w, n) = (volume.width(), volume.planes());
    let src = volume.costs();
    let mut out = vec![0.0; src.len()];
    par::for_each_chunk_mut(&mut out, w * n, |y, row| {
        let crow = &src[y * w * n..(y + 1) * w * n];
        let order: Box<dyn Iterator<Item = usize>> = if forward {
            Box::new(0..w)
        } else {
            Box::new((0..w).rev())
        };
        let mut prev_x: Option<usize> = None;
        for x in order {
            let c = &crow[x * n..(x + 1) * n];
            match prev_x {
                None => row[x * n..(x + 1) * n].copy_from_slice(c),
                Some(px) => {
                    let (prev, cur) = if px < x {
                        let (a, b) = row.split_at_mut(x * n);
                        (&a[px * n..(px + 1) * n], &mut b[..n])
                    } else {
                        let (a, b) = row.split_at_mut(px * n);
                        (&b[..n], &mut a[x * n..(x + 1) * n])
                    };
                    sgm_step(c, prev, cur, p1, p2);
                }
            }
            prev_x = Some(x);
        }
    });
    out
}

fn vertical_path(volume: &CostVolume, p1: f64, p2: f64, forward: bool) -> Vec<f64> {
    let (w, h, n) = (volume.width(), volume.height(), volume.planes());
    let src = volume.costs();
    let stride = w * n;
    let mut out = vec![0.0; src.len()];
    let rows: Vec<usize> = if forward {
        (0..h).collect()
    } else {
        (0..h).rev().collect()
    };
    let first = rows[0];
    out[first * stride..(first + 1) * stride]
        .copy_from_slice(&src[first * stride..(first + 1) * stride]);
    for pair in rows.windows(2) {
        let (py, y) = (pair[0], pair[1]);
        let (prev_row, cur_row) = if py < y {
            let (a, b) = out.split_at_mut(y * stride);
            (&a[py * stride..(py + 1) * stride], &mut b[..stride])
        } else {
            let (a, b) = out.split_at_mut(py * stride);
            (&b[..stride], &mut a[y * stride..(y + 1) * stride])
        };
        let crow = &src[y * stride..(y + 1) * stride];
        par::for_each_chunk_mut(cur_row, n, |x, cur| {
            sgm_step(
                &crow[x * n..(x + 1) * n],
                &prev_row[x * n..(x + 1) * n],
                cur,
                p1,
                p2,
            );
        });
    }
    out
}

fn sgm(volume: &CostVolume, p1: f64, p2: f64, paths: SgmPaths) -> Vec<f64> {
    let ((lr, rl), (tb, bt)) = par::join(
        || {
            par::join(
                || horizontal_path(volume, p1, p2, true),
                || horizontal_path(volume, p1, p2, false),
            )
        },
        || match paths {
            SgmPaths::Four => par::join(
                || Some(vertical_path(volume, p1, p2, true)),
                || Some(vertical_path(volume, p1, p2, false)),
            ),
            SgmPaths::Horizontal => (None, None),
        },
    );
    let mut out = lr;
    match (tb, bt) {
        (Some(tb), Some(bt)) => {
            for (((o, a), b), c) in out.iter_mut().zip(&rl).zip(&tb).zip(&bt) {
                *o = ((*o + a) + (b + c)) / 4.0;
            }
        }
        _ => {
            for (o, a) in out.iter_mut().zip(&rl) {
                *o = (*o + a) / 2.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costvolume::HypothesisSet;
    use proptest::prelude::*;

    fn volume(w: usize, h: usize, n: usize, costs: Vec<f64>) -> CostVolume {
        CostVolume::new(HypothesisSet::dense(w, h, n), costs).unwrap()
    }

    fn sgm_cfg(p1: f64, p2: f64, paths: SgmPaths) -> AggregationConfig {
        AggregationConfig {
            method: Aggregation::Sgm { p1, p2, paths },
            temperature: 1.0,
        }
    }

    /// Exhaustive path minimum: the normalised recurrence equals the raw
    /// minimum energy over every label sequence ending in `d`, minus the raw
    /// minimum at the previous pixel.
    fn brute_force_line(costs: &[Vec<f64>], p1: f64, p2: f64) -> Vec<Vec<f64>> {
        let len = costs.len();
        let n = costs[0].len();
        let pen = |a: usize, b: usize| match a.abs_diff(b) {
            0 => 0.0,
            1 => p1,
            _ => p2,
        };
        let mut raw = vec![vec![f64::INFINITY; n]; len];
        let total = n.pow(len as u32);
        for code in 0..total {
            let mut seq = Vec::with_capacity(len);
            let mut c = code;
            for _ in 0..len {
                seq.push(c % n);
                c /= n;
            }
            let mut e = 0.0;
            for p in 0..len {
                e += costs[p][seq[p]];
                if p > 0 {
                    e += pen(seq[p - 1], seq[p]);
                }
                raw[p][seq[p]] = raw[p][seq[p]].min(e);
            }
        }
        (0..len)
            .map(|p| {
                let sub = if p == 0 {
                    0.0
                } else {
                    raw[p - 1].iter().copied().fold(f64::INFINITY, f64::min)
                };
                raw[p].iter().map(|v| v - sub).collect()
            })
            .collect()
    }

    #[test]
    fn zero_penalty_sgm_is_identity() {
        let costs: Vec<f64> = (0..5 * 4 * 3)
            .map(|i| ((i * 7) % 11) as f64 / 10.0)
            .collect();
        let v = volume(5, 4, 3, costs.clone());
        let out = aggregate(&v, &sgm_cfg(0.0, 0.0, SgmPaths::Four)).unwrap();
        assert_eq!(out.costs(), &costs[..]);
    }

    #[test]
    fn box_radius_zero_is_identity() {
        let costs: Vec<f64> = (0..24).map(|i| (i % 5) as f64 * 0.3).collect();
        let v = volume(4, 3, 2, costs.clone());
        let cfg = AggregationConfig {
            method: Aggregation::Box { radius: 0 },
            temperature: 1.0,
        };
        assert_eq!(aggregate(&v, &cfg).unwrap().costs(), &costs[..]);
    }

    #[test]
    fn box_filter_averages_in_bounds_window() {
        let v = volume(3, 1, 1, vec![0.0, 3.0, 6.0]);
        let cfg = AggregationConfig {
            method: Aggregation::Box { radius: 1 },
            temperature: 1.0,
        };
        assert_eq!(aggregate(&v, &cfg).unwrap().costs(), &[1.5, 3.0, 4.5]);
    }

    #[test]
    fn hand_computed_three_pixel_line() {
        let v = volume(3, 1, 2, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let out = aggregate(&v, &sgm_cfg(0.5, 0.5, SgmPaths::Horizontal)).unwrap();
        // L->R: [0,1] [1,.5] [.5,1];  R->L: [.5,1] [1,.5] [0,1]
        assert_eq!(out.costs(), &[0.25, 1.0, 1.0, 0.5, 0.25, 1.0]);

        let line = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let fwd = brute_force_line(&line, 0.5, 0.5);
        let mut rev_line = line.clone();
        rev_line.reverse();
        let mut bwd = brute_force_line(&rev_line, 0.5, 0.5);
        bwd.reverse();
        for p in 0..3 {
            for d in 0..2 {
                let want = (fwd[p][d] + bwd[p][d]) / 2.0;
                assert!((out.at(p, 0)[d] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_p1_above_p2() {
        let v = volume(1, 1, 2, vec![0.0, 1.0]);
        assert!(aggregate(&v, &sgm_cfg(1.0, 0.5, SgmPaths::Four)).is_err());
    }

    proptest! {
        #[test]
        fn recurrence_matches_exhaustive_paths(
            costs in proptest::collection::vec(0.0f64..1.0, 12),
            p1 in 0.0f64..0.5,
            extra in 0.0f64..0.5,
        ) {
            let p2 = p1 + extra;
            // a 4x1 line with 3 planes
            let v = volume(4, 1, 3, costs.clone());
            let lr = horizontal_path(&v, p1, p2, true);
            let line: Vec<Vec<f64>> = costs.chunks(3).map(|c| c.to_vec()).collect();
            let oracle = brute_force_line(&line, p1, p2);
            for p in 0..4 {
                for d in 0..3 {
                    prop_assert!((lr[p * 3 + d] - oracle[p][d]).abs() < 1e-9);
                }
            }
            // the vertical recurrence on the transposed line agrees
            let vt = volume(1, 4, 3, costs.clone());
            let tb = vertical_path(&vt, p1, p2, true);
            for (a, b) in tb.iter().zip(&lr) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
